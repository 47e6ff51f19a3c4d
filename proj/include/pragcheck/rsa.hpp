#pragma once

/// Rational Speech Act predictor chain: literal listener, soft-max speaker and
/// pragmatic listener, followed by the uniform-guessing error mixture.
///
/// The soft-max exponent alpha sits on the literal-listener probability inside
/// the speaker, P_S(u|s) ∝ P_L0(s|u)^alpha, with false utterances at exactly
/// zero. Everything is computed with log weights; a false utterance carries a
/// log weight of -inf so that impossible choices keep exactly zero mass.

#include <array>
#include <vector>

#include "core.hpp"
#include "refgame.hpp"

namespace pragcheck::rsa {

using refgame::SemanticsMatrix;

struct StatePrior {
    std::array<double, 3> p = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

    void check() const {
        double s = 0.0;
        for (double v : p) {
            if (!(v >= 0.0)) throw DomainError("state prior entries must be nonnegative");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw DomainError("state prior must sum to 1");
    }
};

/// rows[u][s] = P_L0(s | u)
using ListenerTable = std::array<std::array<double, 3>, 4>;
/// rows[s][u] = P_S(u | s)
using SpeakerTable = std::array<std::array<double, 4>, 3>;

namespace detail {
inline double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }
} // namespace detail

inline ListenerTable literal_listener(const SemanticsMatrix& sem, const StatePrior& prior = {}) {
    prior.check();
    ListenerTable out{};
    for (std::size_t u = 0; u < 4; ++u) {
        std::array<double, 3> logw{};
        for (std::size_t s = 0; s < 3; ++s)
            logw[s] = sem(s, u) ? detail::log_or_neg_inf(prior.p[s]) : kNegInf;
        if (math::log_sum_exp(logw) == kNegInf)
            throw DomainError("literal listener undefined: utterance " + std::to_string(u) +
                              " is true of no state with positive prior");
        const auto p = math::softmax(logw);
        std::copy(p.begin(), p.end(), out[u].begin());
    }
    return out;
}

/// alpha >= 0; alpha = 0 gives a uniform choice among true utterances.
inline SpeakerTable speaker(const SemanticsMatrix& sem, const StatePrior& prior, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("speaker: alpha must be finite and >= 0");
    prior.check();
    SpeakerTable out{};
    for (std::size_t s = 0; s < 3; ++s) {
        std::array<double, 4> logw{};
        bool any = false;
        for (std::size_t u = 0; u < 4; ++u) {
            if (!sem(s, u)) {
                logw[u] = kNegInf;
                continue;
            }
            any = true;
            // Column may be all-false in a hand-built matrix; treat as no signal.
            double log_l0 = kNegInf;
            double z = 0.0;
            for (std::size_t t = 0; t < 3; ++t) z += sem(t, u) * prior.p[t];
            if (z > 0.0) log_l0 = detail::log_or_neg_inf(prior.p[s]) - std::log(z);
            logw[u] = log_l0 == kNegInf ? kNegInf : alpha * log_l0;
        }
        if (!any) throw DomainError("speaker undefined: state " + std::to_string(s) + " has no true utterance");
        if (math::log_sum_exp(logw) == kNegInf) {
            out[s].fill(0.0);
            continue; // zero-prior state; never reached by the listener
        }
        const auto p = math::softmax(logw);
        std::copy(p.begin(), p.end(), out[s].begin());
    }
    return out;
}

/// rows[u][s] = P_L(s | u)
inline ListenerTable pragmatic_listener(const SemanticsMatrix& sem, const StatePrior& prior, double alpha) {
    const auto sp = speaker(sem, prior, alpha);
    ListenerTable out{};
    for (std::size_t u = 0; u < 4; ++u) {
        std::array<double, 3> logw{};
        for (std::size_t s = 0; s < 3; ++s)
            logw[s] = detail::log_or_neg_inf(sp[s][u]) + detail::log_or_neg_inf(prior.p[s]);
        if (math::log_sum_exp(logw) == kNegInf)
            throw DomainError("pragmatic listener undefined: utterance " + std::to_string(u) + " has zero speaker mass");
        const auto p = math::softmax(logw);
        std::copy(p.begin(), p.end(), out[u].begin());
    }
    return out;
}

/// Item reduced to what the predictor chain needs; build once, evaluate often.
struct PreparedItem {
    SemanticsMatrix sem;
    Condition condition = Condition::Production;
    std::size_t trigger = 0;
    std::vector<ResponseCategory> categories;
};

inline PreparedItem prepare(const refgame::Item& item) {
    return {refgame::semantics(item), item.condition, item.trigger, item.categories};
}

/// Category probabilities before the error mixture. For production the two
/// distractor words are summed into the single distractor category.
inline Categorical3 category_prediction(const PreparedItem& item, double alpha, const StatePrior& prior = {}) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    if (item.condition == Condition::Production) {
        const auto sp = speaker(item.sem, prior, alpha);
        for (std::size_t u = 0; u < 4; ++u) out[index_of(item.categories[u])] += sp[item.trigger][u];
    } else {
        const auto li = pragmatic_listener(item.sem, prior, alpha);
        for (std::size_t s = 0; s < 3; ++s) out[index_of(item.categories[s])] += li[item.trigger][s];
    }
    return Categorical3(out);
}

inline Categorical3 category_prediction(const refgame::Item& item, double alpha, const StatePrior& prior = {}) {
    return category_prediction(prepare(item), alpha, prior);
}

inline Categorical3 condition_predictor(const PreparedItem& item, const PredictorParams& params,
                                        const StatePrior& prior = {}) {
    params.check();
    return category_prediction(item, params.alpha, prior).mixed(params.epsilon);
}

inline Categorical3 condition_predictor(const refgame::Item& item, const PredictorParams& params,
                                        const StatePrior& prior = {}) {
    return condition_predictor(prepare(item), params, prior);
}

} // namespace pragcheck::rsa
