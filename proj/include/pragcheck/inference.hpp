#pragma once

/// Bayesian estimation of (alpha, epsilon) for one condition.
///
/// Priors: alpha ~ LogNormal(1, 1), epsilon ~ Beta(1, 15). The likelihood is
/// multinomial over response-category counts, either pooled per condition or
/// one factor per item. Sampling uses random-walk Metropolis on
/// (log alpha, logit epsilon) with the Jacobian folded into the target; the
/// warm-up phase tunes the proposal covariance and scale toward a fixed
/// acceptance rate and the kept draws use the frozen proposal. A trapezoidal
/// grid over the same coordinates serves as an independent check.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "llm_predictors.hpp"
#include "random.hpp"
#include "refgame.hpp"
#include "rsa.hpp"

namespace pragcheck::inference {

struct InitializationError : Error {
    explicit InitializationError(const std::string& what) : Error("initialization_error", what) {}
};

// ---------------------------------------------------------------------------
// Data

enum class DataLevel { Condition, Item };

inline std::string to_string(DataLevel l) { return l == DataLevel::Condition ? "condition" : "item"; }
inline DataLevel data_level_from_string(std::string_view s) {
    if (s == "condition" || s == "cond" || s == "cond.") return DataLevel::Condition;
    if (s == "item") return DataLevel::Item;
    throw InvalidArgument("unknown data level '" + std::string(s) + "'");
}

/// Category counts for one condition: a single pooled row at condition
/// level, one row per item at item level.
struct CountData {
    Condition condition = Condition::Production;
    DataLevel level = DataLevel::Condition;
    std::vector<std::string> item_ids;
    std::vector<CategoryCounts> counts;

    static CountData pooled(Condition c, CategoryCounts n) { return {c, DataLevel::Condition, {""}, {n}}; }

    std::int64_t total() const {
        std::int64_t n = 0;
        for (const auto& c : counts) n += c[0] + c[1] + c[2];
        return n;
    }
    CategoryCounts column_sums() const {
        CategoryCounts s{0, 0, 0};
        for (const auto& c : counts)
            for (std::size_t k = 0; k < 3; ++k) s[k] += c[k];
        return s;
    }
    CountData aggregated() const { return pooled(condition, column_sums()); }

    /// Per-item observation totals; the item multiset participants saw.
    std::map<std::string, std::int64_t> item_multiplicities() const {
        std::map<std::string, std::int64_t> m;
        for (std::size_t i = 0; i < counts.size(); ++i) m[item_ids[i]] += counts[i][0] + counts[i][1] + counts[i][2];
        return m;
    }

    void check() const {
        if (item_ids.size() != counts.size()) throw InvalidArgument("CountData: ids and counts differ in length");
        if (level == DataLevel::Condition && counts.size() != 1)
            throw InvalidArgument("CountData: condition-level data has exactly one row");
        for (const auto& c : counts)
            for (auto v : c)
                if (v < 0) throw InvalidArgument("CountData: negative count");
    }
};

// ---------------------------------------------------------------------------
// Model specification

enum class Predictor { Rsa, LlmItem, LlmAvgScores, LlmAvgProb, LlmAvgWta };

inline std::string to_string(Predictor p) {
    switch (p) {
    case Predictor::Rsa: return "rsa";
    case Predictor::LlmItem: return "llm-item";
    case Predictor::LlmAvgScores: return "llm-avg-scores";
    case Predictor::LlmAvgProb: return "llm-avg-prob";
    case Predictor::LlmAvgWta: return "llm-avg-wta";
    }
    return "?";
}

inline Predictor predictor_from_string(std::string_view s) {
    for (auto p : {Predictor::Rsa, Predictor::LlmItem, Predictor::LlmAvgScores, Predictor::LlmAvgProb,
                   Predictor::LlmAvgWta})
        if (to_string(p) == s) return p;
    throw InvalidArgument("unknown predictor '" + std::string(s) + "'");
}

/// Aggregation column label as reported ("---" for item-level predictors).
inline std::string method_label(Predictor p) {
    switch (p) {
    case Predictor::LlmAvgScores: return "avg. scores";
    case Predictor::LlmAvgProb: return "avg. prob.";
    case Predictor::LlmAvgWta: return "avg. WTA";
    default: return "---";
    }
}

struct ModelSpec {
    Predictor predictor = Predictor::Rsa;
    Condition condition = Condition::Production;
    DataLevel level = DataLevel::Condition;
    /// RSA only; any valid item of the condition gives the same prediction.
    std::optional<refgame::Item> item;
    /// LLM predictors only.
    llm::ScoreTable scores;
    llm::LumpMode lump = llm::LumpMode::LogMeanExp;
    /// Display name of the model column ("RSA", "GPT", ...).
    std::string label;

    bool is_llm() const { return predictor != Predictor::Rsa; }

    /// Allowed combinations: RSA at either level, LLM item-level predictor on
    /// item data, aggregate LLM predictors on condition data.
    void check() const {
        if (predictor == Predictor::LlmItem && level != DataLevel::Item)
            throw InvalidArgument("the item-level LLM predictor needs item-level data");
        if (is_llm() && predictor != Predictor::LlmItem && level != DataLevel::Condition)
            throw InvalidArgument("aggregate LLM predictors need condition-level data");
        if (is_llm()) {
            if (!scores.complete) throw InvalidArgument("score table is incomplete; rescore or drop the missing items");
            if (scores.empty()) throw InvalidArgument("score table is empty");
            if (scores.condition != condition) throw InvalidArgument("score table condition does not match the model");
        }
        if (item && item->condition != condition) throw InvalidArgument("RSA item condition does not match the model");
    }
};

// ---------------------------------------------------------------------------
// Densities

/// log LogNormal(alpha | 1, 1) + log Beta(epsilon | 1, 15); -inf off support.
inline double log_prior(const PredictorParams& p) {
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha) || !(p.epsilon >= 0.0) || !(p.epsilon <= 1.0)) return kNegInf;
    const double la = std::log(p.alpha);
    const double lognormal = -la - 0.5 * std::log(2.0 * M_PI) - 0.5 * (la - 1.0) * (la - 1.0);
    const double beta = p.epsilon == 1.0 ? kNegInf : std::log(15.0) + 14.0 * std::log1p(-p.epsilon);
    return lognormal + beta;
}

inline double condition_loglik(const CategoryCounts& counts, const Categorical3& prediction,
                               bool include_coefficient = true) {
    return math::multinomial_log_pmf(counts, prediction.values(), include_coefficient);
}

/// Sum of per-item multinomial log-pmfs; predictions are keyed by item id.
inline double item_loglik(const CountData& data, const std::map<std::string, Categorical3>& predictions,
                          bool include_coefficient = true) {
    double ll = 0.0;
    for (std::size_t i = 0; i < data.counts.size(); ++i) {
        auto it = predictions.find(data.item_ids[i]);
        if (it == predictions.end()) throw InvalidArgument("no prediction for item '" + data.item_ids[i] + "'");
        ll += condition_loglik(data.counts[i], it->second, include_coefficient);
    }
    return ll;
}

// ---------------------------------------------------------------------------
// Likelihood

/// A model bound to data: per-row predictions and the log target.
class Model {
public:
    Model(ModelSpec spec, CountData data) : spec_(std::move(spec)), data_(std::move(data)) {
        spec_.check();
        data_.check();
        if (data_.condition != spec_.condition) throw InvalidArgument("data condition does not match the model");
        if (data_.level != spec_.level) throw InvalidArgument("data level does not match the model");
        if (spec_.predictor == Predictor::Rsa) {
            rsa_ = rsa::prepare(spec_.item ? *spec_.item : refgame::example_item(spec_.condition));
        } else if (spec_.predictor == Predictor::LlmItem) {
            for (const auto& id : data_.item_ids) {
                const auto* row = spec_.scores.find(id);
                if (!row) throw InvalidArgument("no LLM scores for item '" + id + "'");
                rows_.push_back(*row);
                lumped_.push_back(llm::lump_distractors(*row));
            }
        } else {
            // repeated items collapse into one weighted entry
            std::map<std::string, std::size_t> slot;
            for (const auto& row : spec_.scores.items) {
                auto [it, fresh] = slot.try_emplace(row.item_id, lumped_.size());
                if (fresh) {
                    lumped_.push_back(llm::lump_distractors(row));
                    weights_.push_back(0.0);
                }
                weights_[it->second] += 1.0 / static_cast<double>(spec_.scores.items.size());
            }
            if (spec_.predictor == Predictor::LlmAvgWta) {
                wta_counts_ = {0.0, 0.0, 0.0};
                for (const auto& row : spec_.scores.items) {
                    const auto w = llm::item_wta(row, spec_.lump);
                    for (std::size_t k = 0; k < 3; ++k) wta_counts_[k] += w[k];
                }
            }
        }
    }

    const ModelSpec& spec() const { return spec_; }
    const CountData& data() const { return data_; }

    /// Prediction for each data row.
    std::vector<Categorical3> predict(const PredictorParams& p) const {
        p.check();
        std::vector<Categorical3> out;
        out.reserve(data_.counts.size());
        switch (spec_.predictor) {
        case Predictor::Rsa: {
            const auto c = rsa::condition_predictor(rsa_, p);
            out.assign(data_.counts.size(), c);
            break;
        }
        case Predictor::LlmItem:
            for (std::size_t i = 0; i < rows_.size(); ++i) out.push_back(item_base(i, p.alpha).mixed(p.epsilon));
            break;
        default:
            out.assign(data_.counts.size(), aggregate(p.alpha).mixed(p.epsilon));
            break;
        }
        return out;
    }

    double loglik(const PredictorParams& p, bool include_coefficient = true) const {
        const auto preds = predict(p);
        double ll = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            ll += condition_loglik(data_.counts[i], preds[i], include_coefficient);
            if (ll == kNegInf) break;
        }
        return ll;
    }

    double log_posterior(const PredictorParams& p) const {
        const double lp = log_prior(p);
        if (lp == kNegInf) return kNegInf;
        return lp + loglik(p);
    }

    /// Target density over (a, e) = (log alpha, logit epsilon), Jacobian included.
    double log_target(double a, double e) const {
        const PredictorParams p{std::exp(a), math::logistic(e)};
        if (!(p.alpha > 0.0) || !std::isfinite(p.alpha) || p.epsilon >= 1.0 || p.epsilon <= 0.0) return kNegInf;
        const double lp = log_posterior(p);
        if (!std::isfinite(lp)) return kNegInf;
        return lp + a + math::log_logistic(e) + math::log_logistic(-e);
    }

private:
    Categorical3 item_base(std::size_t i, double alpha) const {
        if (spec_.lump == llm::LumpMode::LogMeanExp)
            return Categorical3(llm::detail::scaled_softmax(lumped_[i], alpha));
        return llm::item_probabilities(rows_[i], alpha, spec_.lump);
    }

    Categorical3 aggregate(double alpha) const {
        const auto& t = spec_.scores;
        switch (spec_.predictor) {
        case Predictor::LlmAvgScores: {
            std::array<double, 3> mean{0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < lumped_.size(); ++i)
                for (std::size_t k = 0; k < 3; ++k) mean[k] += weights_[i] * lumped_[i][k];
            return Categorical3(llm::detail::scaled_softmax(mean, alpha));
        }
        case Predictor::LlmAvgProb: {
            if (spec_.lump != llm::LumpMode::LogMeanExp) return llm::avg_prob_predictor(t, alpha, spec_.lump);
            std::array<double, 3> acc{0.0, 0.0, 0.0};
            for (std::size_t i = 0; i < lumped_.size(); ++i) {
                const auto p = llm::detail::scaled_softmax(lumped_[i], alpha);
                for (std::size_t k = 0; k < 3; ++k) acc[k] += weights_[i] * p[k];
            }
            const double z = acc[0] + acc[1] + acc[2];
            for (double& v : acc) v /= z;
            return Categorical3(acc);
        }
        case Predictor::LlmAvgWta:
            return llm::power_law(wta_counts_, alpha);
        default:
            throw Error("internal", "aggregate() on a non-aggregate predictor");
        }
    }

    ModelSpec spec_;
    CountData data_;
    rsa::PreparedItem rsa_;
    std::vector<llm::ItemScores> rows_;
    std::vector<std::array<double, 3>> lumped_;
    std::vector<double> weights_;
    std::array<double, 3> wta_counts_{0.0, 0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Sampler

struct McmcConfig {
    int chains = 4;
    int warmup = 1000;
    int draws = 2000;
    std::uint64_t seed = 20240101;
    double target_acceptance = 0.3;
    bool parallel = true;

    void check() const {
        if (chains < 2) throw InvalidArgument("need at least 2 chains");
        if (warmup < 0 || draws < 1) throw InvalidArgument("warmup must be >= 0 and draws >= 1");
        if (!(target_acceptance > 0.0 && target_acceptance < 1.0)) throw InvalidArgument("target acceptance in (0,1)");
    }
};

struct Draw {
    double alpha = 0.0;
    double epsilon = 0.0;
    bool operator==(const Draw&) const = default;
};

struct PosteriorChains {
    std::vector<std::vector<Draw>> chains;
    McmcConfig config;
    std::vector<double> acceptance; // per chain, over kept draws

    std::size_t n_chains() const { return chains.size(); }
    std::size_t kept() const { return chains.empty() ? 0 : chains.front().size(); }
    std::vector<Draw> pooled() const {
        std::vector<Draw> out;
        for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
        return out;
    }
};

namespace detail {

struct Proposal {
    // lower-triangular Cholesky factor of the covariance, times scale
    double l11 = 0.3, l21 = 0.0, l22 = 0.5;
    double log_scale = 0.0;
};

inline void cholesky(double s11, double s21, double s22, Proposal& prop) {
    const double l11 = std::sqrt(s11);
    const double l21 = s21 / l11;
    const double d = s22 - l21 * l21;
    if (!(s11 > 0.0) || !(d > 0.0)) return; // keep previous factor
    prop.l11 = l11;
    prop.l21 = l21;
    prop.l22 = std::sqrt(d);
}

inline std::vector<Draw> run_chain(const Model& model, const McmcConfig& cfg, std::size_t chain, double& acceptance) {
    Rng rng = make_rng(cfg.seed, 1000 + chain);

    double a = 0.0, e = 0.0, lt = kNegInf;
    for (int attempt = 0; attempt < 100 && !std::isfinite(lt); ++attempt) {
        a = 1.0 + standard_normal(rng);
        const double eps = beta_variate(rng, 1.0, 15.0);
        e = math::logit(std::clamp(eps, 1e-12, 1.0 - 1e-12));
        lt = model.log_target(a, e);
    }
    if (!std::isfinite(lt))
        throw InitializationError("no finite log target after 100 prior draws (chain " + std::to_string(chain) + ")");

    Proposal prop;
    // 2.38^2 / d for d = 2, on the log scale
    const double base_log_scale = std::log(2.38 / std::sqrt(2.0));
    prop.log_scale = base_log_scale;

    // running moments of the warm-up path for covariance adaptation
    double n = 0.0, ma = 0.0, me = 0.0, saa = 0.0, sae = 0.0, see = 0.0;
    const int adapt_start = cfg.warmup / 5;

    std::vector<Draw> kept;
    kept.reserve(static_cast<std::size_t>(cfg.draws));
    int accepted_kept = 0;
    const int total = cfg.warmup + cfg.draws;
    for (int it = 0; it < total; ++it) {
        const double s = std::exp(prop.log_scale);
        const double z1 = standard_normal(rng), z2 = standard_normal(rng);
        const double a_new = a + s * prop.l11 * z1;
        const double e_new = e + s * (prop.l21 * z1 + prop.l22 * z2);
        const double lt_new = model.log_target(a_new, e_new);
        const double log_u = std::log(uniform01(rng));
        const bool accept = std::isfinite(lt_new) && log_u < lt_new - lt;
        if (accept) {
            a = a_new;
            e = e_new;
            lt = lt_new;
        }

        if (it < cfg.warmup) {
            const double acc_prob = std::isfinite(lt_new) ? std::min(1.0, std::exp(std::min(0.0, lt_new - lt))) : 0.0;
            const double rate = accept ? 1.0 : std::min(acc_prob, 1.0);
            const double gain = 1.0 / std::pow(static_cast<double>(it) + 10.0, 0.6);
            prop.log_scale += gain * ((accept ? 1.0 : rate) - cfg.target_acceptance);
            if (it >= adapt_start) {
                n += 1.0;
                const double da = a - ma, de = e - me;
                ma += da / n;
                me += de / n;
                saa += da * (a - ma);
                sae += da * (e - me);
                see += de * (e - me);
                // refresh the shape a few times during warm-up
                const int since = it - adapt_start + 1;
                if (n >= 50 && (since % 100 == 0 || it == cfg.warmup - 1)) {
                    const double reg = 1e-6;
                    cholesky(saa / (n - 1) + reg, sae / (n - 1), see / (n - 1) + reg, prop);
                    prop.log_scale = base_log_scale;
                }
            }
        } else {
            if (accept) ++accepted_kept;
            kept.push_back({std::exp(a), math::logistic(e)});
        }
    }
    acceptance = static_cast<double>(accepted_kept) / static_cast<double>(std::max(1, cfg.draws));
    return kept;
}

} // namespace detail

inline PosteriorChains sample_posterior(const Model& model, const McmcConfig& cfg = {}) {
    cfg.check();
    PosteriorChains out;
    out.config = cfg;
    const auto nc = static_cast<std::size_t>(cfg.chains);
    out.chains.resize(nc);
    out.acceptance.resize(nc);
    std::vector<std::exception_ptr> errors(nc);
    auto run = [&](std::size_t c) {
        try {
            out.chains[c] = detail::run_chain(model, cfg, c, out.acceptance[c]);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (cfg.parallel && std::thread::hardware_concurrency() > 1) {
        std::vector<std::thread> pool;
        for (std::size_t c = 0; c < nc; ++c) pool.emplace_back(run, c);
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t c = 0; c < nc; ++c) run(c);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostics and summaries

struct RhatValue {
    double value = 1.0;
    bool zero_variance = false;
};

/// Split-chain potential scale reduction factor of one scalar across chains.
inline RhatValue split_rhat(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw InvalidArgument("rhat: need at least 2 chains");
    std::size_t n = chains.front().size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 100) throw InvalidArgument("rhat: need at least 100 draws per chain");
    const std::size_t half = n / 2;
    std::vector<std::vector<double>> parts;
    for (const auto& c : chains) {
        parts.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
        parts.emplace_back(c.begin() + static_cast<long>(n - half), c.begin() + static_cast<long>(n));
    }
    const double m = static_cast<double>(parts.size());
    const double len = static_cast<double>(half);
    std::vector<double> means, vars;
    for (const auto& p : parts) {
        const double mu = math::mean(p);
        double v = 0.0;
        for (double x : p) v += (x - mu) * (x - mu);
        means.push_back(mu);
        vars.push_back(v / (len - 1.0));
    }
    const double grand = math::mean(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= len / (m - 1.0);
    const double w = math::mean(vars);
    if (w <= 0.0) {
        if (b <= 0.0) return {1.0, true};
        return {std::numeric_limits<double>::infinity(), true};
    }
    const double var_plus = (len - 1.0) / len * w + b / len;
    return {std::sqrt(var_plus / w), false};
}

struct RhatResult {
    RhatValue alpha, epsilon;
};

inline RhatResult rhat(const PosteriorChains& pc) {
    std::vector<std::vector<double>> a, e;
    for (const auto& c : pc.chains) {
        a.emplace_back();
        e.emplace_back();
        for (const auto& d : c) {
            a.back().push_back(d.alpha);
            e.back().push_back(d.epsilon);
        }
    }
    return {split_rhat(a), split_rhat(e)};
}

struct ParamSummary {
    double mean = 0.0;
    double lo = 0.0; // 2.5 %
    double hi = 0.0; // 97.5 %
    std::optional<double> rhat;
    bool zero_variance = false;
};

struct PosteriorSummary {
    ParamSummary alpha, epsilon;
};

inline ParamSummary summarize_values(std::vector<double> xs) {
    if (xs.empty()) throw InvalidArgument("summarize: no draws");
    ParamSummary s;
    s.mean = math::mean(xs);
    std::sort(xs.begin(), xs.end());
    s.lo = math::quantile_sorted(xs, 0.025);
    s.hi = math::quantile_sorted(xs, 0.975);
    return s;
}

/// Pooled mean and type-7 2.5 / 97.5 % quantiles, plus split R-hat when
/// every chain has at least 100 draws.
inline PosteriorSummary summarize(const PosteriorChains& pc) {
    std::vector<double> a, e;
    for (const auto& c : pc.chains)
        for (const auto& d : c) {
            a.push_back(d.alpha);
            e.push_back(d.epsilon);
        }
    PosteriorSummary s{summarize_values(std::move(a)), summarize_values(std::move(e))};
    bool enough = pc.chains.size() >= 2;
    for (const auto& c : pc.chains) enough = enough && c.size() >= 100;
    if (enough) {
        const auto r = rhat(pc);
        s.alpha.rhat = r.alpha.value;
        s.alpha.zero_variance = r.alpha.zero_variance;
        s.epsilon.rhat = r.epsilon.value;
        s.epsilon.zero_variance = r.epsilon.zero_variance;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Grid oracle

struct GridConfig {
    int n_log_alpha = 400;
    int n_logit_epsilon = 400;
    double log_alpha_lo = -5.0, log_alpha_hi = 5.0;
    double logit_epsilon_lo = -12.0, logit_epsilon_hi = 4.0;
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return out;
}

inline std::vector<double> trapezoid_weights(int n, double h) {
    std::vector<double> w(static_cast<std::size_t>(n), h);
    w.front() = w.back() = 0.5 * h;
    return w;
}

/// Quantile of a density given at grid nodes, by piecewise-linear CDF inversion.
inline double grid_quantile(const std::vector<double>& x, const std::vector<double>& dens, double q) {
    std::vector<double> cdf(x.size(), 0.0);
    for (std::size_t i = 1; i < x.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * (x[i] - x[i - 1]) * (dens[i] + dens[i - 1]);
    const double target = q * cdf.back();
    for (std::size_t i = 1; i < x.size(); ++i)
        if (cdf[i] >= target) {
            const double span = cdf[i] - cdf[i - 1];
            const double t = span > 0.0 ? (target - cdf[i - 1]) / span : 0.0;
            return x[i - 1] + t * (x[i] - x[i - 1]);
        }
    return x.back();
}

} // namespace detail

/// Posterior means and 95 % intervals by trapezoidal quadrature over
/// (log alpha, logit epsilon).
inline PosteriorSummary grid_posterior(const Model& model, const GridConfig& g = {}) {
    if (g.n_log_alpha < 2 || g.n_logit_epsilon < 2) throw InvalidArgument("grid needs at least 2 nodes per axis");
    const auto as = detail::linspace(g.log_alpha_lo, g.log_alpha_hi, g.n_log_alpha);
    const auto es = detail::linspace(g.logit_epsilon_lo, g.logit_epsilon_hi, g.n_logit_epsilon);
    const auto wa = detail::trapezoid_weights(g.n_log_alpha, as[1] - as[0]);
    const auto we = detail::trapezoid_weights(g.n_logit_epsilon, es[1] - es[0]);

    std::vector<double> lt(as.size() * es.size());
    double mx = kNegInf;
    for (std::size_t i = 0; i < as.size(); ++i)
        for (std::size_t j = 0; j < es.size(); ++j) {
            const double v = model.log_target(as[i], es[j]);
            lt[i * es.size() + j] = v;
            mx = std::max(mx, v);
        }
    if (!std::isfinite(mx)) throw DomainError("grid posterior: every grid weight underflowed; widen the grid");

    std::vector<double> pa(as.size(), 0.0), pe(es.size(), 0.0);
    for (std::size_t i = 0; i < as.size(); ++i)
        for (std::size_t j = 0; j < es.size(); ++j) {
            const double d = std::exp(lt[i * es.size() + j] - mx);
            pa[i] += we[j] * d;
            pe[j] += wa[i] * d;
        }
    double z = 0.0, ea = 0.0, ee = 0.0;
    for (std::size_t i = 0; i < as.size(); ++i) {
        z += wa[i] * pa[i];
        ea += wa[i] * pa[i] * std::exp(as[i]);
    }
    for (std::size_t j = 0; j < es.size(); ++j) ee += we[j] * pe[j] * math::logistic(es[j]);
    if (!(z > 0.0)) throw DomainError("grid posterior: zero total mass; widen the grid");

    PosteriorSummary s;
    s.alpha.mean = ea / z;
    s.epsilon.mean = ee / z;
    s.alpha.lo = std::exp(detail::grid_quantile(as, pa, 0.025));
    s.alpha.hi = std::exp(detail::grid_quantile(as, pa, 0.975));
    s.epsilon.lo = math::logistic(detail::grid_quantile(es, pe, 0.025));
    s.epsilon.hi = math::logistic(detail::grid_quantile(es, pe, 0.975));
    return s;
}

// ---------------------------------------------------------------------------
// Simulation

/// Counts of the same shape as `shape`, drawn from the model at `params`.
inline CountData simulate(const Model& model, const PredictorParams& params, Rng& rng) {
    CountData out = model.data();
    const auto preds = model.predict(params);
    for (std::size_t i = 0; i < out.counts.size(); ++i) {
        const auto& c = model.data().counts[i];
        out.counts[i] = sample_multinomial(rng, c[0] + c[1] + c[2], preds[i].values());
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ParamSummary& p) {
    nlohmann::json j = {{"mean", p.mean}, {"lo", p.lo}, {"hi", p.hi}};
    j["rhat"] = p.rhat ? nlohmann::json(*p.rhat) : nlohmann::json(nullptr);
    if (p.zero_variance) j["zero_variance"] = true;
    return j;
}

inline ParamSummary param_summary_from_json(const nlohmann::json& j) {
    ParamSummary p;
    j.at("mean").get_to(p.mean);
    j.at("lo").get_to(p.lo);
    j.at("hi").get_to(p.hi);
    if (j.contains("rhat") && !j.at("rhat").is_null()) p.rhat = j.at("rhat").get<double>();
    if (j.contains("zero_variance")) p.zero_variance = j.at("zero_variance").get<bool>();
    return p;
}

inline nlohmann::json draws_to_json(const PosteriorChains& pc) {
    nlohmann::json chains = nlohmann::json::array();
    for (const auto& c : pc.chains) {
        nlohmann::json a = nlohmann::json::array(), e = nlohmann::json::array();
        for (const auto& d : c) {
            a.push_back(d.alpha);
            e.push_back(d.epsilon);
        }
        chains.push_back({{"alpha", a}, {"epsilon", e}});
    }
    return {{"seed", pc.config.seed},
            {"n_chains", pc.config.chains},
            {"warmup", pc.config.warmup},
            {"kept", pc.config.draws},
            {"target_acceptance", pc.config.target_acceptance},
            {"chains", chains}};
}

inline PosteriorChains draws_from_json(const nlohmann::json& j) {
    PosteriorChains pc;
    pc.config.seed = j.at("seed").get<std::uint64_t>();
    pc.config.chains = j.at("n_chains").get<int>();
    pc.config.warmup = j.at("warmup").get<int>();
    pc.config.draws = j.at("kept").get<int>();
    if (j.contains("target_acceptance")) pc.config.target_acceptance = j.at("target_acceptance").get<double>();
    for (const auto& c : j.at("chains")) {
        const auto a = c.at("alpha").get<std::vector<double>>();
        const auto e = c.at("epsilon").get<std::vector<double>>();
        if (a.size() != e.size()) throw InvalidArgument("draws: alpha and epsilon lengths differ");
        std::vector<Draw> d;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const PredictorParams p{a[i], e[i]};
            if (!p.valid()) throw InvalidArgument("draws: parameter out of range");
            d.push_back({a[i], e[i]});
        }
        pc.chains.push_back(std::move(d));
    }
    return pc;
}

} // namespace pragcheck::inference
