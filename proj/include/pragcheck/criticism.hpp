#pragma once

/// Posterior predictive checks, Bayesian posterior predictive p-values and
/// the summary table of fits.

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "random.hpp"

namespace pragcheck::criticism {

using inference::CountData;
using inference::Model;
using inference::PosteriorChains;

/// Version, configuration hash and master seed carried by every output.
struct Stamp {
    std::string version = std::string(kVersion);
    std::string config_hash;
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const Stamp& s) {
    return {{"version", s.version}, {"config_hash", s.config_hash}, {"seed", s.seed}};
}

// ---------------------------------------------------------------------------
// Replicates

/// One replicated data set per posterior draw, shaped like the observed data.
struct PpcReplicates {
    CountData observed;
    std::vector<std::vector<CategoryCounts>> replicates; // [draw][row]

    std::size_t size() const { return replicates.size(); }
    /// Replicate `r` summed over rows.
    CategoryCounts pooled(std::size_t r) const {
        CategoryCounts s{0, 0, 0};
        for (const auto& c : replicates[r])
            for (std::size_t k = 0; k < 3; ++k) s[k] += c[k];
        return s;
    }
};

/// Draw `d` in pooled order (chain-major) simulates with its own RNG stream,
/// so results do not depend on scheduling.
inline PpcReplicates posterior_predictive(const Model& model, const PosteriorChains& chains, std::uint64_t seed) {
    const auto draws = chains.pooled();
    if (draws.empty()) throw InvalidArgument("posterior_predictive: no draws");
    PpcReplicates out;
    out.observed = model.data();
    out.replicates.reserve(draws.size());
    for (std::size_t d = 0; d < draws.size(); ++d) {
        Rng rng = make_rng(seed, d);
        out.replicates.push_back(inference::simulate(model, {draws[d].alpha, draws[d].epsilon}, rng).counts);
    }
    return out;
}

struct CategoryPpc {
    std::int64_t observed = 0;
    double pred_mean = 0.0, pred_lo = 0.0, pred_hi = 0.0;
    double diff_mean = 0.0, diff_lo = 0.0, diff_hi = 0.0; // observed - replicated

    bool covers() const {
        const auto o = static_cast<double>(observed);
        return pred_lo <= o && o <= pred_hi;
    }
};

struct PpcSummary {
    Condition condition = Condition::Production;
    std::array<CategoryPpc, 3> categories;

    /// Visual check: every observed count inside its 95 % predictive interval.
    bool visual_pass() const {
        for (const auto& c : categories)
            if (!c.covers()) return false;
        return true;
    }
};

/// Per-category summary of counts summed over rows.
inline PpcSummary ppc_summary(const PpcReplicates& reps) {
    if (reps.size() < 100) throw InvalidArgument("ppc_summary: need at least 100 replicates");
    const auto obs = reps.observed.column_sums();
    PpcSummary s;
    s.condition = reps.observed.condition;
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> pred, diff;
        pred.reserve(reps.size());
        diff.reserve(reps.size());
        for (std::size_t r = 0; r < reps.size(); ++r) {
            const auto v = static_cast<double>(reps.pooled(r)[k]);
            pred.push_back(v);
            diff.push_back(static_cast<double>(obs[k]) - v);
        }
        auto& c = s.categories[k];
        c.observed = obs[k];
        c.pred_mean = math::mean(pred);
        c.diff_mean = math::mean(diff);
        std::sort(pred.begin(), pred.end());
        std::sort(diff.begin(), diff.end());
        c.pred_lo = math::quantile_sorted(pred, 0.025);
        c.pred_hi = math::quantile_sorted(pred, 0.975);
        c.diff_lo = math::quantile_sorted(diff, 0.025);
        c.diff_hi = math::quantile_sorted(diff, 0.975);
    }
    return s;
}

inline void write_ppc_csv(std::ostream& out, const std::vector<PpcSummary>& rows, const Stamp& stamp) {
    out << "# pragcheck " << stamp.version << " config_hash=" << stamp.config_hash << " seed=" << stamp.seed << "\n";
    csv::write_row(out, {"condition", "category", "observed", "pred_mean", "pred_lo", "pred_hi", "diff_mean", "diff_lo",
                         "diff_hi"});
    for (const auto& s : rows)
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& c = s.categories[k];
            csv::write_row(out, {to_string(s.condition), to_string(kCategories[k]), std::to_string(c.observed),
                                 math::format_double(c.pred_mean), math::format_double(c.pred_lo),
                                 math::format_double(c.pred_hi), math::format_double(c.diff_mean),
                                 math::format_double(c.diff_lo), math::format_double(c.diff_hi)});
        }
}

// ---------------------------------------------------------------------------
// Bppp

struct BpppResult {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

namespace detail {

/// a <= b with a relative slack for rounding in the log-pmf sums.
inline bool leq_tolerant(double a, double b) {
    if (a <= b) return true;
    if (!std::isfinite(a) || !std::isfinite(b)) return false;
    return a - b <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace detail

/// Pr[loglik(D_rep | theta) <= loglik(D_obs | theta)] with one replicate per
/// posterior draw. Small values flag misfit.
inline BpppResult bppp(const Model& model, const PosteriorChains& chains, std::uint64_t seed,
                       bool include_coefficient = true) {
    const auto draws = chains.pooled();
    if (draws.empty()) throw InvalidArgument("bppp: no draws");
    const auto& obs = model.data();
    std::size_t hits = 0;
    for (std::size_t d = 0; d < draws.size(); ++d) {
        const PredictorParams theta{draws[d].alpha, draws[d].epsilon};
        const auto preds = model.predict(theta);
        Rng rng = make_rng(seed, d);
        double ll_obs = 0.0, ll_rep = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& c = obs.counts[i];
            const auto rep = sample_multinomial(rng, c[0] + c[1] + c[2], preds[i].values());
            ll_obs += math::multinomial_log_pmf(c, preds[i].values(), include_coefficient);
            ll_rep += math::multinomial_log_pmf(rep, preds[i].values(), include_coefficient);
        }
        if (detail::leq_tolerant(ll_rep, ll_obs)) ++hits;
    }
    BpppResult r;
    r.n = draws.size();
    r.value = static_cast<double>(hits) / static_cast<double>(r.n);
    r.std_error = std::sqrt(r.value * (1.0 - r.value) / static_cast<double>(r.n));
    return r;
}

// ---------------------------------------------------------------------------
// Report

inline constexpr double kBpppThreshold = 0.05;

struct FitRow {
    std::string model;  // "RSA", "GPT", ...
    std::string level;  // "cond." / "item"
    std::string method; // "---", "avg. scores", ...
    Condition condition = Condition::Production;
    inference::PosteriorSummary posterior;
    double bppp = 0.0;

    bool pass() const { return bppp >= kBpppThreshold; }
};

inline std::string level_label(inference::DataLevel l) { return l == inference::DataLevel::Condition ? "cond." : "item"; }
inline std::string condition_label(Condition c) { return c == Condition::Production ? "prd." : "int."; }

inline nlohmann::json to_json(const FitRow& r) {
    return {{"model", r.model},
            {"level", r.level},
            {"method", r.method},
            {"condition", to_string(r.condition)},
            {"alpha", inference::to_json(r.posterior.alpha)},
            {"epsilon", inference::to_json(r.posterior.epsilon)},
            {"bppp", r.bppp},
            {"pass", r.pass()}};
}

inline FitRow fit_row_from_json(const nlohmann::json& j) {
    FitRow r;
    j.at("model").get_to(r.model);
    j.at("level").get_to(r.level);
    j.at("method").get_to(r.method);
    r.condition = condition_from_string(j.at("condition").get<std::string>());
    r.posterior.alpha = inference::param_summary_from_json(j.at("alpha"));
    r.posterior.epsilon = inference::param_summary_from_json(j.at("epsilon"));
    j.at("bppp").get_to(r.bppp);
    return r;
}

inline nlohmann::json report_json(const std::vector<FitRow>& rows, const Stamp& stamp) {
    nlohmann::json out = {{"stamp", to_json(stamp)}, {"rows", nlohmann::json::array()}};
    for (const auto& r : rows) out["rows"].push_back(to_json(r));
    return out;
}

inline const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> cols = {"model", "data",   "method", "condition", "alpha_lo", "alpha_mean",
                                                  "alpha_hi", "eps_lo", "eps_mean", "eps_hi", "Bppp", "flag"};
    return cols;
}

namespace detail {

inline std::string fixed2(double x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << x;
    return s.str();
}

} // namespace detail

/// Aligned plain-text table; numbers to two decimals, flag "pass"/"fail".
inline std::string report_text(const std::vector<FitRow>& rows, const Stamp& stamp) {
    std::vector<std::vector<std::string>> cells{report_columns()};
    for (const auto& r : rows) {
        const auto& a = r.posterior.alpha;
        const auto& e = r.posterior.epsilon;
        cells.push_back({r.model, r.level, r.method, condition_label(r.condition), detail::fixed2(a.lo),
                         detail::fixed2(a.mean), detail::fixed2(a.hi), detail::fixed2(e.lo), detail::fixed2(e.mean),
                         detail::fixed2(e.hi), detail::fixed2(r.bppp), r.pass() ? "pass" : "fail"});
    }
    std::vector<std::size_t> width(report_columns().size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    out << "# pragcheck " << stamp.version << " config_hash=" << stamp.config_hash << " seed=" << stamp.seed << "\n";
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            out << std::left << std::setw(static_cast<int>(c + 1 == row.size() ? 0 : width[c])) << row[c];
        }
        out << "\n";
    }
    return out.str();
}

} // namespace pragcheck::criticism
