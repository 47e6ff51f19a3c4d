#pragma once

/// Item-level and condition-level predictors built from per-option LLM scores.
///
/// A score is the length-corrected log-probability of an option's tokens.
/// Item-level predictions are a soft-max over alpha-scaled scores. The three
/// condition-level predictors differ in what gets averaged over the item
/// multiset: the scores (then soft-max), the item probabilities, or the
/// winner-takes-all choices (then a power-law with exponent alpha).

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "csv.hpp"

namespace pragcheck::llm {

enum class LengthCorrection { Mean, Sum };

/// How the two production distractor words become one category.
enum class LumpMode {
    /// Combine before the soft-max: log-mean-exp of the distractor scores.
    LogMeanExp,
    /// Soft-max over all options, then add up distractor probabilities.
    SumProbabilities,
};

inline std::string to_string(LengthCorrection c) { return c == LengthCorrection::Mean ? "mean" : "sum"; }
inline LengthCorrection length_correction_from_string(std::string_view s) {
    if (s == "mean") return LengthCorrection::Mean;
    if (s == "sum") return LengthCorrection::Sum;
    throw InvalidArgument("unknown length correction '" + std::string(s) + "'");
}
inline std::string to_string(LumpMode m) { return m == LumpMode::LogMeanExp ? "log-mean-exp" : "sum-probabilities"; }
inline LumpMode lump_mode_from_string(std::string_view s) {
    if (s == "log-mean-exp" || s == "lme") return LumpMode::LogMeanExp;
    if (s == "sum-probabilities" || s == "sum") return LumpMode::SumProbabilities;
    throw InvalidArgument("unknown lump mode '" + std::string(s) + "'");
}

struct ScoredOption {
    ResponseCategory category = ResponseCategory::Target;
    std::string option_text;
    std::vector<double> token_logprobs; // may be empty when only the score was ingested
    double score = 0.0;
    int n_tokens = 1;
};

struct ItemScores {
    std::string item_id;
    std::vector<ScoredOption> options;
};

/// Scores for one condition. Items form a multiset: an item listed twice
/// counts twice in every average.
struct ScoreTable {
    Condition condition = Condition::Production;
    LengthCorrection correction = LengthCorrection::Mean;
    std::vector<ItemScores> items;
    bool complete = true;
    std::vector<std::string> missing; // item ids with unscored options

    bool empty() const { return items.empty(); }
    const ItemScores* find(const std::string& id) const {
        for (const auto& it : items)
            if (it.item_id == id) return &it;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Scores

inline double item_score(std::span<const double> token_logprobs, LengthCorrection correction = LengthCorrection::Mean) {
    if (token_logprobs.empty()) throw InvalidArgument("item_score: no token log-probabilities");
    double s = 0.0;
    for (double lp : token_logprobs) {
        if (!(lp <= 0.0)) throw DomainError("item_score: log-probability must be <= 0");
        s += lp;
    }
    return correction == LengthCorrection::Mean ? s / static_cast<double>(token_logprobs.size()) : s;
}

/// One score per category; several distractors are combined by log-mean-exp.
inline std::array<double, 3> lump_distractors(std::span<const ScoredOption> options) {
    std::array<int, 3> seen{0, 0, 0};
    std::array<double, 3> out{};
    std::vector<double> distractors;
    for (const auto& o : options) {
        const auto k = index_of(o.category);
        ++seen[k];
        if (o.category == ResponseCategory::Distractor)
            distractors.push_back(o.score);
        else
            out[k] = o.score;
    }
    if (seen[0] != 1 || seen[1] != 1 || seen[2] < 1)
        throw InvalidArgument("lump_distractors: need exactly one target, one competitor and at least one distractor");
    out[2] = distractors.size() == 1 ? distractors.front() : math::log_mean_exp(distractors);
    return out;
}

inline std::array<double, 3> lump_distractors(const ItemScores& item) {
    try {
        return lump_distractors(std::span<const ScoredOption>(item.options));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string(e.what()) + " (item '" + item.item_id + "')");
    }
}

// ---------------------------------------------------------------------------
// Item-level predictions

namespace detail {

inline void require_finite(std::span<const double> scores) {
    for (double s : scores)
        if (!std::isfinite(s)) throw DomainError("non-finite option score");
}

/// softmax(alpha * scores) without heap allocation; n <= 8.
template <std::size_t N>
std::array<double, N> scaled_softmax(const std::array<double, N>& scores, double alpha) {
    double m = kNegInf;
    for (double s : scores) m = std::max(m, alpha * s);
    std::array<double, N> out{};
    double z = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = std::exp(alpha * scores[i] - m);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

inline std::vector<double> scaled_softmax(std::span<const double> scores, double alpha) {
    std::vector<double> logits(scores.begin(), scores.end());
    for (double& l : logits) l *= alpha;
    return math::softmax(logits);
}

/// Probability-1 on the argmax, split evenly over exact ties.
inline std::vector<double> argmax_split(std::span<const double> scores) {
    double m = kNegInf;
    for (double s : scores) m = std::max(m, s);
    std::vector<double> out(scores.size(), 0.0);
    std::size_t ties = 0;
    for (double s : scores)
        if (s == m) ++ties;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] == m) out[i] = 1.0 / static_cast<double>(ties);
    return out;
}

} // namespace detail

/// softmax(alpha * scores) mixed with uniform guessing at rate epsilon.
/// alpha = 0 is allowed here and yields the flat prediction.
inline Categorical3 item_predictor(const std::array<double, 3>& scores, const PredictorParams& params) {
    detail::require_finite(scores);
    if (!(params.alpha >= 0.0) || !std::isfinite(params.alpha) || params.epsilon < 0.0 || params.epsilon > 1.0)
        throw DomainError("item_predictor: parameters out of range");
    return Categorical3(detail::scaled_softmax(scores, params.alpha)).mixed(params.epsilon);
}

inline Categorical3 wta_item_prediction(const std::array<double, 3>& scores) {
    detail::require_finite(scores);
    const auto p = detail::argmax_split(scores);
    return Categorical3({p[0], p[1], p[2]});
}

/// Item-level soft-max prediction (no error mixture) under either lump mode.
inline Categorical3 item_probabilities(const ItemScores& item, double alpha, LumpMode mode = LumpMode::LogMeanExp) {
    if (mode == LumpMode::LogMeanExp) return item_predictor(lump_distractors(item), {alpha, 0.0});
    lump_distractors(item); // category check
    std::vector<double> scores;
    for (const auto& o : item.options) scores.push_back(o.score);
    detail::require_finite(scores);
    const auto p = detail::scaled_softmax(scores, alpha);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < p.size(); ++i) out[index_of(item.options[i].category)] += p[i];
    return Categorical3(out);
}

/// Winner-takes-all prediction: the alpha -> infinity limit of item_probabilities.
inline Categorical3 item_wta(const ItemScores& item, LumpMode mode = LumpMode::LogMeanExp) {
    if (mode == LumpMode::LogMeanExp) return wta_item_prediction(lump_distractors(item));
    lump_distractors(item);
    std::vector<double> scores;
    for (const auto& o : item.options) scores.push_back(o.score);
    detail::require_finite(scores);
    const auto p = detail::argmax_split(scores);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < p.size(); ++i) out[index_of(item.options[i].category)] += p[i];
    return Categorical3(out);
}

// ---------------------------------------------------------------------------
// Condition-level predictors

namespace detail {
inline void require_nonempty(const ScoreTable& t, const char* who) {
    if (t.empty()) throw InvalidArgument(std::string(who) + ": empty score table");
}
} // namespace detail

/// Soft-max of alpha times the per-category mean score. Distractors are
/// always lumped by log-mean-exp here, since a score average needs one score
/// per category.
inline Categorical3 avg_scores_predictor(const ScoreTable& table, double alpha) {
    detail::require_nonempty(table, "avg_scores_predictor");
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    for (const auto& item : table.items) {
        const auto s = lump_distractors(item);
        for (std::size_t k = 0; k < 3; ++k) mean[k] += s[k];
    }
    for (double& v : mean) v /= static_cast<double>(table.items.size());
    return item_predictor(mean, {alpha, 0.0});
}

inline Categorical3 avg_prob_predictor(const ScoreTable& table, double alpha, LumpMode mode = LumpMode::LogMeanExp) {
    detail::require_nonempty(table, "avg_prob_predictor");
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (const auto& item : table.items) {
        const auto p = item_probabilities(item, alpha, mode);
        for (std::size_t k = 0; k < 3; ++k) acc[k] += p[k];
    }
    for (double& v : acc) v /= static_cast<double>(table.items.size());
    return Categorical3(acc);
}

/// WTA choice frequencies across the item multiset.
inline std::array<double, 3> wta_frequencies(const ScoreTable& table, LumpMode mode = LumpMode::LogMeanExp) {
    detail::require_nonempty(table, "wta_frequencies");
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (const auto& item : table.items) {
        const auto p = item_wta(item, mode);
        for (std::size_t k = 0; k < 3; ++k) acc[k] += p[k];
    }
    for (double& v : acc) v /= static_cast<double>(table.items.size());
    return acc;
}

/// normalize(weights^alpha) with 0^alpha = 0 for alpha > 0. Weights need not
/// be normalized; pass raw choice counts to keep alpha = 1 exact.
inline Categorical3 power_law(const std::array<double, 3>& weights, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("power_law: alpha must be > 0");
    double wmax = 0.0;
    for (double f : weights) {
        if (!(f >= 0.0)) throw DomainError("power_law: negative weight");
        wmax = std::max(wmax, f);
    }
    if (!(wmax > 0.0)) throw DomainError("power_law: all weights are zero");
    // Rescale by the largest weight only when the direct power would overflow.
    const bool rescale = alpha * std::abs(std::log(wmax)) > 600.0;
    std::array<double, 3> w{};
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        if (weights[k] > 0.0)
            w[k] = rescale ? std::exp(alpha * (std::log(weights[k]) - std::log(wmax))) : std::pow(weights[k], alpha);
        z += w[k];
    }
    for (double& v : w) v /= z;
    return Categorical3(w);
}

inline Categorical3 avg_wta_predictor(const ScoreTable& table, double alpha, LumpMode mode = LumpMode::LogMeanExp) {
    detail::require_nonempty(table, "avg_wta_predictor");
    std::array<double, 3> counts{0.0, 0.0, 0.0};
    for (const auto& item : table.items) {
        const auto p = item_wta(item, mode);
        for (std::size_t k = 0; k < 3; ++k) counts[k] += p[k];
    }
    return power_law(counts, alpha);
}

// ---------------------------------------------------------------------------
// Accuracy

/// Generic n-option items; option 0 is the target.
using OptionScores = std::vector<double>;

inline double softmax_accuracy(std::span<const OptionScores> items, double alpha) {
    if (items.empty()) throw InvalidArgument("softmax_accuracy: no items");
    double acc = 0.0;
    for (const auto& s : items) {
        detail::require_finite(s);
        acc += detail::scaled_softmax(s, alpha)[0];
    }
    return acc / static_cast<double>(items.size());
}

inline double wta_accuracy(std::span<const OptionScores> items) {
    if (items.empty()) throw InvalidArgument("wta_accuracy: no items");
    double acc = 0.0;
    for (const auto& s : items) {
        detail::require_finite(s);
        acc += detail::argmax_split(s)[0];
    }
    return acc / static_cast<double>(items.size());
}

inline double softmax_accuracy(const ScoreTable& table, double alpha, LumpMode mode = LumpMode::LogMeanExp) {
    detail::require_nonempty(table, "softmax_accuracy");
    double acc = 0.0;
    for (const auto& item : table.items) acc += item_probabilities(item, alpha, mode)[ResponseCategory::Target];
    return acc / static_cast<double>(table.items.size());
}

inline double wta_accuracy(const ScoreTable& table, LumpMode mode = LumpMode::LogMeanExp) {
    return wta_frequencies(table, mode)[0];
}

// ---------------------------------------------------------------------------
// Multiset construction

/// Repeats each item as often as `multiplicity` says (items absent from the
/// map are dropped). Used to mirror the items participants actually saw.
inline ScoreTable with_multiplicities(const ScoreTable& table, const std::map<std::string, std::int64_t>& multiplicity) {
    ScoreTable out = table;
    out.items.clear();
    std::map<std::string, bool> seen;
    for (const auto& item : table.items) {
        if (seen[item.item_id]) continue;
        seen[item.item_id] = true;
        auto it = multiplicity.find(item.item_id);
        if (it == multiplicity.end()) continue;
        for (std::int64_t i = 0; i < it->second; ++i) out.items.push_back(item);
    }
    for (const auto& [id, n] : multiplicity)
        if (n > 0 && !seen.count(id)) throw InvalidArgument("score table has no scores for item '" + id + "'");
    return out;
}

// ---------------------------------------------------------------------------
// scores.csv: item_id, condition, category, option_text, score, n_tokens

inline void write_scores_csv(std::ostream& out, const ScoreTable& table) {
    csv::write_row(out, {"item_id", "condition", "category", "option_text", "score", "n_tokens"});
    for (const auto& item : table.items)
        for (const auto& o : item.options)
            csv::write_row(out, {item.item_id, pragcheck::to_string(table.condition), pragcheck::to_string(o.category),
                                 o.option_text, math::format_double(o.score), std::to_string(o.n_tokens)});
}

/// Reads one condition's rows. Rows are grouped by item id in order of first
/// appearance; each item must carry one target, one competitor and at least
/// one distractor.
inline ScoreTable read_scores_csv(std::istream& in, Condition condition,
                                  LengthCorrection correction = LengthCorrection::Mean) {
    const auto t = csv::read(in);
    const auto c_item = t.column("item_id"), c_cond = t.column("condition"), c_cat = t.column("category"),
               c_text = t.column("option_text"), c_score = t.column("score");
    const bool has_ntok = t.has_column("n_tokens");
    const auto c_ntok = has_ntok ? t.column("n_tokens") : 0;
    ScoreTable table;
    table.condition = condition;
    table.correction = correction;
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        try {
            if (row.size() != t.header.size()) throw InvalidArgument("wrong number of fields");
            if (condition_from_string(row[c_cond]) != condition) continue;
            ScoredOption o;
            o.category = category_from_string(row[c_cat]);
            o.option_text = row[c_text];
            o.score = math::parse_double(row[c_score]);
            o.n_tokens = has_ntok ? static_cast<int>(math::parse_int(row[c_ntok])) : 1;
            if (!std::isfinite(o.score)) throw DomainError("non-finite score");
            auto [it, fresh] = index.try_emplace(row[c_item], table.items.size());
            if (fresh) table.items.push_back({row[c_item], {}});
            table.items[it->second].options.push_back(std::move(o));
        } catch (const Error& e) {
            throw InvalidArgument("scores.csv line " + std::to_string(t.lines[r]) + ": " + e.what());
        }
    }
    for (const auto& item : table.items) lump_distractors(item);
    return table;
}

/// Sidecar: [{"item_id", "option_text", "token_logprobs": [...]}, ...]
inline void attach_token_logprobs(ScoreTable& table, const nlohmann::json& sidecar) {
    for (const auto& rec : sidecar) {
        const auto id = rec.at("item_id").get<std::string>();
        const auto text = rec.at("option_text").get<std::string>();
        bool found = false;
        for (auto& item : table.items) {
            if (item.item_id != id) continue;
            for (auto& o : item.options) {
                if (o.option_text != text) continue;
                o.token_logprobs = rec.at("token_logprobs").get<std::vector<double>>();
                o.n_tokens = static_cast<int>(o.token_logprobs.size());
                o.score = item_score(o.token_logprobs, table.correction);
                found = true;
            }
        }
        if (!found) throw InvalidArgument("token_logprobs sidecar: no option '" + text + "' for item '" + id + "'");
    }
}

} // namespace pragcheck::llm
