#pragma once

/// Shared vocabulary types, error classes and numeric helpers.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pragcheck {

inline constexpr std::string_view kVersion = "0.1.0";

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error("domain_error", what) {}
};

// ---------------------------------------------------------------------------
// Enumerations

enum class Condition { Production, Interpretation };
enum class ResponseCategory { Target = 0, Competitor = 1, Distractor = 2 };

inline constexpr std::array<ResponseCategory, 3> kCategories = {
    ResponseCategory::Target, ResponseCategory::Competitor, ResponseCategory::Distractor};

inline std::string to_string(Condition c) {
    return c == Condition::Production ? "production" : "interpretation";
}

inline Condition condition_from_string(std::string_view s) {
    if (s == "production" || s == "prd" || s == "prd.") return Condition::Production;
    if (s == "interpretation" || s == "int" || s == "int.") return Condition::Interpretation;
    throw InvalidArgument("unknown condition '" + std::string(s) + "'");
}

inline std::string to_string(ResponseCategory c) {
    switch (c) {
    case ResponseCategory::Target: return "target";
    case ResponseCategory::Competitor: return "competitor";
    case ResponseCategory::Distractor: return "distractor";
    }
    return "?";
}

inline ResponseCategory category_from_string(std::string_view s) {
    if (s == "target") return ResponseCategory::Target;
    if (s == "competitor") return ResponseCategory::Competitor;
    if (s == "distractor") return ResponseCategory::Distractor;
    throw InvalidArgument("unknown response category '" + std::string(s) + "'");
}

inline constexpr std::size_t index_of(ResponseCategory c) { return static_cast<std::size_t>(c); }

// ---------------------------------------------------------------------------
// Categorical3 / PredictorParams

/// Probabilities over (target, competitor, distractor).
class Categorical3 {
public:
    static constexpr double kTolerance = 1e-9;

    Categorical3() : p_{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0} {}
    explicit Categorical3(std::array<double, 3> p) : p_(p) {
        for (double v : p_)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw DomainError("Categorical3 entries must be finite and nonnegative");
        const double s = p_[0] + p_[1] + p_[2];
        if (std::abs(s - 1.0) > kTolerance)
            throw DomainError("Categorical3 entries must sum to 1 (got " + std::to_string(s) + ")");
    }

    static Categorical3 uniform() { return {}; }

    double operator[](std::size_t i) const { return p_[i]; }
    double operator[](ResponseCategory c) const { return p_[index_of(c)]; }
    const std::array<double, 3>& values() const noexcept { return p_; }

    /// (1 - eps) * p + eps / 3
    Categorical3 mixed(double epsilon) const {
        std::array<double, 3> out{};
        for (std::size_t i = 0; i < 3; ++i) out[i] = (1.0 - epsilon) * p_[i] + epsilon / 3.0;
        return Categorical3(out);
    }

private:
    std::array<double, 3> p_;
};

struct PredictorParams {
    double alpha = 1.0;
    double epsilon = 0.0;

    bool valid() const { return alpha > 0.0 && std::isfinite(alpha) && epsilon >= 0.0 && epsilon <= 1.0; }
    void check() const {
        if (!valid())
            throw DomainError("predictor parameters out of range: alpha=" + std::to_string(alpha) +
                              " epsilon=" + std::to_string(epsilon));
    }
};

using CategoryCounts = std::array<std::int64_t, 3>;

// ---------------------------------------------------------------------------
// Numerics

namespace math {

/// log(sum(exp(x))), with -inf entries contributing zero mass.
inline double log_sum_exp(std::span<const double> xs) {
    double m = kNegInf;
    for (double x : xs) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    if (std::isinf(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> xs) {
    return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

/// Normalizes log weights into probabilities; exact zeros stay exact.
inline std::vector<double> softmax(std::span<const double> logits) {
    const double z = log_sum_exp(logits);
    if (!std::isfinite(z)) throw DomainError("softmax: no finite logit");
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        out[i] = logits[i] == kNegInf ? 0.0 : std::exp(logits[i] - z);
    return out;
}

inline double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(logistic(x)) without overflow.
inline double log_logistic(double x) {
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, q);
}

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw InvalidArgument("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Multinomial log-pmf. Zero-count categories contribute nothing even at p = 0.
inline double multinomial_log_pmf(const CategoryCounts& counts, const std::array<double, 3>& p,
                                  bool include_coefficient = true) {
    double ll = 0.0;
    std::int64_t n = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        if (counts[k] < 0) throw InvalidArgument("negative count");
        n += counts[k];
        if (counts[k] == 0) continue;
        if (p[k] <= 0.0) return kNegInf;
        ll += static_cast<double>(counts[k]) * std::log(p[k]);
        if (include_coefficient) ll -= std::lgamma(static_cast<double>(counts[k]) + 1.0);
    }
    if (include_coefficient) ll += std::lgamma(static_cast<double>(n) + 1.0);
    return ll;
}

/// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s == "-inf" || s == "-Infinity") return kNegInf;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw InvalidArgument("not a number: '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw InvalidArgument("not an integer: '" + std::string(s) + "'");
    return v;
}

} // namespace math

} // namespace pragcheck
