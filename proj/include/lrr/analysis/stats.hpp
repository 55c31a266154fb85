#pragma once

// Descriptive statistics and the two hypothesis tests used to compare methods.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "lrr/error.hpp"

namespace lrr::analysis {

struct Quartiles {
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

/// Linear-interpolation quantile, inclusive definition (position q * (n - 1)).
inline double quantile_inclusive(std::vector<double> v, double q) {
    if (v.empty()) throw ValidationError("quantile of an empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

inline Quartiles median_iqr(const std::vector<double>& v) {
    return {quantile_inclusive(v, 0.5), quantile_inclusive(v, 0.25), quantile_inclusive(v, 0.75)};
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw ValidationError("mean of an empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta: a, b must be > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// Student-t CDF with `df` degrees of freedom.
inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw ValidationError("student_t_cdf: df must be > 0");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return t > 0 ? 1.0 - tail : tail;
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;  // two-sided
    double df = 0.0;
    double mean_difference = 0.0;
};

/// Paired t-test on a - b with n - 1 degrees of freedom.
inline TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("paired_t_test: samples differ in length");
    if (a.size() < 2) throw ValidationError("paired_t_test: need at least 2 pairs");
    const auto n = static_cast<double>(a.size());
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double md = mean(d);
    double ss = 0.0;
    for (double x : d) ss += (x - md) * (x - md);
    const double sd = std::sqrt(ss / (n - 1.0));

    TTestResult r;
    r.df = n - 1.0;
    r.mean_difference = md;
    if (sd == 0.0) {
        if (md == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = md > 0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = md / (sd / std::sqrt(n));
    r.p = std::min(1.0, 2.0 * student_t_cdf(-std::abs(r.t), r.df));
    return r;
}

namespace detail {

using u128 = unsigned __int128;

// Exact binomial coefficient, or 0 when it would exceed ~2^100.
inline u128 exact_choose(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    u128 r = 1;
    const u128 limit = u128{1} << 100;
    for (std::int64_t i = 1; i <= k; ++i) {
        r = r * static_cast<u128>(n - k + i) / static_cast<u128>(i);
        if (r > limit) return 0;
    }
    return r;
}

inline double lchoose(std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
           std::lgamma(static_cast<double>(n - k) + 1);
}

}  // namespace detail

/// Hypergeometric distribution of every 2x2 table sharing the margins of [[a,b],[c,d]],
/// indexed by the top-left cell from min_a upward. When the counts fit in 128-bit integers
/// `counts` holds exact table multiplicities over `total`; otherwise `counts` is empty.
struct TableDistribution {
    std::int64_t min_a = 0;
    std::vector<double> probs;
    std::vector<detail::u128> counts;
    detail::u128 total = 0;
};

inline TableDistribution same_margin_tables(std::int64_t a, std::int64_t b, std::int64_t c,
                                            std::int64_t d) {
    if (a < 0 || b < 0 || c < 0 || d < 0)
        throw ValidationError("fisher_exact_2x2: cells must be non-negative");
    const std::int64_t r1 = a + b, r2 = c + d, c1 = a + c, n = r1 + r2;
    TableDistribution t;
    t.min_a = std::max<std::int64_t>(0, c1 - r2);
    const std::int64_t max_a = std::min(r1, c1);

    t.total = detail::exact_choose(n, c1);
    bool exact = t.total != 0;
    for (std::int64_t x = t.min_a; x <= max_a && exact; ++x) {
        const auto l = detail::exact_choose(r1, x), r = detail::exact_choose(r2, c1 - x);
        if (l == 0 || r == 0 || (r != 0 && l > (detail::u128{1} << 120) / r)) exact = false;
        else t.counts.push_back(l * r);
    }
    if (exact) {
        for (auto cnt : t.counts)
            t.probs.push_back(static_cast<double>(cnt) / static_cast<double>(t.total));
        return t;
    }
    t.counts.clear();
    t.total = 0;
    const double denom = detail::lchoose(n, c1);
    for (std::int64_t x = t.min_a; x <= max_a; ++x)
        t.probs.push_back(
            std::exp(detail::lchoose(r1, x) + detail::lchoose(r2, c1 - x) - denom));
    return t;
}

/// Two-sided Fisher exact p: total probability of tables no more likely than the observed.
inline double fisher_exact_2x2(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    const auto dist = same_margin_tables(a, b, c, d);
    const auto obs = static_cast<std::size_t>(a - dist.min_a);
    if (!dist.counts.empty()) {
        detail::u128 num = 0;
        for (auto cnt : dist.counts)
            if (cnt <= dist.counts[obs]) num += cnt;
        return static_cast<double>(num) / static_cast<double>(dist.total);
    }
    const double observed = dist.probs[obs];
    const double slack = 1e-12 * std::max(1.0, observed);
    double p = 0.0;
    for (double q : dist.probs)
        if (q <= observed + slack) p += q;
    return std::min(1.0, p);
}

}  // namespace lrr::analysis
