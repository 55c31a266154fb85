#pragma once

// Per-method evaluation on held-out cases and the comparison table built from it.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrr/analysis/components.hpp"
#include "lrr/analysis/metrics.hpp"
#include "lrr/analysis/stats.hpp"

namespace lrr::analysis {

struct CaseEvaluation {
    std::string id;
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double volume_cc = 0.0;
    std::size_t po_included = 0;
    std::size_t po_total = 0;
};

inline CaseEvaluation evaluate_case(const std::string& id, const Mask3D& pred, const Mask3D& gt,
                                    const std::vector<PointOfOrigin>& pos) {
    const auto c = overlap_counts(pred, gt);
    const auto inc = po_inclusion(pred, pos);
    return {id, dice(c), precision(c), recall(c), mask_volume_cc(pred), inc.included, inc.total};
}

struct MethodReport {
    std::string method;
    std::vector<CaseEvaluation> cases;
    Quartiles dice{};
    double dice_mean = 0.0;
    Quartiles volume_cc{};
    std::size_t po_included = 0;
    std::size_t po_total = 0;

    std::vector<double> dice_values() const {
        std::vector<double> v;
        for (const auto& c : cases) v.push_back(c.dice);
        return v;
    }
    std::vector<double> volume_values() const {
        std::vector<double> v;
        for (const auto& c : cases) v.push_back(c.volume_cc);
        return v;
    }
};

inline MethodReport summarize_method(std::string method, std::vector<CaseEvaluation> cases) {
    if (cases.empty()) throw ValidationError("summarize_method: no cases for " + method);
    MethodReport r;
    r.method = std::move(method);
    r.cases = std::move(cases);
    r.dice = median_iqr(r.dice_values());
    r.dice_mean = mean(r.dice_values());
    r.volume_cc = median_iqr(r.volume_values());
    for (const auto& c : r.cases) {
        r.po_included += c.po_included;
        r.po_total += c.po_total;
    }
    return r;
}

struct Comparison {
    std::string comparison;  // "a vs b (quantity)"
    std::string test;        // "paired-t" | "fisher-exact"
    double statistic = 0.0;  // t, or the sample odds ratio for Fisher
    double p = 1.0;
};

struct Report {
    std::vector<MethodReport> methods;
    std::vector<Comparison> comparisons;

    const MethodReport* find(const std::string& name) const {
        for (const auto& m : methods)
            if (m.method == name) return &m;
        return nullptr;
    }
};

namespace detail {

inline void require_same_cases(const MethodReport& a, const MethodReport& b) {
    if (a.cases.size() != b.cases.size())
        throw ValidationError("comparison: " + a.method + " and " + b.method +
                              " were evaluated on different cases");
    for (std::size_t i = 0; i < a.cases.size(); ++i)
        if (a.cases[i].id != b.cases[i].id)
            throw ValidationError("comparison: case order differs between " + a.method + " and " +
                                  b.method);
}

inline double odds_ratio(double a, double b, double c, double d) {
    if (b * c == 0.0) return a * d == 0.0 ? std::nan("") : INFINITY;
    return a * d / (b * c);
}

inline Comparison paired(const MethodReport& a, const MethodReport& b, bool volume) {
    require_same_cases(a, b);
    const auto t = volume ? paired_t_test(a.volume_values(), b.volume_values())
                          : paired_t_test(a.dice_values(), b.dice_values());
    return {a.method + " vs " + b.method + (volume ? " (volume cc)" : " (Dice)"), "paired-t", t.t,
            t.p};
}

inline Comparison fisher(const MethodReport& a, const MethodReport& b) {
    const auto ka = static_cast<std::int64_t>(a.po_included);
    const auto na = static_cast<std::int64_t>(a.po_total);
    const auto kb = static_cast<std::int64_t>(b.po_included);
    const auto nb = static_cast<std::int64_t>(b.po_total);
    return {a.method + " vs " + b.method + " (PO inclusion)", "fisher-exact",
            odds_ratio(static_cast<double>(ka), static_cast<double>(na - ka),
                       static_cast<double>(kb), static_cast<double>(nb - kb)),
            fisher_exact_2x2(ka, na - ka, kb, nb - kb)};
}

}  // namespace detail

/// Adds the comparisons: AI random vs AI finetune on Dice, then the better AI model
/// (by mean Dice) against each baseline on Dice, volume and PO inclusion.
inline Report build_report(std::vector<MethodReport> methods) {
    Report r;
    r.methods = std::move(methods);
    const MethodReport* ai_r = r.find("ai_random");
    const MethodReport* ai_f = r.find("ai_finetune");
    if (ai_r && ai_f && ai_r->cases.size() >= 2)
        r.comparisons.push_back(detail::paired(*ai_r, *ai_f, false));

    const MethodReport* best = ai_r;
    if (ai_f && (!best || ai_f->dice_mean > best->dice_mean)) best = ai_f;
    if (!best) return r;
    for (const char* other : {"suvmax", "gtv"}) {
        const MethodReport* o = r.find(other);
        if (!o) continue;
        if (best->cases.size() >= 2) {
            r.comparisons.push_back(detail::paired(*best, *o, false));
            r.comparisons.push_back(detail::paired(*best, *o, true));
        }
        r.comparisons.push_back(detail::fisher(*best, *o));
    }
    return r;
}

namespace detail {

inline nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const Report& r) {
    using nlohmann::json;
    json methods = json::array();
    for (const auto& m : r.methods) {
        json cases = json::array();
        for (const auto& c : m.cases)
            cases.push_back({{"id", c.id},
                             {"dice", c.dice},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"vol_cc", c.volume_cc},
                             {"po_included", c.po_included},
                             {"po_total", c.po_total}});
        methods.push_back({{"method", m.method},
                           {"dice_median", m.dice.median},
                           {"dice_q1", m.dice.q1},
                           {"dice_q3", m.dice.q3},
                           {"dice_mean", m.dice_mean},
                           {"vol_cc_median", m.volume_cc.median},
                           {"vol_cc_q1", m.volume_cc.q1},
                           {"vol_cc_q3", m.volume_cc.q3},
                           {"po_included", m.po_included},
                           {"po_total", m.po_total},
                           {"cases", cases}});
    }
    json comps = json::array();
    for (const auto& c : r.comparisons)
        comps.push_back({{"comparison", c.comparison},
                         {"test", c.test},
                         {"statistic", detail::finite_or_null(c.statistic)},
                         {"p", c.p}});
    return {{"methods", methods}, {"comparisons", comps}};
}

inline std::string to_text(const Report& r) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s  %-22s  %-9s  %-26s  %s\n", "Method",
                  "Dice median (IQR)", "Dice mean", "Volume cc median (IQR)", "PO k/n");
    os << buf;
    for (const auto& m : r.methods) {
        char dice[64], vol[64], po[32];
        std::snprintf(dice, sizeof dice, "%.2f (%.2f, %.2f)", m.dice.median, m.dice.q1, m.dice.q3);
        std::snprintf(vol, sizeof vol, "%.1f (%.1f, %.1f)", m.volume_cc.median, m.volume_cc.q1,
                      m.volume_cc.q3);
        std::snprintf(po, sizeof po, "%zu/%zu", m.po_included, m.po_total);
        std::snprintf(buf, sizeof buf, "%-12s  %-22s  %-9.2f  %-26s  %s\n", m.method.c_str(), dice,
                      m.dice_mean, vol, po);
        os << buf;
    }
    if (!r.comparisons.empty()) {
        os << "\n";
        std::snprintf(buf, sizeof buf, "%-44s  %-12s  %10s  %8s\n", "Comparison", "Test",
                      "Statistic", "p");
        os << buf;
        for (const auto& c : r.comparisons) {
            char stat[32];
            if (std::isnan(c.statistic)) std::snprintf(stat, sizeof stat, "n/a");
            else std::snprintf(stat, sizeof stat, "%.4g", c.statistic);
            std::snprintf(buf, sizeof buf, "%-44s  %-12s  %10s  %8.4g\n", c.comparison.c_str(),
                          c.test.c_str(), stat, c.p);
            os << buf;
        }
    }
    return os.str();
}

}  // namespace lrr::analysis
