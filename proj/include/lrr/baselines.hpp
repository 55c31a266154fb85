#pragma once

// Non-learned predictors: SUVmax percentage thresholding and GTV passthrough.

#include <algorithm>
#include <limits>
#include <vector>

#include "lrr/analysis/metrics.hpp"
#include "lrr/preprocess.hpp"

namespace lrr::baselines {

/// Highest PET value inside the GTV.
inline double suvmax_of_gtv(const Volume3D& pet, const Mask3D& gtv) {
    require_same_grid(pet.grid, gtv.grid, "suvmax_of_gtv");
    double best = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < pet.data.size(); ++i)
        if (gtv.data[i]) {
            best = std::max(best, static_cast<double>(pet.data[i]));
            any = true;
        }
    if (!any) throw DegenerateInputError("suvmax_of_gtv: GTV is empty");
    return best;
}

/// Voxels with PET >= percent/100 * SUVmax(GTV), excluding the brain.
inline Mask3D suvmax_threshold_predict(const Volume3D& pet, const Mask3D& gtv, const Mask3D& brain,
                                       int percent) {
    if (percent < 1 || percent > 100)
        throw ValidationError("suvmax_threshold_predict: percent must be in 1..100");
    require_same_grid(pet.grid, brain.grid, "suvmax_threshold_predict");
    const double threshold = static_cast<double>(percent) / 100.0 * suvmax_of_gtv(pet, gtv);
    Mask3D out(pet.grid, 0);
    for (std::size_t i = 0; i < pet.data.size(); ++i)
        out.data[i] = static_cast<double>(pet.data[i]) >= threshold && !brain.data[i] ? 1 : 0;
    return out;
}

inline Mask3D gtv_baseline_predict(const PatientCase& c) { return c.gtv; }

struct SuvSweepResult {
    std::vector<double> mean_dice;  // index p - 1 for percent p = 1..100
    int best_percent = 1;

    double best_dice() const { return mean_dice.at(static_cast<std::size_t>(best_percent - 1)); }
};

/// Mean Dice against the relapse mask for every percent 1..100; ties go to the lowest percent.
inline SuvSweepResult suvmax_sweep(const std::vector<const PatientCase*>& cases) {
    if (cases.empty()) throw ValidationError("suvmax_sweep: no cases");
    SuvSweepResult r;
    r.mean_dice.assign(100, 0.0);
    for (const PatientCase* c : cases) {
        if (!c->relapse) throw ValidationError(c->id + ": sweep case without relapse mask");
        for (int p = 1; p <= 100; ++p)
            r.mean_dice[static_cast<std::size_t>(p - 1)] += analysis::dice(
                suvmax_threshold_predict(c->pet, c->gtv, c->brain, p), *c->relapse);
    }
    for (double& d : r.mean_dice) d /= static_cast<double>(cases.size());
    for (int p = 2; p <= 100; ++p)
        if (r.mean_dice[static_cast<std::size_t>(p - 1)] > r.best_dice()) r.best_percent = p;
    return r;
}

}  // namespace lrr::baselines
