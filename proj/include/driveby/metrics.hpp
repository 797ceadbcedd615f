#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "driveby/common.hpp"

namespace driveby::ev {

// One evaluated sample, labels only. Location 0 means healthy; severity -1
// means absent, which is how healthy predictions arrive (a healthy diagnosis
// carries no severity, so it can never score a quantification hit).
struct Outcome {
    int true_loc = 0;
    int true_sev = -1;
    int pred_loc = 0;
    int pred_sev = -1;
};

struct EvalReport {
    std::string method;
    int source_bridge = 0, target_bridge = 0, vehicle = 0;
    std::uint64_t seed = 0;
    int n_samples = 0;
    int n_damaged = 0;  // truly damaged; denominator of the three damage metrics
    double detection = 0;
    // NaN when the sample set has no damaged members (flagged absent).
    double localization = std::nan("");
    double quantification = std::nan("");
    double within_one = std::nan("");
    std::array<std::array<int, 4>, 4> loc_confusion{};  // [true][pred], all samples
    std::array<std::array<int, 4>, 4> sev_confusion{};  // [true][pred], damaged with a predicted severity
};

// Detection scores every sample on the damaged/healthy boundary.
// Localization, quantification and within-one-level score only the truly
// damaged samples, and a healthy prediction on those counts as a miss: the
// damage tasks are not allowed to hide behind the detector.
inline EvalReport compute_metrics(const std::vector<Outcome>& outcomes) {
    if (outcomes.empty()) throw DataError("compute_metrics: no outcomes");
    EvalReport r;
    r.n_samples = static_cast<int>(outcomes.size());
    int det = 0, loc = 0, quant = 0, near = 0;
    for (const auto& o : outcomes) {
        if (o.true_loc < 0 || o.true_loc > 3 || o.pred_loc < 0 || o.pred_loc > 3)
            throw DataError("compute_metrics: location label out of range");
        const bool true_damaged = o.true_loc != 0;
        const bool pred_damaged = o.pred_loc != 0;
        det += true_damaged == pred_damaged;
        r.loc_confusion[o.true_loc][o.pred_loc] += 1;
        if (!true_damaged) continue;
        if (o.true_sev < 0 || o.true_sev > 3)
            throw DataError("compute_metrics: damaged sample with invalid severity label");
        r.n_damaged += 1;
        loc += o.pred_loc == o.true_loc;
        if (o.pred_sev >= 0 && o.pred_sev <= 3) {
            r.sev_confusion[o.true_sev][o.pred_sev] += 1;
            quant += o.pred_sev == o.true_sev;
            near += std::abs(o.pred_sev - o.true_sev) <= 1;
        }
    }
    r.detection = static_cast<double>(det) / r.n_samples;
    if (r.n_damaged > 0) {
        r.localization = static_cast<double>(loc) / r.n_damaged;
        r.quantification = static_cast<double>(quant) / r.n_damaged;
        r.within_one = static_cast<double>(near) / r.n_damaged;
    }
    return r;
}

} // namespace driveby::ev
