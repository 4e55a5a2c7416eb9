#ifndef MSADAPT_METRICS_HPP
#define MSADAPT_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "msadapt/core_types.hpp"

namespace msadapt {

struct LesionComponents {
    std::vector<int32_t> labels;  // same grid as the input mask, 0 = background
    int64_t nx = 0, ny = 0, nz = 0;
    std::vector<int64_t> voxel_counts;  // voxel_counts[i] is the size of component i+1
    int connectivity = 18;
    int32_t count() const { return static_cast<int32_t>(voxel_counts.size()); }
};

struct LesionF1 {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
};

struct MetricRow {
    std::string strategy;
    int fold = 0;
    int epoch = 0;
    std::string subject_id;
    double dsc = 0.0;
    double lf1_precision = 0.0;
    double lf1_recall = 0.0;
    double lf1 = 0.0;
    double gt_volume_mm3 = 0.0;
    double pred_volume_mm3 = 0.0;
};

// 2|A∩B| / (|A|+|B|); both-empty returns 1.0.
double dice(const LabelMask& pred, const LabelMask& gt);

// 3D connected components under 6-, 18- or 26-connectivity.
LesionComponents connected_components(const LabelMask& mask, int connectivity = 18);

// Lesion-wise detection scores. A GT lesion counts as detected when at least
// min_overlap of its voxels intersect any predicted component; a predicted
// component is a true positive when it intersects any GT lesion.
// Conventions: empty pred & empty gt -> (1,1,1); empty pred, nonempty gt ->
// precision 1, recall 0.
LesionF1 lesion_f1(const LabelMask& pred, const LabelMask& gt, int connectivity = 18,
                   int64_t min_overlap = 1);

double lesion_volume_mm3(const LabelMask& mask, const std::array<double, 3>& spacing);

// Sample Pearson r; nullopt when n < 3 or either list is constant.
std::optional<double> volume_correlation(const std::vector<double>& gt_volumes,
                                         const std::vector<double>& pred_volumes);

}  // namespace msadapt

#endif
