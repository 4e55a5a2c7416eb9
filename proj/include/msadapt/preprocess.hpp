#ifndef MSADAPT_PREPROCESS_HPP
#define MSADAPT_PREPROCESS_HPP

#include "msadapt/core_types.hpp"

namespace msadapt {

struct NormalizationStats {
    double wm_peak = 0.0;      // estimated white-matter intensity mode
    double target_value = 1.0; // intensity the peak is mapped to
    double scale = 0.0;        // target_value / wm_peak
};

// Zeroes every voxel outside the mask.
Volume3D apply_brain_mask(const Volume3D& vol, const LabelMask& mask);

// Mode of a smoothed histogram of masked intensities: 256 bins between the
// 1st and 99th percentile, 5-bin moving average. For T1w the search is
// restricted to intensities above the masked median (WM is bright on T1w);
// FLAIR uses the global mode.
NormalizationStats estimate_wm_peak(const Volume3D& vol, const LabelMask& mask,
                                    Contrast contrast, double target_value = 1.0);

// output = vol * (target_value / wm_peak)
Volume3D normalize_wm(const Volume3D& vol, const NormalizationStats& stats);

// Full per-subject pipeline: mask both contrasts, then normalize each with
// its own per-contrast statistics. Marks the record preprocessed.
SubjectRecord preprocess_subject(const SubjectRecord& record);

}  // namespace msadapt

#endif
