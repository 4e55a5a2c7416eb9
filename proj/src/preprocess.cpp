#include "msadapt/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace msadapt {

Volume3D apply_brain_mask(const Volume3D& vol, const LabelMask& mask) {
    if (vol.nx != mask.nx || vol.ny != mask.ny || vol.nz != mask.nz)
        throw ValidationError("apply_brain_mask: volume and mask shapes do not match");
    Volume3D out = vol;
    for (size_t i = 0; i < out.data.size(); ++i)
        if (!mask.data[i]) out.data[i] = 0.0f;
    return out;
}

NormalizationStats estimate_wm_peak(const Volume3D& vol, const LabelMask& mask,
                                    Contrast contrast, double target_value) {
    if (vol.nx != mask.nx || vol.ny != mask.ny || vol.nz != mask.nz)
        throw ValidationError("estimate_wm_peak: volume and mask shapes do not match");

    std::vector<float> vals;
    vals.reserve(static_cast<size_t>(mask.sum()));
    for (size_t i = 0; i < vol.data.size(); ++i)
        if (mask.data[i]) vals.push_back(vol.data[i]);
    if (vals.size() < 1000)
        throw ValidationError("estimate_wm_peak: fewer than 1000 masked voxels");

    std::sort(vals.begin(), vals.end());
    auto pct = [&](double q) {
        double pos = q * static_cast<double>(vals.size() - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, vals.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return (1.0 - frac) * vals[lo] + frac * vals[hi];
    };
    const double lo = pct(0.01), hi = pct(0.99);
    const double median = pct(0.5);
    if (!(hi > lo))
        throw ValidationError("estimate_wm_peak: degenerate (constant) intensity distribution");

    constexpr int kBins = 256;
    std::vector<double> hist(kBins, 0.0);
    const double width = (hi - lo) / kBins;
    for (float v : vals) {
        int b = static_cast<int>((v - lo) / width);
        if (b >= 0 && b < kBins) hist[static_cast<size_t>(b)] += 1.0;
    }

    // 5-bin moving average, edges truncated
    std::vector<double> smooth(kBins, 0.0);
    for (int b = 0; b < kBins; ++b) {
        double s = 0.0;
        int n = 0;
        for (int k = b - 2; k <= b + 2; ++k)
            if (k >= 0 && k < kBins) {
                s += hist[static_cast<size_t>(k)];
                ++n;
            }
        smooth[static_cast<size_t>(b)] = s / n;
    }

    int best = -1;
    double best_val = -1.0;
    for (int b = 0; b < kBins; ++b) {
        double center = lo + (b + 0.5) * width;
        if (contrast == Contrast::T1w && center <= median) continue;
        if (smooth[static_cast<size_t>(b)] > best_val) {
            best_val = smooth[static_cast<size_t>(b)];
            best = b;
        }
    }
    if (best < 0 || best_val <= 0.0)
        throw ValidationError("estimate_wm_peak: no mode found above the median");

    NormalizationStats stats;
    stats.wm_peak = lo + (best + 0.5) * width;
    if (!(stats.wm_peak > 0.0))
        throw ValidationError("estimate_wm_peak: estimated peak is non-positive");
    stats.target_value = target_value;
    stats.scale = target_value / stats.wm_peak;
    return stats;
}

Volume3D normalize_wm(const Volume3D& vol, const NormalizationStats& stats) {
    if (!(stats.wm_peak > 0.0)) throw ValidationError("normalize_wm: wm_peak must be > 0");
    Volume3D out = vol;
    const float s = static_cast<float>(stats.target_value / stats.wm_peak);
    for (auto& v : out.data) v *= s;
    return out;
}

SubjectRecord preprocess_subject(const SubjectRecord& record) {
    SubjectRecord out = record;
    out.t1w = apply_brain_mask(record.t1w, record.brain_mask);
    out.flair = apply_brain_mask(record.flair, record.brain_mask);
    out.t1w = normalize_wm(out.t1w, estimate_wm_peak(out.t1w, record.brain_mask, Contrast::T1w));
    out.flair =
        normalize_wm(out.flair, estimate_wm_peak(out.flair, record.brain_mask, Contrast::Flair));
    out.preprocessed = true;
    return out;
}

}  // namespace msadapt
