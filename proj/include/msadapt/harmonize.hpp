#ifndef MSADAPT_HARMONIZE_HPP
#define MSADAPT_HARMONIZE_HPP

#include <vector>

#include "msadapt/core_types.hpp"
#include "msadapt/phantom_gen.hpp"

namespace msadapt {

enum class HarmonizerKind { HistogramMatching, Oracle };

// Contrast-transfer operator toward a target site. Histogram matching maps a
// subject's own brain-masked quantile landmarks onto target landmarks pooled
// over the fitted cohort; the oracle composes the known phantom transforms.
class Harmonizer {
public:
    static Harmonizer histogram(std::vector<double> t1w_landmarks,
                                std::vector<double> flair_landmarks, SiteTag target_site);
    static Harmonizer oracle(SiteTransform from, SiteTransform to);

    HarmonizerKind kind() const { return kind_; }
    const SiteTag& target_site() const { return target_site_; }
    bool fitted() const { return fitted_; }
    const std::vector<double>& landmarks(Contrast c) const {
        return c == Contrast::T1w ? t1w_landmarks_ : flair_landmarks_;
    }

    SubjectRecord apply(const SubjectRecord& record) const;

private:
    Harmonizer() = default;
    HarmonizerKind kind_ = HarmonizerKind::HistogramMatching;
    SiteTag target_site_;
    bool fitted_ = false;
    std::vector<double> t1w_landmarks_;  // non-decreasing target quantiles
    std::vector<double> flair_landmarks_;
    SiteTransform from_, to_;  // oracle only
};

// Pools brain-masked voxels across the target subjects and stores
// n_quantiles landmarks per contrast.
Harmonizer fit_histogram_matcher(const std::vector<SubjectRecord>& target_subjects,
                                 int n_quantiles = 64);

SubjectRecord harmonize_subject(const Harmonizer& h, const SubjectRecord& record);

// Quantile landmarks of one masked volume (helper shared with tests).
std::vector<double> masked_quantiles(const Volume3D& vol, const LabelMask& mask, int n_quantiles);

}  // namespace msadapt

#endif
