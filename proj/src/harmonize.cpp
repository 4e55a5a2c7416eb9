#include "msadapt/harmonize.hpp"

#include <algorithm>
#include <cmath>

namespace msadapt {

std::vector<double> masked_quantiles(const Volume3D& vol, const LabelMask& mask, int n_quantiles) {
    std::vector<float> vals;
    for (size_t i = 0; i < vol.data.size(); ++i)
        if (mask.data[i]) vals.push_back(vol.data[i]);
    if (vals.empty()) throw ValidationError("masked_quantiles: empty voxel pool");
    std::sort(vals.begin(), vals.end());
    std::vector<double> q(static_cast<size_t>(n_quantiles));
    for (int k = 0; k < n_quantiles; ++k) {
        double pos = static_cast<double>(k) / (n_quantiles - 1) *
                     static_cast<double>(vals.size() - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, vals.size() - 1);
        double frac = pos - static_cast<double>(lo);
        q[static_cast<size_t>(k)] = (1.0 - frac) * vals[lo] + frac * vals[hi];
    }
    return q;
}

namespace {

std::vector<double> pooled_quantiles(const std::vector<SubjectRecord>& subjects, Contrast c,
                                     int n_quantiles) {
    std::vector<float> pool;
    for (const auto& s : subjects) {
        const Volume3D& v = c == Contrast::T1w ? s.t1w : s.flair;
        for (size_t i = 0; i < v.data.size(); ++i)
            if (s.brain_mask.data[i]) pool.push_back(v.data[i]);
    }
    if (pool.empty()) throw ValidationError("fit_histogram_matcher: empty voxel pool");
    std::sort(pool.begin(), pool.end());
    if (pool.front() == pool.back())
        throw ValidationError("fit_histogram_matcher: constant target intensities");
    std::vector<double> q(static_cast<size_t>(n_quantiles));
    for (int k = 0; k < n_quantiles; ++k) {
        double pos = static_cast<double>(k) / (n_quantiles - 1) *
                     static_cast<double>(pool.size() - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, pool.size() - 1);
        double frac = pos - static_cast<double>(lo);
        q[static_cast<size_t>(k)] = (1.0 - frac) * pool[lo] + frac * pool[hi];
    }
    for (size_t k = 1; k < q.size(); ++k) q[k] = std::max(q[k], q[k - 1]);
    return q;
}

// piecewise-linear map from source landmarks to target landmarks
double remap(double v, const std::vector<double>& src, const std::vector<double>& dst) {
    const size_t n = src.size();
    if (v <= src.front()) return dst.front();
    if (v >= src.back()) return dst.back();
    size_t i = static_cast<size_t>(std::upper_bound(src.begin(), src.end(), v) - src.begin());
    i = std::min(std::max<size_t>(i, 1), n - 1);
    double span = src[i] - src[i - 1];
    double t = span > 0.0 ? (v - src[i - 1]) / span : 0.0;
    return dst[i - 1] + t * (dst[i] - dst[i - 1]);
}

}  // namespace

Harmonizer Harmonizer::histogram(std::vector<double> t1w_landmarks,
                                 std::vector<double> flair_landmarks, SiteTag target_site) {
    Harmonizer h;
    h.kind_ = HarmonizerKind::HistogramMatching;
    h.target_site_ = std::move(target_site);
    h.t1w_landmarks_ = std::move(t1w_landmarks);
    h.flair_landmarks_ = std::move(flair_landmarks);
    h.fitted_ = true;
    return h;
}

Harmonizer Harmonizer::oracle(SiteTransform from, SiteTransform to) {
    from.validate();
    to.validate();
    Harmonizer h;
    h.kind_ = HarmonizerKind::Oracle;
    h.target_site_ = to.site;
    h.from_ = std::move(from);
    h.to_ = std::move(to);
    h.fitted_ = true;
    return h;
}

Harmonizer fit_histogram_matcher(const std::vector<SubjectRecord>& target_subjects,
                                 int n_quantiles) {
    if (target_subjects.empty())
        throw ConfigError("fit_histogram_matcher: need at least one target subject");
    if (n_quantiles < 2) throw ConfigError("fit_histogram_matcher: n_quantiles must be >= 2");
    auto t1 = pooled_quantiles(target_subjects, Contrast::T1w, n_quantiles);
    auto fl = pooled_quantiles(target_subjects, Contrast::Flair, n_quantiles);
    return Harmonizer::histogram(std::move(t1), std::move(fl), target_subjects.front().site);
}

SubjectRecord Harmonizer::apply(const SubjectRecord& record) const {
    if (!fitted_) throw ValidationError("Harmonizer: not fitted");
    SubjectRecord out = record;
    out.site = target_site_;
    if (kind_ == HarmonizerKind::Oracle) {
        out = oracle_harmonize(record, from_, to_);
        return out;
    }
    out.provenance += ";harmonized:histogram->" + target_site_.name;
    auto src_t1 = masked_quantiles(record.t1w, record.brain_mask,
                                   static_cast<int>(t1w_landmarks_.size()));
    auto src_fl = masked_quantiles(record.flair, record.brain_mask,
                                   static_cast<int>(flair_landmarks_.size()));
    for (size_t k = 1; k < src_t1.size(); ++k) src_t1[k] = std::max(src_t1[k], src_t1[k - 1]);
    for (size_t k = 1; k < src_fl.size(); ++k) src_fl[k] = std::max(src_fl[k], src_fl[k - 1]);
    for (size_t i = 0; i < out.t1w.data.size(); ++i) {
        if (!record.brain_mask.data[i]) continue;  // background stays zero
        out.t1w.data[i] = static_cast<float>(remap(out.t1w.data[i], src_t1, t1w_landmarks_));
        out.flair.data[i] = static_cast<float>(remap(out.flair.data[i], src_fl, flair_landmarks_));
    }
    return out;
}

SubjectRecord harmonize_subject(const Harmonizer& h, const SubjectRecord& record) {
    return h.apply(record);
}

}  // namespace msadapt
