#include <cmath>

#include "doctest.h"
#include "msadapt/phantom_gen.hpp"
#include "msadapt/preprocess.hpp"
#include "msadapt/rng.hpp"

using namespace msadapt;

namespace {

// Volume whose masked histogram peaks at `peak` with a secondary low mode.
Volume3D bimodal_volume(double peak, uint64_t seed, LabelMask* mask_out) {
    const int64_t n = 24;
    Volume3D v(n, n, n);
    LabelMask m(n, n, n, 1);
    Rng rng(seed);
    for (int64_t i = 0; i < v.numel(); ++i) {
        // 70% of voxels around the WM-like peak, 30% around a darker mode
        const double mu = rng.uniform() < 0.7 ? peak : peak * 0.4;
        v.data[i] = static_cast<float>(mu + 0.02 * peak * rng.normal());
    }
    *mask_out = m;
    return v;
}

}  // namespace

TEST_CASE("wm peak estimate lands on the dominant masked mode") {
    for (double peak : {0.8, 1.7, 300.0}) {
        LabelMask mask;
        auto v = bimodal_volume(peak, 11, &mask);
        auto stats = estimate_wm_peak(v, mask, Contrast::T1w);
        CHECK(stats.wm_peak == doctest::Approx(peak).epsilon(0.05));
    }
}

TEST_CASE("normalization moves the peak to the target value") {
    LabelMask mask;
    auto v = bimodal_volume(2.5, 12, &mask);
    auto stats = estimate_wm_peak(v, mask, Contrast::T1w);
    auto n = normalize_wm(v, stats);
    auto stats2 = estimate_wm_peak(n, mask, Contrast::T1w);
    CHECK(stats2.wm_peak == doctest::Approx(stats.target_value).epsilon(0.05));
}

TEST_CASE("normalization is scale-invariant") {
    LabelMask mask;
    auto v = bimodal_volume(1.0, 13, &mask);
    Volume3D scaled = v;
    for (auto& x : scaled.data) x *= 37.0f;
    auto a = normalize_wm(v, estimate_wm_peak(v, mask, Contrast::T1w));
    auto b = normalize_wm(scaled, estimate_wm_peak(scaled, mask, Contrast::T1w));
    double max_diff = 0;
    for (int64_t i = 0; i < a.numel(); ++i)
        max_diff = std::max(max_diff, std::abs(double(a.data[i]) - b.data[i]));
    CHECK(max_diff < 1e-3);
}

TEST_CASE("apply_brain_mask zeroes background and keeps masked voxels") {
    Volume3D v(4, 4, 4, 3.0f);
    LabelMask m(4, 4, 4, 0);
    m.at(1, 1, 1) = 1;
    auto out = apply_brain_mask(v, m);
    CHECK(out.at(1, 1, 1) == 3.0f);
    CHECK(out.at(0, 0, 0) == 0.0f);
}

TEST_CASE("estimate_wm_peak requires enough masked voxels") {
    Volume3D v(4, 4, 4, 1.0f);
    LabelMask m(4, 4, 4, 0);
    m.at(0, 0, 0) = 1;
    CHECK_THROWS_AS(estimate_wm_peak(v, m, Contrast::T1w), ValidationError);
}

TEST_CASE("preprocess_subject normalizes both contrasts and flags the record") {
    PhantomSpec spec;
    spec.shape = 48;
    spec.lesion_count_min = 1;
    spec.lesion_count_max = 2;
    spec.lesion_radius_min = 1.5;
    spec.lesion_radius_max = 2.5;
    auto rec = generate_subject(spec, 21);
    auto pp = preprocess_subject(rec);
    CHECK(pp.preprocessed);
    // background is masked out
    CHECK(pp.t1w.at(0, 0, 0) == 0.0f);
    // T1w WM peak sits at the target value
    auto stats = estimate_wm_peak(pp.t1w, pp.brain_mask, Contrast::T1w);
    CHECK(stats.wm_peak == doctest::Approx(stats.target_value).epsilon(0.1));
    // idempotent-ish: re-normalizing barely changes anything
    auto pp2 = preprocess_subject(pp);
    double max_diff = 0;
    for (int64_t i = 0; i < pp.t1w.numel(); ++i)
        max_diff = std::max(max_diff, std::abs(double(pp.t1w.data[i]) - pp2.t1w.data[i]));
    CHECK(max_diff < 0.05);
}
