#include <cmath>

#include "doctest.h"
#include "msadapt/metrics.hpp"
#include "msadapt/phantom_gen.hpp"

using namespace msadapt;

namespace {

PhantomSpec small_spec() {
    PhantomSpec s;
    s.shape = 48;
    s.lesion_count_min = 1;
    s.lesion_count_max = 3;
    s.lesion_radius_min = 1.5;
    s.lesion_radius_max = 2.5;
    return s;
}

}  // namespace

TEST_CASE("generated subject satisfies every record invariant") {
    auto rec = generate_subject(small_spec(), 1);
    CHECK_NOTHROW(validate_subject(rec));
    CHECK(rec.lesion_mask.has_value());
    CHECK(rec.lesion_mask->sum() > 0);
    CHECK(rec.brain_mask.sum() > rec.brain_mask.numel() / 10);
}

TEST_CASE("generation is deterministic in the seed") {
    auto a = generate_subject(small_spec(), 7);
    auto b = generate_subject(small_spec(), 7);
    auto c = generate_subject(small_spec(), 8);
    CHECK(a.t1w.data == b.t1w.data);
    CHECK(a.lesion_mask->data == b.lesion_mask->data);
    CHECK(a.t1w.data != c.t1w.data);
}

TEST_CASE("FLAIR lesions are hyperintense relative to WM") {
    auto spec = small_spec();
    auto rec = generate_subject(spec, 3);
    double lesion_mean = 0, n_lesion = 0;
    for (int64_t i = 0; i < rec.flair.numel(); ++i)
        if (rec.lesion_mask->data[i]) {
            lesion_mean += rec.flair.data[i];
            ++n_lesion;
        }
    lesion_mean /= n_lesion;
    CHECK(lesion_mean > spec.wm.flair_mean + 2 * spec.wm.stddev);
}

TEST_CASE("lesion count stays within the configured range") {
    auto spec = small_spec();
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto rec = generate_subject(spec, seed);
        auto cc = connected_components(*rec.lesion_mask, 26);
        CHECK(cc.count() >= spec.lesion_count_min);
        CHECK(cc.count() <= spec.lesion_count_max);
    }
}

TEST_CASE("spec validation rejects non-hyperintense lesions") {
    auto spec = small_spec();
    spec.lesion.flair_mean = spec.wm.flair_mean;  // no contrast
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("site transform maps are monotone and invertible") {
    for (const SiteTransform& t : {site_preset_a(), site_preset_b()}) {
        for (Contrast c : {Contrast::T1w, Contrast::Flair}) {
            double prev = -1.0;
            for (double v = 0.0; v <= 2.0; v += 0.05) {
                const double y = t.map_intensity(v, c);
                CHECK(y > prev);  // strictly increasing
                prev = y;
                CHECK(t.invert_intensity(y, c) == doctest::Approx(v).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("site transform validation rejects non-monotone control points") {
    SiteTransform t = site_preset_a();
    t.t1w_map = {{0.0, 0.0}, {1.0, 0.5}, {2.0, 0.4}};
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("bias field is deterministic per site and bounded") {
    SiteTransform t = site_preset_b();
    const double a = t.bias_amplitude;
    double min_b = 1e9, max_b = -1e9;
    for (int64_t z = 0; z < 16; ++z)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x) {
                const double b = t.bias_at(x, y, z, 16, 16, 16);
                CHECK(b == t.bias_at(x, y, z, 16, 16, 16));
                min_b = std::min(min_b, b);
                max_b = std::max(max_b, b);
            }
    CHECK(min_b >= 1.0 - a - 1e-12);
    CHECK(max_b <= 1.0 + a + 1e-12);
    CHECK(max_b - min_b > 0.01);  // not degenerate
}

TEST_CASE("apply_site_transform keeps geometry and labels, changes intensities") {
    auto rec = generate_subject(small_spec(), 5);
    auto moved = apply_site_transform(rec, site_preset_b(), 99);
    CHECK(moved.brain_mask.data == rec.brain_mask.data);
    CHECK(moved.lesion_mask->data == rec.lesion_mask->data);
    CHECK(moved.site.name == site_preset_b().site.name);
    CHECK(moved.t1w.data != rec.t1w.data);
}

TEST_CASE("oracle harmonization undoes the site transform up to noise") {
    auto base = generate_subject(small_spec(), 6);
    SiteTransform a = site_preset_a(), b = site_preset_b();
    auto at_a = apply_site_transform(base, a, 100);
    auto at_b = apply_site_transform(base, b, 101);
    auto back = oracle_harmonize(at_b, b, a);
    // back should match at_a within the two noise draws
    double rms = 0;
    int64_t n = 0;
    for (int64_t i = 0; i < base.flair.numel(); ++i)
        if (base.brain_mask.data[i]) {
            const double d = double(back.flair.data[i]) - at_a.flair.data[i];
            rms += d * d;
            ++n;
        }
    rms = std::sqrt(rms / n);
    // Site-B noise passes through b's inverse map, whose slope can exceed 1
    // where the forward map compresses; bound the gain numerically.
    double max_inv_slope = 0.0;
    for (double v = 0.01; v < 1.2; v += 0.005) {
        const double dv = 1e-4;
        const double s = (b.invert_intensity(v + dv, Contrast::Flair) -
                          b.invert_intensity(v, Contrast::Flair)) /
                         dv;
        max_inv_slope = std::max(max_inv_slope, s);
    }
    const double amplified = b.noise_sigma * max_inv_slope;
    const double noise_budget =
        std::sqrt(a.noise_sigma * a.noise_sigma + amplified * amplified) * 3 + 0.01;
    CHECK(rms < noise_budget);
    CHECK(rms > 1e-4);  // the transform pair is not a no-op
}

TEST_CASE("cohort generation yields distinct, consistently named subjects") {
    auto cohort = generate_cohort(3, small_spec(), site_preset_a(), 42);
    REQUIRE(cohort.size() == 3);
    CHECK(cohort[0].subject_id != cohort[1].subject_id);
    CHECK(cohort[0].t1w.data != cohort[1].t1w.data);
    for (const auto& s : cohort) CHECK(s.site.name == site_preset_a().site.name);
}
