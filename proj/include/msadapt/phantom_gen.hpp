#ifndef MSADAPT_PHANTOM_GEN_HPP
#define MSADAPT_PHANTOM_GEN_HPP

#include <vector>

#include "msadapt/core_types.hpp"

namespace msadapt {

enum class Tissue { Background = 0, CSF = 1, GM = 2, WM = 3, Lesion = 4 };

struct TissueRow {
    double t1w_mean = 0.0;
    double flair_mean = 0.0;
    double stddev = 0.02;  // per-tissue texture, same for both contrasts
};

// Synthetic multi-site brain phantom: ellipsoidal brain with nested
// CSF/GM/WM shells, spheroid WM lesions, Gaussian noise. Intensities are in
// WM-normalized-like units (WM near 1 on T1w).
struct PhantomSpec {
    int64_t shape = 64;  // cubic volumes
    TissueRow background{0.00, 0.00, 0.0};
    TissueRow csf{0.20, 0.15, 0.02};
    TissueRow gm{0.70, 0.85, 0.02};
    TissueRow wm{1.00, 0.70, 0.02};
    TissueRow lesion{0.55, 1.40, 0.03};
    int lesion_count_min = 2;
    int lesion_count_max = 5;
    double lesion_radius_min = 2.0;  // voxels
    double lesion_radius_max = 3.5;
    double noise_sigma = 0.02;

    // FLAIR lesions must be clearly hyperintense relative to WM.
    void validate() const;
};

// Ground-truth per-site contrast model: monotone piecewise-linear intensity
// map followed by a gamma curve, a deterministic low-frequency multiplicative
// bias field, and additive noise. Invertible (noise excepted).
struct SiteTransform {
    SiteTag site;
    // strictly increasing (x, y) control points per contrast, covering [0, domain_max]
    std::vector<std::array<double, 2>> t1w_map{{0.0, 0.0}, {2.0, 2.0}};
    std::vector<std::array<double, 2>> flair_map{{0.0, 0.0}, {2.0, 2.0}};
    double gamma = 1.0;
    double domain_max = 2.0;  // gamma normalization reference
    double bias_amplitude = 0.0;
    double noise_sigma = 0.0;

    void validate() const;
    double map_intensity(double v, Contrast contrast) const;
    double invert_intensity(double v, Contrast contrast) const;
    // deterministic per-site bias at a voxel, in [1-a, 1+a]
    double bias_at(int64_t x, int64_t y, int64_t z, int64_t nx, int64_t ny, int64_t nz) const;
};

SiteTransform site_preset_a();  // near-identity source site
SiteTransform site_preset_b();  // gamma 0.7, compressed GM/WM FLAIR gap

SubjectRecord generate_subject(const PhantomSpec& spec, uint64_t seed);
SubjectRecord apply_site_transform(const SubjectRecord& record, const SiteTransform& t,
                                   uint64_t seed);
std::vector<SubjectRecord> generate_cohort(int n_subjects, const PhantomSpec& spec,
                                           const SiteTransform& t, uint64_t seed);
// to ∘ from⁻¹ on intensities; masks and labels untouched; no fresh noise.
SubjectRecord oracle_harmonize(const SubjectRecord& record, const SiteTransform& from,
                               const SiteTransform& to);

}  // namespace msadapt

#endif
