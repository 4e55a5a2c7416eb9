#ifndef MSADAPT_AUGMENT_HPP
#define MSADAPT_AUGMENT_HPP

#include <array>

#include "msadapt/core_types.hpp"
#include "msadapt/rng.hpp"

namespace msadapt {

struct AugmentConfig {
    int64_t crop_size = 112;
    // sample_patch forces the patch to contain a lesion voxel with this
    // probability (when the subject has lesions)
    double lesion_bias_prob = 0.5;
    double p_permute = 0.5;
    double p_affine = 0.5;
    double p_elastic = 0.5;
    double p_intensity = 0.5;
    double intensity_shift = 0.1;       // additive, images only
    double max_rotation_deg = 10.0;
    double scale_min = 0.9, scale_max = 1.1;
    double max_translation = 5.0;       // voxels
    int elastic_grid = 4;               // control points per axis
    double elastic_sigma = 2.0;         // voxel displacement stddev

    void validate() const;
};

// Random crop; volumes smaller than crop_size are zero-padded symmetrically
// first. Deterministic given the rng state.
Patch sample_patch(const SubjectRecord& record, const AugmentConfig& cfg, Rng& rng);

// Fixed order: axis permutation -> (affine + elastic in one composed
// resampling pass) -> intensity shift. Images trilinear, labels
// nearest-neighbor; labels stay binary and never receive intensity shifts.
Patch apply_augmentations(const Patch& patch, const AugmentConfig& cfg, Rng& rng);

// out(x,y,z) = in(v[perm[0]], v[perm[1]], v[perm[2]]) with v=(x,y,z).
Patch apply_axis_permutation(const Patch& patch, const std::array<int, 3>& perm);

}  // namespace msadapt

#endif
