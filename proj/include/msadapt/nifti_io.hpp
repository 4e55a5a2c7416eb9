#ifndef MSADAPT_NIFTI_IO_HPP
#define MSADAPT_NIFTI_IO_HPP

#include <string>

#include "msadapt/core_types.hpp"

namespace msadapt {

// Parsed view of the fixed 348-byte NIfTI-1 header, after endian fixup.
struct NiftiHeaderView {
    int16_t dim[8]{};
    int16_t datatype = 0;
    int16_t bitpix = 0;
    float pixdim[8]{};
    float vox_offset = 352.0f;
    float scl_slope = 1.0f;
    float scl_inter = 0.0f;
    int16_t sform_code = 0;
    int16_t qform_code = 0;
    std::array<double, 16> affine{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    bool swapped = false;  // file was big-endian
};

// Reads a NIfTI-1 volume (plain or gzip, 3D or 4D with singleton extras),
// applies scl_slope/scl_inter, and returns canonical float32 data.
Volume3D read_volume(const std::string& path);

// Writes float32 NIfTI-1 with scl_slope=1, scl_inter=0; gzip when the path
// ends in ".nii.gz". read_volume(write_volume(v)) is bit-exact on data.
void write_volume(const Volume3D& vol, const std::string& path);

// Masks are stored uint8; any nonzero voxel on read becomes 1.
LabelMask read_mask(const std::string& path);
void write_mask(const LabelMask& mask, const std::string& path,
                const std::array<double, 3>& spacing = {1.0, 1.0, 1.0},
                const std::array<double, 16>& affine = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});

NiftiHeaderView read_header(const std::string& path);

}  // namespace msadapt

#endif
