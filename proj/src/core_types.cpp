#include "msadapt/core_types.hpp"

#include <cmath>

namespace msadapt {

void Volume3D::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("Volume3D: all dimensions must be >= 1");
    if (static_cast<int64_t>(data.size()) != numel())
        throw ValidationError("Volume3D: data size does not match dimensions");
    for (double s : spacing)
        if (!(s > 0.0)) throw ValidationError("Volume3D: spacing components must be > 0");
    for (float v : data)
        if (!std::isfinite(v)) throw ValidationError("Volume3D: data contains NaN or infinity");
}

void LabelMask::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("LabelMask: all dimensions must be >= 1");
    if (static_cast<int64_t>(data.size()) != numel())
        throw ValidationError("LabelMask: data size does not match dimensions");
    for (uint8_t v : data)
        if (v > 1) throw ValidationError("LabelMask: values must be exactly 0 or 1");
}

Tensor<float> stack_channels(const std::vector<float>& t1w_patch,
                             const std::vector<float>& flair_patch,
                             int64_t p) {
    const size_t n = static_cast<size_t>(p * p * p);
    if (t1w_patch.size() != n || flair_patch.size() != n)
        throw ValidationError("stack_channels: patch shapes do not match the stated size");
    Tensor<float> out({2, p, p, p});
    std::copy(t1w_patch.begin(), t1w_patch.end(), out.data.begin());
    std::copy(flair_patch.begin(), flair_patch.end(), out.data.begin() + n);
    return out;
}

const SubjectRecord& validate_subject(const SubjectRecord& record) {
    if (record.subject_id.empty()) throw ValidationError("subject_id: must be non-empty");
    if (record.site.name.empty()) throw ValidationError("site: must be non-empty");
    record.t1w.validate();
    record.flair.validate();
    record.brain_mask.validate();
    if (!record.t1w.same_grid(record.flair))
        throw ValidationError("flair: shape does not match t1w");
    if (record.brain_mask.nx != record.t1w.nx || record.brain_mask.ny != record.t1w.ny ||
        record.brain_mask.nz != record.t1w.nz)
        throw ValidationError("brain_mask: shape does not match t1w");
    if (record.t1w.affine != record.flair.affine)
        throw ValidationError("flair: affine does not match t1w");
    if (record.lesion_mask) {
        const LabelMask& les = *record.lesion_mask;
        les.validate();
        if (les.nx != record.t1w.nx || les.ny != record.t1w.ny || les.nz != record.t1w.nz)
            throw ValidationError("lesion_mask: shape does not match t1w");
        for (size_t i = 0; i < les.data.size(); ++i)
            if (les.data[i] && !record.brain_mask.data[i])
                throw ValidationError("lesion_mask: lesion voxel outside brain_mask");
    }
    return record;
}

}  // namespace msadapt
