#ifndef MSADAPT_CORE_TYPES_HPP
#define MSADAPT_CORE_TYPES_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "msadapt/tensor.hpp"

namespace msadapt {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Voxel (x,y,z) lives at data[x + nx*(y + ny*z)], matching NIfTI order.
struct Volume3D {
    int64_t nx = 0, ny = 0, nz = 0;
    std::vector<float> data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 16> affine{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

    Volume3D() = default;
    Volume3D(int64_t x, int64_t y, int64_t z, float fill = 0.0f)
        : nx(x), ny(y), nz(z), data(static_cast<size_t>(x * y * z), fill) {
        if (x < 1 || y < 1 || z < 1) throw ValidationError("Volume3D: all dimensions must be >= 1");
    }

    int64_t numel() const { return nx * ny * nz; }
    int64_t index(int64_t x, int64_t y, int64_t z) const { return x + nx * (y + ny * z); }
    float& at(int64_t x, int64_t y, int64_t z) { return data[static_cast<size_t>(index(x, y, z))]; }
    float at(int64_t x, int64_t y, int64_t z) const { return data[static_cast<size_t>(index(x, y, z))]; }
    bool same_grid(const Volume3D& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }

    // Checks dimension/spacing/finite-value invariants; throws ValidationError.
    void validate() const;
};

struct LabelMask {
    int64_t nx = 0, ny = 0, nz = 0;
    std::vector<uint8_t> data;

    LabelMask() = default;
    LabelMask(int64_t x, int64_t y, int64_t z, uint8_t fill = 0)
        : nx(x), ny(y), nz(z), data(static_cast<size_t>(x * y * z), fill) {
        if (x < 1 || y < 1 || z < 1) throw ValidationError("LabelMask: all dimensions must be >= 1");
    }

    int64_t numel() const { return nx * ny * nz; }
    int64_t index(int64_t x, int64_t y, int64_t z) const { return x + nx * (y + ny * z); }
    uint8_t& at(int64_t x, int64_t y, int64_t z) { return data[static_cast<size_t>(index(x, y, z))]; }
    uint8_t at(int64_t x, int64_t y, int64_t z) const { return data[static_cast<size_t>(index(x, y, z))]; }

    int64_t sum() const {
        int64_t s = 0;
        for (uint8_t v : data) s += v;
        return s;
    }
    void validate() const;  // values must be exactly {0,1}
};

enum class Contrast { T1w, Flair };

struct SiteTag {
    std::string name;
    bool operator==(const SiteTag& o) const { return name == o.name; }
};

struct SubjectRecord {
    std::string subject_id;
    SiteTag site;
    Volume3D t1w;
    Volume3D flair;
    LabelMask brain_mask;
    std::optional<LabelMask> lesion_mask;
    bool preprocessed = false;
    std::string provenance;  // free-form trail: "phantom", "harmonized:histogram", ...
};

// One training sample: co-located T1w/FLAIR/label cubes of edge P.
struct Patch {
    int64_t size = 0;
    std::vector<float> t1w;
    std::vector<float> flair;
    std::vector<uint8_t> label;
    std::string subject_id;
    std::array<int64_t, 3> corner{0, 0, 0};

    explicit Patch(int64_t p = 0)
        : size(p),
          t1w(static_cast<size_t>(p * p * p), 0.0f),
          flair(static_cast<size_t>(p * p * p), 0.0f),
          label(static_cast<size_t>(p * p * p), 0) {}
    int64_t numel() const { return size * size * size; }
};

// Channel 0 is T1w, channel 1 is FLAIR; this order is fixed project-wide.
// Output shape {2, P, P, P}.
Tensor<float> stack_channels(const std::vector<float>& t1w_patch,
                             const std::vector<float>& flair_patch,
                             int64_t p);

// Checks every SubjectRecord invariant; returns the record unchanged.
// Throws ValidationError naming the failing field.
const SubjectRecord& validate_subject(const SubjectRecord& record);

}  // namespace msadapt

#endif
