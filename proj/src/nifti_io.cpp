#include "msadapt/nifti_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace msadapt {

namespace {

// On-disk NIfTI-1 header, 348 bytes, all fields naturally aligned.
struct RawHeader {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code;
    int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(RawHeader) == 348, "NIfTI-1 header must be 348 bytes");

enum DataTypeCode : int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
    DT_INT8 = 256,
    DT_UINT16 = 512,
    DT_UINT32 = 768,
};

template <typename T>
void swap_bytes(T& v) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
}

void swap_header(RawHeader& h) {
    swap_bytes(h.sizeof_hdr);
    swap_bytes(h.extents);
    swap_bytes(h.session_error);
    for (auto& d : h.dim) swap_bytes(d);
    swap_bytes(h.intent_p1);
    swap_bytes(h.intent_p2);
    swap_bytes(h.intent_p3);
    swap_bytes(h.intent_code);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    swap_bytes(h.slice_start);
    for (auto& p : h.pixdim) swap_bytes(p);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
    swap_bytes(h.slice_end);
    swap_bytes(h.cal_max);
    swap_bytes(h.cal_min);
    swap_bytes(h.slice_duration);
    swap_bytes(h.toffset);
    swap_bytes(h.glmax);
    swap_bytes(h.glmin);
    swap_bytes(h.qform_code);
    swap_bytes(h.sform_code);
    swap_bytes(h.quatern_b);
    swap_bytes(h.quatern_c);
    swap_bytes(h.quatern_d);
    swap_bytes(h.qoffset_x);
    swap_bytes(h.qoffset_y);
    swap_bytes(h.qoffset_z);
    for (auto& v : h.srow_x) swap_bytes(v);
    for (auto& v : h.srow_y) swap_bytes(v);
    for (auto& v : h.srow_z) swap_bytes(v);
}

std::array<double, 16> affine_from_quaternion(const RawHeader& h) {
    double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    double a = 1.0 - (b * b + c * c + d * d);
    a = a < 1e-7 ? 0.0 : std::sqrt(a);
    double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
    double sx = h.pixdim[1], sy = h.pixdim[2], sz = h.pixdim[3] * qfac;
    std::array<double, 16> m{};
    m[0] = (a * a + b * b - c * c - d * d) * sx;
    m[1] = (2 * b * c - 2 * a * d) * sy;
    m[2] = (2 * b * d + 2 * a * c) * sz;
    m[3] = h.qoffset_x;
    m[4] = (2 * b * c + 2 * a * d) * sx;
    m[5] = (a * a + c * c - b * b - d * d) * sy;
    m[6] = (2 * c * d - 2 * a * b) * sz;
    m[7] = h.qoffset_y;
    m[8] = (2 * b * d - 2 * a * c) * sx;
    m[9] = (2 * c * d + 2 * a * b) * sy;
    m[10] = (a * a + d * d - c * c - b * b) * sz;
    m[11] = h.qoffset_z;
    m[15] = 1.0;
    return m;
}

struct GzFile {
    gzFile f = nullptr;
    explicit GzFile(const std::string& path, const char* mode) : f(gzopen(path.c_str(), mode)) {}
    ~GzFile() {
        if (f) gzclose(f);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;
};

RawHeader load_raw_header(gzFile f, const std::string& path, bool* swapped) {
    RawHeader h{};
    if (gzread(f, &h, sizeof(h)) != static_cast<int>(sizeof(h)))
        throw FormatError(path + ": truncated file (incomplete header)");
    *swapped = false;
    if (h.dim[0] < 1 || h.dim[0] > 7) {
        swap_header(h);
        *swapped = true;
        if (h.dim[0] < 1 || h.dim[0] > 7)
            throw FormatError(path + ": dim[0] out of range in both byte orders");
    }
    if (h.sizeof_hdr != 348)
        throw FormatError(path + ": header size field is " + std::to_string(h.sizeof_hdr) +
                          ", expected 348");
    if (std::memcmp(h.magic, "n+1\0", 4) != 0 && std::memcmp(h.magic, "ni1\0", 4) != 0)
        throw FormatError(path + ": bad magic bytes (not a NIfTI-1 file)");
    if (std::memcmp(h.magic, "ni1\0", 4) == 0)
        throw FormatError(path + ": two-file (.hdr/.img) NIfTI is not supported");
    return h;
}

NiftiHeaderView to_view(const RawHeader& h, bool swapped) {
    NiftiHeaderView v;
    for (int i = 0; i < 8; ++i) {
        v.dim[i] = h.dim[i];
        v.pixdim[i] = h.pixdim[i];
    }
    v.datatype = h.datatype;
    v.bitpix = h.bitpix;
    v.vox_offset = h.vox_offset;
    v.scl_slope = h.scl_slope;
    v.scl_inter = h.scl_inter;
    v.sform_code = h.sform_code;
    v.qform_code = h.qform_code;
    v.swapped = swapped;
    if (h.sform_code > 0) {
        for (int i = 0; i < 4; ++i) {
            v.affine[i] = h.srow_x[i];
            v.affine[4 + i] = h.srow_y[i];
            v.affine[8 + i] = h.srow_z[i];
        }
        v.affine[12] = v.affine[13] = v.affine[14] = 0.0;
        v.affine[15] = 1.0;
    } else if (h.qform_code > 0) {
        v.affine = affine_from_quaternion(h);
    } else {
        v.affine = {h.pixdim[1], 0, 0, 0, 0, h.pixdim[2], 0, 0, 0, 0, h.pixdim[3], 0, 0, 0, 0, 1};
    }
    return v;
}

void check_dims(const RawHeader& h, const std::string& path) {
    if (h.dim[0] > 3)
        for (int i = 4; i <= h.dim[0]; ++i)
            if (h.dim[i] > 1)
                throw FormatError(path + ": dimension " + std::to_string(i) +
                                  " is non-singleton; only 3D volumes are supported");
    for (int i = 1; i <= std::min<int>(3, h.dim[0]); ++i)
        if (h.dim[i] < 1) throw FormatError(path + ": non-positive spatial dimension");
}

template <typename T>
void read_payload_as(gzFile f, const std::string& path, bool swapped, int64_t n,
                     std::vector<float>& out) {
    std::vector<T> raw(static_cast<size_t>(n));
    const int64_t bytes = n * static_cast<int64_t>(sizeof(T));
    int64_t got = 0;
    while (got < bytes) {
        int chunk = static_cast<int>(std::min<int64_t>(bytes - got, 1 << 28));
        int r = gzread(f, reinterpret_cast<char*>(raw.data()) + got, chunk);
        if (r <= 0) throw FormatError(path + ": truncated file (incomplete voxel payload)");
        got += r;
    }
    if (swapped)
        for (auto& v : raw) swap_bytes(v);
    out.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i]);
}

Volume3D read_volume_impl(const std::string& path) {
    GzFile gz(path, "rb");
    if (!gz.f) throw FormatError(path + ": cannot open file");
    bool swapped = false;
    RawHeader h = load_raw_header(gz.f, path, &swapped);
    check_dims(h, path);

    Volume3D vol;
    vol.nx = h.dim[0] >= 1 ? h.dim[1] : 1;
    vol.ny = h.dim[0] >= 2 ? h.dim[2] : 1;
    vol.nz = h.dim[0] >= 3 ? h.dim[3] : 1;
    NiftiHeaderView view = to_view(h, swapped);
    for (int i = 0; i < 3; ++i) vol.spacing[i] = std::abs(view.pixdim[i + 1]);
    for (int i = 0; i < 3; ++i)
        if (vol.spacing[i] <= 0.0) vol.spacing[i] = 1.0;
    vol.affine = view.affine;

    int64_t offset = static_cast<int64_t>(h.vox_offset);
    if (offset < 348) throw FormatError(path + ": vox_offset before end of header");
    std::vector<char> skip(static_cast<size_t>(offset - 348));
    if (!skip.empty() && gzread(gz.f, skip.data(), static_cast<unsigned>(skip.size())) !=
                             static_cast<int>(skip.size()))
        throw FormatError(path + ": truncated file (missing extension bytes)");

    const int64_t n = vol.numel();
    switch (h.datatype) {
        case DT_UINT8: read_payload_as<uint8_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_INT8: read_payload_as<int8_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_INT16: read_payload_as<int16_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_UINT16: read_payload_as<uint16_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_INT32: read_payload_as<int32_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_UINT32: read_payload_as<uint32_t>(gz.f, path, swapped, n, vol.data); break;
        case DT_FLOAT32: read_payload_as<float>(gz.f, path, swapped, n, vol.data); break;
        case DT_FLOAT64: read_payload_as<double>(gz.f, path, swapped, n, vol.data); break;
        default:
            throw FormatError(path + ": unsupported datatype code " + std::to_string(h.datatype));
    }

    float slope = h.scl_slope, inter = h.scl_inter;
    if (slope == 0.0f) slope = 1.0f;
    if (slope != 1.0f || inter != 0.0f)
        for (auto& v : vol.data) v = slope * v + inter;
    return vol;
}

RawHeader make_header(int64_t nx, int64_t ny, int64_t nz, int16_t datatype, int16_t bitpix,
                      const std::array<double, 3>& spacing, const std::array<double, 16>& affine) {
    RawHeader h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<int16_t>(nx);
    h.dim[2] = static_cast<int16_t>(ny);
    h.dim[3] = static_cast<int16_t>(nz);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = datatype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.0f;
    for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(spacing[i]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // millimetres
    h.sform_code = 1;
    h.qform_code = 0;
    for (int i = 0; i < 4; ++i) {
        h.srow_x[i] = static_cast<float>(affine[i]);
        h.srow_y[i] = static_cast<float>(affine[4 + i]);
        h.srow_z[i] = static_cast<float>(affine[8 + i]);
    }
    std::memcpy(h.magic, "n+1\0", 4);
    return h;
}

bool ends_with_gz(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_blob(const std::string& path, const RawHeader& h, const void* payload, size_t bytes) {
    const char ext_pad[4] = {0, 0, 0, 0};
    if (ends_with_gz(path)) {
        GzFile gz(path, "wb");
        if (!gz.f) throw FormatError(path + ": cannot open file for writing");
        if (gzwrite(gz.f, &h, sizeof(h)) != static_cast<int>(sizeof(h)) ||
            gzwrite(gz.f, ext_pad, 4) != 4 ||
            gzwrite(gz.f, payload, static_cast<unsigned>(bytes)) != static_cast<int>(bytes))
            throw FormatError(path + ": write failed");
    } else {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FormatError(path + ": cannot open file for writing");
        out.write(reinterpret_cast<const char*>(&h), sizeof(h));
        out.write(ext_pad, 4);
        out.write(reinterpret_cast<const char*>(payload), static_cast<std::streamsize>(bytes));
        if (!out) throw FormatError(path + ": write failed");
    }
}

}  // namespace

Volume3D read_volume(const std::string& path) { return read_volume_impl(path); }

void write_volume(const Volume3D& vol, const std::string& path) {
    vol.validate();
    if (vol.nx > 32767 || vol.ny > 32767 || vol.nz > 32767)
        throw FormatError(path + ": dimension exceeds NIfTI-1 int16 limit");
    RawHeader h = make_header(vol.nx, vol.ny, vol.nz, DT_FLOAT32, 32, vol.spacing, vol.affine);
    write_blob(path, h, vol.data.data(), vol.data.size() * sizeof(float));
}

LabelMask read_mask(const std::string& path) {
    Volume3D v = read_volume_impl(path);
    LabelMask m(v.nx, v.ny, v.nz);
    for (size_t i = 0; i < v.data.size(); ++i) m.data[i] = v.data[i] != 0.0f ? 1 : 0;
    return m;
}

void write_mask(const LabelMask& mask, const std::string& path,
                const std::array<double, 3>& spacing, const std::array<double, 16>& affine) {
    mask.validate();
    RawHeader h = make_header(mask.nx, mask.ny, mask.nz, DT_UINT8, 8, spacing, affine);
    write_blob(path, h, mask.data.data(), mask.data.size());
}

NiftiHeaderView read_header(const std::string& path) {
    GzFile gz(path, "rb");
    if (!gz.f) throw FormatError(path + ": cannot open file");
    bool swapped = false;
    RawHeader h = load_raw_header(gz.f, path, &swapped);
    return to_view(h, swapped);
}

}  // namespace msadapt
