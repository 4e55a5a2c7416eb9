#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "msadapt/nifti_io.hpp"
#include "msadapt/rng.hpp"

using namespace msadapt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("msadapt_nifti_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Volume3D random_volume(int64_t nx, int64_t ny, int64_t nz, uint64_t seed) {
    Volume3D v(nx, ny, nz);
    Rng rng(seed);
    for (auto& x : v.data) x = static_cast<float>(rng.normal());
    v.spacing = {0.8, 1.0, 1.2};
    v.affine = {0.8, 0, 0, -20, 0, 1.0, 0, -30, 0, 0, 1.2, -10, 0, 0, 0, 1};
    return v;
}

}  // namespace

TEST_CASE("write/read round trip is bit-exact, plain and gzipped") {
    TempDir td;
    auto v = random_volume(7, 5, 9, 1);
    for (const char* name : {"vol.nii", "vol.nii.gz"}) {
        write_volume(v, td.file(name));
        auto r = read_volume(td.file(name));
        REQUIRE(r.nx == v.nx);
        REQUIRE(r.ny == v.ny);
        REQUIRE(r.nz == v.nz);
        CHECK(std::memcmp(r.data.data(), v.data.data(), v.data.size() * 4) == 0);
        CHECK(r.spacing[0] == doctest::Approx(0.8));
        CHECK(r.affine[3] == doctest::Approx(-20.0));
    }
}

TEST_CASE("mask round trip preserves binary values") {
    TempDir td;
    LabelMask m(6, 6, 6, 0);
    Rng rng(2);
    for (auto& v : m.data) v = rng.uniform() < 0.3 ? 1 : 0;
    write_mask(m, td.file("mask.nii.gz"), {1, 1, 1}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    auto r = read_mask(td.file("mask.nii.gz"));
    CHECK(r.data == m.data);
}

TEST_CASE("header view reports dims and datatype") {
    TempDir td;
    auto v = random_volume(4, 5, 6, 3);
    write_volume(v, td.file("h.nii"));
    auto h = read_header(td.file("h.nii"));
    CHECK(h.dim[0] == 3);
    CHECK(h.dim[1] == 4);
    CHECK(h.dim[2] == 5);
    CHECK(h.dim[3] == 6);
    CHECK(h.datatype == 16);  // float32
}

TEST_CASE("scl_slope/inter scaling is applied on read") {
    TempDir td;
    auto v = random_volume(3, 3, 3, 4);
    write_volume(v, td.file("s.nii"));
    // Patch the header in place: slope 2, inter 10.
    std::fstream f(td.file("s.nii"), std::ios::in | std::ios::out | std::ios::binary);
    float slope = 2.0f, inter = 10.0f;
    f.seekp(112);
    f.write(reinterpret_cast<const char*>(&slope), 4);
    f.write(reinterpret_cast<const char*>(&inter), 4);
    f.close();
    auto r = read_volume(td.file("s.nii"));
    CHECK(r.data[5] == doctest::Approx(2.0f * v.data[5] + 10.0f));
}

TEST_CASE("truncated file raises FormatError") {
    TempDir td;
    std::ofstream f(td.file("bad.nii"), std::ios::binary);
    f << "not a nifti";
    f.close();
    CHECK_THROWS_AS(read_volume(td.file("bad.nii")), FormatError);
}

TEST_CASE("missing file raises FormatError") {
    CHECK_THROWS_AS(read_volume("/nonexistent/x.nii"), FormatError);
}

TEST_CASE("non-binary mask file is rejected by read_mask only when not thresholdable") {
    TempDir td;
    auto v = random_volume(3, 3, 3, 5);
    write_volume(v, td.file("f.nii"));
    auto m = read_mask(td.file("f.nii"));  // nonzero -> 1 convention
    for (size_t i = 0; i < m.data.size(); ++i)
        CHECK(m.data[i] == (v.data[i] != 0.0f ? 1 : 0));
}
