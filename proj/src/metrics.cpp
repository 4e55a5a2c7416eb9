#include "msadapt/metrics.hpp"

#include <cmath>
#include <deque>

namespace msadapt {

namespace {

void check_same_shape(const LabelMask& a, const LabelMask& b, const char* op) {
    if (a.nx != b.nx || a.ny != b.ny || a.nz != b.nz)
        throw ValidationError(std::string(op) + ": mask shapes do not match");
}

std::vector<std::array<int, 3>> neighbor_offsets(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw ConfigError("connected_components: connectivity must be 6, 18 or 26");
    std::vector<std::array<int, 3>> offs;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (order == 0) continue;
                if (connectivity == 6 && order > 1) continue;
                if (connectivity == 18 && order > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

}  // namespace

double dice(const LabelMask& pred, const LabelMask& gt) {
    check_same_shape(pred, gt, "dice");
    int64_t inter = 0, total = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        inter += pred.data[i] & gt.data[i];
        total += pred.data[i] + gt.data[i];
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

LesionComponents connected_components(const LabelMask& mask, int connectivity) {
    const auto offs = neighbor_offsets(connectivity);
    LesionComponents out;
    out.nx = mask.nx;
    out.ny = mask.ny;
    out.nz = mask.nz;
    out.connectivity = connectivity;
    out.labels.assign(mask.data.size(), 0);

    std::deque<int64_t> queue;
    int32_t next_id = 0;
    for (int64_t seed = 0; seed < mask.numel(); ++seed) {
        if (!mask.data[static_cast<size_t>(seed)] || out.labels[static_cast<size_t>(seed)]) continue;
        ++next_id;
        int64_t size = 0;
        out.labels[static_cast<size_t>(seed)] = next_id;
        queue.push_back(seed);
        while (!queue.empty()) {
            int64_t cur = queue.front();
            queue.pop_front();
            ++size;
            int64_t x = cur % mask.nx;
            int64_t y = (cur / mask.nx) % mask.ny;
            int64_t z = cur / (mask.nx * mask.ny);
            for (const auto& o : offs) {
                int64_t px = x + o[0], py = y + o[1], pz = z + o[2];
                if (px < 0 || py < 0 || pz < 0 || px >= mask.nx || py >= mask.ny || pz >= mask.nz)
                    continue;
                int64_t idx = mask.index(px, py, pz);
                if (mask.data[static_cast<size_t>(idx)] && !out.labels[static_cast<size_t>(idx)]) {
                    out.labels[static_cast<size_t>(idx)] = next_id;
                    queue.push_back(idx);
                }
            }
        }
        out.voxel_counts.push_back(size);
    }
    return out;
}

LesionF1 lesion_f1(const LabelMask& pred, const LabelMask& gt, int connectivity,
                   int64_t min_overlap) {
    check_same_shape(pred, gt, "lesion_f1");
    LesionComponents pc = connected_components(pred, connectivity);
    LesionComponents gc = connected_components(gt, connectivity);

    // overlap[g][p]: voxels shared by gt component g+1 and pred component p+1
    std::vector<std::vector<int64_t>> pair_overlap(static_cast<size_t>(gc.count()));
    for (auto& row : pair_overlap) row.assign(static_cast<size_t>(pc.count()), 0);
    for (size_t i = 0; i < pred.data.size(); ++i) {
        int32_t p = pc.labels[i], g = gc.labels[i];
        if (p && g) ++pair_overlap[static_cast<size_t>(g - 1)][static_cast<size_t>(p - 1)];
    }

    int64_t gt_detected = 0;
    for (int32_t g = 0; g < gc.count(); ++g) {
        int64_t best = 0;
        for (int32_t p = 0; p < pc.count(); ++p)
            best = std::max(best, pair_overlap[static_cast<size_t>(g)][static_cast<size_t>(p)]);
        if (best >= min_overlap) ++gt_detected;
    }
    int64_t pred_tp = 0;
    for (int32_t p = 0; p < pc.count(); ++p) {
        bool hit = false;
        for (int32_t g = 0; g < gc.count() && !hit; ++g)
            hit = pair_overlap[static_cast<size_t>(g)][static_cast<size_t>(p)] >= min_overlap;
        if (hit) ++pred_tp;
    }

    LesionF1 r;
    r.precision = pc.count() == 0 ? 1.0
                                  : static_cast<double>(pred_tp) / static_cast<double>(pc.count());
    r.recall = gc.count() == 0 ? 1.0
                               : static_cast<double>(gt_detected) / static_cast<double>(gc.count());
    r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                          : 0.0;
    return r;
}

double lesion_volume_mm3(const LabelMask& mask, const std::array<double, 3>& spacing) {
    return static_cast<double>(mask.sum()) * spacing[0] * spacing[1] * spacing[2];
}

std::optional<double> volume_correlation(const std::vector<double>& gt_volumes,
                                         const std::vector<double>& pred_volumes) {
    if (gt_volumes.size() != pred_volumes.size())
        throw ValidationError("volume_correlation: lists must have equal length");
    const size_t n = gt_volumes.size();
    if (n < 3) return std::nullopt;
    double mg = 0.0, mp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mg += gt_volumes[i];
        mp += pred_volumes[i];
    }
    mg /= static_cast<double>(n);
    mp /= static_cast<double>(n);
    double cov = 0.0, vg = 0.0, vp = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dg = gt_volumes[i] - mg, dp = pred_volumes[i] - mp;
        cov += dg * dp;
        vg += dg * dg;
        vp += dp * dp;
    }
    if (vg == 0.0 || vp == 0.0) return std::nullopt;
    return cov / std::sqrt(vg * vp);
}

}  // namespace msadapt
