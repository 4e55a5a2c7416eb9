#include "msadapt/augment.hpp"

#include <algorithm>
#include <cmath>

namespace msadapt {

void AugmentConfig::validate() const {
    if (crop_size < 1) throw ConfigError("AugmentConfig: crop_size must be >= 1");
    for (double p : {lesion_bias_prob, p_permute, p_affine, p_elastic, p_intensity})
        if (p < 0.0 || p > 1.0) throw ConfigError("AugmentConfig: probabilities must lie in [0,1]");
    if (scale_min <= 0.0 || scale_max < scale_min)
        throw ConfigError("AugmentConfig: bad scale range");
    if (elastic_grid < 2) throw ConfigError("AugmentConfig: elastic_grid must be >= 2");
}

namespace {

struct PaddedView {
    const SubjectRecord* rec;
    int64_t nx, ny, nz;     // padded extents
    int64_t ox, oy, oz;     // offset of the original volume inside the pad

    float t1(int64_t x, int64_t y, int64_t z) const {
        x -= ox; y -= oy; z -= oz;
        if (x < 0 || y < 0 || z < 0 || x >= rec->t1w.nx || y >= rec->t1w.ny || z >= rec->t1w.nz)
            return 0.0f;
        return rec->t1w.at(x, y, z);
    }
    float fl(int64_t x, int64_t y, int64_t z) const {
        x -= ox; y -= oy; z -= oz;
        if (x < 0 || y < 0 || z < 0 || x >= rec->t1w.nx || y >= rec->t1w.ny || z >= rec->t1w.nz)
            return 0.0f;
        return rec->flair.at(x, y, z);
    }
    uint8_t label(int64_t x, int64_t y, int64_t z) const {
        if (!rec->lesion_mask) return 0;
        x -= ox; y -= oy; z -= oz;
        if (x < 0 || y < 0 || z < 0 || x >= rec->t1w.nx || y >= rec->t1w.ny || z >= rec->t1w.nz)
            return 0;
        return rec->lesion_mask->at(x, y, z);
    }
};

}  // namespace

Patch sample_patch(const SubjectRecord& record, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const int64_t p = cfg.crop_size;
    PaddedView view;
    view.rec = &record;
    view.nx = std::max(record.t1w.nx, p);
    view.ny = std::max(record.t1w.ny, p);
    view.nz = std::max(record.t1w.nz, p);
    view.ox = (view.nx - record.t1w.nx) / 2;
    view.oy = (view.ny - record.t1w.ny) / 2;
    view.oz = (view.nz - record.t1w.nz) / 2;

    std::array<int64_t, 3> corner{};
    const bool force_lesion =
        record.lesion_mask && record.lesion_mask->sum() > 0 && rng.uniform() < cfg.lesion_bias_prob;
    if (force_lesion) {
        const LabelMask& les = *record.lesion_mask;
        // pick the k-th lesion voxel without materializing the index list
        const int64_t target = rng.uniform_int(0, les.sum() - 1);
        int64_t seen = -1, pick = 0;
        for (int64_t i = 0; i < les.numel(); ++i)
            if (les.data[static_cast<size_t>(i)] && ++seen == target) {
                pick = i;
                break;
            }
        const int64_t vx = pick % les.nx + view.ox;
        const int64_t vy = (pick / les.nx) % les.ny + view.oy;
        const int64_t vz = pick / (les.nx * les.ny) + view.oz;
        auto pick_corner = [&](int64_t v, int64_t n) {
            const int64_t lo = std::max<int64_t>(0, v - p + 1);
            const int64_t hi = std::min(v, n - p);
            return rng.uniform_int(lo, std::max(lo, hi));
        };
        corner = {pick_corner(vx, view.nx), pick_corner(vy, view.ny), pick_corner(vz, view.nz)};
    } else {
        corner = {rng.uniform_int(0, view.nx - p), rng.uniform_int(0, view.ny - p),
                  rng.uniform_int(0, view.nz - p)};
    }

    Patch out(p);
    out.subject_id = record.subject_id;
    out.corner = corner;
    for (int64_t z = 0; z < p; ++z)
        for (int64_t y = 0; y < p; ++y)
            for (int64_t x = 0; x < p; ++x) {
                const size_t i = static_cast<size_t>(x + p * (y + p * z));
                out.t1w[i] = view.t1(corner[0] + x, corner[1] + y, corner[2] + z);
                out.flair[i] = view.fl(corner[0] + x, corner[1] + y, corner[2] + z);
                out.label[i] = view.label(corner[0] + x, corner[1] + y, corner[2] + z);
            }
    return out;
}

Patch apply_axis_permutation(const Patch& patch, const std::array<int, 3>& perm) {
    const int64_t p = patch.size;
    Patch out(p);
    out.subject_id = patch.subject_id;
    out.corner = patch.corner;
    for (int64_t z = 0; z < p; ++z)
        for (int64_t y = 0; y < p; ++y)
            for (int64_t x = 0; x < p; ++x) {
                const int64_t v[3] = {x, y, z};
                const int64_t sx = v[perm[0]], sy = v[perm[1]], sz = v[perm[2]];
                const size_t src = static_cast<size_t>(sx + p * (sy + p * sz));
                const size_t dst = static_cast<size_t>(x + p * (y + p * z));
                out.t1w[dst] = patch.t1w[src];
                out.flair[dst] = patch.flair[src];
                out.label[dst] = patch.label[src];
            }
    return out;
}

namespace {

const std::array<std::array<int, 3>, 6> kPerms = {{{0, 1, 2},
                                                   {0, 2, 1},
                                                   {1, 0, 2},
                                                   {1, 2, 0},
                                                   {2, 0, 1},
                                                   {2, 1, 0}}};

float trilinear(const std::vector<float>& v, int64_t p, double x, double y, double z) {
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t z0 = static_cast<int64_t>(std::floor(z));
    const double fx = x - x0, fy = y - y0, fz = z - z0;
    double acc = 0.0;
    for (int dz = 0; dz <= 1; ++dz)
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int64_t xx = x0 + dx, yy = y0 + dy, zz = z0 + dz;
                if (xx < 0 || yy < 0 || zz < 0 || xx >= p || yy >= p || zz >= p) continue;
                const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) * (dz ? fz : 1.0 - fz);
                acc += w * v[static_cast<size_t>(xx + p * (yy + p * zz))];
            }
    return static_cast<float>(acc);
}

uint8_t nearest(const std::vector<uint8_t>& v, int64_t p, double x, double y, double z) {
    const int64_t xx = static_cast<int64_t>(std::llround(x));
    const int64_t yy = static_cast<int64_t>(std::llround(y));
    const int64_t zz = static_cast<int64_t>(std::llround(z));
    if (xx < 0 || yy < 0 || zz < 0 || xx >= p || yy >= p || zz >= p) return 0;
    return v[static_cast<size_t>(xx + p * (yy + p * zz))];
}

}  // namespace

Patch apply_augmentations(const Patch& patch, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    const int64_t p = patch.size;

    // Draw every decision and parameter up front so the stream advances the
    // same way regardless of which transforms fire.
    const bool do_permute = rng.uniform() < cfg.p_permute;
    const int perm_idx = static_cast<int>(rng.uniform_int(0, 5));
    const bool do_affine = rng.uniform() < cfg.p_affine;
    const double deg2rad = M_PI / 180.0;
    const double rx = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * deg2rad;
    const double ry = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * deg2rad;
    const double rz = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * deg2rad;
    const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double tx = rng.uniform(-cfg.max_translation, cfg.max_translation);
    const double ty = rng.uniform(-cfg.max_translation, cfg.max_translation);
    const double tz = rng.uniform(-cfg.max_translation, cfg.max_translation);
    const bool do_elastic = rng.uniform() < cfg.p_elastic;
    const int g = cfg.elastic_grid;
    std::vector<std::array<double, 3>> ctrl(static_cast<size_t>(g) * g * g);
    for (auto& c : ctrl)
        c = {rng.normal() * cfg.elastic_sigma, rng.normal() * cfg.elastic_sigma,
             rng.normal() * cfg.elastic_sigma};
    const bool do_intensity = rng.uniform() < cfg.p_intensity;
    const double shift_t1 = rng.uniform(-cfg.intensity_shift, cfg.intensity_shift);
    const double shift_fl = rng.uniform(-cfg.intensity_shift, cfg.intensity_shift);

    Patch out = do_permute ? apply_axis_permutation(patch, kPerms[static_cast<size_t>(perm_idx)])
                           : patch;

    if (do_affine || do_elastic) {
        // rotation about x, then y, then z, uniformly scaled, inverse-mapped
        const double cx = std::cos(rx), sx = std::sin(rx);
        const double cy = std::cos(ry), sy = std::sin(ry);
        const double cz = std::cos(rz), sz = std::sin(rz);
        double r[9] = {cy * cz, cz * sx * sy - cx * sz, cx * cz * sy + sx * sz,
                       cy * sz, cx * cz + sx * sy * sz, cx * sy * sz - cz * sx,
                       -sy,     cy * sx,                cx * cy};
        const double center = (static_cast<double>(p) - 1.0) / 2.0;

        auto elastic_disp = [&](double x, double y, double z, int axis) {
            if (!do_elastic) return 0.0;
            // control grid spans the patch; trilinear interpolation
            const double gx = x / (p - 1) * (g - 1);
            const double gy = y / (p - 1) * (g - 1);
            const double gz = z / (p - 1) * (g - 1);
            const int x0 = std::clamp(static_cast<int>(gx), 0, g - 2);
            const int y0 = std::clamp(static_cast<int>(gy), 0, g - 2);
            const int z0 = std::clamp(static_cast<int>(gz), 0, g - 2);
            const double fx = gx - x0, fy = gy - y0, fz = gz - z0;
            double acc = 0.0;
            for (int dz = 0; dz <= 1; ++dz)
                for (int dy = 0; dy <= 1; ++dy)
                    for (int dx = 0; dx <= 1; ++dx) {
                        const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy) *
                                         (dz ? fz : 1.0 - fz);
                        acc += w * ctrl[static_cast<size_t>((x0 + dx) + g * ((y0 + dy) +
                                                                             g * (z0 + dz)))][
                                   static_cast<size_t>(axis)];
                    }
            return acc;
        };

        Patch warped(p);
        warped.subject_id = out.subject_id;
        warped.corner = out.corner;
        for (int64_t z = 0; z < p; ++z)
            for (int64_t y = 0; y < p; ++y)
                for (int64_t x = 0; x < p; ++x) {
                    double ux = static_cast<double>(x), uy = static_cast<double>(y),
                           uz = static_cast<double>(z);
                    double sx2 = ux, sy2 = uy, sz2 = uz;
                    if (do_affine) {
                        const double dx0 = ux - center, dy0 = uy - center, dz0 = uz - center;
                        sx2 = scale * (r[0] * dx0 + r[1] * dy0 + r[2] * dz0) + center - tx;
                        sy2 = scale * (r[3] * dx0 + r[4] * dy0 + r[5] * dz0) + center - ty;
                        sz2 = scale * (r[6] * dx0 + r[7] * dy0 + r[8] * dz0) + center - tz;
                    }
                    sx2 += elastic_disp(ux, uy, uz, 0);
                    sy2 += elastic_disp(ux, uy, uz, 1);
                    sz2 += elastic_disp(ux, uy, uz, 2);
                    const size_t i = static_cast<size_t>(x + p * (y + p * z));
                    warped.t1w[i] = trilinear(out.t1w, p, sx2, sy2, sz2);
                    warped.flair[i] = trilinear(out.flair, p, sx2, sy2, sz2);
                    warped.label[i] = nearest(out.label, p, sx2, sy2, sz2);
                }
        out = std::move(warped);
    }

    if (do_intensity) {
        for (auto& v : out.t1w) v += static_cast<float>(shift_t1);
        for (auto& v : out.flair) v += static_cast<float>(shift_fl);
    }
    return out;
}

}  // namespace msadapt
