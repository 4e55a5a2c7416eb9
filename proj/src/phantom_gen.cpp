#include "msadapt/phantom_gen.hpp"

#include <algorithm>
#include <cmath>

#include "msadapt/rng.hpp"

namespace msadapt {

void PhantomSpec::validate() const {
    if (shape < 16) throw ConfigError("PhantomSpec: shape must be >= 16");
    if (lesion_count_min < 0 || lesion_count_max < lesion_count_min)
        throw ConfigError("PhantomSpec: bad lesion_count range");
    if (lesion_radius_min < 1.0 || lesion_radius_max < lesion_radius_min)
        throw ConfigError("PhantomSpec: bad lesion_radius range");
    if (noise_sigma < 0.0) throw ConfigError("PhantomSpec: noise_sigma must be >= 0");
    if (!(lesion.flair_mean > wm.flair_mean + 2.0 * noise_sigma))
        throw ConfigError("PhantomSpec: FLAIR lesion mean must exceed WM mean + 2*noise_sigma");
}

namespace {

void check_monotone(const std::vector<std::array<double, 2>>& pts, const char* name) {
    if (pts.size() < 2) throw ConfigError(std::string("SiteTransform: ") + name +
                                          " needs at least 2 control points");
    for (size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i][0] > pts[i - 1][0] && pts[i][1] > pts[i - 1][1]))
            throw ConfigError(std::string("SiteTransform: ") + name +
                              " control points must be strictly increasing");
}

double pwl_eval(const std::vector<std::array<double, 2>>& pts, double x) {
    if (x <= pts.front()[0]) {
        double slope = (pts[1][1] - pts[0][1]) / (pts[1][0] - pts[0][0]);
        return pts[0][1] + slope * (x - pts[0][0]);
    }
    for (size_t i = 1; i < pts.size(); ++i) {
        if (x <= pts[i][0]) {
            double t = (x - pts[i - 1][0]) / (pts[i][0] - pts[i - 1][0]);
            return pts[i - 1][1] + t * (pts[i][1] - pts[i - 1][1]);
        }
    }
    size_t n = pts.size();
    double slope = (pts[n - 1][1] - pts[n - 2][1]) / (pts[n - 1][0] - pts[n - 2][0]);
    return pts[n - 1][1] + slope * (x - pts[n - 1][0]);
}

std::vector<std::array<double, 2>> pwl_invert(const std::vector<std::array<double, 2>>& pts) {
    std::vector<std::array<double, 2>> inv(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) inv[i] = {pts[i][1], pts[i][0]};
    return inv;
}

}  // namespace

void SiteTransform::validate() const {
    if (site.name.empty()) throw ConfigError("SiteTransform: site name must be non-empty");
    check_monotone(t1w_map, "t1w_map");
    check_monotone(flair_map, "flair_map");
    if (!(gamma > 0.0)) throw ConfigError("SiteTransform: gamma must be > 0");
    if (!(domain_max > 0.0)) throw ConfigError("SiteTransform: domain_max must be > 0");
    if (bias_amplitude < 0.0 || bias_amplitude > 0.5)
        throw ConfigError("SiteTransform: bias_amplitude out of range [0, 0.5]");
    if (noise_sigma < 0.0) throw ConfigError("SiteTransform: noise_sigma must be >= 0");
}

double SiteTransform::map_intensity(double v, Contrast contrast) const {
    const auto& pts = contrast == Contrast::T1w ? t1w_map : flair_map;
    double y = pwl_eval(pts, v);
    if (gamma != 1.0) {
        double u = y / domain_max;
        y = u <= 0.0 ? 0.0 : domain_max * std::pow(u, gamma);
    }
    return y;
}

double SiteTransform::invert_intensity(double v, Contrast contrast) const {
    double y = v;
    if (gamma != 1.0) {
        double u = y / domain_max;
        y = u <= 0.0 ? 0.0 : domain_max * std::pow(u, 1.0 / gamma);
    }
    const auto& pts = contrast == Contrast::T1w ? t1w_map : flair_map;
    return pwl_eval(pwl_invert(pts), y);
}

double SiteTransform::bias_at(int64_t x, int64_t y, int64_t z, int64_t nx, int64_t ny,
                              int64_t nz) const {
    if (bias_amplitude == 0.0) return 1.0;
    uint64_t h = hash_string(site.name);
    Rng rng(h);
    double fx = 1.0 + static_cast<double>(rng.uniform_int(0, 1));
    double fy = 1.0 + static_cast<double>(rng.uniform_int(0, 1));
    double fz = 1.0 + static_cast<double>(rng.uniform_int(0, 1));
    double px = rng.uniform(0.0, 2.0 * M_PI);
    double py = rng.uniform(0.0, 2.0 * M_PI);
    double pz = rng.uniform(0.0, 2.0 * M_PI);
    double b = std::cos(M_PI * fx * (static_cast<double>(x) / static_cast<double>(nx)) + px) *
               std::cos(M_PI * fy * (static_cast<double>(y) / static_cast<double>(ny)) + py) *
               std::cos(M_PI * fz * (static_cast<double>(z) / static_cast<double>(nz)) + pz);
    return 1.0 + bias_amplitude * b;
}

SiteTransform site_preset_a() {
    SiteTransform t;
    t.site = {"site-A"};
    t.noise_sigma = 0.01;
    return t;
}

SiteTransform site_preset_b() {
    SiteTransform t;
    t.site = {"site-B"};
    // Compress the GM/WM FLAIR gap and damp lesion hyperintensity: after
    // WM-peak normalization the lesion/WM FLAIR ratio drops from ~2.0 at the
    // source site to ~1.4 here, a contrast a source-trained model misses.
    t.flair_map = {{0.0, 0.0}, {0.70, 0.544}, {0.85, 0.602}, {1.40, 0.720}, {2.0, 1.206}};
    t.t1w_map = {
        {0.0, 0.0}, {0.20, 0.149}, {0.55, 0.392}, {0.70, 0.505}, {1.00, 0.680}, {2.0, 1.206}};
    t.gamma = 0.85;
    // Strong low-frequency gain variation: per-channel instance norm absorbs
    // global monotone remaps, so the spatially varying field is what actually
    // breaks cross-site generalization.
    t.bias_amplitude = 0.35;
    t.noise_sigma = 0.04;
    return t;
}

namespace {

struct Geometry {
    int64_t n;
    double cx, cy, cz;
    double ax, ay, az;  // ellipsoid semi-axes in voxels

    explicit Geometry(int64_t shape) : n(shape) {
        cx = cy = cz = (static_cast<double>(shape) - 1.0) / 2.0;
        ax = 0.46 * static_cast<double>(shape);
        ay = 0.42 * static_cast<double>(shape);
        az = 0.40 * static_cast<double>(shape);
    }

    double radius(double x, double y, double z) const {
        double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
};

Tissue tissue_at(const Geometry& g, int64_t x, int64_t y, int64_t z) {
    double r = g.radius(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z));
    if (r > 1.0) return Tissue::Background;
    if (r > 0.92) return Tissue::CSF;  // subarachnoid rim
    if (r > 0.62) return Tissue::GM;
    if (r <= 0.14) return Tissue::CSF;  // ventricle core
    return Tissue::WM;
}

const TissueRow& row_for(const PhantomSpec& spec, Tissue t) {
    switch (t) {
        case Tissue::Background: return spec.background;
        case Tissue::CSF: return spec.csf;
        case Tissue::GM: return spec.gm;
        case Tissue::WM: return spec.wm;
        case Tissue::Lesion: return spec.lesion;
    }
    return spec.background;
}

struct LesionBall {
    double x, y, z;
    double rx, ry, rz;
    double reach() const { return std::max(rx, std::max(ry, rz)); }
};

bool inside(const LesionBall& b, double x, double y, double z) {
    double dx = (x - b.x) / b.rx, dy = (y - b.y) / b.ry, dz = (z - b.z) / b.rz;
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

}  // namespace

SubjectRecord generate_subject(const PhantomSpec& spec, uint64_t seed) {
    spec.validate();
    const int64_t n = spec.shape;
    Geometry geo(n);
    Rng rng(hash_combine(seed, 0xbadc0ffeULL));

    SubjectRecord rec;
    rec.subject_id = "subject-" + std::to_string(seed);
    rec.site = {"canonical"};
    rec.provenance = "phantom";
    rec.t1w = Volume3D(n, n, n);
    rec.flair = Volume3D(n, n, n);
    rec.brain_mask = LabelMask(n, n, n);
    LabelMask lesions(n, n, n);

    // Place non-overlapping spheroid lesions fully inside the WM shell.
    const int count = static_cast<int>(rng.uniform_int(spec.lesion_count_min,
                                                       spec.lesion_count_max));
    std::vector<LesionBall> balls;
    int attempts = 0;
    const int max_attempts = 2000 * std::max(1, count);
    while (static_cast<int>(balls.size()) < count) {
        if (++attempts > max_attempts)
            throw ConfigError("generate_subject: could not place lesions (radius exceeds the WM shell?)");
        LesionBall b;
        double r = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
        b.rx = r * rng.uniform(0.8, 1.2);
        b.ry = r * rng.uniform(0.8, 1.2);
        b.rz = r * rng.uniform(0.8, 1.2);
        b.x = rng.uniform(1.0, static_cast<double>(n) - 2.0);
        b.y = rng.uniform(1.0, static_cast<double>(n) - 2.0);
        b.z = rng.uniform(1.0, static_cast<double>(n) - 2.0);
        // the whole bounding ball must sit in WM
        double pad = b.reach() + 1.0;
        bool ok = true;
        for (int dz = -1; dz <= 1 && ok; ++dz)
            for (int dy = -1; dy <= 1 && ok; ++dy)
                for (int dx = -1; dx <= 1 && ok; ++dx)
                    ok = tissue_at(geo, static_cast<int64_t>(b.x + dx * pad),
                                   static_cast<int64_t>(b.y + dy * pad),
                                   static_cast<int64_t>(b.z + dz * pad)) == Tissue::WM;
        for (const auto& other : balls) {
            double d = std::sqrt((b.x - other.x) * (b.x - other.x) +
                                 (b.y - other.y) * (b.y - other.y) +
                                 (b.z - other.z) * (b.z - other.z));
            if (d <= b.reach() + other.reach() + 1.5) ok = false;
        }
        if (ok) balls.push_back(b);
    }

    for (int64_t z = 0; z < n; ++z)
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                int64_t idx = rec.t1w.index(x, y, z);
                Tissue t = tissue_at(geo, x, y, z);
                rec.brain_mask.data[static_cast<size_t>(idx)] = t != Tissue::Background ? 1 : 0;
                for (const auto& b : balls)
                    if (inside(b, static_cast<double>(x), static_cast<double>(y),
                               static_cast<double>(z))) {
                        t = Tissue::Lesion;
                        lesions.data[static_cast<size_t>(idx)] = 1;
                        break;
                    }
                const TissueRow& row = row_for(spec, t);
                double t1 = row.t1w_mean + rng.normal() * row.stddev + rng.normal() * spec.noise_sigma;
                double fl = row.flair_mean + rng.normal() * row.stddev + rng.normal() * spec.noise_sigma;
                rec.t1w.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, t1));
                rec.flair.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, fl));
            }

    rec.lesion_mask = std::move(lesions);
    validate_subject(rec);
    return rec;
}

SubjectRecord apply_site_transform(const SubjectRecord& record, const SiteTransform& t,
                                   uint64_t seed) {
    t.validate();
    SubjectRecord out = record;
    out.site = t.site;
    out.provenance += ";site:" + t.site.name;
    Rng rng(hash_combine(seed, hash_string(t.site.name)));
    const int64_t nx = out.t1w.nx, ny = out.t1w.ny, nz = out.t1w.nz;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                int64_t idx = out.t1w.index(x, y, z);
                double bias = t.bias_at(x, y, z, nx, ny, nz);
                double t1 = t.map_intensity(out.t1w.data[static_cast<size_t>(idx)], Contrast::T1w);
                double fl =
                    t.map_intensity(out.flair.data[static_cast<size_t>(idx)], Contrast::Flair);
                t1 = t1 * bias + rng.normal() * t.noise_sigma;
                fl = fl * bias + rng.normal() * t.noise_sigma;
                out.t1w.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, t1));
                out.flair.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, fl));
            }
    return out;
}

std::vector<SubjectRecord> generate_cohort(int n_subjects, const PhantomSpec& spec,
                                           const SiteTransform& t, uint64_t seed) {
    if (n_subjects < 1) throw ConfigError("generate_cohort: n_subjects must be >= 1");
    std::vector<SubjectRecord> cohort;
    cohort.reserve(static_cast<size_t>(n_subjects));
    for (int i = 0; i < n_subjects; ++i) {
        uint64_t subj_seed = hash_combine(seed, static_cast<uint64_t>(i + 1));
        // Lesion placement is rejection-sampled and can exhaust its attempt
        // budget on tight geometries; perturb the seed deterministically and
        // retry before giving up.
        SubjectRecord rec = [&] {
            for (int attempt = 0;; ++attempt) {
                try {
                    return generate_subject(spec, hash_combine(subj_seed, attempt));
                } catch (const ConfigError&) {
                    if (attempt >= 32) throw;
                }
            }
        }();
        rec = apply_site_transform(rec, t, hash_combine(subj_seed, 0x5173ULL));
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%02d", i + 1);
        rec.subject_id = t.site.name + "-s" + buf;
        cohort.push_back(std::move(rec));
    }
    return cohort;
}

SubjectRecord oracle_harmonize(const SubjectRecord& record, const SiteTransform& from,
                               const SiteTransform& to) {
    from.validate();
    to.validate();
    SubjectRecord out = record;
    out.site = to.site;
    out.provenance += ";harmonized:oracle->" + to.site.name;
    const int64_t nx = out.t1w.nx, ny = out.t1w.ny, nz = out.t1w.nz;
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                int64_t idx = out.t1w.index(x, y, z);
                double bf = from.bias_at(x, y, z, nx, ny, nz);
                double bt = to.bias_at(x, y, z, nx, ny, nz);
                double t1 = out.t1w.data[static_cast<size_t>(idx)] / bf;
                double fl = out.flair.data[static_cast<size_t>(idx)] / bf;
                t1 = to.map_intensity(from.invert_intensity(t1, Contrast::T1w), Contrast::T1w);
                fl = to.map_intensity(from.invert_intensity(fl, Contrast::Flair), Contrast::Flair);
                out.t1w.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, t1 * bt));
                out.flair.data[static_cast<size_t>(idx)] = static_cast<float>(std::max(0.0, fl * bt));
            }
    return out;
}

}  // namespace msadapt
