#include "msadapt/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "msadapt/nifti_io.hpp"
#include "msadapt/rng.hpp"
#include "json.hpp"

namespace msadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json entry_to_json(const ManifestEntry& e) {
    return json{{"subject_id", e.subject_id}, {"site", e.site},
                {"t1w", e.t1w},               {"flair", e.flair},
                {"brain_mask", e.brain_mask}, {"lesion_mask", e.lesion_mask},
                {"seed", e.seed},             {"preprocessed", e.preprocessed},
                {"provenance", e.provenance}};
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.subject_id = j.at("subject_id").get<std::string>();
    e.site = j.at("site").get<std::string>();
    e.t1w = j.at("t1w").get<std::string>();
    e.flair = j.at("flair").get<std::string>();
    e.brain_mask = j.at("brain_mask").get<std::string>();
    e.lesion_mask = j.value("lesion_mask", std::string());
    e.seed = j.value("seed", uint64_t{0});
    e.preprocessed = j.value("preprocessed", false);
    e.provenance = j.value("provenance", std::string());
    return e;
}

}  // namespace

std::string manifest_to_json(const CohortManifest& m) {
    json j;
    j["site"] = m.site;
    j["seed"] = m.seed;
    j["transform"] = json::parse(m.transform_json);
    j["subjects"] = json::array();
    for (const auto& e : m.entries) j["subjects"].push_back(entry_to_json(e));
    return j.dump(2);
}

CohortManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw FormatError(std::string("manifest JSON: ") + ex.what());
    }
    CohortManifest m;
    try {
        m.site = j.at("site").get<std::string>();
        m.seed = j.value("seed", uint64_t{0});
        m.transform_json = j.value("transform", json::object()).dump();
        for (const auto& s : j.at("subjects")) m.entries.push_back(entry_from_json(s));
    } catch (const json::exception& ex) {
        throw FormatError(std::string("manifest fields: ") + ex.what());
    }
    return m;
}

void save_manifest(const CohortManifest& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << manifest_to_json(m) << '\n';
}

CohortManifest load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return manifest_from_json(ss.str());
}

std::string manifest_hash_hex(const CohortManifest& m) {
    const uint64_t h = hash_string(manifest_to_json(m));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ManifestEntry write_subject_files(const SubjectRecord& record, const std::string& dir,
                                  uint64_t seed) {
    fs::create_directories(dir);
    ManifestEntry e;
    e.subject_id = record.subject_id;
    e.site = record.site.name;
    e.seed = seed;
    e.preprocessed = record.preprocessed;
    e.provenance = record.provenance;
    const std::string base = (fs::path(dir) / record.subject_id).string();
    e.t1w = base + "_t1w.nii.gz";
    e.flair = base + "_flair.nii.gz";
    e.brain_mask = base + "_brain.nii.gz";
    write_volume(record.t1w, e.t1w);
    write_volume(record.flair, e.flair);
    write_mask(record.brain_mask, e.brain_mask, record.t1w.spacing, record.t1w.affine);
    if (record.lesion_mask) {
        e.lesion_mask = base + "_lesion.nii.gz";
        write_mask(*record.lesion_mask, e.lesion_mask, record.t1w.spacing, record.t1w.affine);
    }
    return e;
}

SubjectRecord load_subject(const ManifestEntry& entry) {
    SubjectRecord rec;
    rec.subject_id = entry.subject_id;
    rec.site = SiteTag{entry.site};
    rec.t1w = read_volume(entry.t1w);
    rec.flair = read_volume(entry.flair);
    rec.brain_mask = read_mask(entry.brain_mask);
    if (!entry.lesion_mask.empty()) rec.lesion_mask = read_mask(entry.lesion_mask);
    rec.preprocessed = entry.preprocessed;
    rec.provenance = entry.provenance;
    validate_subject(rec);
    return rec;
}

std::vector<SubjectRecord> load_cohort(const CohortManifest& m) {
    std::vector<SubjectRecord> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) out.push_back(load_subject(e));
    return out;
}

std::string site_transform_to_json(const SiteTransform& t) {
    json j;
    j["site"] = t.site.name;
    j["t1w_map"] = t.t1w_map;
    j["flair_map"] = t.flair_map;
    j["gamma"] = t.gamma;
    j["domain_max"] = t.domain_max;
    j["bias_amplitude"] = t.bias_amplitude;
    j["noise_sigma"] = t.noise_sigma;
    return j.dump();
}

SiteTransform site_transform_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw FormatError(std::string("site transform JSON: ") + ex.what());
    }
    SiteTransform t;
    try {
        t.site = SiteTag{j.at("site").get<std::string>()};
        t.t1w_map = j.at("t1w_map").get<std::vector<std::array<double, 2>>>();
        t.flair_map = j.at("flair_map").get<std::vector<std::array<double, 2>>>();
        t.gamma = j.at("gamma").get<double>();
        t.domain_max = j.at("domain_max").get<double>();
        t.bias_amplitude = j.at("bias_amplitude").get<double>();
        t.noise_sigma = j.at("noise_sigma").get<double>();
    } catch (const json::exception& ex) {
        throw FormatError(std::string("site transform fields: ") + ex.what());
    }
    t.validate();
    return t;
}

std::string harmonizer_to_json(const Harmonizer& h) {
    json j;
    j["kind"] = h.kind() == HarmonizerKind::Oracle ? "oracle" : "histogram_matching";
    j["target_site"] = h.target_site().name;
    if (h.kind() == HarmonizerKind::HistogramMatching) {
        j["t1w_landmarks"] = h.landmarks(Contrast::T1w);
        j["flair_landmarks"] = h.landmarks(Contrast::Flair);
    }
    return j.dump(2);
}

}  // namespace msadapt
