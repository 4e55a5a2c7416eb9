#ifndef MSADAPT_MANIFEST_HPP
#define MSADAPT_MANIFEST_HPP

#include <string>
#include <vector>

#include "msadapt/core_types.hpp"
#include "msadapt/harmonize.hpp"
#include "msadapt/phantom_gen.hpp"

namespace msadapt {

// One subject's on-disk footprint inside a cohort manifest.
struct ManifestEntry {
    std::string subject_id;
    std::string site;
    std::string t1w;
    std::string flair;
    std::string brain_mask;
    std::string lesion_mask;  // empty when unlabeled
    uint64_t seed = 0;
    bool preprocessed = false;
    std::string provenance;
};

struct CohortManifest {
    std::string site;
    uint64_t seed = 0;
    std::string transform_json = "{}";  // generating site-transform parameters
    std::vector<ManifestEntry> entries;
};

std::string manifest_to_json(const CohortManifest& m);
CohortManifest manifest_from_json(const std::string& text);
void save_manifest(const CohortManifest& m, const std::string& path);
CohortManifest load_manifest(const std::string& path);

// FNV-1a of the canonical JSON form; used in checkpoint provenance.
std::string manifest_hash_hex(const CohortManifest& m);

// Writes <dir>/<subject_id>_{t1w,flair,brain,lesion}.nii.gz and returns the
// corresponding entry. Relative paths are stored relative to nothing; callers
// pass the directory they want recorded.
ManifestEntry write_subject_files(const SubjectRecord& record, const std::string& dir,
                                  uint64_t seed = 0);
SubjectRecord load_subject(const ManifestEntry& entry);
std::vector<SubjectRecord> load_cohort(const CohortManifest& m);

// Site-transform and harmonizer parameter (de)serialization.
std::string site_transform_to_json(const SiteTransform& t);
SiteTransform site_transform_from_json(const std::string& text);
std::string harmonizer_to_json(const Harmonizer& h);

}  // namespace msadapt

#endif
