// msadapt: synthetic multi-site MS lesion segmentation benchmark driver.
//
// Pipeline: phantom -> preprocess -> harmonize -> pretrain -> adapt -> report.
// All artifacts land under the run directory (--config "run_dir", or
// $MSADAPT_RUN_ROOT/<name>). Exit codes: 0 ok, 1 run failure, 2 config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "msadapt/adapt_protocols.hpp"
#include "msadapt/harmonize.hpp"
#include "msadapt/manifest.hpp"
#include "msadapt/nifti_io.hpp"
#include "msadapt/phantom_gen.hpp"
#include "msadapt/preprocess.hpp"
#include "msadapt/report.hpp"
#include "msadapt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msadapt;

namespace {

struct AppConfig {
    std::string run_dir = "run";
    std::string preset = "desk";  // "paper" or "desk"
    uint64_t seed = 42;
    int jobs = 1;

    // phantom
    int64_t shape = 48;
    int n_source = 3;
    int n_target = 4;
    int lesion_count_min = 1, lesion_count_max = 3;
    double lesion_radius_min = 1.5, lesion_radius_max = 2.5;
    std::string source_site = "siteA";
    std::string target_site = "siteB";

    std::string harmonizer = "histogram";  // or "oracle"

    int pretrain_epochs = 10;
    int ft_epochs = 20;
    int cv_epochs = 0;  // 0 = same relative scale as the preset default
    std::vector<std::string> strategies = {"one_shot", "zero_shot", "harmonization_enriched"};

    TrainConfig train;  // shared optimizer/augment/net settings
    json raw = json::object();
};

void apply_preset(AppConfig& c) {
    if (c.preset == "paper") {
        c.train = TrainConfig::paper_preset();
        c.shape = 128;
        c.n_source = 10;  // 5 train-only in the paper's pretraining pool
        c.n_target = 10;
        c.pretrain_epochs = 100;
        c.cv_epochs = 100;
        c.lesion_count_min = 2;
        c.lesion_count_max = 5;
        c.lesion_radius_min = 2.0;
        c.lesion_radius_max = 3.5;
    } else if (c.preset == "desk") {
        c.train = TrainConfig::desk_preset();
        c.cv_epochs = 40;
    } else {
        throw ConfigError("preset must be 'paper' or 'desk'");
    }
}

AppConfig load_config(const std::string& path, std::optional<uint64_t> seed_override,
                      std::optional<std::string> preset_override, int jobs) {
    AppConfig c;
    json j = json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config: " + path);
        try {
            f >> j;
        } catch (const json::parse_error& ex) {
            throw ConfigError(std::string("config JSON: ") + ex.what());
        }
    }
    c.preset = j.value("preset", c.preset);
    if (preset_override) c.preset = *preset_override;
    apply_preset(c);

    c.run_dir = j.value("run_dir", c.run_dir);
    if (const char* root = std::getenv("MSADAPT_RUN_ROOT"); root && *root)
        c.run_dir = (fs::path(root) / c.run_dir).string();
    c.seed = j.value("seed", c.seed);
    if (seed_override) c.seed = *seed_override;
    c.jobs = jobs > 0 ? jobs : j.value("jobs", 1);

    if (j.contains("phantom")) {
        const json& p = j["phantom"];
        c.shape = p.value("shape", c.shape);
        c.n_source = p.value("n_source", c.n_source);
        c.n_target = p.value("n_target", c.n_target);
        c.source_site = p.value("source_site", c.source_site);
        c.target_site = p.value("target_site", c.target_site);
        c.lesion_count_min = p.value("lesion_count_min", c.lesion_count_min);
        c.lesion_count_max = p.value("lesion_count_max", c.lesion_count_max);
        c.lesion_radius_min = p.value("lesion_radius_min", c.lesion_radius_min);
        c.lesion_radius_max = p.value("lesion_radius_max", c.lesion_radius_max);
    }
    c.harmonizer = j.value("harmonizer", c.harmonizer);
    if (c.harmonizer != "histogram" && c.harmonizer != "oracle")
        throw ConfigError("harmonizer must be 'histogram' or 'oracle'");
    if (j.contains("pretrain")) c.pretrain_epochs = j["pretrain"].value("epochs", c.pretrain_epochs);
    if (j.contains("adapt")) {
        const json& a = j["adapt"];
        c.ft_epochs = a.value("ft_epochs", c.ft_epochs);
        c.cv_epochs = a.value("cv_epochs", c.cv_epochs);
        if (a.contains("strategies")) c.strategies = a["strategies"].get<std::vector<std::string>>();
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.lr = t.value("lr", c.train.lr);
        c.train.draws_per_subject = t.value("draws_per_subject", c.train.draws_per_subject);
        c.train.grad_clip_norm = t.value("grad_clip_norm", c.train.grad_clip_norm);
        if (t.contains("patch_size")) {
            c.train.patch_size = t["patch_size"].get<int64_t>();
            c.train.augment.crop_size = c.train.patch_size;
        }
    }
    c.train.seed = c.seed;
    c.train.validate();
    c.raw = j;
    return c;
}

void write_resolved_config(const AppConfig& c, const std::string& command) {
    fs::create_directories(c.run_dir);
    json j = c.raw;
    j["run_dir"] = c.run_dir;
    j["preset"] = c.preset;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    j["command"] = command;
    j["phantom"] = {{"shape", c.shape},
                    {"n_source", c.n_source},
                    {"n_target", c.n_target},
                    {"source_site", c.source_site},
                    {"target_site", c.target_site},
                    {"lesion_count_min", c.lesion_count_min},
                    {"lesion_count_max", c.lesion_count_max},
                    {"lesion_radius_min", c.lesion_radius_min},
                    {"lesion_radius_max", c.lesion_radius_max}};
    j["harmonizer"] = c.harmonizer;
    j["pretrain"] = {{"epochs", c.pretrain_epochs}};
    j["adapt"] = {{"ft_epochs", c.ft_epochs}, {"cv_epochs", c.cv_epochs}, {"strategies", c.strategies}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"lr", c.train.lr},
                  {"patch_size", c.train.patch_size},
                  {"draws_per_subject", c.train.draws_per_subject},
                  {"grad_clip_norm", c.train.grad_clip_norm},
                  {"net", json::parse(c.train.net.to_json())}};
    std::ofstream f(fs::path(c.run_dir) / ("config_resolved_" + command + ".json"));
    f << j.dump(2) << '\n';
}

std::string manifest_path(const AppConfig& c, const std::string& name) {
    return (fs::path(c.run_dir) / (name + "_manifest.json")).string();
}

PhantomSpec phantom_spec(const AppConfig& c) {
    PhantomSpec spec;
    spec.shape = c.shape;
    spec.lesion_count_min = c.lesion_count_min;
    spec.lesion_count_max = c.lesion_count_max;
    spec.lesion_radius_min = c.lesion_radius_min;
    spec.lesion_radius_max = c.lesion_radius_max;
    return spec;
}

SiteTransform transform_for(const AppConfig& c, const std::string& site) {
    SiteTransform t = site == c.source_site ? site_preset_a() : site_preset_b();
    t.site = SiteTag{site};
    return t;
}

CohortManifest make_cohort(const AppConfig& c, const std::string& site, int n, uint64_t seed,
                           const std::string& subdir) {
    const SiteTransform t = transform_for(c, site);
    auto subjects = generate_cohort(n, phantom_spec(c), t, seed);
    CohortManifest m;
    m.site = site;
    m.seed = seed;
    m.transform_json = site_transform_to_json(t);
    const std::string dir = (fs::path(c.run_dir) / subdir).string();
    for (const auto& s : subjects) m.entries.push_back(write_subject_files(s, dir, seed));
    return m;
}

int cmd_phantom(const AppConfig& c) {
    write_resolved_config(c, "phantom");
    auto src = make_cohort(c, c.source_site, c.n_source, hash_combine(c.seed, 1), "data/source");
    auto tgt = make_cohort(c, c.target_site, c.n_target, hash_combine(c.seed, 2), "data/target");
    save_manifest(src, manifest_path(c, "source"));
    save_manifest(tgt, manifest_path(c, "target"));
    std::cout << "phantom: wrote " << src.entries.size() << " source + " << tgt.entries.size()
              << " target subjects under " << c.run_dir << "\n";
    return 0;
}

CohortManifest preprocess_cohort(const AppConfig& c, const std::string& name) {
    CohortManifest m = load_manifest(manifest_path(c, name));
    CohortManifest out = m;
    out.entries.clear();
    const std::string dir = (fs::path(c.run_dir) / ("preproc/" + name)).string();
    for (const auto& e : m.entries) {
        SubjectRecord rec = preprocess_subject(load_subject(e));
        out.entries.push_back(write_subject_files(rec, dir, e.seed));
    }
    save_manifest(out, manifest_path(c, name + "_preproc"));
    return out;
}

int cmd_preprocess(const AppConfig& c) {
    write_resolved_config(c, "preprocess");
    auto src = preprocess_cohort(c, "source");
    auto tgt = preprocess_cohort(c, "target");
    std::cout << "preprocess: " << src.entries.size() + tgt.entries.size() << " subjects\n";
    return 0;
}

Harmonizer build_harmonizer(const AppConfig& c, const std::vector<SubjectRecord>& target) {
    if (c.harmonizer == "oracle") {
        // The oracle needs the raw-intensity transforms recorded at generation.
        auto src_m = load_manifest(manifest_path(c, "source"));
        auto tgt_m = load_manifest(manifest_path(c, "target"));
        return Harmonizer::oracle(site_transform_from_json(src_m.transform_json),
                                  site_transform_from_json(tgt_m.transform_json));
    }
    return fit_histogram_matcher(target);
}

int cmd_harmonize(const AppConfig& c) {
    write_resolved_config(c, "harmonize");
    auto src_m = load_manifest(manifest_path(c, "source_preproc"));
    auto tgt_m = load_manifest(manifest_path(c, "target_preproc"));
    auto target = load_cohort(tgt_m);
    Harmonizer h = build_harmonizer(c, target);
    {
        std::ofstream f(fs::path(c.run_dir) / "harmonizer.json");
        f << harmonizer_to_json(h) << '\n';
    }
    CohortManifest out = src_m;
    out.site = c.target_site;
    out.entries.clear();
    const std::string dir = (fs::path(c.run_dir) / "harmonized").string();
    for (const auto& e : src_m.entries) {
        // Harmonization changes the intensity scale, so re-normalize after.
        SubjectRecord rec = preprocess_subject(harmonize_subject(h, load_subject(e)));
        out.entries.push_back(write_subject_files(rec, dir, e.seed));
    }
    save_manifest(out, manifest_path(c, "harmonized"));
    std::cout << "harmonize (" << c.harmonizer << "): " << out.entries.size() << " subjects\n";
    return 0;
}

int cmd_pretrain(const AppConfig& c) {
    write_resolved_config(c, "pretrain");
    auto subjects = load_cohort(load_manifest(manifest_path(c, "source_preproc")));
    if (subjects.size() < 2) throw ConfigError("pretraining needs at least 2 source subjects");
    const SubjectRecord val = subjects.back();
    subjects.pop_back();  // last source subject is the validation case

    TrainConfig cfg = c.train;
    cfg.epochs = c.pretrain_epochs;
    PretrainResult r = pretrain(cfg, subjects, &val);

    r.final_checkpoint.provenance_json =
        json{{"phase", "pretrain-final"},
             {"manifest_hash", manifest_hash_hex(load_manifest(manifest_path(c, "source_preproc")))},
             {"seed", c.seed}}
            .dump();
    save_checkpoint(r.final_checkpoint, (fs::path(c.run_dir) / "pretrain_final.ckpt").string());
    save_checkpoint(r.best_checkpoint, (fs::path(c.run_dir) / "pretrain_best.ckpt").string());
    std::ofstream log(fs::path(c.run_dir) / "pretrain_log.csv");
    log << "epoch,mean_loss,val_dsc,steps,wall_seconds\n";
    for (const auto& e : r.logs)
        log << e.epoch << ',' << format_metric(e.mean_loss) << ','
            << (e.val_dsc ? format_metric(*e.val_dsc) : std::string()) << ',' << e.steps << ','
            << format_metric(e.wall_seconds) << '\n';
    std::cout << "pretrain: " << c.pretrain_epochs << " epochs, final val DSC "
              << (r.logs.empty() || !r.logs.back().val_dsc ? std::string("n/a")
                                                           : format_metric(*r.logs.back().val_dsc))
              << "\n";
    return 0;
}

AdaptationPlan plan_for(const AppConfig& c, Strategy s) {
    switch (s) {
        case Strategy::OneShot: return plan_one_shot(c.n_target, c.ft_epochs);
        case Strategy::ZeroShot: return plan_zero_shot(c.n_target, c.ft_epochs);
        case Strategy::HarmonizationEnriched:
            return plan_harmonization_enriched(c.n_target, c.ft_epochs);
        case Strategy::TargetCV:
            return plan_target_cv(c.n_target, c.cv_epochs > 0 ? c.cv_epochs : c.ft_epochs);
        case Strategy::NoAdapt: return plan_no_adapt(c.n_target);
    }
    throw ConfigError("unknown strategy");
}

std::vector<StrategyResult> run_adapt(const AppConfig& c) {
    auto target = load_cohort(load_manifest(manifest_path(c, "target_preproc")));
    std::vector<SubjectRecord> harmonized;
    const std::string hm = manifest_path(c, "harmonized");
    if (fs::exists(hm)) harmonized = load_cohort(load_manifest(hm));
    ModelCheckpoint ckpt = load_checkpoint((fs::path(c.run_dir) / "pretrain_final.ckpt").string());

    std::vector<StrategyResult> results;
    for (const std::string& name : c.strategies) {
        AdaptationPlan plan = plan_for(c, strategy_from_name(name));
        {
            // fold definitions, serialized next to the results
            json jf = json::array();
            for (const Fold& f : plan.folds)
                jf.push_back({{"index", f.index},
                              {"train", f.train_target},
                              {"val", f.val_target},
                              {"test", f.test_target},
                              {"harmonized_source", f.include_harmonized_source}});
            std::ofstream f(fs::path(c.run_dir) / ("plan_" + name + ".json"));
            f << json{{"strategy", name},
                      {"ft_epochs", plan.ft_epochs},
                      {"uses_target_labels", plan.uses_target_labels},
                      {"seed", c.seed},
                      {"folds", jf}}
                     .dump(2)
              << '\n';
        }
        results.push_back(execute(plan, ckpt, c.train, target, harmonized));
        std::cout << "adapt/" << name << ": final mean DSC "
                  << format_metric(results.back().by_epoch.back().mean_dsc) << "\n";
    }
    return results;
}

int cmd_adapt(const AppConfig& c) {
    write_resolved_config(c, "adapt");
    auto results = run_adapt(c);
    write_raw_csv(results, (fs::path(c.run_dir) / "results_raw.csv").string());
    write_aggregate_csv(results, (fs::path(c.run_dir) / "results_aggregate.csv").string());
    return 0;
}

int cmd_evaluate(const AppConfig& c, const std::string& pred_dir,
                 const std::string& manifest_file) {
    write_resolved_config(c, "evaluate");
    CohortManifest m = load_manifest(manifest_file);
    std::ofstream f(fs::path(c.run_dir) / "evaluate.csv");
    f << "subject_id,dsc,lf1_precision,lf1_recall,lf1,gt_volume_mm3,pred_volume_mm3\n";
    for (const auto& e : m.entries) {
        SubjectRecord rec = load_subject(e);
        if (!rec.lesion_mask) throw ConfigError("evaluate: " + e.subject_id + " has no lesion mask");
        const std::string pp = (fs::path(pred_dir) / (e.subject_id + ".nii.gz")).string();
        LabelMask pred = read_mask(fs::exists(pp) ? pp
                                                  : (fs::path(pred_dir) / (e.subject_id + ".nii")).string());
        MetricRow r;
        r.dsc = dice(pred, *rec.lesion_mask);
        LesionF1 lf = lesion_f1(pred, *rec.lesion_mask, c.train.connectivity);
        f << e.subject_id << ',' << format_metric(r.dsc) << ',' << format_metric(lf.precision)
          << ',' << format_metric(lf.recall) << ',' << format_metric(lf.f1) << ','
          << format_metric(lesion_volume_mm3(*rec.lesion_mask, rec.t1w.spacing)) << ','
          << format_metric(lesion_volume_mm3(pred, rec.t1w.spacing)) << '\n';
    }
    std::cout << "evaluate: wrote " << (fs::path(c.run_dir) / "evaluate.csv").string() << "\n";
    return 0;
}

int cmd_report(const AppConfig& c) {
    write_resolved_config(c, "report");
    // Rebuild the aggregate series from the adapt-stage CSV.
    std::ifstream f(fs::path(c.run_dir) / "results_aggregate.csv");
    if (!f) throw ConfigError("report: run 'adapt' first (results_aggregate.csv missing)");
    std::string line;
    std::getline(f, line);  // header
    std::map<std::string, StrategyResult> by_strategy;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string name, epoch, dsc, lf1, vc;
        std::getline(ss, name, ',');
        std::getline(ss, epoch, ',');
        std::getline(ss, dsc, ',');
        std::getline(ss, lf1, ',');
        std::getline(ss, vc, ',');
        StrategyResult& r = by_strategy[name];
        r.strategy = strategy_from_name(name);
        EpochAggregate a;
        a.epoch = std::stoi(epoch);
        a.mean_dsc = std::stod(dsc);
        a.mean_lf1 = std::stod(lf1);
        if (!vc.empty()) a.volume_corr = std::stod(vc);
        r.by_epoch.push_back(a);
    }
    std::vector<StrategyResult> results;
    for (auto& [name, r] : by_strategy) results.push_back(std::move(r));
    write_metric_curves(results, (fs::path(c.run_dir) / "report").string());
    std::cout << "report: wrote dsc.svg, lf1.svg, vc.svg under "
              << (fs::path(c.run_dir) / "report").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-site MS lesion segmentation domain-adaptation benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> preset;
    int jobs = 0;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "global seed (overrides config)");
    app.add_option("--preset", preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--jobs", jobs, "OpenMP thread count");

    auto* phantom = app.add_subcommand("phantom", "generate source/target phantom cohorts");
    auto* preprocess = app.add_subcommand("preprocess", "brain-mask + WM-peak normalize cohorts");
    auto* harmonize = app.add_subcommand("harmonize", "map source subjects to the target contrast");
    auto* pretrain = app.add_subcommand("pretrain", "train the source-domain model");
    auto* adapt = app.add_subcommand("adapt", "run the fine-tuning strategies and write CSVs");
    std::string pred_dir, gt_manifest;
    auto* evaluate = app.add_subcommand("evaluate", "score a directory of predicted masks");
    evaluate->add_option("--predictions", pred_dir, "directory of <subject_id>.nii.gz masks")
        ->required();
    evaluate->add_option("--manifest", gt_manifest, "ground-truth cohort manifest")->required();
    auto* report = app.add_subcommand("report", "render metric curves from the adapt CSVs");

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig cfg = load_config(config_path, seed, preset, jobs);
#ifdef _OPENMP
        if (cfg.jobs > 0) omp_set_num_threads(cfg.jobs);
#endif
        if (phantom->parsed()) return cmd_phantom(cfg);
        if (preprocess->parsed()) return cmd_preprocess(cfg);
        if (harmonize->parsed()) return cmd_harmonize(cfg);
        if (pretrain->parsed()) return cmd_pretrain(cfg);
        if (adapt->parsed()) return cmd_adapt(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg, pred_dir, gt_manifest);
        if (report->parsed()) return cmd_report(cfg);
        return 2;
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
