#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "msadapt/adapt_protocols.hpp"
#include "msadapt/phantom_gen.hpp"
#include "msadapt/preprocess.hpp"

using namespace msadapt;

namespace {

std::vector<SubjectRecord> tiny_cohort(int n, uint64_t seed) {
    PhantomSpec spec;
    spec.shape = 32;
    spec.lesion_count_min = 1;
    spec.lesion_count_max = 3;
    spec.lesion_radius_min = 1.5;
    spec.lesion_radius_max = 2.5;
    auto cohort = generate_cohort(n, spec, site_preset_a(), seed);
    for (auto& rec : cohort) rec = preprocess_subject(rec);
    return cohort;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg = TrainConfig::desk_preset();
    cfg.net.channels = {4, 8, 16};
    cfg.patch_size = 16;
    cfg.augment.crop_size = 16;
    cfg.draws_per_subject = 2;
    cfg.batch_size = 2;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("strategy names round trip") {
    for (Strategy s : {Strategy::OneShot, Strategy::ZeroShot, Strategy::HarmonizationEnriched,
                       Strategy::TargetCV, Strategy::NoAdapt})
        CHECK(strategy_from_name(strategy_name(s)) == s);
    CHECK_THROWS_AS(strategy_from_name("bogus"), ConfigError);
}

TEST_CASE("one-shot plan: one fold per subject, train {i}, test the rest") {
    const int n = 10;
    auto plan = plan_one_shot(n);
    plan.validate(n);
    REQUIRE(plan.folds.size() == 10);
    CHECK(plan.uses_target_labels);
    CHECK_FALSE(plan.from_scratch);
    std::vector<int> times_tested(n, 0);
    for (int i = 0; i < n; ++i) {
        const Fold& f = plan.folds[i];
        CHECK(f.index == i);
        REQUIRE(f.train_target == std::vector<int>{i});
        CHECK(f.val_target.empty());
        CHECK_FALSE(f.include_harmonized_source);
        CHECK(f.test_target.size() == 9);
        std::set<int> tested(f.test_target.begin(), f.test_target.end());
        CHECK(tested.count(i) == 0);  // no train/test leakage
        for (int t : f.test_target) ++times_tested[t];
    }
    // every subject is tested exactly n-1 times across folds
    for (int t : times_tested) CHECK(t == 9);
}

TEST_CASE("harmonization-enriched plan mirrors one-shot plus the source pool") {
    const int n = 10;
    auto one = plan_one_shot(n);
    auto enr = plan_harmonization_enriched(n);
    enr.validate(n);
    REQUIRE(enr.folds.size() == one.folds.size());
    for (size_t i = 0; i < enr.folds.size(); ++i) {
        CHECK(enr.folds[i].train_target == one.folds[i].train_target);
        CHECK(enr.folds[i].test_target == one.folds[i].test_target);
        CHECK(enr.folds[i].include_harmonized_source);
    }
}

TEST_CASE("zero-shot plan never trains on target labels") {
    const int n = 7;
    auto plan = plan_zero_shot(n);
    plan.validate(n);
    REQUIRE(plan.folds.size() == 1);
    CHECK_FALSE(plan.uses_target_labels);
    const Fold& f = plan.folds[0];
    CHECK(f.train_target.empty());
    CHECK(f.include_harmonized_source);
    CHECK(f.test_target.size() == static_cast<size_t>(n));
}

TEST_CASE("zero-shot plans with target subjects in the train set are rejected") {
    auto plan = plan_zero_shot(4);
    plan.folds[0].train_target = {0};
    CHECK_THROWS_AS(plan.validate(4), ConfigError);
}

TEST_CASE("target-cv plan: two from-scratch folds with 4/1/5-style splits") {
    const int n = 10;
    auto plan = plan_target_cv(n);
    plan.validate(n);
    REQUIRE(plan.folds.size() == 2);
    CHECK(plan.from_scratch);
    std::set<int> train_union;
    for (const Fold& f : plan.folds) {
        CHECK(f.train_target.size() == 4);  // ceil(2*10/5)/2 per split convention
        CHECK(f.val_target.size() == 1);    // ceil(10/10)
        CHECK(f.test_target.size() == 5);
        // train/val/test within a fold are disjoint and cover the cohort
        std::set<int> all;
        for (int i : f.train_target) all.insert(i);
        for (int i : f.val_target) all.insert(i);
        for (int i : f.test_target) all.insert(i);
        CHECK(all.size() == static_cast<size_t>(n));
        for (int i : f.train_target) train_union.insert(i);
    }
    // the two folds do not test the same subjects
    std::set<int> t0(plan.folds[0].test_target.begin(), plan.folds[0].test_target.end());
    for (int i : plan.folds[1].test_target) CHECK(t0.count(i) == 0);
}

TEST_CASE("no-adapt plan evaluates every subject with zero epochs") {
    auto plan = plan_no_adapt(5);
    plan.validate(5);
    REQUIRE(plan.folds.size() == 1);
    CHECK(plan.ft_epochs == 0);
    CHECK(plan.folds[0].train_target.empty());
    CHECK(plan.folds[0].test_target.size() == 5);
}

TEST_CASE("plans reject out-of-range fold indices") {
    auto plan = plan_one_shot(4);
    plan.folds[0].test_target.push_back(17);
    CHECK_THROWS_AS(plan.validate(4), ConfigError);
}

TEST_CASE("execute: one-shot on a 3-subject cohort produces fully indexed rows") {
    auto target = tiny_cohort(3, 200);
    TrainConfig cfg = tiny_train_config();
    SegNet<float> base(cfg.net, 50);
    auto pre = snapshot(base);

    auto plan = plan_one_shot(3, 1);
    auto res = execute(plan, pre, cfg, target, {});
    CHECK(res.strategy == Strategy::OneShot);
    REQUIRE(res.folds.size() == 3);
    for (int i = 0; i < 3; ++i) {
        const auto& fr = res.folds[i];
        CHECK(fr.fold == i);
        REQUIRE(fr.logs.size() == 2);  // epoch 0 baseline + 1 epoch
        // 2 test subjects x 2 epochs
        CHECK(fr.test_rows.size() == 4);
        for (const auto& row : fr.test_rows) {
            CHECK(row.strategy == strategy_name(Strategy::OneShot));
            CHECK(row.fold == i);
            CHECK((row.epoch == 0 || row.epoch == 1));
            CHECK(row.subject_id != target[i].subject_id);  // held out
        }
    }
    // aggregates exist for epochs 0..1
    REQUIRE(res.by_epoch.size() == 2);
    CHECK(res.by_epoch[0].epoch == 0);
    CHECK(res.by_epoch[1].epoch == 1);
    for (const auto& agg : res.by_epoch) {
        CHECK(agg.mean_dsc >= 0.0);
        CHECK(agg.mean_dsc <= 1.0);
    }
}

TEST_CASE("execute aggregates per subject first, then over subjects") {
    auto target = tiny_cohort(3, 201);
    TrainConfig cfg = tiny_train_config();
    SegNet<float> base(cfg.net, 51);
    auto pre = snapshot(base);
    auto res = execute(plan_one_shot(3, 1), pre, cfg, target, {});

    // recompute the epoch-0 aggregate by hand
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& fr : res.folds)
        for (const auto& row : fr.test_rows)
            if (row.epoch == 0) {
                acc[row.subject_id].first += row.dsc;
                acc[row.subject_id].second += 1;
            }
    double mean = 0.0;
    for (const auto& [id, p] : acc) mean += p.first / p.second;
    mean /= static_cast<double>(acc.size());
    CHECK(res.by_epoch[0].mean_dsc == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("execute: zero-shot epoch-0 rows equal the unadapted pretrained model") {
    auto target = tiny_cohort(2, 202);
    auto source = tiny_cohort(2, 203);
    TrainConfig cfg = tiny_train_config();
    SegNet<float> base(cfg.net, 52);
    auto pre = snapshot(base);
    auto res = execute(plan_zero_shot(2, 1), pre, cfg, target, source);
    REQUIRE(res.folds.size() == 1);
    for (const auto& row : res.folds[0].test_rows) {
        if (row.epoch != 0) continue;
        auto idx = row.subject_id == target[0].subject_id ? 0 : 1;
        auto direct = evaluate_subject(base, target[idx], cfg);
        CHECK(row.dsc == doctest::Approx(direct.dsc));
    }
}

TEST_CASE("execute rejects plans that need a missing harmonized source pool") {
    auto target = tiny_cohort(2, 204);
    TrainConfig cfg = tiny_train_config();
    SegNet<float> base(cfg.net, 53);
    auto pre = snapshot(base);
    CHECK_THROWS_AS(execute(plan_zero_shot(2, 1), pre, cfg, target, {}), ConfigError);
}

TEST_CASE("execute is deterministic for a fixed config") {
    auto target = tiny_cohort(2, 205);
    TrainConfig cfg = tiny_train_config();
    SegNet<float> base(cfg.net, 54);
    auto pre = snapshot(base);
    auto a = execute(plan_one_shot(2, 1), pre, cfg, target, {});
    auto b = execute(plan_one_shot(2, 1), pre, cfg, target, {});
    REQUIRE(a.by_epoch.size() == b.by_epoch.size());
    for (size_t e = 0; e < a.by_epoch.size(); ++e) {
        CHECK(a.by_epoch[e].mean_dsc == b.by_epoch[e].mean_dsc);
        CHECK(a.by_epoch[e].mean_lf1 == b.by_epoch[e].mean_lf1);
    }
}
