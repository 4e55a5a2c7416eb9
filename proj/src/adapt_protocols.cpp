#include "msadapt/adapt_protocols.hpp"

#include <algorithm>
#include <map>

#include "msadapt/rng.hpp"

namespace msadapt {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::OneShot: return "one_shot";
        case Strategy::ZeroShot: return "zero_shot";
        case Strategy::HarmonizationEnriched: return "harmonization_enriched";
        case Strategy::TargetCV: return "target_cv";
        case Strategy::NoAdapt: return "no_adapt";
    }
    throw ConfigError("unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
    for (Strategy s : {Strategy::OneShot, Strategy::ZeroShot, Strategy::HarmonizationEnriched,
                       Strategy::TargetCV, Strategy::NoAdapt})
        if (strategy_name(s) == name) return s;
    throw ConfigError("unknown strategy: " + name);
}

void AdaptationPlan::validate(int n_target) const {
    if (folds.empty()) throw ConfigError("plan has no folds");
    if (ft_epochs < 0) throw ConfigError("ft_epochs must be >= 0");
    for (const Fold& f : folds) {
        std::vector<int> seen;
        auto check = [&](const std::vector<int>& idx) {
            for (int i : idx) {
                if (i < 0 || i >= n_target) throw ConfigError("fold index out of range");
                if (std::find(seen.begin(), seen.end(), i) != seen.end())
                    throw ConfigError("subject appears in more than one fold role");
                seen.push_back(i);
            }
        };
        check(f.train_target);
        check(f.val_target);
        check(f.test_target);
        if (f.test_target.empty()) throw ConfigError("fold has no test subjects");
        if (strategy == Strategy::ZeroShot && !f.train_target.empty())
            throw ConfigError("zero-shot fold must not train on target subjects");
    }
}

namespace {

std::vector<int> others(int n, const std::vector<int>& excluded) {
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (std::find(excluded.begin(), excluded.end(), i) == excluded.end()) out.push_back(i);
    return out;
}

}  // namespace

AdaptationPlan plan_one_shot(int n_target, int ft_epochs) {
    if (n_target < 2) throw ConfigError("one-shot needs at least 2 target subjects");
    AdaptationPlan plan;
    plan.strategy = Strategy::OneShot;
    plan.ft_epochs = ft_epochs;
    for (int i = 0; i < n_target; ++i) {
        Fold f;
        f.index = i;
        f.train_target = {i};
        f.test_target = others(n_target, {i});
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

AdaptationPlan plan_zero_shot(int n_target, int ft_epochs) {
    if (n_target < 1) throw ConfigError("zero-shot needs at least 1 target subject");
    AdaptationPlan plan;
    plan.strategy = Strategy::ZeroShot;
    plan.ft_epochs = ft_epochs;
    plan.uses_target_labels = false;
    Fold f;
    f.index = 0;
    f.include_harmonized_source = true;
    f.test_target = others(n_target, {});
    plan.folds.push_back(std::move(f));
    return plan;
}

AdaptationPlan plan_harmonization_enriched(int n_target, int ft_epochs) {
    AdaptationPlan plan = plan_one_shot(n_target, ft_epochs);
    plan.strategy = Strategy::HarmonizationEnriched;
    for (Fold& f : plan.folds) f.include_harmonized_source = true;
    return plan;
}

AdaptationPlan plan_target_cv(int n_target, int epochs) {
    const int n_train = static_cast<int>((2 * n_target + 4) / 5);  // ceil(2n/5)
    const int n_val = static_cast<int>((n_target + 9) / 10);       // ceil(n/10)
    if (n_train + n_val >= n_target)
        throw ConfigError("target cohort too small for cross-validation splits");
    AdaptationPlan plan;
    plan.strategy = Strategy::TargetCV;
    plan.ft_epochs = epochs;
    plan.from_scratch = true;
    for (int k = 0; k < 2; ++k) {
        // Fold 0 takes train/val from the front, fold 1 from the back, so the
        // two training sets are disjoint.
        Fold f;
        f.index = k;
        for (int i = 0; i < n_train; ++i)
            f.train_target.push_back(k == 0 ? i : n_target - 1 - i);
        for (int i = 0; i < n_val; ++i)
            f.val_target.push_back(k == 0 ? n_train + i : n_target - 1 - n_train - i);
        f.test_target = others(n_target, [&] {
            std::vector<int> used = f.train_target;
            used.insert(used.end(), f.val_target.begin(), f.val_target.end());
            return used;
        }());
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

AdaptationPlan plan_no_adapt(int n_target) {
    AdaptationPlan plan = plan_zero_shot(n_target, 0);
    plan.strategy = Strategy::NoAdapt;
    plan.folds[0].include_harmonized_source = false;
    return plan;
}

StrategyResult execute(const AdaptationPlan& plan, const ModelCheckpoint& pretrained,
                       const TrainConfig& base_cfg, const std::vector<SubjectRecord>& target,
                       const std::vector<SubjectRecord>& harmonized_source) {
    plan.validate(static_cast<int>(target.size()));
    StrategyResult result;
    result.strategy = plan.strategy;

    for (const Fold& fold : plan.folds) {
        TrainConfig cfg = base_cfg;
        cfg.epochs = plan.ft_epochs;
        cfg.seed = hash_combine(base_cfg.seed, static_cast<uint64_t>(fold.index) + 0x401d);

        std::vector<SubjectRecord> pool;
        for (int i : fold.train_target) pool.push_back(target[i]);
        if (fold.include_harmonized_source) {
            if (harmonized_source.empty())
                throw ConfigError("fold requires a harmonized source pool but none was given");
            pool.insert(pool.end(), harmonized_source.begin(), harmonized_source.end());
        }
        std::vector<const SubjectRecord*> roster;
        for (int i : fold.test_target) roster.push_back(&target[i]);

        ModelCheckpoint start = pretrained;
        if (plan.from_scratch) {
            SegNet<float> fresh(cfg.net, cfg.seed);
            start = snapshot(fresh, "{\"phase\":\"scratch\"}", 0);
        }

        FoldResult fr;
        fr.fold = fold.index;
        FinetuneResult ft = finetune(start, cfg, pool, roster);
        fr.logs = std::move(ft.logs);
        for (EpochLog& log : fr.logs)
            for (MetricRow& row : log.eval_rows) {
                row.strategy = strategy_name(plan.strategy);
                row.fold = fold.index;
                fr.test_rows.push_back(row);
            }
        result.folds.push_back(std::move(fr));
    }

    // Aggregate: per-subject mean over the folds that test the subject, then
    // the cohort mean; volumes are per-subject means too, pooled into one
    // correlation.
    for (int epoch = 0; epoch <= plan.ft_epochs; ++epoch) {
        struct Acc {
            double dsc = 0, lf1 = 0, gt = 0, pred = 0;
            int n = 0;
        };
        std::map<std::string, Acc> by_subject;
        for (const FoldResult& fr : result.folds)
            for (const MetricRow& row : fr.test_rows) {
                if (row.epoch != epoch) continue;
                Acc& a = by_subject[row.subject_id];
                a.dsc += row.dsc;
                a.lf1 += row.lf1;
                a.gt += row.gt_volume_mm3;
                a.pred += row.pred_volume_mm3;
                ++a.n;
            }
        EpochAggregate agg;
        agg.epoch = epoch;
        std::vector<double> gt_vols, pred_vols;
        for (const auto& [id, a] : by_subject) {
            agg.mean_dsc += a.dsc / a.n;
            agg.mean_lf1 += a.lf1 / a.n;
            gt_vols.push_back(a.gt / a.n);
            pred_vols.push_back(a.pred / a.n);
        }
        if (!by_subject.empty()) {
            agg.mean_dsc /= static_cast<double>(by_subject.size());
            agg.mean_lf1 /= static_cast<double>(by_subject.size());
        }
        agg.volume_corr = volume_correlation(gt_vols, pred_vols);
        result.by_epoch.push_back(agg);
    }
    return result;
}

}  // namespace msadapt
