#ifndef MSADAPT_ADAPT_PROTOCOLS_HPP
#define MSADAPT_ADAPT_PROTOCOLS_HPP

#include <optional>
#include <string>
#include <vector>

#include "msadapt/trainer.hpp"

namespace msadapt {

enum class Strategy { OneShot, ZeroShot, HarmonizationEnriched, TargetCV, NoAdapt };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Indices refer to positions in the target cohort passed to execute().
struct Fold {
    int index = 0;
    std::vector<int> train_target;  // labeled target subjects used for fine-tuning
    std::vector<int> val_target;    // TargetCV only; held out from train and test
    std::vector<int> test_target;
    bool include_harmonized_source = false;
};

struct AdaptationPlan {
    Strategy strategy = Strategy::OneShot;
    std::vector<Fold> folds;
    int ft_epochs = 20;
    bool uses_target_labels = true;   // false for zero-shot
    bool from_scratch = false;        // true for TargetCV (no pretrained weights)

    void validate(int n_target) const;
};

// One-shot: n folds; fold i fine-tunes on target subject i, tests on the rest.
AdaptationPlan plan_one_shot(int n_target, int ft_epochs = 20);

// Zero-shot: a single fold; fine-tunes only on harmonized source subjects and
// tests on every target subject. Target lesion masks are never trained on.
AdaptationPlan plan_zero_shot(int n_target, int ft_epochs = 20);

// Harmonization-enriched one-shot: fold i fine-tunes on target subject i plus
// the harmonized source pool, tests on the rest.
AdaptationPlan plan_harmonization_enriched(int n_target, int ft_epochs = 20);

// Supervised target-only cross-validation reference: 2 folds, trained from
// scratch. Fold sizes generalize the 4/1/5 (train/val/test) split as
// ceil(2n/5) / ceil(n/10) / remainder.
AdaptationPlan plan_target_cv(int n_target, int epochs = 100);

// Pre-trained model evaluated as-is on every target subject (epoch 0 only).
AdaptationPlan plan_no_adapt(int n_target);

struct FoldResult {
    int fold = 0;
    std::vector<EpochLog> logs;         // logs[0] is the epoch-0 baseline
    std::vector<MetricRow> test_rows;   // flattened, strategy/fold fields filled
};

struct EpochAggregate {
    int epoch = 0;
    // Per-subject mean over the folds where the subject is tested, then the
    // mean over subjects.
    double mean_dsc = 0.0;
    double mean_lf1 = 0.0;
    std::optional<double> volume_corr;  // pooled over all test rows at this epoch
};

struct StrategyResult {
    Strategy strategy = Strategy::OneShot;
    std::vector<FoldResult> folds;
    std::vector<EpochAggregate> by_epoch;  // epochs 0..ft_epochs
};

// Runs every fold of the plan. base_cfg supplies optimizer/augmentation/net
// settings; epochs are overridden by the plan and seeds are offset per fold.
// harmonized_source may be empty when no fold requests it.
StrategyResult execute(const AdaptationPlan& plan, const ModelCheckpoint& pretrained,
                       const TrainConfig& base_cfg, const std::vector<SubjectRecord>& target,
                       const std::vector<SubjectRecord>& harmonized_source);

}  // namespace msadapt

#endif
