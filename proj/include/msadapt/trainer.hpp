#ifndef MSADAPT_TRAINER_HPP
#define MSADAPT_TRAINER_HPP

#include <functional>
#include <optional>

#include "msadapt/augment.hpp"
#include "msadapt/core_types.hpp"
#include "msadapt/metrics.hpp"
#include "msadapt/segnet.hpp"

namespace msadapt {

struct TrainConfig {
    int batch_size = 2;
    int64_t patch_size = 112;  // desk preset uses 32
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int epochs = 100;               // paper: 100 pretrain, 20 fine-tune
    int draws_per_subject = 8;      // patches per training subject per epoch
    double grad_clip_norm = 12.0;   // 0 disables
    double threshold = 0.5;
    int connectivity = 18;
    uint64_t seed = 0;
    AugmentConfig augment;
    SegNetConfig net = SegNetConfig::paper_preset();

    void validate() const;
    int64_t steps_per_epoch(int64_t n_subjects) const {
        return (n_subjects * draws_per_subject + batch_size - 1) / batch_size;
    }

    static TrainConfig paper_preset();
    static TrainConfig desk_preset();  // 32-voxel patches, reduced channels
};

struct EpochLog {
    int epoch = 0;  // 1-based; fine-tune logs include an epoch-0 baseline
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
    int64_t steps = 0;
    std::optional<double> val_dsc;
    std::vector<MetricRow> eval_rows;
};

// Adam with global-norm gradient clipping over a SegNet's parameter set.
class AdamOptimizer {
public:
    AdamOptimizer(SegNet<float>& net, const TrainConfig& cfg);
    void step();  // consumes accumulated gradients
    int64_t steps_taken() const { return t_; }

private:
    SegNet<float>* net_;
    nn::AdamConfig<float> cfg_;
    double clip_norm_;
    int64_t t_ = 0;
    std::vector<Tensor<float>> m_, v_;
};

struct PretrainResult {
    ModelCheckpoint final_checkpoint;
    ModelCheckpoint best_checkpoint;  // highest validation DSC (final if no val)
    std::vector<EpochLog> logs;
};

// Paper protocol: constant learning rate, draws_per_subject patches per
// subject per epoch, per-epoch validation DSC via sliding-window inference.
PretrainResult pretrain(const TrainConfig& cfg, const std::vector<SubjectRecord>& train_subjects,
                        const SubjectRecord* val_subject);

struct FinetuneResult {
    ModelCheckpoint final_checkpoint;
    std::vector<EpochLog> logs;  // logs[0] is the epoch-0 (no-adaptation) baseline
};

// Resumes from the checkpoint with a fresh optimizer state; evaluates the
// roster after every epoch (and at epoch 0). on_epoch, when set, receives
// each per-epoch checkpoint.
FinetuneResult finetune(const ModelCheckpoint& start, const TrainConfig& cfg,
                        const std::vector<SubjectRecord>& pool,
                        const std::vector<const SubjectRecord*>& eval_roster,
                        const std::function<void(const ModelCheckpoint&, int)>& on_epoch = {});

// Sliding-window inference + full metric row for one labeled subject.
MetricRow evaluate_subject(const SegNet<float>& net, const SubjectRecord& subject,
                           const TrainConfig& cfg);

}  // namespace msadapt

#endif
