#include "msadapt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include "msadapt/rng.hpp"

namespace msadapt {

namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Per-draw RNG stream: independent of training order so reshuffling the
// batch schedule cannot change which patch a given (subject, epoch, draw)
// triple produces.
Rng draw_rng(uint64_t seed, const std::string& subject_id, int epoch, int draw) {
    uint64_t h = hash_combine(seed, hash_string(subject_id));
    h = hash_combine(h, static_cast<uint64_t>(epoch));
    h = hash_combine(h, static_cast<uint64_t>(draw));
    return Rng(h);
}

struct Draw {
    int subject = 0;
    int draw = 0;
};

std::vector<Draw> epoch_schedule(int64_t n_subjects, int draws_per_subject, uint64_t seed,
                                 int epoch) {
    std::vector<Draw> order;
    order.reserve(static_cast<size_t>(n_subjects) * draws_per_subject);
    for (int s = 0; s < n_subjects; ++s)
        for (int d = 0; d < draws_per_subject; ++d) order.push_back({s, d});
    Rng rng(hash_combine(hash_combine(seed, 0x0bdeu), static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
    return order;
}

double run_epoch(SegNet<float>& net, AdamOptimizer& opt, const TrainConfig& cfg,
                 const std::vector<SubjectRecord>& subjects, int epoch, int64_t* steps_out) {
    const int64_t p = cfg.patch_size;
    auto order = epoch_schedule(static_cast<int64_t>(subjects.size()), cfg.draws_per_subject,
                                cfg.seed, epoch);
    double loss_sum = 0.0;
    int64_t steps = 0;
    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
        const int64_t b = std::min<int64_t>(cfg.batch_size, order.size() - pos);
        Tensor<float> input({b, 2, p, p, p});
        Tensor<float> labels({b, 1, p, p, p});
        for (int64_t i = 0; i < b; ++i) {
            const Draw& dw = order[pos + i];
            const SubjectRecord& subj = subjects[dw.subject];
            Rng rng = draw_rng(cfg.seed, subj.subject_id, epoch, dw.draw);
            Patch patch = sample_patch(subj, cfg.augment, rng);
            patch = apply_augmentations(patch, cfg.augment, rng);
            std::memcpy(input.ptr() + i * 2 * patch.numel(), patch.t1w.data(),
                        sizeof(float) * patch.t1w.size());
            std::memcpy(input.ptr() + (i * 2 + 1) * patch.numel(), patch.flair.data(),
                        sizeof(float) * patch.flair.size());
            float* lab = labels.ptr() + i * patch.numel();
            for (int64_t v = 0; v < patch.numel(); ++v) lab[v] = patch.label[v];
        }
        net.zero_grad();
        Tensor<float> prob = net.forward_train(input);
        Tensor<float> grad_prob;
        loss_sum += compound_loss(prob, labels, &grad_prob);
        net.backward(grad_prob);
        opt.step();
        ++steps;
    }
    if (steps_out) *steps_out = steps;
    return steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patch_size < net.spatial_divisor())
        throw ConfigError("patch_size smaller than the network's spatial divisor");
    if (patch_size % net.spatial_divisor() != 0)
        throw ConfigError("patch_size must be divisible by the network's spatial divisor");
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (draws_per_subject < 1) throw ConfigError("draws_per_subject must be >= 1");
    if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
    net.validate();
    augment.validate();
    if (augment.crop_size != patch_size)
        throw ConfigError("augment.crop_size must match patch_size");
}

TrainConfig TrainConfig::paper_preset() {
    TrainConfig c;
    c.net = SegNetConfig::paper_preset();
    c.patch_size = 112;
    c.augment.crop_size = 112;
    c.epochs = 100;
    return c;
}

TrainConfig TrainConfig::desk_preset() {
    TrainConfig c;
    c.net = SegNetConfig::desk_preset();
    c.patch_size = 32;
    c.augment.crop_size = 32;
    c.epochs = 10;
    return c;
}

AdamOptimizer::AdamOptimizer(SegNet<float>& net, const TrainConfig& cfg)
    : net_(&net), clip_norm_(cfg.grad_clip_norm) {
    cfg_.lr = static_cast<float>(cfg.lr);
    cfg_.beta1 = static_cast<float>(cfg.beta1);
    cfg_.beta2 = static_cast<float>(cfg.beta2);
    cfg_.eps = static_cast<float>(cfg.adam_eps);
    for (const auto& p : net.params()) {
        m_.emplace_back(p.value.shape);
        v_.emplace_back(p.value.shape);
        m_.back().zero();
        v_.back().zero();
    }
}

void AdamOptimizer::step() {
    auto& params = net_->params();
    if (clip_norm_ > 0.0) {
        double sq = 0.0;
        for (const auto& p : params)
            for (int64_t i = 0; i < p.grad.numel(); ++i)
                sq += static_cast<double>(p.grad.data[i]) * p.grad.data[i];
        const double norm = std::sqrt(sq);
        if (norm > clip_norm_) {
            const float scale = static_cast<float>(clip_norm_ / norm);
            for (auto& p : params)
                for (auto& g : p.grad.data) g *= scale;
        }
    }
    ++t_;
    for (size_t k = 0; k < params.size(); ++k)
        nn::adam_step(params[k].value.ptr(), params[k].grad.ptr(), m_[k].ptr(), v_[k].ptr(),
                      params[k].value.numel(), cfg_, t_);
}

MetricRow evaluate_subject(const SegNet<float>& net, const SubjectRecord& subject,
                           const TrainConfig& cfg) {
    if (!subject.lesion_mask) throw ValidationError("evaluate_subject: no lesion mask");
    LabelMask pred = sliding_window_predict(net, subject, cfg.patch_size, cfg.patch_size / 2,
                                            cfg.threshold);
    const LabelMask& gt = *subject.lesion_mask;
    MetricRow row;
    row.subject_id = subject.subject_id;
    row.dsc = dice(pred, gt);
    LesionF1 lf1 = lesion_f1(pred, gt, cfg.connectivity);
    row.lf1_precision = lf1.precision;
    row.lf1_recall = lf1.recall;
    row.lf1 = lf1.f1;
    row.gt_volume_mm3 = lesion_volume_mm3(gt, subject.t1w.spacing);
    row.pred_volume_mm3 = lesion_volume_mm3(pred, subject.t1w.spacing);
    return row;
}

PretrainResult pretrain(const TrainConfig& cfg, const std::vector<SubjectRecord>& train_subjects,
                        const SubjectRecord* val_subject) {
    cfg.validate();
    if (train_subjects.empty()) throw ConfigError("pretrain: empty training cohort");
    for (const auto& s : train_subjects) {
        if (!s.preprocessed) throw ValidationError("pretrain: subject not preprocessed");
        if (!s.lesion_mask) throw ValidationError("pretrain: subject has no lesion mask");
    }

    SegNet<float> net(cfg.net, cfg.seed);
    AdamOptimizer opt(net, cfg);
    PretrainResult result;
    double best_dsc = -1.0;
    int best_epoch = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        const double t0 = now_seconds();
        log.mean_loss = run_epoch(net, opt, cfg, train_subjects, epoch, &log.steps);
        if (val_subject) {
            MetricRow row = evaluate_subject(net, *val_subject, cfg);
            row.epoch = epoch;
            log.val_dsc = row.dsc;
            log.eval_rows.push_back(row);
            if (row.dsc > best_dsc) {
                best_dsc = row.dsc;
                best_epoch = epoch;
                result.best_checkpoint = snapshot(net, "{\"phase\":\"pretrain-best\"}", epoch);
            }
        }
        log.wall_seconds = now_seconds() - t0;
        result.logs.push_back(std::move(log));
    }
    result.final_checkpoint = snapshot(net, "{\"phase\":\"pretrain-final\"}", cfg.epochs);
    if (!val_subject || best_epoch == 0) result.best_checkpoint = result.final_checkpoint;
    return result;
}

FinetuneResult finetune(const ModelCheckpoint& start, const TrainConfig& cfg,
                        const std::vector<SubjectRecord>& pool,
                        const std::vector<const SubjectRecord*>& eval_roster,
                        const std::function<void(const ModelCheckpoint&, int)>& on_epoch) {
    cfg.validate();
    for (const auto& s : pool) {
        if (!s.preprocessed) throw ValidationError("finetune: subject not preprocessed");
        if (!s.lesion_mask) throw ValidationError("finetune: subject has no lesion mask");
    }

    SegNet<float> net = restore(start);
    if (!(net.config() == cfg.net))
        throw ConfigError("finetune: checkpoint architecture does not match config");
    AdamOptimizer opt(net, cfg);  // optimizer state starts fresh

    FinetuneResult result;
    auto eval_epoch = [&](int epoch) {
        EpochLog log;
        log.epoch = epoch;
        double dsc_sum = 0.0;
        for (const SubjectRecord* subj : eval_roster) {
            MetricRow row = evaluate_subject(net, *subj, cfg);
            row.epoch = epoch;
            dsc_sum += row.dsc;
            log.eval_rows.push_back(std::move(row));
        }
        if (!eval_roster.empty()) log.val_dsc = dsc_sum / static_cast<double>(eval_roster.size());
        return log;
    };

    result.logs.push_back(eval_epoch(0));  // no-adaptation baseline
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t0 = now_seconds();
        int64_t steps = 0;
        const double loss = pool.empty() ? 0.0 : run_epoch(net, opt, cfg, pool, epoch, &steps);
        EpochLog log = eval_epoch(epoch);
        log.mean_loss = loss;
        log.steps = steps;
        log.wall_seconds = now_seconds() - t0;
        result.logs.push_back(std::move(log));
        if (on_epoch) on_epoch(snapshot(net, "{\"phase\":\"finetune\"}", epoch), epoch);
    }
    result.final_checkpoint = snapshot(net, "{\"phase\":\"finetune-final\"}", cfg.epochs);
    return result;
}

}  // namespace msadapt
