#ifndef MSADAPT_SEGNET_HPP
#define MSADAPT_SEGNET_HPP

#include <map>
#include <string>
#include <vector>

#include "msadapt/core_types.hpp"
#include "msadapt/nn/kernels.hpp"
#include "msadapt/tensor.hpp"

namespace msadapt {

// nnUNet-style 3D encoder-decoder: Conv+InstanceNorm+ReLU blocks (2 per
// level), strided 2x2x2 convolution downsampling, transposed 2x2x2
// convolution upsampling, skip connections by channel concatenation,
// 1x1x1 sigmoid head.
struct SegNetConfig {
    int in_channels = 2;
    std::vector<int> channels = {32, 64, 128, 256, 512};
    int blocks_per_level = 2;
    double threshold = 0.5;

    int n_scales() const { return static_cast<int>(channels.size()); }
    int spatial_divisor() const { return 1 << (n_scales() - 1); }
    void validate() const;

    static SegNetConfig paper_preset();
    static SegNetConfig desk_preset();  // channels {8,16,32,64,128} for CPU runs

    std::string to_json() const;
    static SegNetConfig from_json(const std::string& j);
    bool operator==(const SegNetConfig& o) const {
        return in_channels == o.in_channels && channels == o.channels &&
               blocks_per_level == o.blocks_per_level;
    }
};

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

template <typename T>
class SegNet {
public:
    SegNet(const SegNetConfig& config, uint64_t seed);
    SegNet(const SegNet&);
    SegNet(SegNet&&) noexcept;
    SegNet& operator=(const SegNet&);
    SegNet& operator=(SegNet&&) noexcept;
    ~SegNet();

    // input {N, in_channels, D, H, W} with D,H,W divisible by
    // spatial_divisor(); returns sigmoid probabilities {N, 1, D, H, W}.
    // Inference path; intermediate activations are freed as consumed.
    Tensor<T> forward(const Tensor<T>& input) const;

    // Training path: retains per-sample activation caches for backward().
    Tensor<T> forward_train(const Tensor<T>& input);

    // grad_prob has probability-map shape; accumulates parameter gradients.
    void backward(const Tensor<T>& grad_prob);

    void zero_grad();
    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }
    const SegNetConfig& config() const { return config_; }
    int64_t param_count() const;

private:
    struct Op;
    struct SampleCache;

    Tensor<T> run_sample(const T* in, nn::Shape3 shape, SampleCache* cache) const;
    void backward_sample(const T* grad_prob, SampleCache& cache);

    SegNetConfig config_;
    std::vector<Param<T>> params_;
    std::vector<Op> ops_;
    int n_slots_ = 0;
    std::vector<SampleCache> caches_;
    nn::Shape3 cached_shape_{};
};

// loss = 0.5*(1 - soft_dice) + 0.5*BCE over the whole tensor pair.
// soft_dice = (2*sum(p*y)+eps) / (sum(p)+sum(y)+eps), eps = 1e-5; BCE uses
// probabilities clamped to [1e-7, 1-1e-7]. grad_prob, when non-null, receives
// dL/dp (zero where the clamp is active).
template <typename T>
T compound_loss(const Tensor<T>& prob, const Tensor<T>& labels, Tensor<T>* grad_prob = nullptr);

// mask = probability >= tau
LabelMask predict_binary(const std::vector<float>& prob, int64_t nx, int64_t ny, int64_t nz,
                         double tau = 0.5);

// Tiled full-volume inference: windows of edge `window`, stride `stride`
// (default window/2), overlapping probabilities averaged, threshold applied,
// padding cropped back. The record must be preprocessed.
LabelMask sliding_window_predict(const SegNet<float>& net, const SubjectRecord& record,
                                 int64_t window, int64_t stride = 0, double tau = 0.5,
                                 int64_t origin_shift = 0);

// --- checkpointing ---

struct ModelCheckpoint {
    int version = 1;
    SegNetConfig config;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;  // params + optional opt state
    std::string provenance_json = "{}";
    int epoch = 0;
};

ModelCheckpoint snapshot(const SegNet<float>& net, std::string provenance_json = "{}",
                         int epoch = 0);
SegNet<float> restore(const ModelCheckpoint& ckpt);
void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace msadapt

#endif
