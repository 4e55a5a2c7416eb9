#include "msadapt/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "msadapt/rng.hpp"

namespace msadapt {

using nn::Shape3;

void SegNetConfig::validate() const {
    if (in_channels < 1) throw ConfigError("SegNetConfig: in_channels must be >= 1");
    if (channels.size() < 2) throw ConfigError("SegNetConfig: need at least 2 scales");
    for (size_t i = 0; i < channels.size(); ++i) {
        if (channels[i] < 1) throw ConfigError("SegNetConfig: channel counts must be >= 1");
        if (i > 0 && channels[i] <= channels[i - 1])
            throw ConfigError("SegNetConfig: channel list must be strictly increasing");
    }
    if (blocks_per_level < 1) throw ConfigError("SegNetConfig: blocks_per_level must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("SegNetConfig: threshold must lie in (0,1)");
}

SegNetConfig SegNetConfig::paper_preset() { return SegNetConfig{}; }

SegNetConfig SegNetConfig::desk_preset() {
    SegNetConfig c;
    c.channels = {8, 16, 32, 64, 128};
    return c;
}

std::string SegNetConfig::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["channels"] = channels;
    j["blocks_per_level"] = blocks_per_level;
    j["threshold"] = threshold;
    return j.dump();
}

SegNetConfig SegNetConfig::from_json(const std::string& s) {
    nlohmann::json j = nlohmann::json::parse(s);
    SegNetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.channels = j.at("channels").get<std::vector<int>>();
    c.blocks_per_level = j.at("blocks_per_level").get<int>();
    c.threshold = j.value("threshold", 0.5);
    c.validate();
    return c;
}

enum class OpKind { Conv, ConvTr, InstNorm, ReLU, Concat, Sigmoid };

template <typename T>
struct SegNet<T>::Op {
    OpKind kind;
    int in0 = -1, in1 = -1, out = -1;  // tensor slots
    int w = -1, b = -1;                // param indices (InstNorm: gamma, beta)
    int in_ch = 0, out_ch = 0;
    int k = 3, stride = 1, pad = 1;
};

template <typename T>
struct SegNet<T>::SampleCache {
    std::vector<Tensor<T>> slots;
    std::vector<std::vector<T>> norm_mean;  // indexed by op
    std::vector<std::vector<T>> norm_istd;
};

namespace {

constexpr double kNormEps = 1e-5;

template <typename T>
int add_param(std::vector<Param<T>>& params, const std::string& name,
              std::vector<int64_t> shape) {
    params.push_back({name, Tensor<T>(std::move(shape)), Tensor<T>()});
    params.back().grad = Tensor<T>(params.back().value.shape);
    return static_cast<int>(params.size()) - 1;
}

}  // namespace

template <typename T>
SegNet<T>::SegNet(const SegNetConfig& config, uint64_t seed) : config_(config) {
    config_.validate();
    const auto& c = config_.channels;
    const int levels = config_.n_scales();

    std::vector<int> slot_ch;
    auto new_slot = [&](int ch) {
        slot_ch.push_back(ch);
        return static_cast<int>(slot_ch.size()) - 1;
    };
    auto conv = [&](const std::string& name, int in_slot, int in_ch, int out_ch, int k, int stride,
                    int pad) {
        Op op;
        op.kind = OpKind::Conv;
        op.in0 = in_slot;
        op.in_ch = in_ch;
        op.out_ch = out_ch;
        op.k = k;
        op.stride = stride;
        op.pad = pad;
        op.w = add_param(params_, name + ".w",
                         {out_ch, static_cast<int64_t>(in_ch) * k * k * k});
        op.b = add_param(params_, name + ".b", {out_ch});
        op.out = new_slot(out_ch);
        ops_.push_back(op);
        return op.out;
    };
    auto block = [&](const std::string& name, int in_slot, int in_ch, int out_ch) {
        int s = conv(name + ".conv", in_slot, in_ch, out_ch, 3, 1, 1);
        Op norm;
        norm.kind = OpKind::InstNorm;
        norm.in0 = s;
        norm.in_ch = norm.out_ch = out_ch;
        norm.w = add_param(params_, name + ".norm.gamma", {out_ch});
        norm.b = add_param(params_, name + ".norm.beta", {out_ch});
        norm.out = new_slot(out_ch);
        ops_.push_back(norm);
        Op relu;
        relu.kind = OpKind::ReLU;
        relu.in0 = norm.out;
        relu.in_ch = relu.out_ch = out_ch;
        relu.out = new_slot(out_ch);
        ops_.push_back(relu);
        return relu.out;
    };

    int cur = new_slot(config_.in_channels);
    std::vector<int> skips;
    for (int l = 0; l < levels; ++l) {
        std::string base = "enc" + std::to_string(l);
        if (l > 0) cur = conv(base + ".down", cur, c[static_cast<size_t>(l - 1)],
                              c[static_cast<size_t>(l)], 2, 2, 0);
        for (int bidx = 0; bidx < config_.blocks_per_level; ++bidx) {
            int in_ch = bidx == 0 ? (l == 0 ? config_.in_channels : c[static_cast<size_t>(l)])
                                  : c[static_cast<size_t>(l)];
            cur = block(base + ".block" + std::to_string(bidx), cur, in_ch,
                        c[static_cast<size_t>(l)]);
        }
        skips.push_back(cur);
    }
    for (int l = levels - 2; l >= 0; --l) {
        std::string base = "dec" + std::to_string(l);
        Op up;
        up.kind = OpKind::ConvTr;
        up.in0 = cur;
        up.in_ch = c[static_cast<size_t>(l + 1)];
        up.out_ch = c[static_cast<size_t>(l)];
        up.k = 2;
        up.stride = 2;
        up.pad = 0;
        up.w = add_param(params_, base + ".up.w",
                         {up.in_ch, static_cast<int64_t>(up.out_ch) * 8});
        up.b = add_param(params_, base + ".up.b", {up.out_ch});
        up.out = new_slot(up.out_ch);
        ops_.push_back(up);

        Op cat;
        cat.kind = OpKind::Concat;
        cat.in0 = up.out;  // upsampled path first, then the encoder skip
        cat.in1 = skips[static_cast<size_t>(l)];
        cat.in_ch = c[static_cast<size_t>(l)];
        cat.out_ch = 2 * c[static_cast<size_t>(l)];
        cat.out = new_slot(cat.out_ch);
        ops_.push_back(cat);
        cur = cat.out;

        for (int bidx = 0; bidx < config_.blocks_per_level; ++bidx) {
            int in_ch = bidx == 0 ? 2 * c[static_cast<size_t>(l)] : c[static_cast<size_t>(l)];
            cur = block(base + ".block" + std::to_string(bidx), cur, in_ch,
                        c[static_cast<size_t>(l)]);
        }
    }
    cur = conv("head", cur, c[0], 1, 1, 1, 0);
    Op sig;
    sig.kind = OpKind::Sigmoid;
    sig.in0 = cur;
    sig.in_ch = sig.out_ch = 1;
    sig.out = new_slot(1);
    ops_.push_back(sig);
    n_slots_ = static_cast<int>(slot_ch.size());

    // He fan-in initialization; unit-gain norms; zero biases. The head bias
    // starts at the log-odds of a small foreground prior so initial sigmoid
    // outputs sit near the lesion prevalence instead of 0.5 — without it the
    // compound Dice+BCE loss reliably collapses into all-background
    // predictions on sparse-lesion volumes before any lesion signal appears.
    Rng rng(hash_combine(seed, 0x5e97e7ULL));
    for (auto& p : params_) {
        if (p.name == "head.b") {
            std::fill(p.value.data.begin(), p.value.data.end(), T(-4));
        } else if (p.name.ends_with(".b") || p.name.ends_with(".beta")) {
            p.value.zero();
        } else if (p.name.ends_with(".gamma")) {
            std::fill(p.value.data.begin(), p.value.data.end(), T(1));
        } else {
            // conv weights are {out_ch, in_ch*k^3}; transposed-conv weights
            // are {in_ch, out_ch*8} and each output voxel sees in_ch taps
            const int64_t fan_in = p.name.find(".up.") != std::string::npos
                                       ? p.value.shape[0]
                                       : p.value.shape[1];
            const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (auto& v : p.value.data) v = static_cast<T>(rng.normal() * sd);
        }
        p.grad.zero();
    }
}

template <typename T>
int64_t SegNet<T>::param_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

template <typename T>
void SegNet<T>::zero_grad() {
    for (auto& p : params_) p.grad.zero();
}

template <typename T>
Tensor<T> SegNet<T>::run_sample(const T* in, Shape3 shape, SampleCache* cache) const {
    std::vector<Tensor<T>> local_slots;
    std::vector<Tensor<T>>& slots = cache ? cache->slots : local_slots;
    slots.assign(static_cast<size_t>(n_slots_), Tensor<T>());
    if (cache) {
        cache->norm_mean.assign(ops_.size(), {});
        cache->norm_istd.assign(ops_.size(), {});
    }

    // spatial shape per slot, derived as ops execute
    std::vector<Shape3> sshape(static_cast<size_t>(n_slots_));
    sshape[0] = shape;
    slots[0] = Tensor<T>({config_.in_channels, shape.d, shape.h, shape.w});
    std::memcpy(slots[0].ptr(), in, sizeof(T) * static_cast<size_t>(slots[0].numel()));

    // last op index that reads each slot, for inference-time freeing
    std::vector<int> last_use(static_cast<size_t>(n_slots_), -1);
    for (size_t i = 0; i < ops_.size(); ++i) {
        if (ops_[i].in0 >= 0) last_use[static_cast<size_t>(ops_[i].in0)] = static_cast<int>(i);
        if (ops_[i].in1 >= 0) last_use[static_cast<size_t>(ops_[i].in1)] = static_cast<int>(i);
    }

    for (size_t i = 0; i < ops_.size(); ++i) {
        const Op& op = ops_[i];
        const Shape3 is = sshape[static_cast<size_t>(op.in0)];
        Shape3 os = is;
        switch (op.kind) {
            case OpKind::Conv: os = nn::conv_out_shape(is, op.k, op.stride, op.pad); break;
            case OpKind::ConvTr: os = {2 * is.d, 2 * is.h, 2 * is.w}; break;
            default: break;
        }
        sshape[static_cast<size_t>(op.out)] = os;
        Tensor<T>& out = slots[static_cast<size_t>(op.out)];
        out = Tensor<T>({op.out_ch, os.d, os.h, os.w});
        const Tensor<T>& a = slots[static_cast<size_t>(op.in0)];
        switch (op.kind) {
            case OpKind::Conv:
                nn::conv3d_forward(a.ptr(), is, op.in_ch, params_[static_cast<size_t>(op.w)].value.ptr(),
                                   params_[static_cast<size_t>(op.b)].value.ptr(), op.out_ch, op.k,
                                   op.stride, op.pad, out.ptr());
                break;
            case OpKind::ConvTr:
                nn::convtr3d_forward(a.ptr(), is, op.in_ch,
                                     params_[static_cast<size_t>(op.w)].value.ptr(),
                                     params_[static_cast<size_t>(op.b)].value.ptr(), op.out_ch,
                                     out.ptr());
                break;
            case OpKind::InstNorm: {
                std::vector<T> mean(static_cast<size_t>(op.out_ch)),
                    istd(static_cast<size_t>(op.out_ch));
                nn::instancenorm_forward(a.ptr(), op.out_ch, is.numel(),
                                         params_[static_cast<size_t>(op.w)].value.ptr(),
                                         params_[static_cast<size_t>(op.b)].value.ptr(),
                                         static_cast<T>(kNormEps), out.ptr(), mean.data(),
                                         istd.data());
                if (cache) {
                    cache->norm_mean[i] = std::move(mean);
                    cache->norm_istd[i] = std::move(istd);
                }
                break;
            }
            case OpKind::ReLU:
                nn::relu_forward(a.ptr(), a.numel(), out.ptr());
                break;
            case OpKind::Concat: {
                const Tensor<T>& s2 = slots[static_cast<size_t>(op.in1)];
                std::memcpy(out.ptr(), a.ptr(), sizeof(T) * static_cast<size_t>(a.numel()));
                std::memcpy(out.ptr() + a.numel(), s2.ptr(),
                            sizeof(T) * static_cast<size_t>(s2.numel()));
                break;
            }
            case OpKind::Sigmoid:
                nn::sigmoid_forward(a.ptr(), a.numel(), out.ptr());
                break;
        }
        if (!cache) {
            for (int s = 0; s < n_slots_; ++s)
                if (last_use[static_cast<size_t>(s)] == static_cast<int>(i))
                    slots[static_cast<size_t>(s)] = Tensor<T>();
        }
    }
    if (cache) return slots.back();  // cache keeps probabilities for the sigmoid backward
    return std::move(slots.back());
}

template <typename T>
Tensor<T> SegNet<T>::forward(const Tensor<T>& input) const {
    if (input.shape.size() != 5 || input.shape[1] != config_.in_channels)
        throw ValidationError("SegNet::forward: input must be {N, in_channels, D, H, W}");
    const Shape3 shape{input.shape[2], input.shape[3], input.shape[4]};
    const int div = config_.spatial_divisor();
    if (shape.d % div || shape.h % div || shape.w % div)
        throw ValidationError("SegNet::forward: spatial dims must be divisible by " +
                              std::to_string(div));
    const int64_t batch = input.shape[0];
    Tensor<T> out({batch, 1, shape.d, shape.h, shape.w});
    const int64_t sample_in = input.numel() / batch;
    const int64_t sample_out = out.numel() / batch;
    for (int64_t n = 0; n < batch; ++n) {
        Tensor<T> prob = run_sample(input.ptr() + n * sample_in, shape, nullptr);
        std::memcpy(out.ptr() + n * sample_out, prob.ptr(),
                    sizeof(T) * static_cast<size_t>(sample_out));
    }
    return out;
}

template <typename T>
Tensor<T> SegNet<T>::forward_train(const Tensor<T>& input) {
    if (input.shape.size() != 5 || input.shape[1] != config_.in_channels)
        throw ValidationError("SegNet::forward_train: input must be {N, in_channels, D, H, W}");
    const Shape3 shape{input.shape[2], input.shape[3], input.shape[4]};
    const int div = config_.spatial_divisor();
    if (shape.d % div || shape.h % div || shape.w % div)
        throw ValidationError("SegNet::forward_train: spatial dims must be divisible by " +
                              std::to_string(div));
    const int64_t batch = input.shape[0];
    caches_.assign(static_cast<size_t>(batch), SampleCache{});
    cached_shape_ = shape;
    Tensor<T> out({batch, 1, shape.d, shape.h, shape.w});
    const int64_t sample_in = input.numel() / batch;
    const int64_t sample_out = out.numel() / batch;
    for (int64_t n = 0; n < batch; ++n) {
        Tensor<T> prob =
            run_sample(input.ptr() + n * sample_in, shape, &caches_[static_cast<size_t>(n)]);
        std::memcpy(out.ptr() + n * sample_out, prob.ptr(),
                    sizeof(T) * static_cast<size_t>(sample_out));
    }
    return out;
}

template <typename T>
void SegNet<T>::backward_sample(const T* grad_prob, SampleCache& cache) {
    std::vector<Tensor<T>> grads(static_cast<size_t>(n_slots_));
    std::vector<Shape3> sshape(static_cast<size_t>(n_slots_));
    sshape[0] = cached_shape_;
    for (const Op& op : ops_) {
        Shape3 is = sshape[static_cast<size_t>(op.in0)];
        Shape3 os = is;
        if (op.kind == OpKind::Conv) os = nn::conv_out_shape(is, op.k, op.stride, op.pad);
        if (op.kind == OpKind::ConvTr) os = {2 * is.d, 2 * is.h, 2 * is.w};
        sshape[static_cast<size_t>(op.out)] = os;
    }

    auto accumulate = [&](int slot, Tensor<T>&& g) {
        Tensor<T>& dst = grads[static_cast<size_t>(slot)];
        if (dst.numel() == 0) {
            dst = std::move(g);
        } else {
            for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g[i];
        }
    };

    {
        const Op& last = ops_.back();
        Tensor<T> g({1, cached_shape_.d, cached_shape_.h, cached_shape_.w});
        std::memcpy(g.ptr(), grad_prob, sizeof(T) * static_cast<size_t>(g.numel()));
        grads[static_cast<size_t>(last.out)] = std::move(g);
    }

    for (size_t ri = ops_.size(); ri-- > 0;) {
        const Op& op = ops_[ri];
        Tensor<T>& gout = grads[static_cast<size_t>(op.out)];
        if (gout.numel() == 0) continue;
        const Shape3 is = sshape[static_cast<size_t>(op.in0)];
        const Tensor<T>& a = cache.slots[static_cast<size_t>(op.in0)];
        switch (op.kind) {
            case OpKind::Sigmoid: {
                const Tensor<T>& p = cache.slots[static_cast<size_t>(op.out)];
                Tensor<T> g(p.shape);
                for (int64_t i = 0; i < p.numel(); ++i) g[i] = gout[i] * p[i] * (T(1) - p[i]);
                accumulate(op.in0, std::move(g));
                break;
            }
            case OpKind::Conv: {
                nn::conv3d_backward_params(gout.ptr(), a.ptr(), is, op.in_ch, op.out_ch, op.k,
                                           op.stride, op.pad,
                                           params_[static_cast<size_t>(op.w)].grad.ptr(),
                                           params_[static_cast<size_t>(op.b)].grad.ptr());
                if (op.in0 != 0) {  // no need for the input-image gradient
                    Tensor<T> g({op.in_ch, is.d, is.h, is.w});
                    nn::conv3d_backward_input(gout.ptr(), is, op.in_ch,
                                              params_[static_cast<size_t>(op.w)].value.ptr(),
                                              op.out_ch, op.k, op.stride, op.pad, g.ptr());
                    accumulate(op.in0, std::move(g));
                }
                break;
            }
            case OpKind::ConvTr: {
                nn::convtr3d_backward_params(gout.ptr(), a.ptr(), is, op.in_ch, op.out_ch,
                                             params_[static_cast<size_t>(op.w)].grad.ptr(),
                                             params_[static_cast<size_t>(op.b)].grad.ptr());
                Tensor<T> g({op.in_ch, is.d, is.h, is.w});
                nn::convtr3d_backward_input(gout.ptr(), is, op.in_ch,
                                            params_[static_cast<size_t>(op.w)].value.ptr(),
                                            op.out_ch, g.ptr());
                accumulate(op.in0, std::move(g));
                break;
            }
            case OpKind::InstNorm: {
                Tensor<T> g({op.in_ch, is.d, is.h, is.w});
                nn::instancenorm_backward(gout.ptr(), a.ptr(), op.out_ch, is.numel(),
                                          params_[static_cast<size_t>(op.w)].value.ptr(),
                                          cache.norm_mean[ri].data(), cache.norm_istd[ri].data(),
                                          g.ptr(), params_[static_cast<size_t>(op.w)].grad.ptr(),
                                          params_[static_cast<size_t>(op.b)].grad.ptr());
                accumulate(op.in0, std::move(g));
                break;
            }
            case OpKind::ReLU: {
                const Tensor<T>& fwd = cache.slots[static_cast<size_t>(op.out)];
                Tensor<T> g(fwd.shape);
                nn::relu_backward(gout.ptr(), fwd.ptr(), fwd.numel(), g.ptr());
                accumulate(op.in0, std::move(g));
                break;
            }
            case OpKind::Concat: {
                const int64_t n0 = static_cast<int64_t>(op.in_ch) * is.numel();
                Tensor<T> g0({op.in_ch, is.d, is.h, is.w});
                Tensor<T> g1({op.in_ch, is.d, is.h, is.w});
                std::memcpy(g0.ptr(), gout.ptr(), sizeof(T) * static_cast<size_t>(n0));
                std::memcpy(g1.ptr(), gout.ptr() + n0, sizeof(T) * static_cast<size_t>(n0));
                accumulate(op.in0, std::move(g0));
                accumulate(op.in1, std::move(g1));
                break;
            }
        }
        gout = Tensor<T>();  // release as we walk backwards
    }
}

template <typename T>
void SegNet<T>::backward(const Tensor<T>& grad_prob) {
    if (caches_.empty()) throw ValidationError("SegNet::backward: no cached forward pass");
    const int64_t batch = grad_prob.shape[0];
    if (batch != static_cast<int64_t>(caches_.size()))
        throw ValidationError("SegNet::backward: batch size does not match cached forward");
    const int64_t sample = grad_prob.numel() / batch;
    for (int64_t n = 0; n < batch; ++n)
        backward_sample(grad_prob.ptr() + n * sample, caches_[static_cast<size_t>(n)]);
    caches_.clear();
}

template <typename T>
T compound_loss(const Tensor<T>& prob, const Tensor<T>& labels, Tensor<T>* grad_prob) {
    if (!prob.same_shape(labels))
        throw ValidationError("compound_loss: probability and label shapes do not match");
    const int64_t n = prob.numel();
    constexpr double dice_eps = 1e-5;
    constexpr double clamp_lo = 1e-7, clamp_hi = 1.0 - 1e-7;

    double sum_py = 0.0, sum_p = 0.0, sum_y = 0.0, bce = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(prob[i]);
        const double y = static_cast<double>(labels[i]);
        sum_py += p * y;
        sum_p += p;
        sum_y += y;
        const double pc = std::clamp(p, clamp_lo, clamp_hi);
        bce += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    }
    bce /= static_cast<double>(n);
    const double denom = sum_p + sum_y + dice_eps;
    const double soft_dice = (2.0 * sum_py + dice_eps) / denom;
    const double loss = 0.5 * (1.0 - soft_dice) + 0.5 * bce;

    if (grad_prob) {
        *grad_prob = Tensor<T>(prob.shape);
        const double numer = 2.0 * sum_py + dice_eps;
        for (int64_t i = 0; i < n; ++i) {
            const double p = static_cast<double>(prob[i]);
            const double y = static_cast<double>(labels[i]);
            double g = -0.5 * (2.0 * y * denom - numer) / (denom * denom);
            if (p > clamp_lo && p < clamp_hi)
                g += 0.5 / static_cast<double>(n) * ((p - y) / (p * (1.0 - p)));
            (*grad_prob)[i] = static_cast<T>(g);
        }
    }
    return static_cast<T>(loss);
}

LabelMask predict_binary(const std::vector<float>& prob, int64_t nx, int64_t ny, int64_t nz,
                         double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("predict_binary: tau must lie in (0,1)");
    LabelMask m(nx, ny, nz);
    for (size_t i = 0; i < prob.size(); ++i)
        m.data[i] = prob[i] >= static_cast<float>(tau) ? 1 : 0;
    return m;
}

LabelMask sliding_window_predict(const SegNet<float>& net, const SubjectRecord& record,
                                 int64_t window, int64_t stride, double tau,
                                 int64_t origin_shift) {
    if (stride <= 0) stride = window / 2;
    if (!(tau > 0.0 && tau < 1.0))
        throw ConfigError("sliding_window_predict: tau must lie in (0,1)");

    const int64_t nx = record.t1w.nx, ny = record.t1w.ny, nz = record.t1w.nz;
    const int64_t px = std::max(nx, window), py = std::max(ny, window), pz = std::max(nz, window);
    const int64_t ox = (px - nx) / 2, oy = (py - ny) / 2, oz = (pz - nz) / 2;

    std::vector<float> t1(static_cast<size_t>(px * py * pz), 0.0f);
    std::vector<float> fl(static_cast<size_t>(px * py * pz), 0.0f);
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                const size_t dst = static_cast<size_t>((x + ox) + px * ((y + oy) + py * (z + oz)));
                t1[dst] = record.t1w.at(x, y, z);
                fl[dst] = record.flair.at(x, y, z);
            }

    auto axis_positions = [&](int64_t n) {
        std::vector<int64_t> pos;
        int64_t p = std::clamp<int64_t>(origin_shift, 0, n - window);
        if (p > 0) pos.push_back(0);
        for (; p + window < n; p += stride) pos.push_back(p);
        pos.push_back(n - window);
        return pos;
    };
    const auto xs = axis_positions(px), ys = axis_positions(py), zs = axis_positions(pz);

    std::vector<double> acc(static_cast<size_t>(px * py * pz), 0.0);
    std::vector<int32_t> cnt(static_cast<size_t>(px * py * pz), 0);
    Tensor<float> input({1, 2, window, window, window});
    const int64_t wside = window;
    for (int64_t z0 : zs)
        for (int64_t y0 : ys)
            for (int64_t x0 : xs) {
                float* ch0 = input.ptr();
                float* ch1 = input.ptr() + wside * wside * wside;
                for (int64_t z = 0; z < wside; ++z)
                    for (int64_t y = 0; y < wside; ++y) {
                        const size_t src =
                            static_cast<size_t>(x0 + px * ((y0 + y) + py * (z0 + z)));
                        const size_t dst = static_cast<size_t>((z * wside + y) * wside);
                        std::memcpy(ch0 + dst, t1.data() + src,
                                    sizeof(float) * static_cast<size_t>(wside));
                        std::memcpy(ch1 + dst, fl.data() + src,
                                    sizeof(float) * static_cast<size_t>(wside));
                    }
                Tensor<float> prob = net.forward(input);
                for (int64_t z = 0; z < wside; ++z)
                    for (int64_t y = 0; y < wside; ++y)
                        for (int64_t x = 0; x < wside; ++x) {
                            const size_t dst = static_cast<size_t>((x0 + x) +
                                                                   px * ((y0 + y) + py * (z0 + z)));
                            acc[dst] += prob[(z * wside + y) * wside + x];
                            ++cnt[dst];
                        }
            }

    LabelMask out(nx, ny, nz);
    for (int64_t z = 0; z < nz; ++z)
        for (int64_t y = 0; y < ny; ++y)
            for (int64_t x = 0; x < nx; ++x) {
                const size_t src = static_cast<size_t>((x + ox) + px * ((y + oy) + py * (z + oz)));
                const double p = acc[src] / std::max(1, cnt[src]);
                out.at(x, y, z) = p >= tau ? 1 : 0;
            }
    return out;
}

// --- checkpoint IO ---

namespace {

constexpr char kCkptMagic[8] = {'M', 'S', 'A', 'N', 'E', 'T', '0', '1'};

template <typename V>
void write_pod(std::ofstream& f, const V& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& f, const std::string& path) {
    V v{};
    if (!f.read(reinterpret_cast<char*>(&v), sizeof(V)))
        throw FormatError(path + ": truncated checkpoint");
    return v;
}

void write_string(std::ofstream& f, const std::string& s) {
    write_pod(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& f, const std::string& path) {
    uint32_t n = read_pod<uint32_t>(f, path);
    std::string s(n, '\0');
    if (!f.read(s.data(), n)) throw FormatError(path + ": truncated checkpoint");
    return s;
}

}  // namespace

ModelCheckpoint snapshot(const SegNet<float>& net, std::string provenance_json, int epoch) {
    ModelCheckpoint ckpt;
    ckpt.config = net.config();
    ckpt.provenance_json = std::move(provenance_json);
    ckpt.epoch = epoch;
    for (const auto& p : net.params()) ckpt.tensors.emplace_back(p.name, p.value);
    return ckpt;
}

SegNet<float> restore(const ModelCheckpoint& ckpt) {
    SegNet<float> net(ckpt.config, 0);
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
    for (auto& p : net.params()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw FormatError("restore: checkpoint is missing parameter " + p.name);
        if (it->second->numel() != p.value.numel())
            throw FormatError("restore: architecture mismatch for parameter " + p.name);
        p.value.data = it->second->data;
    }
    return net;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError(path + ": cannot open checkpoint for writing");
    f.write(kCkptMagic, 8);
    write_pod(f, static_cast<uint32_t>(ckpt.version));
    write_string(f, ckpt.config.to_json());
    write_string(f, ckpt.provenance_json);
    write_pod(f, static_cast<int32_t>(ckpt.epoch));
    write_pod(f, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        write_string(f, name);
        write_pod(f, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) write_pod(f, static_cast<uint64_t>(d));
        f.write(reinterpret_cast<const char*>(t.ptr()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
    }
    if (!f) throw FormatError(path + ": checkpoint write failed");
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(path + ": cannot open checkpoint");
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw FormatError(path + ": not a checkpoint file");
    ModelCheckpoint ckpt;
    ckpt.version = static_cast<int>(read_pod<uint32_t>(f, path));
    ckpt.config = SegNetConfig::from_json(read_string(f, path));
    ckpt.provenance_json = read_string(f, path);
    ckpt.epoch = read_pod<int32_t>(f, path);
    const uint32_t n = read_pod<uint32_t>(f, path);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(f, path);
        const uint32_t ndim = read_pod<uint32_t>(f, path);
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = static_cast<int64_t>(read_pod<uint64_t>(f, path));
        Tensor<float> t(shape);
        if (!f.read(reinterpret_cast<char*>(t.ptr()),
                    static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel()))))
            throw FormatError(path + ": truncated checkpoint");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

// Special members live here so std::vector<Op>/<SampleCache> are instantiated
// where the nested types are complete.
template <typename T>
SegNet<T>::SegNet(const SegNet&) = default;
template <typename T>
SegNet<T>::SegNet(SegNet&&) noexcept = default;
template <typename T>
SegNet<T>& SegNet<T>::operator=(const SegNet&) = default;
template <typename T>
SegNet<T>& SegNet<T>::operator=(SegNet&&) noexcept = default;
template <typename T>
SegNet<T>::~SegNet() = default;

template class SegNet<float>;
template class SegNet<double>;
template float compound_loss<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double compound_loss<double>(const Tensor<double>&, const Tensor<double>&,
                                      Tensor<double>*);

}  // namespace msadapt
