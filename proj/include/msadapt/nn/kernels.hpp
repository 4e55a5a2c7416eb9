#ifndef MSADAPT_NN_KERNELS_HPP
#define MSADAPT_NN_KERNELS_HPP

#include <cstdint>

namespace msadapt::nn {

// Spatial extents of one sample; arrays are [channels, d, h, w] row-major
// (w fastest). All kernels operate on a single sample; batching is the
// caller's loop. Parallel implementations tile the output and route the
// inner product through BLAS; OpenMP covers im2col and pointwise ops.
struct Shape3 {
    int64_t d = 0, h = 0, w = 0;
    int64_t numel() const { return d * h * w; }
};

inline Shape3 conv_out_shape(Shape3 in, int k, int stride, int pad) {
    return {(in.d + 2 * pad - k) / stride + 1, (in.h + 2 * pad - k) / stride + 1,
            (in.w + 2 * pad - k) / stride + 1};
}

// out[co,:] = b[co] + sum_ci w[co,ci,kz,ky,kx] * in[ci, shifted]
template <typename T>
void conv3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                    int k, int stride, int pad, T* out);

template <typename T>
void conv3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                           int k, int stride, int pad, T* grad_in);

// Accumulates into grad_w / grad_b (callers zero them once per step).
template <typename T>
void conv3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch, int out_ch,
                            int k, int stride, int pad, T* grad_w, T* grad_b);

// Transposed convolution, kernel 2, stride 2 (exact 2x upsampling).
// Weights are [in_ch, out_ch, 2, 2, 2].
template <typename T>
void convtr3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                      T* out);

template <typename T>
void convtr3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                             T* grad_in);

template <typename T>
void convtr3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch,
                              int out_ch, T* grad_w, T* grad_b);

// Instance normalization over the spatial axis of [ch, spatial], one sample.
// save_mean/save_istd hold per-channel statistics for the backward pass.
template <typename T>
void instancenorm_forward(const T* x, int ch, int64_t spatial, const T* gamma, const T* beta,
                          T eps, T* out, T* save_mean, T* save_istd);

template <typename T>
void instancenorm_backward(const T* grad_out, const T* x, int ch, int64_t spatial, const T* gamma,
                           const T* save_mean, const T* save_istd, T* grad_in, T* grad_gamma,
                           T* grad_beta);

template <typename T>
void relu_forward(const T* x, int64_t n, T* out);

// grad_in = grad_out where the forward output was positive
template <typename T>
void relu_backward(const T* grad_out, const T* fwd_out, int64_t n, T* grad_in);

template <typename T>
void sigmoid_forward(const T* x, int64_t n, T* out);

template <typename T>
struct AdamConfig {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

// One Adam update with bias correction at step t (1-based).
template <typename T>
void adam_step(T* param, const T* grad, T* m, T* v, int64_t n, const AdamConfig<T>& cfg, int64_t t);

}  // namespace msadapt::nn

#endif
