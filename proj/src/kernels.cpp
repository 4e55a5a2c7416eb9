#include "msadapt/nn/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace msadapt::nn {

namespace {

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
                 const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c,
                 int64_t ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
                 const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c,
                 int64_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

// Column j of the tile corresponds to output voxel (t0 + j); rows run over
// (ci, kz, ky, kx). Out-of-bounds taps are zero.
template <typename T>
void im2col_tile(const T* in, Shape3 in_shape, int in_ch, int k, int stride, int pad,
                 Shape3 out_shape, int64_t t0, int64_t t1, T* col) {
    const int64_t tile = t1 - t0;
    const int64_t s_in = in_shape.numel();
    const int64_t hw_out = out_shape.h * out_shape.w;
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < tile; ++j) {
        const int64_t o = t0 + j;
        const int64_t oz = o / hw_out;
        const int64_t oy = (o / out_shape.w) % out_shape.h;
        const int64_t ox = o % out_shape.w;
        const int64_t iz0 = oz * stride - pad;
        const int64_t iy0 = oy * stride - pad;
        const int64_t ix0 = ox * stride - pad;
        int64_t r = 0;
        for (int ci = 0; ci < in_ch; ++ci) {
            const T* chan = in + ci * s_in;
            for (int kz = 0; kz < k; ++kz) {
                const int64_t z = iz0 + kz;
                for (int ky = 0; ky < k; ++ky) {
                    const int64_t y = iy0 + ky;
                    const bool zy_ok = z >= 0 && z < in_shape.d && y >= 0 && y < in_shape.h;
                    const T* row_ptr = chan + (z * in_shape.h + y) * in_shape.w;
                    for (int kx = 0; kx < k; ++kx, ++r) {
                        const int64_t x = ix0 + kx;
                        col[r * tile + j] =
                            (zy_ok && x >= 0 && x < in_shape.w) ? row_ptr[x] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add the columns of a col matrix back into the input grid.
template <typename T>
void col2im_tile(const T* col, Shape3 in_shape, int in_ch, int k, int stride, int pad,
                 Shape3 out_shape, int64_t t0, int64_t t1, T* grad_in) {
    const int64_t tile = t1 - t0;
    const int64_t s_in = in_shape.numel();
    const int64_t hw_out = out_shape.h * out_shape.w;
    for (int64_t j = 0; j < tile; ++j) {
        const int64_t o = t0 + j;
        const int64_t oz = o / hw_out;
        const int64_t oy = (o / out_shape.w) % out_shape.h;
        const int64_t ox = o % out_shape.w;
        const int64_t iz0 = oz * stride - pad;
        const int64_t iy0 = oy * stride - pad;
        const int64_t ix0 = ox * stride - pad;
        int64_t r = 0;
        for (int ci = 0; ci < in_ch; ++ci) {
            T* chan = grad_in + ci * s_in;
            for (int kz = 0; kz < k; ++kz) {
                const int64_t z = iz0 + kz;
                for (int ky = 0; ky < k; ++ky) {
                    const int64_t y = iy0 + ky;
                    const bool zy_ok = z >= 0 && z < in_shape.d && y >= 0 && y < in_shape.h;
                    T* row_ptr = chan + (z * in_shape.h + y) * in_shape.w;
                    for (int kx = 0; kx < k; ++kx, ++r) {
                        const int64_t x = ix0 + kx;
                        if (zy_ok && x >= 0 && x < in_shape.w) row_ptr[x] += col[r * tile + j];
                    }
                }
            }
        }
    }
}

// Tile length bounding the im2col buffer to ~32 MB of T.
inline int64_t pick_tile(int64_t rows, int64_t total) {
    const int64_t budget = (int64_t{8} << 20) / std::max<int64_t>(rows, 1);
    return std::clamp<int64_t>(budget, 512, total);
}

}  // namespace

template <typename T>
void conv3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                    int k, int stride, int pad, T* out) {
    const Shape3 out_shape = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_out = out_shape.numel();
    const int64_t rows = static_cast<int64_t>(in_ch) * k * k * k;
    const int64_t tile_len = pick_tile(rows, s_out);
    std::vector<T> col(static_cast<size_t>(rows * tile_len));
    for (int64_t t0 = 0; t0 < s_out; t0 += tile_len) {
        const int64_t t1 = std::min(t0 + tile_len, s_out);
        im2col_tile(in, in_shape, in_ch, k, stride, pad, out_shape, t0, t1, col.data());
        gemm(false, false, out_ch, t1 - t0, rows, T(1), w, rows, col.data(), t1 - t0, T(0),
             out + t0, s_out);
    }
    if (b) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < out_ch; ++co) {
            T* dst = out + co * s_out;
            const T bias = b[co];
            for (int64_t i = 0; i < s_out; ++i) dst[i] += bias;
        }
    }
}

template <typename T>
void conv3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                           int k, int stride, int pad, T* grad_in) {
    const Shape3 out_shape = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_out = out_shape.numel();
    const int64_t rows = static_cast<int64_t>(in_ch) * k * k * k;
    const int64_t tile_len = pick_tile(rows, s_out);
    std::vector<T> col(static_cast<size_t>(rows * tile_len));
    std::fill(grad_in, grad_in + static_cast<int64_t>(in_ch) * in_shape.numel(), T(0));
    for (int64_t t0 = 0; t0 < s_out; t0 += tile_len) {
        const int64_t t1 = std::min(t0 + tile_len, s_out);
        // col = W^T (rows x out_ch) * grad_out_tile (out_ch x tile)
        gemm(true, false, rows, t1 - t0, out_ch, T(1), w, rows, grad_out + t0, s_out, T(0),
             col.data(), t1 - t0);
        col2im_tile(col.data(), in_shape, in_ch, k, stride, pad, out_shape, t0, t1, grad_in);
    }
}

template <typename T>
void conv3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch, int out_ch,
                            int k, int stride, int pad, T* grad_w, T* grad_b) {
    const Shape3 out_shape = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_out = out_shape.numel();
    const int64_t rows = static_cast<int64_t>(in_ch) * k * k * k;
    const int64_t tile_len = pick_tile(rows, s_out);
    std::vector<T> col(static_cast<size_t>(rows * tile_len));
    for (int64_t t0 = 0; t0 < s_out; t0 += tile_len) {
        const int64_t t1 = std::min(t0 + tile_len, s_out);
        im2col_tile(in, in_shape, in_ch, k, stride, pad, out_shape, t0, t1, col.data());
        // grad_w += grad_out_tile (out_ch x tile) * col^T (tile x rows)
        gemm(false, true, out_ch, rows, t1 - t0, T(1), grad_out + t0, s_out, col.data(), t1 - t0,
             T(1), grad_w, rows);
    }
    if (grad_b) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < out_ch; ++co) {
            const T* src = grad_out + co * s_out;
            T s = T(0);
            for (int64_t i = 0; i < s_out; ++i) s += src[i];
            grad_b[co] += s;
        }
    }
}

template <typename T>
void convtr3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                      T* out) {
    const int64_t s_in = in_shape.numel();
    const Shape3 out_shape{2 * in_shape.d, 2 * in_shape.h, 2 * in_shape.w};
    const int64_t s_out = out_shape.numel();
    // wmat[(co*8 + t), ci] = w[ci, co, t]
    std::vector<T> wmat(static_cast<size_t>(out_ch) * 8 * in_ch);
    for (int ci = 0; ci < in_ch; ++ci)
        for (int co = 0; co < out_ch; ++co)
            for (int t = 0; t < 8; ++t)
                wmat[(static_cast<size_t>(co) * 8 + t) * in_ch + ci] =
                    w[(static_cast<size_t>(ci) * out_ch + co) * 8 + t];
    std::vector<T> prod(static_cast<size_t>(out_ch) * 8 * s_in);
    gemm(false, false, static_cast<int64_t>(out_ch) * 8, s_in, in_ch, T(1), wmat.data(), in_ch, in,
         s_in, T(0), prod.data(), s_in);
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_ch; ++co) {
        T* dst = out + co * s_out;
        const T bias = b ? b[co] : T(0);
        for (int t = 0; t < 8; ++t) {
            const int dz = t >> 2, dy = (t >> 1) & 1, dx = t & 1;
            const T* src = prod.data() + (static_cast<int64_t>(co) * 8 + t) * s_in;
            for (int64_t z = 0; z < in_shape.d; ++z)
                for (int64_t y = 0; y < in_shape.h; ++y) {
                    const T* s_row = src + (z * in_shape.h + y) * in_shape.w;
                    T* d_row = dst + ((2 * z + dz) * out_shape.h + (2 * y + dy)) * out_shape.w + dx;
                    for (int64_t x = 0; x < in_shape.w; ++x) d_row[2 * x] = s_row[x] + bias;
                }
        }
    }
}

namespace {

// Gather grad_out back into the (co*8, s_in) layout used by the forward gemm.
template <typename T>
void gather_grad(const T* grad_out, Shape3 in_shape, int out_ch, std::vector<T>& gmat) {
    const int64_t s_in = in_shape.numel();
    const Shape3 out_shape{2 * in_shape.d, 2 * in_shape.h, 2 * in_shape.w};
    const int64_t s_out = out_shape.numel();
    gmat.assign(static_cast<size_t>(out_ch) * 8 * s_in, T(0));
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_ch; ++co) {
        const T* src_ch = grad_out + co * s_out;
        for (int t = 0; t < 8; ++t) {
            const int dz = t >> 2, dy = (t >> 1) & 1, dx = t & 1;
            T* dst = gmat.data() + (static_cast<int64_t>(co) * 8 + t) * s_in;
            for (int64_t z = 0; z < in_shape.d; ++z)
                for (int64_t y = 0; y < in_shape.h; ++y) {
                    const T* s_row =
                        src_ch + ((2 * z + dz) * out_shape.h + (2 * y + dy)) * out_shape.w + dx;
                    T* d_row = dst + (z * in_shape.h + y) * in_shape.w;
                    for (int64_t x = 0; x < in_shape.w; ++x) d_row[x] = s_row[2 * x];
                }
        }
    }
}

}  // namespace

template <typename T>
void convtr3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                             T* grad_in) {
    const int64_t s_in = in_shape.numel();
    std::vector<T> gmat;
    gather_grad(grad_out, in_shape, out_ch, gmat);
    // grad_in (in_ch x s_in) = w (in_ch x out_ch*8) * gmat (out_ch*8 x s_in)
    gemm(false, false, in_ch, s_in, static_cast<int64_t>(out_ch) * 8, T(1), w,
         static_cast<int64_t>(out_ch) * 8, gmat.data(), s_in, T(0), grad_in, s_in);
}

template <typename T>
void convtr3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch,
                              int out_ch, T* grad_w, T* grad_b) {
    const int64_t s_in = in_shape.numel();
    const Shape3 out_shape{2 * in_shape.d, 2 * in_shape.h, 2 * in_shape.w};
    const int64_t s_out = out_shape.numel();
    std::vector<T> gmat;
    gather_grad(grad_out, in_shape, out_ch, gmat);
    // grad_w (in_ch x out_ch*8) += in (in_ch x s_in) * gmat^T (s_in x out_ch*8)
    gemm(false, true, in_ch, static_cast<int64_t>(out_ch) * 8, s_in, T(1), in, s_in, gmat.data(),
         s_in, T(1), grad_w, static_cast<int64_t>(out_ch) * 8);
    if (grad_b) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < out_ch; ++co) {
            const T* src = grad_out + co * s_out;
            T s = T(0);
            for (int64_t i = 0; i < s_out; ++i) s += src[i];
            grad_b[co] += s;
        }
    }
}

template <typename T>
void instancenorm_forward(const T* x, int ch, int64_t spatial, const T* gamma, const T* beta,
                          T eps, T* out, T* save_mean, T* save_istd) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < ch; ++c) {
        const T* src = x + c * spatial;
        T mean = T(0);
        for (int64_t i = 0; i < spatial; ++i) mean += src[i];
        mean /= static_cast<T>(spatial);
        T var = T(0);
        for (int64_t i = 0; i < spatial; ++i) {
            const T d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(spatial);
        const T istd = T(1) / std::sqrt(var + eps);
        save_mean[c] = mean;
        save_istd[c] = istd;
        const T g = gamma[c], bt = beta[c];
        T* dst = out + c * spatial;
        for (int64_t i = 0; i < spatial; ++i) dst[i] = g * (src[i] - mean) * istd + bt;
    }
}

template <typename T>
void instancenorm_backward(const T* grad_out, const T* x, int ch, int64_t spatial, const T* gamma,
                           const T* save_mean, const T* save_istd, T* grad_in, T* grad_gamma,
                           T* grad_beta) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < ch; ++c) {
        const T* dy = grad_out + c * spatial;
        const T* src = x + c * spatial;
        const T mean = save_mean[c], istd = save_istd[c], g = gamma[c];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int64_t i = 0; i < spatial; ++i) {
            const T xhat = (src[i] - mean) * istd;
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xhat;
        }
        grad_gamma[c] += sum_dy_xhat;
        grad_beta[c] += sum_dy;
        const T inv_n = T(1) / static_cast<T>(spatial);
        T* dx = grad_in + c * spatial;
        for (int64_t i = 0; i < spatial; ++i) {
            const T xhat = (src[i] - mean) * istd;
            dx[i] = g * istd * (dy[i] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
        }
    }
}

template <typename T>
void relu_forward(const T* x, int64_t n, T* out) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* grad_out, const T* fwd_out, int64_t n, T* grad_in) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) grad_in[i] = fwd_out[i] > T(0) ? grad_out[i] : T(0);
}

template <typename T>
void sigmoid_forward(const T* x, int64_t n, T* out) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <typename T>
void adam_step(T* param, const T* grad, T* m, T* v, int64_t n, const AdamConfig<T>& cfg,
               int64_t t) {
    const T bc1 = T(1) - std::pow(cfg.beta1, static_cast<T>(t));
    const T bc2 = T(1) - std::pow(cfg.beta2, static_cast<T>(t));
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * grad[i] * grad[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

#define MSADAPT_INSTANTIATE(T)                                                                     \
    template void conv3d_forward<T>(const T*, Shape3, int, const T*, const T*, int, int, int,     \
                                    int, T*);                                                      \
    template void conv3d_backward_input<T>(const T*, Shape3, int, const T*, int, int, int, int,   \
                                           T*);                                                    \
    template void conv3d_backward_params<T>(const T*, const T*, Shape3, int, int, int, int, int,  \
                                            T*, T*);                                               \
    template void convtr3d_forward<T>(const T*, Shape3, int, const T*, const T*, int, T*);        \
    template void convtr3d_backward_input<T>(const T*, Shape3, int, const T*, int, T*);           \
    template void convtr3d_backward_params<T>(const T*, const T*, Shape3, int, int, T*, T*);      \
    template void instancenorm_forward<T>(const T*, int, int64_t, const T*, const T*, T, T*, T*,  \
                                          T*);                                                     \
    template void instancenorm_backward<T>(const T*, const T*, int, int64_t, const T*, const T*,  \
                                           const T*, T*, T*, T*);                                  \
    template void relu_forward<T>(const T*, int64_t, T*);                                          \
    template void relu_backward<T>(const T*, const T*, int64_t, T*);                               \
    template void sigmoid_forward<T>(const T*, int64_t, T*);                                       \
    template void adam_step<T>(T*, const T*, T*, T*, int64_t, const AdamConfig<T>&, int64_t);

MSADAPT_INSTANTIATE(float)
MSADAPT_INSTANTIATE(double)
#undef MSADAPT_INSTANTIATE

}  // namespace msadapt::nn
