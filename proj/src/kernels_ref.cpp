#include "msadapt/nn/kernels_ref.hpp"

#include <cmath>

namespace msadapt::nn::ref {

namespace {

template <typename T>
T tap(const T* in, Shape3 s, int64_t z, int64_t y, int64_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= s.d || y >= s.h || x >= s.w) return T(0);
    return in[(z * s.h + y) * s.w + x];
}

}  // namespace

template <typename T>
void conv3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                    int k, int stride, int pad, T* out) {
    const Shape3 os = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_in = in_shape.numel();
    for (int co = 0; co < out_ch; ++co)
        for (int64_t oz = 0; oz < os.d; ++oz)
            for (int64_t oy = 0; oy < os.h; ++oy)
                for (int64_t ox = 0; ox < os.w; ++ox) {
                    T acc = b ? b[co] : T(0);
                    for (int ci = 0; ci < in_ch; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    acc += w[(((static_cast<int64_t>(co) * in_ch + ci) * k + kz) *
                                                  k + ky) * k + kx] *
                                           tap(in + ci * s_in, in_shape, oz * stride - pad + kz,
                                               oy * stride - pad + ky, ox * stride - pad + kx);
                    out[((static_cast<int64_t>(co) * os.d + oz) * os.h + oy) * os.w + ox] = acc;
                }
}

template <typename T>
void conv3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                           int k, int stride, int pad, T* grad_in) {
    const Shape3 os = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_in = in_shape.numel();
    for (int64_t i = 0; i < in_ch * s_in; ++i) grad_in[i] = T(0);
    for (int co = 0; co < out_ch; ++co)
        for (int64_t oz = 0; oz < os.d; ++oz)
            for (int64_t oy = 0; oy < os.h; ++oy)
                for (int64_t ox = 0; ox < os.w; ++ox) {
                    const T g = grad_out[((static_cast<int64_t>(co) * os.d + oz) * os.h + oy) *
                                             os.w + ox];
                    for (int ci = 0; ci < in_ch; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx) {
                                    int64_t z = oz * stride - pad + kz;
                                    int64_t y = oy * stride - pad + ky;
                                    int64_t x = ox * stride - pad + kx;
                                    if (z < 0 || y < 0 || x < 0 || z >= in_shape.d ||
                                        y >= in_shape.h || x >= in_shape.w)
                                        continue;
                                    grad_in[ci * s_in + (z * in_shape.h + y) * in_shape.w + x] +=
                                        g * w[(((static_cast<int64_t>(co) * in_ch + ci) * k + kz) *
                                                   k + ky) * k + kx];
                                }
                }
}

template <typename T>
void conv3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch, int out_ch,
                            int k, int stride, int pad, T* grad_w, T* grad_b) {
    const Shape3 os = conv_out_shape(in_shape, k, stride, pad);
    const int64_t s_in = in_shape.numel();
    for (int co = 0; co < out_ch; ++co)
        for (int64_t oz = 0; oz < os.d; ++oz)
            for (int64_t oy = 0; oy < os.h; ++oy)
                for (int64_t ox = 0; ox < os.w; ++ox) {
                    const T g = grad_out[((static_cast<int64_t>(co) * os.d + oz) * os.h + oy) *
                                             os.w + ox];
                    for (int ci = 0; ci < in_ch; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    grad_w[(((static_cast<int64_t>(co) * in_ch + ci) * k + kz) * k +
                                            ky) * k + kx] +=
                                        g * tap(in + ci * s_in, in_shape, oz * stride - pad + kz,
                                                oy * stride - pad + ky, ox * stride - pad + kx);
                }
    if (grad_b) {
        const int64_t s_out = os.numel();
        for (int co = 0; co < out_ch; ++co)
            for (int64_t i = 0; i < s_out; ++i) grad_b[co] += grad_out[co * s_out + i];
    }
}

template <typename T>
void convtr3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                      T* out) {
    const Shape3 os{2 * in_shape.d, 2 * in_shape.h, 2 * in_shape.w};
    const int64_t s_in = in_shape.numel();
    const int64_t s_out = os.numel();
    for (int co = 0; co < out_ch; ++co)
        for (int64_t i = 0; i < s_out; ++i) out[co * s_out + i] = b ? b[co] : T(0);
    for (int ci = 0; ci < in_ch; ++ci)
        for (int64_t z = 0; z < in_shape.d; ++z)
            for (int64_t y = 0; y < in_shape.h; ++y)
                for (int64_t x = 0; x < in_shape.w; ++x) {
                    const T v = in[ci * s_in + (z * in_shape.h + y) * in_shape.w + x];
                    for (int co = 0; co < out_ch; ++co)
                        for (int t = 0; t < 8; ++t) {
                            const int dz = t >> 2, dy = (t >> 1) & 1, dx = t & 1;
                            out[co * s_out +
                                ((2 * z + dz) * os.h + (2 * y + dy)) * os.w + 2 * x + dx] +=
                                v * w[(static_cast<int64_t>(ci) * out_ch + co) * 8 + t];
                        }
                }
}

template <typename T>
void instancenorm_forward(const T* x, int ch, int64_t spatial, const T* gamma, const T* beta,
                          T eps, T* out) {
    for (int c = 0; c < ch; ++c) {
        T mean = T(0);
        for (int64_t i = 0; i < spatial; ++i) mean += x[c * spatial + i];
        mean /= static_cast<T>(spatial);
        T var = T(0);
        for (int64_t i = 0; i < spatial; ++i) {
            T d = x[c * spatial + i] - mean;
            var += d * d;
        }
        var /= static_cast<T>(spatial);
        const T istd = T(1) / std::sqrt(var + eps);
        for (int64_t i = 0; i < spatial; ++i)
            out[c * spatial + i] = gamma[c] * (x[c * spatial + i] - mean) * istd + beta[c];
    }
}

#define MSADAPT_REF_INSTANTIATE(T)                                                                \
    template void conv3d_forward<T>(const T*, Shape3, int, const T*, const T*, int, int, int,    \
                                    int, T*);                                                     \
    template void conv3d_backward_input<T>(const T*, Shape3, int, const T*, int, int, int, int,  \
                                           T*);                                                   \
    template void conv3d_backward_params<T>(const T*, const T*, Shape3, int, int, int, int, int, \
                                            T*, T*);                                              \
    template void convtr3d_forward<T>(const T*, Shape3, int, const T*, const T*, int, T*);       \
    template void instancenorm_forward<T>(const T*, int, int64_t, const T*, const T*, T, T*);

MSADAPT_REF_INSTANTIATE(float)
MSADAPT_REF_INSTANTIATE(double)
#undef MSADAPT_REF_INSTANTIATE

}  // namespace msadapt::nn::ref
