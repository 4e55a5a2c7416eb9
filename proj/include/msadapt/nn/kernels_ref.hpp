#ifndef MSADAPT_NN_KERNELS_REF_HPP
#define MSADAPT_NN_KERNELS_REF_HPP

#include "msadapt/nn/kernels.hpp"

// Naive serial reference kernels. Slow, obviously-correct loop nests kept to
// validate the tiled BLAS/OpenMP implementations and for the benchmark.
namespace msadapt::nn::ref {

template <typename T>
void conv3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                    int k, int stride, int pad, T* out);

template <typename T>
void conv3d_backward_input(const T* grad_out, Shape3 in_shape, int in_ch, const T* w, int out_ch,
                           int k, int stride, int pad, T* grad_in);

template <typename T>
void conv3d_backward_params(const T* grad_out, const T* in, Shape3 in_shape, int in_ch, int out_ch,
                            int k, int stride, int pad, T* grad_w, T* grad_b);

template <typename T>
void convtr3d_forward(const T* in, Shape3 in_shape, int in_ch, const T* w, const T* b, int out_ch,
                      T* out);

template <typename T>
void instancenorm_forward(const T* x, int ch, int64_t spatial, const T* gamma, const T* beta,
                          T eps, T* out);

}  // namespace msadapt::nn::ref

#endif
