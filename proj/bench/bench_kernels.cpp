// Compares the blocked im2col/GEMM kernels against the serial reference
// implementations on UNet-shaped workloads.

#include <benchmark/benchmark.h>

#include <vector>

#include "msadapt/nn/kernels.hpp"
#include "msadapt/nn/kernels_ref.hpp"
#include "msadapt/rng.hpp"

using msadapt::Rng;
using msadapt::nn::Shape3;

namespace {

struct ConvCase {
    Shape3 in_shape;
    int in_ch, out_ch, k, stride, pad;
};

ConvCase make_case(int64_t edge, int in_ch, int out_ch, int stride) {
    return {{edge, edge, edge}, in_ch, out_ch, 3, stride, 1};
}

std::vector<float> randn(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <bool kReference>
void conv_forward_bench(benchmark::State& state) {
    const ConvCase c = make_case(state.range(0), static_cast<int>(state.range(1)),
                                 static_cast<int>(state.range(2)), 1);
    const Shape3 os = msadapt::nn::conv_out_shape(c.in_shape, c.k, c.stride, c.pad);
    const auto in = randn(static_cast<size_t>(c.in_ch) * c.in_shape.numel(), 1);
    const auto w =
        randn(static_cast<size_t>(c.out_ch) * c.in_ch * c.k * c.k * c.k, 2);
    const auto b = randn(static_cast<size_t>(c.out_ch), 3);
    std::vector<float> out(static_cast<size_t>(c.out_ch) * os.numel());
    for (auto _ : state) {
        if constexpr (kReference)
            msadapt::nn::ref::conv3d_forward(in.data(), c.in_shape, c.in_ch, w.data(), b.data(),
                                             c.out_ch, c.k, c.stride, c.pad, out.data());
        else
            msadapt::nn::conv3d_forward(in.data(), c.in_shape, c.in_ch, w.data(), b.data(),
                                        c.out_ch, c.k, c.stride, c.pad, out.data());
        benchmark::DoNotOptimize(out.data());
    }
    const double flops = 2.0 * c.out_ch * c.in_ch * c.k * c.k * c.k * os.numel();
    state.counters["GFLOPS"] =
        benchmark::Counter(flops * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}

template <bool kReference>
void instnorm_bench(benchmark::State& state) {
    const int ch = static_cast<int>(state.range(0));
    const int64_t spatial = state.range(1);
    const auto x = randn(static_cast<size_t>(ch) * spatial, 4);
    const auto gamma = randn(ch, 5);
    const auto beta = randn(ch, 6);
    std::vector<float> out(x.size()), mean(ch), istd(ch);
    for (auto _ : state) {
        if constexpr (kReference)
            msadapt::nn::ref::instancenorm_forward(x.data(), ch, spatial, gamma.data(),
                                                   beta.data(), 1e-5f, out.data());
        else
            msadapt::nn::instancenorm_forward(x.data(), ch, spatial, gamma.data(), beta.data(),
                                              1e-5f, out.data(), mean.data(), istd.data());
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(conv_forward_bench<false>)->Name("conv3d/gemm")->Args({32, 8, 16})->Args({16, 32, 64});
BENCHMARK(conv_forward_bench<true>)->Name("conv3d/ref")->Args({32, 8, 16})->Args({16, 32, 64});
BENCHMARK(instnorm_bench<false>)->Name("instnorm/omp")->Args({32, 32768});
BENCHMARK(instnorm_bench<true>)->Name("instnorm/ref")->Args({32, 32768});

BENCHMARK_MAIN();
