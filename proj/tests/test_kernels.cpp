#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "msadapt/nn/kernels.hpp"
#include "msadapt/nn/kernels_ref.hpp"
#include "msadapt/rng.hpp"

using namespace msadapt;
using nn::Shape3;

namespace {

std::vector<double> randn(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

std::vector<float> randnf(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
    return m;
}

}  // namespace

TEST_CASE("gemm conv forward matches the serial reference") {
    const Shape3 in_shape{9, 7, 8};
    const int in_ch = 3, out_ch = 5, k = 3;
    for (int stride : {1, 2}) {
        const Shape3 os = nn::conv_out_shape(in_shape, k, stride, 1);
        auto in = randnf(in_ch * in_shape.numel(), 1);
        auto w = randnf(out_ch * in_ch * k * k * k, 2);
        auto b = randnf(out_ch, 3);
        std::vector<float> got(out_ch * os.numel()), want(got.size());
        nn::conv3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, k, stride, 1,
                           got.data());
        nn::ref::conv3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, k, stride,
                                1, want.data());
        CHECK(max_abs_diff(got, want) < 1e-4);
    }
}

TEST_CASE("strided k2 conv (downsampling config) matches the reference") {
    const Shape3 in_shape{8, 8, 8};
    const int in_ch = 4, out_ch = 6, k = 2, stride = 2, pad = 0;
    const Shape3 os = nn::conv_out_shape(in_shape, k, stride, pad);
    auto in = randnf(in_ch * in_shape.numel(), 4);
    auto w = randnf(out_ch * in_ch * 8, 5);
    auto b = randnf(out_ch, 6);
    std::vector<float> got(out_ch * os.numel()), want(got.size());
    nn::conv3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, k, stride, pad,
                       got.data());
    nn::ref::conv3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, k, stride, pad,
                            want.data());
    CHECK(max_abs_diff(got, want) < 1e-4);
}

TEST_CASE("conv backward passes match the serial reference") {
    const Shape3 in_shape{6, 5, 7};
    const int in_ch = 3, out_ch = 4, k = 3, stride = 1, pad = 1;
    const Shape3 os = nn::conv_out_shape(in_shape, k, stride, pad);
    auto in = randnf(in_ch * in_shape.numel(), 7);
    auto w = randnf(out_ch * in_ch * 27, 8);
    auto gout = randnf(out_ch * os.numel(), 9);

    std::vector<float> gin(in_ch * in_shape.numel()), gin_ref(gin.size());
    nn::conv3d_backward_input(gout.data(), in_shape, in_ch, w.data(), out_ch, k, stride, pad,
                              gin.data());
    nn::ref::conv3d_backward_input(gout.data(), in_shape, in_ch, w.data(), out_ch, k, stride, pad,
                                   gin_ref.data());
    CHECK(max_abs_diff(gin, gin_ref) < 1e-4);

    std::vector<float> gw(w.size(), 0), gb(out_ch, 0), gw_ref(w.size(), 0), gb_ref(out_ch, 0);
    nn::conv3d_backward_params(gout.data(), in.data(), in_shape, in_ch, out_ch, k, stride, pad,
                               gw.data(), gb.data());
    nn::ref::conv3d_backward_params(gout.data(), in.data(), in_shape, in_ch, out_ch, k, stride,
                                    pad, gw_ref.data(), gb_ref.data());
    CHECK(max_abs_diff(gw, gw_ref) < 1e-3);
    CHECK(max_abs_diff(gb, gb_ref) < 1e-3);
}

TEST_CASE("transposed conv forward matches the reference and doubles the grid") {
    const Shape3 in_shape{4, 5, 3};
    const int in_ch = 6, out_ch = 3;
    auto in = randnf(in_ch * in_shape.numel(), 10);
    auto w = randnf(in_ch * out_ch * 8, 11);
    auto b = randnf(out_ch, 12);
    std::vector<float> got(out_ch * in_shape.numel() * 8), want(got.size());
    nn::convtr3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, got.data());
    nn::ref::convtr3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, want.data());
    CHECK(max_abs_diff(got, want) < 1e-4);
}

TEST_CASE("instance norm forward matches the reference and normalizes per channel") {
    const int ch = 5;
    const int64_t spatial = 777;
    auto x = randnf(ch * spatial, 13);
    auto gamma = randnf(ch, 14);
    auto beta = randnf(ch, 15);
    std::vector<float> got(x.size()), want(x.size()), mean(ch), istd(ch);
    nn::instancenorm_forward(x.data(), ch, spatial, gamma.data(), beta.data(), 1e-5f, got.data(),
                             mean.data(), istd.data());
    nn::ref::instancenorm_forward(x.data(), ch, spatial, gamma.data(), beta.data(), 1e-5f,
                                  want.data());
    CHECK(max_abs_diff(got, want) < 1e-4);
    // normalized pre-affine statistics: mean 0, var 1 per channel
    for (int c = 0; c < ch; ++c) {
        double m = 0;
        for (int64_t i = 0; i < spatial; ++i)
            m += (got[c * spatial + i] - beta[c]) / gamma[c];
        CHECK(std::abs(m / spatial) < 1e-4);
    }
}

// Finite-difference checks at double precision against a scalar loss
// L = sum(out * probe).
TEST_CASE("conv gradients agree with central finite differences") {
    const Shape3 in_shape{4, 4, 4};
    const int in_ch = 2, out_ch = 3, k = 3, stride = 1, pad = 1;
    const Shape3 os = nn::conv_out_shape(in_shape, k, stride, pad);
    auto in = randn(in_ch * in_shape.numel(), 20);
    auto w = randn(out_ch * in_ch * 27, 21);
    auto b = randn(out_ch, 22);
    auto probe = randn(out_ch * os.numel(), 23);

    auto loss = [&]() {
        std::vector<double> out(out_ch * os.numel());
        nn::conv3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, k, stride, pad,
                           out.data());
        double L = 0;
        for (size_t i = 0; i < out.size(); ++i) L += out[i] * probe[i];
        return L;
    };

    std::vector<double> gin(in.size()), gw(w.size(), 0), gb(b.size(), 0);
    nn::conv3d_backward_input(probe.data(), in_shape, in_ch, w.data(), out_ch, k, stride, pad,
                              gin.data());
    nn::conv3d_backward_params(probe.data(), in.data(), in_shape, in_ch, out_ch, k, stride, pad,
                               gw.data(), gb.data());

    const double eps = 1e-6;
    auto fd_check = [&](std::vector<double>& param, const std::vector<double>& grad) {
        for (size_t i = 0; i < param.size(); i += std::max<size_t>(1, param.size() / 17)) {
            const double orig = param[i];
            param[i] = orig + eps;
            const double lp = loss();
            param[i] = orig - eps;
            const double lm = loss();
            param[i] = orig;
            const double fd = (lp - lm) / (2 * eps);
            CHECK(std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}) <
                  1e-5);
        }
    };
    fd_check(in, gin);
    fd_check(w, gw);
    fd_check(b, gb);
}

TEST_CASE("instance norm backward agrees with finite differences") {
    const int ch = 3;
    const int64_t spatial = 64;
    auto x = randn(ch * spatial, 30);
    auto gamma = randn(ch, 31);
    auto beta = randn(ch, 32);
    auto probe = randn(ch * spatial, 33);
    const double eps_n = 1e-5;

    auto loss = [&]() {
        std::vector<double> out(x.size()), m(ch), s(ch);
        nn::instancenorm_forward(x.data(), ch, spatial, gamma.data(), beta.data(), eps_n,
                                 out.data(), m.data(), s.data());
        double L = 0;
        for (size_t i = 0; i < out.size(); ++i) L += out[i] * probe[i];
        return L;
    };

    std::vector<double> out(x.size()), mean(ch), istd(ch);
    nn::instancenorm_forward(x.data(), ch, spatial, gamma.data(), beta.data(), eps_n, out.data(),
                             mean.data(), istd.data());
    std::vector<double> gx(x.size()), gg(ch, 0), gb(ch, 0);
    nn::instancenorm_backward(probe.data(), x.data(), ch, spatial, gamma.data(), mean.data(),
                              istd.data(), gx.data(), gg.data(), gb.data());

    const double eps = 1e-6;
    auto fd_check = [&](std::vector<double>& param, const std::vector<double>& grad, size_t step) {
        for (size_t i = 0; i < param.size(); i += step) {
            const double orig = param[i];
            param[i] = orig + eps;
            const double lp = loss();
            param[i] = orig - eps;
            const double lm = loss();
            param[i] = orig;
            const double fd = (lp - lm) / (2 * eps);
            CHECK(std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}) <
                  1e-4);
        }
    };
    fd_check(x, gx, 13);
    fd_check(gamma, gg, 1);
    fd_check(beta, gb, 1);
}

TEST_CASE("transposed conv gradients agree with finite differences") {
    const Shape3 in_shape{3, 3, 3};
    const int in_ch = 2, out_ch = 2;
    auto in = randn(in_ch * in_shape.numel(), 40);
    auto w = randn(in_ch * out_ch * 8, 41);
    auto b = randn(out_ch, 42);
    auto probe = randn(out_ch * in_shape.numel() * 8, 43);

    auto loss = [&]() {
        std::vector<double> out(out_ch * in_shape.numel() * 8);
        nn::convtr3d_forward(in.data(), in_shape, in_ch, w.data(), b.data(), out_ch, out.data());
        double L = 0;
        for (size_t i = 0; i < out.size(); ++i) L += out[i] * probe[i];
        return L;
    };

    std::vector<double> gin(in.size()), gw(w.size(), 0), gb(out_ch, 0);
    nn::convtr3d_backward_input(probe.data(), in_shape, in_ch, w.data(), out_ch, gin.data());
    nn::convtr3d_backward_params(probe.data(), in.data(), in_shape, in_ch, out_ch, gw.data(),
                                 gb.data());
    const double eps = 1e-6;
    auto fd_check = [&](std::vector<double>& param, const std::vector<double>& grad) {
        for (size_t i = 0; i < param.size(); ++i) {
            const double orig = param[i];
            param[i] = orig + eps;
            const double lp = loss();
            param[i] = orig - eps;
            const double lm = loss();
            param[i] = orig;
            const double fd = (lp - lm) / (2 * eps);
            CHECK(std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8}) <
                  1e-5);
        }
    };
    fd_check(in, gin);
    fd_check(w, gw);
    fd_check(b, gb);
}

TEST_CASE("relu and sigmoid pointwise kernels") {
    auto x = randnf(100, 50);
    std::vector<float> r(100), s(100);
    nn::relu_forward(x.data(), 100, r.data());
    nn::sigmoid_forward(x.data(), 100, s.data());
    for (int i = 0; i < 100; ++i) {
        CHECK(r[i] == (x[i] > 0 ? x[i] : 0.0f));
        CHECK(s[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x[i]))));
    }
    auto gout = randnf(100, 51);
    std::vector<float> gin(100);
    nn::relu_backward(gout.data(), r.data(), 100, gin.data());
    for (int i = 0; i < 100; ++i) CHECK(gin[i] == (r[i] > 0 ? gout[i] : 0.0f));
}

TEST_CASE("adam step with lr 0 leaves parameters bit-identical") {
    auto p = randnf(64, 60);
    auto orig = p;
    auto g = randnf(64, 61);
    std::vector<float> m(64, 0), v(64, 0);
    nn::AdamConfig<float> cfg;
    cfg.lr = 0.0f;
    nn::adam_step(p.data(), g.data(), m.data(), v.data(), 64, cfg, 1);
    CHECK(std::memcmp(p.data(), orig.data(), 64 * 4) == 0);
}

TEST_CASE("adam first step moves each parameter by about lr") {
    std::vector<float> p(8, 1.0f), g{1, -1, 2, -2, 0.5f, -0.5f, 3, -3};
    std::vector<float> m(8, 0), v(8, 0);
    nn::AdamConfig<float> cfg;  // default lr 1e-3 scale set below
    cfg.lr = 0.01f;
    nn::adam_step(p.data(), g.data(), m.data(), v.data(), 8, cfg, 1);
    for (int i = 0; i < 8; ++i) {
        if (g[i] == 0) continue;
        CHECK(std::abs(std::abs(1.0f - p[i]) - cfg.lr) < 1e-4);
        CHECK(((g[i] > 0) == (p[i] < 1.0f)));  // moved against the gradient
    }
}
