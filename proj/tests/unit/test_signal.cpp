#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hipass/kernels.hpp"
#include "hipass/rng.hpp"
#include "hipass/signal.hpp"
#include "../support/oracles.hpp"

using namespace hipass;
using namespace hipass::testing;

namespace {

Tensor sobel_x() { return Tensor({3, 3}, std::vector<double>{-1, 0, 1, -2, 0, 2, -1, 0, 1}); }
Tensor sobel_y() { return Tensor({3, 3}, std::vector<double>{-1, -2, -1, 0, 0, 0, 1, 2, 1}); }

}  // namespace

TEST_CASE("identity kernel reproduces the input") {
    Rng rng(1);
    Tensor x = random_tensor({2, 6, 7}, rng);
    Tensor delta({3, 3});
    delta.at(1, 1) = 1.0;
    for (auto p : {Padding::same_zero, Padding::same_replicate, Padding::same_circular}) CHECK(conv2d(x, delta, p) == x);
}

TEST_CASE("zero-sum kernel blocks a constant image") {
    Rng rng(2);
    Tensor k = random_high_pass(3, 3, 9);
    Tensor out = conv2d(Tensor({1, 5, 5}, 0.37), k, Padding::same_replicate);
    CHECK(out.max_abs() < 1e-14);
}

TEST_CASE("conv2d matches the loop oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({5 + std::size_t(trial % 3), 5 + std::size_t(trial % 4)}, rng);
        Tensor k = random_tensor({3, trial % 2 ? 5u : 3u}, rng);
        for (auto p : {Padding::valid, Padding::same_zero, Padding::same_replicate, Padding::same_circular}) {
            if (p == Padding::valid && x.dim(1) < k.dim(1)) continue;
            CHECK(max_abs_diff(conv2d(x, k, p), conv_oracle(x, k, p)) <= 1e-12);
        }
    }
}

TEST_CASE("correlate2d is convolution with the flipped kernel") {
    Rng rng(4);
    Tensor x = random_tensor({6, 6}, rng);
    Tensor k = random_tensor({3, 3}, rng);
    Tensor flipped({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) flipped.at(i, j) = k.at(2 - i, 2 - j);
    CHECK(max_abs_diff(correlate2d(x, k, Padding::same_zero), conv2d(x, flipped, Padding::same_zero)) <= 1e-15);
}

TEST_CASE("even kernel extents are rejected") {
    CHECK_THROWS_AS(conv2d(Tensor({4, 4}), Tensor({2, 3}), Padding::valid), DimensionError);
    CHECK_THROWS_AS(parse_padding("mirror"), UsageError);
}

TEST_CASE("convolution is linear") {
    Rng rng(5);
    Tensor a = random_tensor({1, 7, 7}, rng), b = random_tensor({1, 7, 7}, rng), k = random_tensor({3, 3}, rng);
    const double al = 0.7, be = -1.3;
    Tensor lhs = conv2d(a * al + b * be, k, Padding::same_replicate);
    Tensor rhs = conv2d(a, k, Padding::same_replicate) * al + conv2d(b, k, Padding::same_replicate) * be;
    CHECK(max_abs_diff(lhs, rhs) <= 1e-9);
}

TEST_CASE("circular convolution diagonalises under the DFT") {
    Rng rng(6);
    Tensor x = random_tensor({8, 8}, rng), k = random_tensor({3, 3}, rng);
    Tensor padded({8, 8});
    for (long i = -1; i <= 1; ++i)
        for (long j = -1; j <= 1; ++j) padded.at((i + 8) % 8, (j + 8) % 8) = k.at(i + 1, j + 1);
    Spectrum lhs = dft2d(conv2d(x, k, Padding::same_circular));
    Spectrum fx = dft2d(x), fk = dft2d(padded);
    double d = 0;
    for (std::size_t i = 0; i < lhs.bins.size(); ++i) d = std::max(d, std::abs(lhs.bins[i] - fx.bins[i] * fk.bins[i]));
    CHECK(d <= 1e-6);
}

TEST_CASE("conv3d_temporal") {
    Rng rng(7);
    Tensor window = random_tensor({1, 3, 5, 5}, rng);
    SUBCASE("temporal selector returns the middle frame") {
        Tensor k({3, 3, 3});
        k.at(1, 1, 1) = 1.0;
        Tensor out = conv3d_temporal(window, k, Padding::same_replicate);
        CHECK(out.reshaped({5, 5}) == window.reshaped({3, 5, 5}).slice(1));
    }
    SUBCASE("forward difference taps") {
        Tensor k({3, 1, 1}, std::vector<double>{0, -1, 1});
        Tensor out = conv3d_temporal(window, k, Padding::same_replicate);
        Tensor frames = window.reshaped({3, 5, 5});
        CHECK(max_abs_diff(out.reshaped({5, 5}), frames.slice(2) - frames.slice(1)) <= 1e-15);
    }
    SUBCASE("loop oracle") {
        for (int trial = 0; trial < 10; ++trial) {
            Tensor w = random_tensor({2, 3, 4, 5}, rng);
            Tensor k = random_tensor({3, 3, 3}, rng);
            CHECK(max_abs_diff(conv3d_temporal(w, k, Padding::same_replicate), conv3d_oracle(w, k)) <= 1e-12);
        }
    }
    SUBCASE("temporal mismatch") {
        CHECK_THROWS_AS(conv3d_temporal(window, Tensor({5, 3, 3}), Padding::same_zero), DimensionError);
    }
}

TEST_CASE("DFT") {
    Rng rng(8);
    SUBCASE("constant image has only a DC bin") {
        Spectrum s = dft2d(Tensor({6, 4}, 0.25));
        CHECK(std::abs(s(0, 0) - Complex(0.25 * 24, 0)) < 1e-12);
        for (std::size_t i = 1; i < s.bins.size(); ++i) CHECK(std::abs(s.bins[i]) < 1e-12);
    }
    SUBCASE("cosine lands on two bins") {
        Tensor x({8, 16});
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t c = 0; c < 16; ++c) x.at(y, c) = std::cos(2 * std::numbers::pi * 3 * double(c) / 16);
        Spectrum s = dft2d(x);
        for (std::size_t u = 0; u < 8; ++u)
            for (std::size_t v = 0; v < 16; ++v) {
                const bool peak = u == 0 && (v == 3 || v == 13);
                if (peak)
                    CHECK(std::abs(s(u, v) - Complex(64, 0)) < 1e-9);
                else
                    CHECK(std::abs(s(u, v)) < 1e-9);
            }
    }
    SUBCASE("matches the direct sum, power-of-two and not") {
        for (auto shape : {Shape{8, 8}, Shape{4, 16}, Shape{5, 6}, Shape{3, 7}}) {
            Tensor x = random_tensor(shape, rng);
            CHECK(max_diff(dft2d(x), naive_dft(x)) <= 1e-9);
            CHECK(max_abs_diff(idft2d(dft2d(x)), x) <= 1e-9);
        }
    }
}

TEST_CASE("rotate90") {
    Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(rotate90(a) == Tensor({2, 2}, std::vector<double>{2, 4, 1, 3}));
    Rng rng(9);
    Tensor k = random_tensor({3, 3, 3}, rng);
    CHECK(rotate90(rotate90(rotate90(rotate90(k)))) == k);
    Tensor r = rotate90(sobel_x());
    Tensor neg = sobel_y() * -1.0;
    CHECK(r == neg);
}

TEST_CASE("bilinear warp") {
    Tensor ramp({1, 4, 6});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 6; ++x) ramp.at(0, y, x) = double(x) + 10.0 * double(y);
    CHECK(bilinear_warp(ramp, Tensor({2, 4, 6})) == ramp);

    Tensor flow({2, 4, 6});
    for (std::size_t i = 0; i < 24; ++i) flow[i] = 1.0;
    Tensor shifted = bilinear_warp(ramp, flow);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x + 1 < 6; ++x) CHECK(shifted.at(0, y, x) == ramp.at(0, y, x) + 1.0);

    Tensor half({2, 4, 6});
    for (std::size_t i = 0; i < 24; ++i) half[i] = 0.5;
    Tensor mid = bilinear_warp(ramp, half);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x + 1 < 6; ++x) CHECK(mid.at(0, y, x) == doctest::Approx(0.5 * (ramp.at(0, y, x) + ramp.at(0, y, x + 1))));

    // out of range samples clamp to the border
    for (std::size_t i = 0; i < 48; ++i) flow[i] = 100.0;
    CHECK(bilinear_warp(ramp, flow).at(0, 0, 0) == ramp.at(0, 3, 5));
}

TEST_CASE("pixel shuffle") {
    Rng rng(10);
    Tensor x = random_tensor({8, 3, 5}, rng);
    CHECK(pixel_shuffle(x, 1) == x);
    Tensor abcd({4, 1, 1}, std::vector<double>{1, 2, 3, 4});
    CHECK(pixel_shuffle(abcd, 2) == Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4}));
    CHECK(pixel_unshuffle(pixel_shuffle(x, 2), 2) == x);
    CHECK(pixel_shuffle(x, 2).shape() == Shape{2, 6, 10});
    CHECK_THROWS_AS(pixel_shuffle(Tensor({3, 2, 2}), 2), DimensionError);
}

TEST_CASE("inputs are left unmodified") {
    Rng rng(11);
    Tensor x = random_tensor({1, 6, 6}, rng), k = random_tensor({3, 3}, rng);
    const Tensor x0 = x, k0 = k;
    (void)conv2d(x, k, Padding::same_replicate);
    (void)rotate90(k);
    (void)dft2d(x.reshaped({6, 6}));
    CHECK(x == x0);
    CHECK(k == k0);
}
