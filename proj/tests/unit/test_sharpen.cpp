#include <doctest.h>

#include <cmath>

#include "hipass/metrics.hpp"
#include "hipass/rng.hpp"
#include "hipass/sharpen.hpp"

using namespace hipass;

namespace {

// Vertical step edge at column 16 blurred by a sampled Gaussian (sigma 1.2).
Tensor step(std::size_t n = 32) {
    Tensor t({1, n, n});
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) t.at(0, y, x) = x < n / 2 ? 0.2 : 0.8;
    return t;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
    const int r = 4;
    Tensor k({2 * r + 1, 2 * r + 1});
    double s = 0;
    for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) s += k.at(i + r, j + r) = std::exp(-(i * i + j * j) / (2 * sigma * sigma));
    return conv2d(img, k * (1.0 / s), Padding::same_replicate);
}

UnsharpConfig laplacian(double lambda, bool clamp = true) {
    UnsharpConfig c;
    c.kernel = negative_laplacian();
    c.lambda = lambda;
    c.clamp = clamp;
    return c;
}

}  // namespace

TEST_CASE("unsharp masking fixed points") {
    Rng rng(1);
    Tensor x({1, 8, 8});
    for (auto& v : x.storage()) v = rng.uniform();
    CHECK(unsharp_mask(x, laplacian(0.0)) == x);
    const Tensor flat({1, 8, 8}, 0.3);
    CHECK(max_abs_diff(unsharp_mask(flat, laplacian(2.0)), flat) == 0.0);
}

TEST_CASE("unsharp masking sharpens a blurred step") {
    const Tensor sharp = step();
    const Tensor blurred = gaussian_blur(sharp, 1.2);
    const double base = psnr(blurred, sharp);
    double best = -1;
    for (double lambda : {0.5, 1.0, 2.0}) best = std::max(best, psnr(unsharp_mask(blurred, laplacian(lambda)), sharp));
    CHECK(best > base);
}

TEST_CASE("unclamped unsharp masking is linear in lambda and keeps the mean") {
    Rng rng(2);
    Tensor x({1, 10, 10});
    for (auto& v : x.storage()) v = rng.uniform();
    const Tensor a = unsharp_mask(x, laplacian(0.3, false)) - x;
    const Tensor b = unsharp_mask(x, laplacian(0.9, false)) - x;
    const Tensor ab = unsharp_mask(x, laplacian(1.2, false)) - x;
    CHECK(max_abs_diff(ab, a + b) <= 1e-12);
    // the negative Laplacian with replicate padding sums to zero over the image
    CHECK(std::abs(unsharp_mask(x, laplacian(0.7, false)).mean() - x.mean()) <= 1e-12);
}

TEST_CASE("unsharp masking rejects bad configurations") {
    UnsharpConfig c = laplacian(1.0);
    c.kernel = Tensor({3, 3}, 1.0 / 9.0);
    CHECK_THROWS_AS(unsharp_mask(step(), c), PreconditionError);
    c = laplacian(-1.0);
    CHECK_THROWS_AS(unsharp_mask(step(), c), PreconditionError);
}

TEST_CASE("gradient features") {
    VideoClip constant;
    for (int i = 0; i < 3; ++i) constant.push_back(Tensor({1, 8, 8}, 0.4));
    for (auto fam : {FeatureFamily::sobel, FeatureFamily::laplacian, FeatureFamily::temporal,
                     FeatureFamily::sobel_temporal})
        for (const auto& f : gradient_features(constant, fam)) CHECK(f.values.max_abs() <= 1e-15);

    VideoClip edge;
    for (int i = 0; i < 3; ++i) edge.push_back(step(16));
    const auto fs = gradient_features(edge, FeatureFamily::sobel_temporal);
    REQUIRE(fs.size() == 3);
    CHECK(fs[0].name == "sobel_x");
    // |Sobel-x| peaks on the two columns either side of the edge
    const Tensor& gx = fs[0].values;
    for (std::size_t x = 0; x < 16; ++x) {
        const double v = gx.at(0, 8, x);
        if (x == 7 || x == 8)
            CHECK(v == doctest::Approx(0.6));
        else
            CHECK(v == 0.0);
    }
    CHECK(fs[1].values.max_abs() <= 1e-15);
    CHECK(fs[2].values.max_abs() == 0.0);

    VideoClip short_clip;
    short_clip.push_back(step(16));
    CHECK_THROWS_AS(gradient_features(short_clip, FeatureFamily::sobel), DimensionError);
    CHECK_THROWS_AS(parse_feature_family("prewitt"), UsageError);
}
