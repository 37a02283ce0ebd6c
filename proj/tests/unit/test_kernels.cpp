#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hipass/kernels.hpp"
#include "hipass/rng.hpp"

using namespace hipass;

namespace {

// Window [1,3,1,1] of per-frame constants, filtered at one pixel.
double apply_temporal(const Tensor& kernel, double a, double b, double c) {
    Tensor window({1, 3, 3, 3});
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) {
            window.at(0, 0, y, x) = a;
            window.at(0, 1, y, x) = b;
            window.at(0, 2, y, x) = c;
        }
    return conv3d_temporal(window, kernel, Padding::same_replicate).at(0, 1, 1);
}

// Sobel-x/4 = [1,2,1]^T (x) [-1,0,1] / 4, so |H| = |sin wx| (1 + cos wy).
double sobel_x_magnitude(double wy, double wx) { return std::abs(std::sin(wx)) * (1.0 + std::cos(wy)); }

}  // namespace

TEST_CASE("default basis") {
    const KernelBasis b = make_default_basis();
    REQUIRE(b.size() == 4);
    CHECK(b.extents() == Shape{3, 3, 3});
    for (const auto& k : b.kernels()) CHECK(std::abs(k.sum()) <= 1e-12);
    CHECK(b.kernel(0).at(1, 0, 0) == -0.25);
    CHECK(b.kernel(0).at(1, 1, 2) == 0.5);
    CHECK(b.kernel(0).slice(0).max_abs() == 0.0);
    CHECK(apply_temporal(b.kernel(2), 0.2, 0.7, 0.4) == doctest::Approx(0.4 - 0.7).epsilon(1e-15));
    CHECK(apply_temporal(b.kernel(3), 0.2, 0.7, 0.4) == doctest::Approx(0.2 - 0.35 - 0.2).epsilon(1e-15));
    // the two temporal kernels are orthogonal
    CHECK(dot(b.kernel(2), b.kernel(3)) == 0.0);
}

TEST_CASE("gram_schmidt") {
    Tensor out = gram_schmidt(Tensor({3}, std::vector<double>{1, -1, 0}), Tensor({3}, std::vector<double>{0, -1, 1}));
    CHECK(out == Tensor({3}, std::vector<double>{1, -0.5, -0.5}));

    Tensor v({3}, std::vector<double>{1, 0, 0}), u({3}, std::vector<double>{0, 2, 0});
    CHECK(gram_schmidt(v, u) == v);

    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        Tensor a({9}), b({9});
        for (auto& x : a.storage()) x = rng.normal();
        for (auto& x : b.storage()) x = rng.normal();
        CHECK(std::abs(dot(gram_schmidt(a, b), b)) <= 1e-12);
    }
    CHECK_THROWS_AS(gram_schmidt(v, Tensor({3})), SingularityError);
}

TEST_CASE("combine") {
    const KernelBasis b = make_default_basis();
    CHECK(combine(b, CoefficientVector({1, 0, 0, 0})).kernel.reshaped({3, 3, 3}) == b.kernel(0));
    CHECK(combine(b, CoefficientVector({0, 0, 0, 0})).kernel.max_abs() == 0.0);
    CHECK_THROWS_AS(CoefficientVector({1, -0.5}), PreconditionError);
    CHECK_THROWS_AS(combine(b, CoefficientVector({1, 2})), DimensionError);

    Rng rng(2);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> a(4);
        for (auto& x : a) x = rng.uniform(0, 3);
        DynamicKernel dk = combine(b, CoefficientVector(a));
        CHECK(std::abs(dk.kernel.sum()) <= 1e-9);

        // the response of the mixture is the mixture of the responses
        const FrequencyResponse fr = frequency_response(dk.kernel);
        std::vector<FrequencyResponse> parts;
        for (const auto& k : b.kernels()) parts.push_back(frequency_response(k));
        double worst = 0;
        for (std::size_t i = 0; i < fr.response.size(); ++i) {
            Complex s = 0;
            for (std::size_t j = 0; j < 4; ++j) s += a[j] * parts[j].response[i];
            worst = std::max(worst, std::abs(fr.response[i] - s));
        }
        CHECK(worst <= 1e-9);

        // combine-then-rotate equals rotate-basis-then-combine
        CHECK(max_abs_diff(rotate90(dk.kernel), dk.rotated) <= 1e-12);
        CHECK(max_abs_diff(combine(b.rotated(), CoefficientVector(a)).kernel, dk.rotated) <= 1e-12);
    }
}

TEST_CASE("frequency response") {
    const KernelBasis b = make_default_basis();
    for (const auto& k : b.kernels()) CHECK(frequency_response(k).dc_gain <= 1e-12);

    Tensor avg({3, 3}, 1.0 / 9.0);
    CHECK(frequency_response(avg).dc_gain == doctest::Approx(1.0));
    CHECK_FALSE(verify_high_pass(avg).high_pass);
    CHECK_THROWS_AS(frequency_response(avg, 4), PreconditionError);

    // Sobel-x on a 17-point grid: bin 8 is pi/2, bin 2 is pi/8.
    const std::size_t g = 17;
    const FrequencyResponse fr = frequency_response(b.kernel(0), g);
    REQUIRE(fr.magnitudes.shape() == Shape{g, g, g});
    auto mag = [&](std::size_t wy, std::size_t wx) { return fr.magnitudes.at(0, wy, wx); };
    CHECK(mag(0, 8) > mag(0, 2));
    for (std::size_t t = 0; t < g; t += 4)
        for (std::size_t y = 0; y < g; ++y)
            for (std::size_t x = 0; x < g; ++x)
                CHECK(std::abs(fr.magnitudes.at(t, y, x) -
                               sobel_x_magnitude(fr.sample_frequency(y), fr.sample_frequency(x))) <= 1e-12);
    CHECK(mag(0, g - 1) <= 1e-12);  // vanishes at wx = pi
    CHECK(fr.peak_magnitude == doctest::Approx(2.0));

    // temporal differencing: |H| = |e^{-iw} - 1| = 2|sin(w/2)|
    const FrequencyResponse ft = frequency_response(b.kernel(2), g);
    for (std::size_t t = 0; t < g; ++t)
        CHECK(ft.magnitudes.at(t, 0, 0) == doctest::Approx(2 * std::sin(ft.sample_frequency(t) / 2)).epsilon(1e-12));
}

TEST_CASE("verify_high_pass") {
    Tensor delta({3, 3});
    delta.at(1, 1) = 1.0;
    CHECK_FALSE(verify_high_pass(delta).high_pass);
    CHECK(verify_high_pass(random_high_pass(3, 3, 5)).high_pass);

    Tensor positive = random_high_pass(3, 3, 5);
    positive[0] += 0.01;
    CHECK_FALSE(verify_high_pass(positive).high_pass);

    const HighPassReport r = verify_high_pass(make_default_basis().kernel(0));
    CHECK(r.high_pass);
    CHECK(r.peak_frequency > 0.0);
    CHECK(r.cutoff > 0.0);
    CHECK(r.cutoff <= r.peak_frequency);
}

TEST_CASE("random_high_pass") {
    CHECK(project_zero_mean(Tensor({3, 3}, 1.0)).max_abs() == 0.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(std::abs(random_high_pass(4, 5, seed).sum()) <= 1e-12);
    CHECK(random_high_pass(3, 3, 7) == random_high_pass(3, 3, 7));
    CHECK_THROWS_AS(random_high_pass(1, 1, 0), DimensionError);

    // transcript from the independent reference implementation
    std::ifstream in(std::string(HIPASS_REFERENCE_DIR) + "/random_high_pass_seed42.txt");
    REQUIRE(in);
    std::string line;
    std::vector<double> expected;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double v;
        while (ls >> v) expected.push_back(v);
    }
    REQUIRE(expected.size() == 9);
    const Tensor k = random_high_pass(3, 3, 42);
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(k[i] - expected[i]) <= 1e-15);
}

TEST_CASE("ablation families") {
    Tensor window({1, 3, 3, 3});
    const double abc[3] = {0.1, 0.6, 0.3};
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 9; ++i) window[t * 9 + i] = abc[t];
    const KernelBasis temporal = make_ablation_bases(BasisKind::temporal);
    CHECK(conv3d_temporal(window, temporal.kernel(0), Padding::same_replicate).at(0, 1, 1) ==
          doctest::Approx(0.5 * 0.1 - 0.6 + 0.5 * 0.3).epsilon(1e-15));

    const KernelBasis lap = make_ablation_bases(BasisKind::laplacian);
    Tensor constant({1, 3, 5, 5}, 0.4);
    CHECK(conv3d_temporal(constant, lap.kernel(0), Padding::same_replicate).max_abs() <= 1e-15);

    for (auto kind : {BasisKind::laplacian, BasisKind::kirsch, BasisKind::sobel, BasisKind::temporal,
                      BasisKind::sobel_temporal, BasisKind::random, BasisKind::default_basis}) {
        const KernelBasis b = make_ablation_bases(kind, 3);
        for (const auto& k : b.kernels()) CHECK(verify_high_pass(k).high_pass);
        CHECK(parse_basis_kind(to_string(kind)) == kind);
    }
    CHECK_THROWS_AS(parse_basis_kind("prewitt"), UsageError);
    CHECK_THROWS_AS(make_ablation_bases(BasisKind::naive), UsageError);

    const KernelBasis naive = make_basis(BasisKind::naive);
    CHECK(naive.size() == 27);
    std::vector<double> c(27);
    Rng rng(4);
    for (auto& x : c) x = rng.uniform();
    Tensor k = combine(naive, CoefficientVector(c)).kernel;
    CHECK(k.storage() == c);
}

TEST_CASE("basis construction rejects bad kernels") {
    CHECK_THROWS_AS(KernelBasis({Tensor({3, 3}, 1.0)}, {"ones"}), PreconditionError);
    CHECK_THROWS_AS(KernelBasis({random_high_pass(3, 3, 1), random_high_pass(5, 5, 1)}, {"a", "b"}), DimensionError);
}

TEST_CASE("kernel text format round trip") {
    const KernelBasis b = make_default_basis();
    std::stringstream ss;
    write_kernels(ss, b.kernels());
    std::vector<Tensor> back = read_kernels(ss);
    REQUIRE(back.size() == 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(back[j] == b.kernel(j));

    std::istringstream handwritten("# laplacian\n0 1 0\n1 -4 1\n0 1 0\n---\n1 2\n\n3 4\n");
    auto ks = read_kernels(handwritten);
    REQUIRE(ks.size() == 2);
    CHECK(ks[0].shape() == Shape{1, 3, 3});
    CHECK(ks[1].shape() == Shape{2, 1, 2});

    std::istringstream bad("1 2\n3 x\n");
    CHECK_THROWS_AS(read_kernels(bad), FormatError);
    std::istringstream ragged("1 2\n3\n");
    CHECK_THROWS_AS(read_kernels(ragged), FormatError);
}
