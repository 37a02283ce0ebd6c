#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "../support/grad_cases.hpp"
#include "hipass/blur.hpp"
#include "hipass/flow.hpp"
#include "hipass/model.hpp"

using namespace hipass;
using nn::Var;

namespace {

VideoClip random_clip(std::size_t frames, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    VideoClip clip;
    for (std::size_t t = 0; t < frames; ++t) clip.push_back(testing::random_values({1, h, w}, rng, 0.0, 1.0));
    return clip;
}

// Flow fields keyed by (t, prev); reversal maps the key through T-1-i.
struct PairFlows {
    std::map<std::pair<std::size_t, std::size_t>, Tensor> fields;
    std::size_t frames = 0;

    PairFlows(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) : frames(n) {
        Rng rng(seed);
        for (std::size_t t = 0; t < n; ++t) {
            if (t + 1 < n) fields[{t, t + 1}] = testing::random_values({2, h, w}, rng, -1.5, 1.5);
            if (t > 0) fields[{t, t - 1}] = testing::random_values({2, h, w}, rng, -1.5, 1.5);
        }
    }
    FlowProvider forward() const {
        return [this](std::size_t t, std::size_t p) { return fields.at({t, p}); };
    }
    FlowProvider reversed() const {
        return [this](std::size_t t, std::size_t p) { return fields.at({frames - 1 - t, frames - 1 - p}); };
    }
};

Tensor vertical_stripes(std::size_t h, std::size_t w) {
    Tensor t({1, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) t.at(0, y, x) = (x / 2) % 2 ? 0.9 : 0.1;
    return t;
}

Tensor stack_window(const Tensor& a, const Tensor& b, const Tensor& c) {
    VideoClip clip(std::vector<Tensor>{a, b, c});
    Tensor s = clip.stacked();  // [T,C,H,W]
    const std::size_t h = a.dim(1), w = a.dim(2);
    return s.reshaped({1, 3, h, w});
}

}  // namespace

TEST_CASE("configuration") {
    ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.window() == 3);
    CHECK(cfg.factor() == 4);
    cfg.downsample = 0.3;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = ModelConfig{};
    cfg.span = 2;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    CHECK_THROWS_AS(parse_variant("transformer"), UsageError);
    for (auto v : {Variant::ahfnet, Variant::conv3d_direct, Variant::naive_basis, Variant::identity_only})
        CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("coefficient generator") {
    Model m(testing::small_model_config(), 1);
    const VideoClip a = random_clip(3, 8, 8, 2), b = random_clip(3, 8, 8, 3);
    const Tensor ca = m.coefficients(0, Var::constant(m.window(a, 1))).value();
    const Tensor cb = m.coefficients(0, Var::constant(m.window(b, 1))).value();
    REQUIRE(ca.size() == 4);
    for (double v : ca.storage()) CHECK(v > 0.0);
    CHECK_FALSE(ca == cb);
    // paths own their parameters
    CHECK_FALSE(ca == m.coefficients(1, Var::constant(m.window(a, 1))).value());
}

TEST_CASE("window replicates terminal frames") {
    Model m(ModelConfig{}, 0);
    const VideoClip clip = random_clip(4, 8, 8, 4);
    const Tensor w0 = m.window(clip, 0).reshaped({3, 8, 8});
    CHECK(w0.slice(0) == clip[0].reshaped({8, 8}));
    CHECK(w0.slice(1) == clip[0].reshaped({8, 8}));
    CHECK(w0.slice(2) == clip[1].reshaped({8, 8}));
    const Tensor w3 = m.window(clip, 3).reshaped({3, 8, 8});
    CHECK(w3.slice(2) == clip[3].reshaped({8, 8}));
}

TEST_CASE("extraction") {
    Model m(testing::small_model_config(), 5);
    SUBCASE("constant window gives zero features") {
        const Tensor flat({1, 3, 8, 8}, 0.4);
        const ExtractionOutput e = m.extract(0, Var::constant(flat));
        CHECK(e.h.value().max_abs() <= 1e-15);
        CHECK(e.h_rot.value().max_abs() <= 1e-15);
        CHECK(e.combined.value().max_abs() <= 1e-15);
    }
    SUBCASE("combined map is |h| + |h'| and non-negative") {
        const VideoClip clip = random_clip(3, 8, 8, 6);
        const ExtractionOutput e = m.extract(1, Var::constant(m.window(clip, 1)));
        const Tensor expect = abs(e.h.value()) + abs(e.h_rot.value());
        CHECK(max_abs_diff(e.combined.value(), expect) <= 1e-12);
        for (double v : e.combined.value().storage()) CHECK(v >= 0.0);
        CHECK(verify_high_pass(e.kernel.value()).high_pass);
    }
    SUBCASE("selected basis kernels on fixtures") {
        const KernelBasis basis = make_default_basis();
        const Tensor stripes = vertical_stripes(8, 8);
        const Var window = Var::constant(stack_window(stripes, stripes, stripes));
        auto filter = [&](std::vector<double> a) {
            const Var k = nn::combine(Var::constant(Tensor({4}, std::move(a))), basis.stacked());
            return nn::conv3d_temporal(window, k).value();
        };
        CHECK(filter({1, 0, 0, 0}).max_abs() > 0.1);
        CHECK(filter({0, 1, 0, 0}).max_abs() <= 1e-15);
        // static scene: the temporal difference vanishes
        CHECK(filter({0, 0, 1, 0}).max_abs() == 0.0);
    }
    SUBCASE("both kernels read the same coefficient node") {
        Model full(ModelConfig{}, 7);
        const VideoClip clip = random_clip(3, 16, 16, 8);
        ForwardTrace trace;
        (void)full.forward(clip, zero_flows(clip.frame_shape()), &trace);
        REQUIRE(trace.frames.size() == 3);
        for (const auto& frame : trace.frames) {
            REQUIRE(frame.size() == 2);
            for (const auto& rec : frame) {
                CHECK(rec.coefficient_node != nullptr);
                CHECK(rec.coefficient_node == rec.rotated_coefficient_node);
                CHECK(max_abs_diff(rotate90(rec.kernel), rec.rotated_kernel) <= 1e-12);
            }
        }
    }
}

TEST_CASE("preprocessing") {
    ModelConfig cfg;
    Model m(cfg, 9);
    const Var x = Var::constant(Tensor({1, 64, 64}, 0.5));
    const Tensor out = m.preprocess(0, x).value();
    CHECK(out.shape() == Shape{cfg.path_channels, 16, 16});
    const Tensor zeros = m.preprocess(1, Var::constant(Tensor({3, 64, 64}))).value();
    CHECK(zeros.all_finite());
    // zero input with zero biases stays zero
    CHECK(zeros.max_abs() == 0.0);
    cfg.downsample = 0.5;
    CHECK(Model(cfg, 9).preprocess(0, x).shape() == Shape{cfg.path_channels, 32, 32});
}

TEST_CASE("forward pass") {
    const VideoClip clip = random_clip(5, 16, 16, 10);
    const FlowProvider flows = zero_flows(clip.frame_shape());
    SUBCASE("shapes") {
        for (double ds : {1.0, 0.5, 0.25}) {
            ModelConfig cfg;
            cfg.downsample = ds;
            Model m(cfg, 11);
            const VideoClip out = m.infer(clip, flows);
            REQUIRE(out.length() == 5);
            for (std::size_t t = 0; t < 5; ++t) CHECK(out[t].shape() == clip[t].shape());
            CHECK(forward_video(m, clip, flows) == out);
        }
    }
    SUBCASE("zeroed final layer is the identity") {
        for (auto v : {Variant::ahfnet, Variant::identity_only, Variant::conv3d_direct}) {
            ModelConfig cfg;
            cfg.variant = v;
            Model m = build_variant(cfg, 12);
            m.zero_final_layer();
            CHECK(m.infer(clip, flows) == clip);
        }
    }
    SUBCASE("errors") {
        Model m(ModelConfig{}, 13);
        CHECK_THROWS_AS(m.infer(random_clip(2, 16, 16, 1), flows), DimensionError);
        CHECK_THROWS_AS(m.infer(random_clip(3, 18, 16, 1), zero_flows({1, 18, 16})), DimensionError);
    }
}

TEST_CASE("bidirectional symmetry with tied directions") {
    // extraction paths see an ordered window, so only the path-free network is time-symmetric
    ModelConfig cfg = testing::small_model_config();
    cfg.variant = Variant::identity_only;
    cfg.tie_directions = true;
    Model m(cfg, 14);
    // make the fuse layer symmetric in (forward, backward) so swapping states is a no-op
    Var fuse = m.parameters().get("up.fuse.weight");
    Tensor& w = fuse.mutable_value();
    const std::size_t cout = w.dim(0), c = cfg.channels;
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < c; ++i) w.at(o, c + i, 0, 0) = w.at(o, i, 0, 0);

    const std::size_t T = 5;
    const VideoClip clip = random_clip(T, 8, 8, 15);
    const PairFlows flows(T, 8, 8, 16);
    std::vector<Tensor> rev_frames(clip.frames().rbegin(), clip.frames().rend());
    const VideoClip out = m.infer(clip, flows.forward());
    const VideoClip rev = m.infer(VideoClip(rev_frames), flows.reversed());
    for (std::size_t t = 0; t < T; ++t) CHECK(max_abs_diff(out[t], rev[T - 1 - t]) <= 1e-6);
}

TEST_CASE("variants") {
    const VideoClip clip = random_clip(3, 16, 16, 17);
    const FlowProvider flows = zero_flows(clip.frame_shape());
    SUBCASE("identity-only has no extraction paths") {
        ModelConfig cfg;
        cfg.variant = Variant::identity_only;
        Model m = build_variant(cfg, 18);
        ForwardTrace trace;
        (void)m.infer(clip, flows, &trace);
        CHECK(trace.frames[0].empty());
        for (const auto& p : m.parameters().all()) CHECK(p.name().rfind("path1", 0) != 0);
        ModelConfig zero_paths;
        zero_paths.n_paths = 0;
        CHECK(Model(zero_paths, 18).parameters().scalar_count() == m.parameters().scalar_count());
    }
    SUBCASE("ahfnet kernels are high-pass, direct prediction is not") {
        ModelConfig cfg;
        ForwardTrace t1, t2;
        (void)build_variant(cfg, 19).infer(clip, flows, &t1);
        for (const auto& f : t1.frames)
            for (const auto& r : f) {
                CHECK(verify_high_pass(r.kernel).high_pass);
                for (double a : r.coefficients.storage()) CHECK(a > 0.0);
            }
        cfg.variant = Variant::conv3d_direct;
        (void)build_variant(cfg, 19).infer(clip, flows, &t2);
        std::size_t not_high_pass = 0;
        for (const auto& f : t2.frames)
            for (const auto& r : f) not_high_pass += verify_high_pass(r.kernel).high_pass ? 0 : 1;
        CHECK(not_high_pass > 0);
        CHECK(t2.frames[0][0].coefficients.size() == 27);
    }
    SUBCASE("naive basis predicts non-negative kernel entries") {
        ModelConfig cfg;
        cfg.variant = Variant::naive_basis;
        ForwardTrace trace;
        (void)build_variant(cfg, 20).infer(clip, flows, &trace);
        const auto& r = trace.frames[1][0];
        CHECK(r.kernel.storage() == r.coefficients.storage());
        CHECK_FALSE(verify_high_pass(r.kernel).high_pass);
    }
}

TEST_CASE("MAC and parameter counts") {
    CHECK(conv_macs(1, 1, 3, 8, 8) == 576);
    CHECK(dense_params(4, 2) == 10);

    ModelConfig cfg;
    const MacReport rep = count_macs(cfg, 64, 64);
    auto layer = [&](const std::string& name) {
        auto it = std::find_if(rep.layers.begin(), rep.layers.end(), [&](const LayerCount& l) { return l.name == name; });
        REQUIRE(it != rep.layers.end());
        return *it;
    };
    // 3 stacked frames -> 8 channels, 3x3 stride 2: 32x32 outputs
    CHECK(layer("path1.gen.conv1").macs == 3ull * 8 * 9 * 32 * 32);
    CHECK(layer("path1.gen.conv1").params == 3ull * 8 * 9 + 8);
    // two 27-tap kernels on a 64x64 frame
    CHECK(layer("path2.filter").macs == 2ull * 27 * 64 * 64);
    CHECK(layer("rec_f.res0.conv1").macs == 16ull * 16 * 9 * 16 * 16);

    // the analytic parameter count matches the built model
    for (auto v : {Variant::ahfnet, Variant::conv3d_direct, Variant::naive_basis, Variant::identity_only}) {
        ModelConfig c;
        c.variant = v;
        CHECK(count_macs(c, 64, 64).params == build_variant(c, 0).parameters().scalar_count());
    }
    ModelConfig tied;
    tied.tie_directions = true;
    CHECK(count_macs(tied, 32, 32).params == Model(tied, 0).parameters().scalar_count());

    // fully convolutional: MACs scale with area
    ModelConfig fc;
    fc.variant = Variant::identity_only;
    const auto base = count_macs(fc, 32, 32).macs_per_frame;
    CHECK(count_macs(fc, 64, 32).macs_per_frame == 2 * base);
    CHECK(count_macs(fc, 64, 64).macs_per_frame == 4 * base);

    ModelConfig six;
    six.n_paths = 6;
    CHECK(count_macs(fc, 64, 64).macs_per_frame < count_macs(six, 64, 64).macs_per_frame);
    CHECK_THROWS_AS(count_macs(cfg, 62, 64), DimensionError);
}

TEST_CASE("block-matching flow") {
    Rng rng(21);
    Tensor a({1, 32, 32});
    for (auto& v : a.storage()) v = rng.uniform();
    CHECK(estimate_flow(a, a).max_abs() == 0.0);

    // b(x) = a(x - 2): content moved right, so a(p) = b(p + (2,0))
    Tensor b({1, 32, 32});
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) b.at(0, y, x) = a.at(0, y, x >= 2 ? x - 2 : 0);
    const Tensor f = estimate_flow(a, b);
    std::vector<double> us, vs;
    for (std::size_t i = 0; i < 32 * 32; ++i) {
        us.push_back(f[i]);
        vs.push_back(f[32 * 32 + i]);
    }
    std::nth_element(us.begin(), us.begin() + 512, us.end());
    std::nth_element(vs.begin(), vs.begin() + 512, vs.end());
    CHECK(us[512] == 2.0);
    CHECK(vs[512] == 0.0);

    // ground-truth passthrough
    const std::vector<Tensor> gt{Tensor({2, 4, 4}, 1.0), Tensor({2, 4, 4}, 2.0)};
    const FlowProvider p = ground_truth_flows(gt);
    CHECK(p(0, 1) == gt[0]);
    CHECK(p(1, 0) == gt[1] * -1.0);
    CHECK_THROWS_AS(p(0, 2), DimensionError);
    CHECK(downsample_flow(Tensor({2, 8, 8}, 4.0), 4) == Tensor({2, 2, 2}, 1.0));
}

TEST_CASE("checkpoint round trip") {
    ModelConfig cfg = testing::small_model_config();
    cfg.basis = BasisKind::random;
    cfg.basis_seed = 0x1234567890ull;
    Model m(cfg, 22);
    nn::TrainState st;
    st.step = 17;
    st.schedule.period = 300;
    for (const auto& p : m.parameters().all()) {
        st.m.push_back(p.value() * 0.5);
        st.v.push_back(p.value() * 0.25);
    }
    const auto path = std::filesystem::temp_directory_path() / "hipass_test_ckpt.vten";
    save_checkpoint(path, m, st);
    Checkpoint back = load_checkpoint(path);
    CHECK(back.model.config().basis_seed == cfg.basis_seed);
    CHECK(back.model.config().downsample == cfg.downsample);
    CHECK(back.state.step == 17);
    CHECK(back.state.schedule.period == 300);
    REQUIRE(back.state.m.size() == st.m.size());
    const auto& a = m.parameters().all();
    const auto& b = back.model.parameters().all();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name() == b[i].name());
        CHECK(a[i].value() == b[i].value());
        CHECK(back.state.m[i] == st.m[i]);
    }
    const VideoClip clip = random_clip(3, 8, 8, 23);
    CHECK(m.infer(clip, zero_flows(clip.frame_shape())) == back.model.infer(clip, zero_flows(clip.frame_shape())));
    std::filesystem::remove(path);
}
