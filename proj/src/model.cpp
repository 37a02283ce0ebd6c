#include "hipass/model.hpp"

#include <bit>
#include <cmath>

#include "hipass/container.hpp"
#include "hipass/rng.hpp"
#include "hipass/signal.hpp"

namespace hipass {

namespace {

constexpr double kSlope = 0.1;

nn::Var lrelu(const nn::Var& x) { return nn::leaky_relu(x, kSlope); }

std::size_t log2_exact(std::size_t f) { return static_cast<std::size_t>(std::countr_zero(f)); }

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

class Builder {
public:
    Builder(nn::ParameterSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

    // He-uniform for leaky ReLU; `gain` shrinks residual branches.
    detail::Conv conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride = 1,
                      double gain = 1.0) {
        const double fan_in = static_cast<double>(cin * k * k);
        const double bound = gain * std::sqrt(6.0 / ((1.0 + kSlope * kSlope) * fan_in));
        Tensor w({cout, cin, k, k});
        for (auto& v : w.storage()) v = rng_.uniform(-bound, bound);
        detail::Conv c;
        c.weight = params_.add(name + ".weight", std::move(w));
        c.bias = params_.add(name + ".bias", Tensor({cout}));
        c.stride = stride;
        c.pad = k / 2;
        return c;
    }

    detail::Linear linear(const std::string& name, std::size_t in, std::size_t out, double gain) {
        const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
        Tensor w({out, in});
        for (auto& v : w.storage()) v = rng_.uniform(-bound, bound);
        detail::Linear l;
        l.weight = params_.add(name + ".weight", std::move(w));
        l.bias = params_.add(name + ".bias", Tensor({out}));
        return l;
    }

private:
    nn::ParameterSet& params_;
    Rng rng_;
};

KernelBasis basis_for(const ModelConfig& cfg) {
    switch (cfg.variant) {
        case Variant::naive_basis:
        case Variant::conv3d_direct: return make_basis(BasisKind::naive);
        default: return make_basis(cfg.basis, cfg.basis_seed);
    }
}

}  // namespace

Variant parse_variant(const std::string& name) {
    if (name == "ahfnet") return Variant::ahfnet;
    if (name == "conv3d-direct") return Variant::conv3d_direct;
    if (name == "naive-basis") return Variant::naive_basis;
    if (name == "identity-only") return Variant::identity_only;
    throw UsageError("unknown variant '" + name + "' (ahfnet, conv3d-direct, naive-basis, identity-only)", "variant");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::ahfnet: return "ahfnet";
        case Variant::conv3d_direct: return "conv3d-direct";
        case Variant::naive_basis: return "naive-basis";
        case Variant::identity_only: return "identity-only";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (image_channels != 1 && image_channels != 3)
        throw PreconditionError("image_channels must be 1 or 3", "image_channels");
    if (channels == 0) throw PreconditionError("channels must be positive", "channels");
    if (path_channels == 0) throw PreconditionError("path_channels must be positive", "path_channels");
    if (gen_channels == 0) throw PreconditionError("gen_channels must be positive", "gen_channels");
    if (span == 0) throw PreconditionError("span must be at least 1", "span");
    if (variant == Variant::ahfnet && basis == BasisKind::naive)
        throw PreconditionError("the naive basis is the naive-basis variant, not a high-pass basis", "basis");
    (void)factor();
    if (variant != Variant::identity_only && variant != Variant::conv3d_direct && variant != Variant::naive_basis) {
        const KernelBasis b = make_basis(basis, basis_seed);
        if (b.extents()[0] != window())
            throw PreconditionError("basis temporal extent " + std::to_string(b.extents()[0]) +
                                        " does not match window 2l+1 = " + std::to_string(window()),
                                    "span");
    } else if (variant != Variant::identity_only && window() != 3) {
        throw PreconditionError("standard-basis variants use a 3x3x3 kernel (span 1)", "span");
    }
}

std::size_t ModelConfig::factor() const {
    if (downsample == 1.0) return 1;
    if (downsample == 0.5) return 2;
    if (downsample == 0.25) return 4;
    throw PreconditionError("downsample must be 1, 0.5 or 0.25", "downsample");
}

namespace detail {

nn::Var Conv::operator()(const nn::Var& x) const { return nn::conv2d(x, weight, bias, stride, pad); }
nn::Var Linear::operator()(const nn::Var& x) const { return nn::dense(x, weight, bias); }

}  // namespace detail

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Builder b(params_, seed);
    const std::size_t paths = cfg_.active_paths();
    const std::size_t cimg = cfg_.image_channels, pc = cfg_.path_channels, c = cfg_.channels;
    const std::size_t levels = log2_exact(cfg_.factor());

    if (paths > 0) {
        basis_ = basis_for(cfg_);
        basis_stacked_ = basis_.stacked();
        rotated_stacked_ = basis_.rotated().stacked();
    }
    const std::size_t m = basis_.size();
    for (std::size_t n = 0; n < paths; ++n) {
        const std::string pre = "path" + std::to_string(n + 1) + ".gen.";
        detail::CoefficientGenerator g;
        g.conv1 = b.conv(pre + "conv1", cimg * cfg_.window(), cfg_.gen_channels, 3, 2);
        g.conv2 = b.conv(pre + "conv2", cfg_.gen_channels, cfg_.gen_channels, 3, 2);
        g.head = b.linear(pre + "head", cfg_.gen_channels, m, 0.1);
        g.non_negative = cfg_.variant != Variant::conv3d_direct;
        generators_.push_back(std::move(g));
    }
    for (std::size_t n = 0; n <= paths; ++n) {
        const std::string pre = "path" + std::to_string(n) + ".pre.";
        detail::Preprocess p;
        p.head = b.conv(pre + "head", n == 0 ? cimg : 3 * cimg, pc, 3);
        auto block = [&](const std::string& name, bool down) {
            detail::DenseBlock d;
            d.down = down;
            if (down) d.reduce = b.conv(name + ".reduce", 4 * pc, pc, 1);
            d.conv1 = b.conv(name + ".conv1", pc, pc, 3);
            d.conv2 = b.conv(name + ".conv2", 2 * pc, pc, 3, 1, 0.1);
            return d;
        };
        p.block1 = block(pre + "block1", levels >= 1);
        p.block2 = block(pre + "block2", levels >= 2);
        preprocess_.push_back(std::move(p));
    }
    auto recurrent = [&](const std::string& pre) {
        detail::Recurrent r;
        r.fuse = b.conv(pre + ".fuse", (paths + 1) * pc + c, c, 1);
        r.head = b.conv(pre + ".head", c, c, 3);
        for (std::size_t i = 0; i < cfg_.res_blocks; ++i) {
            const std::string name = pre + ".res" + std::to_string(i);
            detail::Conv a = b.conv(name + ".conv1", c, c, 3);
            detail::Conv z = b.conv(name + ".conv2", c, c, 3, 1, 0.1);
            r.blocks.emplace_back(std::move(a), std::move(z));
        }
        return r;
    };
    rec_forward_ = recurrent(cfg_.tie_directions ? "rec" : "rec_f");
    rec_backward_ = cfg_.tie_directions ? rec_forward_ : recurrent("rec_b");

    up_.fuse = b.conv("up.fuse", 2 * c, c, 1);
    for (std::size_t s = 0; s + 1 < levels; ++s) up_.stages.push_back(b.conv("up.stage" + std::to_string(s), c, 4 * c, 3));
    const std::size_t out_ch = levels == 0 ? cimg : 4 * cimg;
    up_.stages.push_back(b.conv("up.final", c, out_ch, 3, 1, 0.1));
}

Tensor Model::window(const VideoClip& clip, std::size_t t) const {
    const Shape& fs = clip.frame_shape();
    const std::size_t c = fs[0], h = fs[1], w = fs[2], tk = cfg_.window();
    const auto last = static_cast<std::ptrdiff_t>(clip.length()) - 1;
    Tensor out({c, tk, h, w});
    for (std::size_t tau = 0; tau < tk; ++tau) {
        const auto src = std::clamp<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(t + tau) - static_cast<std::ptrdiff_t>(cfg_.span), 0, last);
        const Tensor& f = clip[static_cast<std::size_t>(src)];
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(f.data().begin() + static_cast<std::ptrdiff_t>(ch * h * w), h * w,
                        out.data().begin() + static_cast<std::ptrdiff_t>((ch * tk + tau) * h * w));
    }
    return out;
}

nn::Var Model::coefficients(std::size_t path, const nn::Var& window) const {
    const auto& g = generators_.at(path);
    const Shape& s = window.shape();
    nn::Var x = nn::reshape(window, {s[0] * s[1], s[2], s[3]});
    x = lrelu(g.conv1(x));
    x = lrelu(g.conv2(x));
    nn::Var a = g.head(nn::global_avg_pool(x));
    return g.non_negative ? nn::softplus(a) : a;
}

ExtractionOutput Model::extract(std::size_t path, const nn::Var& window) const {
    ExtractionOutput out;
    out.coefficients = coefficients(path, window);
    out.kernel = nn::combine(out.coefficients, basis_stacked_);
    out.rotated_kernel = nn::combine(out.coefficients, rotated_stacked_);
    out.h = nn::conv3d_temporal(window, out.kernel);
    out.h_rot = nn::conv3d_temporal(window, out.rotated_kernel);
    out.combined = nn::add(nn::abs(out.h), nn::abs(out.h_rot));
    return out;
}

nn::Var Model::preprocess(std::size_t path, const nn::Var& features) const {
    const auto& p = preprocess_.at(path);
    nn::Var x = lrelu(p.head(features));
    for (const auto* blk : {&p.block1, &p.block2}) {
        nn::Var y = blk->down ? blk->reduce(nn::pixel_unshuffle(x, 2)) : x;
        nn::Var d1 = lrelu(blk->conv1(y));
        x = nn::add(y, blk->conv2(nn::concat({y, d1})));
    }
    return x;
}

nn::Var Model::recurrent(bool backward_dir, const nn::Var& features) const {
    const auto& r = backward_dir ? rec_backward_ : rec_forward_;
    nn::Var x = lrelu(r.fuse(features));
    x = lrelu(r.head(x));
    for (const auto& [a, z] : r.blocks) x = nn::add(x, z(lrelu(a(x))));
    return x;
}

nn::Var Model::upsample(const nn::Var& forward_state, const nn::Var& backward_state) const {
    nn::Var x = lrelu(up_.fuse(nn::concat({forward_state, backward_state})));
    const std::size_t levels = log2_exact(cfg_.factor());
    for (std::size_t s = 0; s < up_.stages.size(); ++s) {
        x = up_.stages[s](x);
        if (levels > 0) x = nn::pixel_shuffle(x, 2);
        if (s + 1 < up_.stages.size()) x = lrelu(x);
    }
    return x;
}

std::vector<nn::Var> Model::forward(const VideoClip& clip, const FlowProvider& flows, ForwardTrace* trace) const {
    if (clip.length() < cfg_.window())
        throw DimensionError("clip has " + std::to_string(clip.length()) + " frames, the model needs at least " +
                                 std::to_string(cfg_.window()),
                             "clip");
    const Shape& fs = clip.frame_shape();
    if (fs[0] != cfg_.image_channels)
        throw DimensionError("model expects " + std::to_string(cfg_.image_channels) + " channel frames, got " +
                                 std::to_string(fs[0]),
                             "clip");
    const std::size_t f = cfg_.factor();
    if (fs[1] % f != 0 || fs[2] % f != 0)
        throw DimensionError("frame extents " + shape_string(fs) + " not divisible by " + std::to_string(f), "clip");
    const std::size_t T = clip.length(), paths = cfg_.active_paths();
    const Shape state_shape{cfg_.channels, fs[1] / f, fs[2] / f};

    if (trace) trace->frames.assign(T, {});
    std::vector<nn::Var> inputs(T), feats(T);
    for (std::size_t t = 0; t < T; ++t) {
        inputs[t] = nn::Var::constant(clip[t]);
        std::vector<nn::Var> parts{preprocess(0, inputs[t])};
        if (paths > 0) {
            const nn::Var win = nn::Var::constant(window(clip, t));
            for (std::size_t n = 0; n < paths; ++n) {
                const ExtractionOutput e = extract(n, win);
                parts.push_back(preprocess(n + 1, nn::concat({e.h, e.h_rot, e.combined})));
                if (trace) {
                    ForwardTrace::PathRecord rec;
                    rec.coefficients = e.coefficients.value();
                    rec.kernel = e.kernel.value();
                    rec.rotated_kernel = e.rotated_kernel.value();
                    rec.coefficient_node = e.kernel.node()->inputs.empty() ? nullptr : e.kernel.node()->inputs[0].get();
                    rec.rotated_coefficient_node =
                        e.rotated_kernel.node()->inputs.empty() ? nullptr : e.rotated_kernel.node()->inputs[0].get();
                    trace->frames[t].push_back(std::move(rec));
                }
            }
        }
        feats[t] = nn::concat(parts);
    }

    auto run = [&](bool backward_dir) {
        std::vector<nn::Var> states(T);
        nn::Var prev;
        for (std::size_t k = 0; k < T; ++k) {
            const std::size_t t = backward_dir ? T - 1 - k : k;
            nn::Var aligned;
            if (k == 0) {
                aligned = nn::Var::constant(Tensor(state_shape));
            } else {
                const std::size_t p = backward_dir ? t + 1 : t - 1;
                aligned = nn::bilinear_warp_stopgrad(prev, downsample_flow(flows(t, p), f));
            }
            prev = recurrent(backward_dir, nn::concat({feats[t], aligned}));
            states[t] = prev;
        }
        return states;
    };
    const auto fwd = run(false);
    const auto bwd = run(true);

    std::vector<nn::Var> out(T);
    for (std::size_t t = 0; t < T; ++t) out[t] = nn::add(inputs[t], upsample(fwd[t], bwd[t]));
    return out;
}

VideoClip Model::infer(const VideoClip& clip, const FlowProvider& flows, ForwardTrace* trace) const {
    nn::NoGradGuard guard;
    const auto out = forward(clip, flows, trace);
    std::vector<Tensor> frames;
    frames.reserve(out.size());
    for (const auto& v : out) frames.push_back(v.value());
    return VideoClip(std::move(frames), clip.frame_rate());
}

void Model::zero_final_layer() {
    const auto& fin = up_.stages.back();
    for (auto p : {fin.weight, fin.bias}) {
        for (auto& v : p.mutable_value().storage()) v = 0.0;
    }
}

VideoClip forward_video(const Model& model, const VideoClip& clip, const FlowProvider& flows) {
    return model.infer(clip, flows);
}

Model build_variant(const ModelConfig& cfg, std::uint64_t seed) { return Model(cfg, seed); }

std::uint64_t conv_macs(std::size_t cin, std::size_t cout, std::size_t k, std::size_t hout, std::size_t wout) {
    return static_cast<std::uint64_t>(cin) * cout * k * k * hout * wout;
}

std::uint64_t dense_params(std::size_t in, std::size_t out) { return static_cast<std::uint64_t>(in) * out + out; }

MacReport count_macs(const ModelConfig& cfg, std::size_t height, std::size_t width) {
    cfg.validate();
    const std::size_t f = cfg.factor();
    if (height == 0 || width == 0 || height % f != 0 || width % f != 0)
        throw DimensionError("frame extents must be positive multiples of " + std::to_string(f), "height");
    MacReport rep;
    auto add = [&](const std::string& name, std::uint64_t macs, std::uint64_t params) {
        rep.layers.push_back({name, macs, params});
        rep.macs_per_frame += macs;
        rep.params += params;
    };
    // Same-padded (or strided) KxK convolution with bias.
    auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, std::size_t h,
                    std::size_t w, std::size_t stride = 1) {
        const std::size_t oh = conv_out(h, k, stride, k / 2), ow = conv_out(w, k, stride, k / 2);
        add(name, conv_macs(cin, cout, k, oh, ow), static_cast<std::uint64_t>(cin) * cout * k * k + cout);
        return std::pair{oh, ow};
    };

    const std::size_t paths = cfg.active_paths(), cimg = cfg.image_channels, pc = cfg.path_channels,
                      c = cfg.channels, levels = log2_exact(f);
    const std::size_t m = paths == 0                                       ? 0
                          : cfg.variant == Variant::ahfnet                 ? make_basis(cfg.basis, cfg.basis_seed).size()
                                                                           : 27;
    const std::size_t ksize = 9 * cfg.window();

    for (std::size_t n = 0; n < paths; ++n) {
        const std::string pre = "path" + std::to_string(n + 1);
        auto [h1, w1] = conv(pre + ".gen.conv1", cimg * cfg.window(), cfg.gen_channels, 3, height, width, 2);
        conv(pre + ".gen.conv2", cfg.gen_channels, cfg.gen_channels, 3, h1, w1, 2);
        add(pre + ".gen.head", static_cast<std::uint64_t>(cfg.gen_channels) * m, dense_params(cfg.gen_channels, m));
        add(pre + ".combine", 2 * static_cast<std::uint64_t>(m) * ksize, 0);
        add(pre + ".filter", 2 * static_cast<std::uint64_t>(ksize) * cimg * height * width, 0);
    }
    for (std::size_t n = 0; n <= paths; ++n) {
        const std::string pre = "path" + std::to_string(n) + ".pre";
        std::size_t h = height, w = width;
        conv(pre + ".head", n == 0 ? cimg : 3 * cimg, pc, 3, h, w);
        for (std::size_t blk = 1; blk <= 2; ++blk) {
            const std::string name = pre + ".block" + std::to_string(blk);
            if (levels >= blk) {
                h /= 2;
                w /= 2;
                conv(name + ".reduce", 4 * pc, pc, 1, h, w);
            }
            conv(name + ".conv1", pc, pc, 3, h, w);
            conv(name + ".conv2", 2 * pc, pc, 3, h, w);
        }
    }
    const std::size_t rh = height / f, rw = width / f;
    const std::size_t directions = 2;
    for (std::size_t d = 0; d < directions; ++d) {
        const std::string pre = d == 0 ? "rec_f" : "rec_b";
        const std::size_t before = rep.params;
        conv(pre + ".fuse", (paths + 1) * pc + c, c, 1, rh, rw);
        conv(pre + ".head", c, c, 3, rh, rw);
        for (std::size_t i = 0; i < cfg.res_blocks; ++i) {
            conv(pre + ".res" + std::to_string(i) + ".conv1", c, c, 3, rh, rw);
            conv(pre + ".res" + std::to_string(i) + ".conv2", c, c, 3, rh, rw);
        }
        // Tied directions share one parameter set but both run per frame.
        if (cfg.tie_directions && d == 1) rep.params = before;
    }
    conv("up.fuse", 2 * c, c, 1, rh, rw);
    std::size_t uh = rh, uw = rw;
    for (std::size_t s = 0; s + 1 < levels; ++s) {
        conv("up.stage" + std::to_string(s), c, 4 * c, 3, uh, uw);
        uh *= 2;
        uw *= 2;
    }
    conv("up.final", c, levels == 0 ? cimg : 4 * cimg, 3, uh, uw);
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Tensor encode_config(const ModelConfig& cfg) {
    return Tensor({13}, std::vector<double>{
                            double(cfg.n_paths), double(cfg.span), double(cfg.image_channels), double(cfg.channels),
                            double(cfg.path_channels), double(cfg.gen_channels), double(cfg.res_blocks), cfg.downsample,
                            double(static_cast<int>(cfg.basis)), double(cfg.basis_seed >> 32),
                            double(cfg.basis_seed & 0xffffffffu), double(static_cast<int>(cfg.variant)),
                            cfg.tie_directions ? 1.0 : 0.0});
}

ModelConfig decode_config(const Tensor& t) {
    if (t.size() != 13) throw FormatError("model config record has " + std::to_string(t.size()) + " fields", "__model_config__");
    auto u = [&](std::size_t i) { return static_cast<std::size_t>(t[i]); };
    ModelConfig cfg;
    cfg.n_paths = u(0);
    cfg.span = u(1);
    cfg.image_channels = u(2);
    cfg.channels = u(3);
    cfg.path_channels = u(4);
    cfg.gen_channels = u(5);
    cfg.res_blocks = u(6);
    cfg.downsample = t[7];
    if (t[8] < 0 || t[8] > static_cast<double>(BasisKind::naive)) throw FormatError("bad basis code", "__model_config__");
    cfg.basis = static_cast<BasisKind>(u(8));
    cfg.basis_seed = (static_cast<std::uint64_t>(u(9)) << 32) | static_cast<std::uint64_t>(u(10));
    if (t[11] < 0 || t[11] > static_cast<double>(Variant::identity_only))
        throw FormatError("bad variant code", "__model_config__");
    cfg.variant = static_cast<Variant>(u(11));
    cfg.tie_directions = t[12] != 0.0;
    return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nn::TrainState& state) {
    std::vector<NamedTensor> recs;
    recs.push_back({"__model_config__", encode_config(model.config()), DType::f64});
    const auto& s = state;
    recs.push_back({"__train_state__",
                    Tensor({8}, std::vector<double>{double(s.step), s.learning_rate, s.schedule.initial_lr,
                                                    s.schedule.min_lr, double(s.schedule.period), s.adam.beta1,
                                                    s.adam.beta2, s.adam.eps}),
                    DType::f64});
    const auto& ps = model.parameters().all();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        recs.push_back({ps[i].name(), ps[i].value(), DType::f64});
        if (state.m.size() == ps.size()) {
            recs.push_back({"__adam_m__/" + ps[i].name(), state.m[i], DType::f64});
            recs.push_back({"__adam_v__/" + ps[i].name(), state.v[i], DType::f64});
        }
    }
    write_container(path, recs);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto recs = read_container(path);
    Model model(decode_config(find_record(recs, "__model_config__")));
    nn::TrainState state;
    const Tensor& ts = find_record(recs, "__train_state__");
    if (ts.size() != 8) throw FormatError("train state record has " + std::to_string(ts.size()) + " fields", "__train_state__");
    state.step = static_cast<std::size_t>(ts[0]);
    state.learning_rate = ts[1];
    state.schedule = {ts[2], ts[3], static_cast<std::size_t>(ts[4])};
    state.adam = {ts[5], ts[6], ts[7]};
    bool have_moments = true;
    for (auto p : model.parameters().all()) {
        const Tensor& v = find_record(recs, p.name());
        if (v.shape() != p.shape())
            throw FormatError("parameter " + p.name() + " has shape " + shape_string(v.shape()) + ", expected " +
                                  shape_string(p.shape()),
                              p.name());
        p.mutable_value() = v;
        const NamedTensor* m = find_record_or_null(recs, "__adam_m__/" + p.name());
        const NamedTensor* s = find_record_or_null(recs, "__adam_v__/" + p.name());
        if (m && s) {
            state.m.push_back(m->tensor);
            state.v.push_back(s->tensor);
        } else {
            have_moments = false;
        }
    }
    if (!have_moments) {
        state.m.clear();
        state.v.clear();
    }
    return {std::move(model), std::move(state)};
}

}  // namespace hipass
