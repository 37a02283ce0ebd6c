#include "hipass/train.hpp"

#include <cmath>
#include <sstream>

#include "hipass/metrics.hpp"
#include "hipass/rng.hpp"

namespace hipass {

namespace {

// Dihedral transform of a [C,H,W] tensor; see transform_clip.
Tensor transform_frame(const Tensor& in, unsigned code) {
    const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const bool mx = code & 1u, my = code & 2u, tr = code & 4u;
    const std::size_t oh = tr ? w : h, ow = tr ? h : w;
    Tensor out({c, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t xx = mx ? w - 1 - x : x, yy = my ? h - 1 - y : y;
                const double v = in.at(ch, y, x);
                if (tr)
                    out.at(ch, xx, yy) = v;
                else
                    out.at(ch, yy, xx) = v;
            }
    return out;
}

Tensor transform_flow(const Tensor& flow, unsigned code) {
    Tensor f = transform_frame(flow, code);
    const std::size_t n = f.dim(1) * f.dim(2);
    auto u = f.data().subspan(0, n), v = f.data().subspan(n, n);
    if (code & 1u)
        for (auto& x : u) x = -x;
    if (code & 2u)
        for (auto& x : v) x = -x;
    if (code & 4u) std::swap_ranges(u.begin(), u.end(), v.begin());
    return f;
}

Tensor crop(const Tensor& in, std::size_t y0, std::size_t x0, std::size_t ph, std::size_t pw) {
    const std::size_t c = in.dim(0);
    Tensor out({c, ph, pw});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < ph; ++y)
            for (std::size_t x = 0; x < pw; ++x) out.at(ch, y, x) = in.at(ch, y0 + y, x0 + x);
    return out;
}

FlowProvider flows_for(const VideoClip& blurry, const std::vector<Tensor>& flow, bool ground_truth) {
    if (ground_truth && !flow.empty()) return ground_truth_flows(flow);
    return block_matching_flows(blurry);
}

}  // namespace

void TrainConfig::validate() const {
    if (iterations == 0) throw PreconditionError("iterations must be positive", "iterations");
    if (batch == 0) throw PreconditionError("batch must be positive", "batch");
    if (sequence < 2) throw PreconditionError("sequence must hold at least 2 frames", "sequence");
    if (patch == 0) throw PreconditionError("patch must be positive", "patch");
    if (!(charbonnier_eps > 0.0)) throw PreconditionError("charbonnier eps must be positive", "charbonnier_eps");
}

TrainClip transform_clip(const TrainClip& clip, unsigned code) {
    TrainClip out;
    for (const auto& f : clip.blurry.frames()) out.blurry.push_back(transform_frame(f, code));
    for (const auto& f : clip.sharp.frames()) out.sharp.push_back(transform_frame(f, code));
    for (const auto& f : clip.flow) out.flow.push_back(transform_flow(f, code));
    return out;
}

TrainClip sample_clip(const DatasetSample& sample, const TrainConfig& cfg, Rng& rng) {
    const std::size_t T = sample.blurry.length();
    const std::size_t len = std::min(cfg.sequence, T);
    const std::size_t start = rng.index(T - len + 1);
    const Shape& fs = sample.blurry.frame_shape();
    const std::size_t ph = std::min(cfg.patch, fs[1]), pw = std::min(cfg.patch, fs[2]);
    const std::size_t y0 = rng.index(fs[1] - ph + 1), x0 = rng.index(fs[2] - pw + 1);

    TrainClip clip;
    for (std::size_t t = start; t < start + len; ++t) {
        clip.blurry.push_back(crop(sample.blurry[t], y0, x0, ph, pw));
        clip.sharp.push_back(crop(sample.sharp[t], y0, x0, ph, pw));
    }
    for (std::size_t t = start; t + 1 < start + len && t < sample.flow_gt.size(); ++t)
        clip.flow.push_back(crop(sample.flow_gt[t], y0, x0, ph, pw));
    if (cfg.augment) {
        const auto code = static_cast<unsigned>(rng.index(8));
        if (code != 0) clip = transform_clip(clip, code);
    }
    return clip;
}

nn::Var clip_loss(const Model& model, const TrainClip& clip, const TrainConfig& cfg) {
    const auto outputs = model.forward(clip.blurry, flows_for(clip.blurry, clip.flow, cfg.ground_truth_flow));
    nn::Var total;
    for (std::size_t t = 0; t < outputs.size(); ++t) {
        nn::Var l = nn::charbonnier_loss(outputs[t], clip.sharp[t], cfg.charbonnier_eps);
        total = total ? nn::add(total, l) : l;
    }
    return nn::scale(total, 1.0 / static_cast<double>(outputs.size()));
}

double evaluate_psnr(const Model& model, const std::vector<DatasetSample>& samples, bool ground_truth_flow) {
    if (samples.empty()) throw PreconditionError("no validation samples", "val_set");
    double s = 0.0;
    for (const auto& sample : samples) {
        const VideoClip out = model.infer(sample.blurry, flows_for(sample.blurry, sample.flow_gt, ground_truth_flow));
        s += psnr(out, sample.sharp);
    }
    return s / static_cast<double>(samples.size());
}

double blurry_psnr(const std::vector<DatasetSample>& samples) {
    if (samples.empty()) throw PreconditionError("no validation samples", "val_set");
    double s = 0.0;
    for (const auto& sample : samples) s += psnr(sample.blurry, sample.sharp);
    return s / static_cast<double>(samples.size());
}

TrainResult train(Model& model, nn::TrainState& state, const std::vector<DatasetSample>& train_set,
                  const std::vector<DatasetSample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const TrainLogRecord&)>& on_log) {
    cfg.validate();
    if (train_set.empty()) throw PreconditionError("training set is empty", "dataset");
    for (const auto& s : train_set) s.validate();

    TrainResult result;
    if (!val_set.empty()) result.blurry_psnr = blurry_psnr(val_set);
    Rng rng(cfg.seed);
    const bool check_kernels = cfg.kernel_check_every > 0 && model.config().active_paths() > 0;

    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        model.parameters().zero_grad();
        std::vector<TrainClip> batch;
        for (std::size_t b = 0; b < cfg.batch; ++b) batch.push_back(sample_clip(train_set[rng.index(train_set.size())], cfg, rng));

        nn::Var total;
        for (const auto& clip : batch) {
            nn::Var l = clip_loss(model, clip, cfg);
            total = total ? nn::add(total, l) : l;
        }
        total = nn::scale(total, 1.0 / static_cast<double>(batch.size()));
        const double loss = total.value()[0];
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "loss became non-finite at iteration " << it << " (lr " << state.learning_rate;
            if (!result.log.empty()) msg << ", previous loss " << result.log.back().loss;
            msg << ")";
            throw DivergenceError(msg.str(), "loss");
        }
        nn::backward(total);
        for (const auto& p : model.parameters().all())
            if (!p.node()->grad.empty() && !p.node()->grad.all_finite())
                throw DivergenceError("non-finite gradient in " + p.name() + " at iteration " + std::to_string(it),
                                      p.name());
        nn::adam_step(state, model.parameters());

        if (check_kernels && (it % cfg.kernel_check_every == 0 || it == 1)) {
            ForwardTrace trace;
            model.infer(batch.front().blurry, flows_for(batch.front().blurry, batch.front().flow, cfg.ground_truth_flow),
                        &trace);
            for (const auto& frame : trace.frames)
                for (const auto& rec : frame) {
                    for (const Tensor* k : {&rec.kernel, &rec.rotated_kernel}) {
                        ++result.kernels_checked;
                        if (verify_high_pass(*k).high_pass) ++result.kernels_high_pass;
                    }
                }
        }

        TrainLogRecord rec{it, loss, state.learning_rate, std::nullopt};
        const bool validate_now = !val_set.empty() &&
                                  ((cfg.val_every > 0 && it % cfg.val_every == 0) || it == cfg.iterations);
        if (validate_now) {
            rec.val_psnr = evaluate_psnr(model, val_set, cfg.ground_truth_flow);
            result.final_psnr = *rec.val_psnr;
        }
        result.log.push_back(rec);
        if (on_log) on_log(rec);
    }
    return result;
}

}  // namespace hipass
