// hipass: synthesis, baselines, training, inference and analysis from the
// command line. Logs go to stderr; results are written under --out-dir.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "hipass/blur.hpp"
#include "hipass/container.hpp"
#include "hipass/flow.hpp"
#include "hipass/kernels.hpp"
#include "hipass/metrics.hpp"
#include "hipass/model.hpp"
#include "hipass/rng.hpp"
#include "hipass/sharpen.hpp"
#include "hipass/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hipass;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    std::string out_dir = ".";
};

void log(const std::string& msg) { std::cerr << msg << '\n'; }

fs::path out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    return fs::path(c.out_dir) / name;
}

void require_file(const std::string& path, const std::string& field) {
    if (path.empty()) throw UsageError("missing required path", field);
    if (!fs::exists(path)) throw UsageError("no such file: " + path, field);
}

// "file.vten[:record]", a directory of PGM/PPM frames, or one PGM/PPM frame.
struct ClipSource {
    std::string path;
    std::string record;
};

ClipSource split_source(const std::string& spec) {
    const auto colon = spec.rfind(':');
    if (colon != std::string::npos && colon > 1 && !fs::exists(spec)) return {spec.substr(0, colon), spec.substr(colon + 1)};
    return {spec, {}};
}

bool is_pnm(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".pgm" || ext == ".ppm";
}

VideoClip load_clip(const std::string& spec, const std::string& field) {
    const auto src = split_source(spec);
    require_file(src.path, field);
    if (fs::is_directory(src.path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(src.path))
            if (is_pnm(e.path())) files.push_back(e.path());
        if (files.empty()) throw UsageError("no PGM/PPM frames in " + src.path, field);
        std::sort(files.begin(), files.end());
        VideoClip clip;
        for (const auto& f : files) clip.push_back(read_pnm(f));
        return clip;
    }
    if (is_pnm(src.path)) return VideoClip({read_pnm(src.path)});
    const auto recs = read_container(fs::path(src.path));
    if (!src.record.empty()) return VideoClip::from_stacked(find_record(recs, src.record));
    if (const auto* r = find_record_or_null(recs, "clip")) return VideoClip::from_stacked(r->tensor);
    if (recs.size() == 1) return VideoClip::from_stacked(recs.front().tensor);
    throw FormatError("container holds no 'clip' record; name one with path:record", field);
}

// Ground-truth flow stored next to a clip: a "flow" record, or
// "<prefix>/flow" for "<prefix>/blurry" records of a dataset.
std::optional<std::vector<Tensor>> sibling_flow(const std::string& spec) {
    const auto src = split_source(spec);
    if (fs::is_directory(src.path) || is_pnm(src.path)) return std::nullopt;
    const auto recs = read_container(fs::path(src.path));
    std::string name = "flow";
    if (const auto slash = src.record.rfind('/'); slash != std::string::npos) name = src.record.substr(0, slash) + "/flow";
    const auto* r = find_record_or_null(recs, name);
    if (!r) return std::nullopt;
    require_rank(r->tensor, 4, "flow");
    std::vector<Tensor> flows;
    for (std::size_t t = 0; t < r->tensor.dim(0); ++t) flows.push_back(r->tensor.slice(t));
    return flows;
}

void save_clip(const fs::path& path, const VideoClip& clip, const std::vector<Tensor>& flow = {}) {
    std::vector<NamedTensor> recs{{"clip", clip.stacked(), DType::f64}};
    if (!flow.empty()) {
        const Shape& s = flow.front().shape();
        Tensor f({flow.size(), s[0], s[1], s[2]});
        for (std::size_t t = 0; t < flow.size(); ++t) f.set_slice(t, flow[t]);
        recs.push_back({"flow", std::move(f), DType::f64});
    }
    write_container(path, recs);
}

void save_frames(const Common& c, const std::string& stem, const VideoClip& clip) {
    for (std::size_t t = 0; t < clip.length(); ++t) {
        std::ostringstream name;
        name << stem << '_' << std::setw(3) << std::setfill('0') << t << (clip[t].dim(0) == 3 ? ".ppm" : ".pgm");
        write_pnm(out_path(c, name.str()), clamp(clip[t], 0.0, 1.0));
    }
}

BlurConfig blur_config(std::size_t b, std::size_t stride, const std::string& crf, double gamma) {
    BlurConfig cfg;
    cfg.accumulated = b;
    cfg.stride = stride;
    if (crf == "identity")
        cfg.crf = Crf::identity;
    else if (crf == "gamma")
        cfg.crf = Crf::gamma;
    else
        throw UsageError("unknown CRF '" + crf + "' (identity, gamma)", "crf");
    cfg.gamma = gamma;
    cfg.validate();
    return cfg;
}

std::string option_key(const CLI::Option* o) {
    return o->get_single_name();
}

// Effective settings of the selected subcommand, echoed verbatim to stderr.
json effective_config(CLI::App* sub) {
    json j;
    for (const auto* o : sub->get_options()) {
        const std::string key = option_key(o);
        if (key.empty() || key == "help") continue;
        const auto results = o->results();
        j[sub->get_name() + "." + key] = results.empty() ? o->get_default_str() : results.back();
    }
    return j;
}

// Turns flat namespaced JSON ("train.iterations": 500) into flags for the
// selected subcommand. Keys belonging to other commands are skipped.
std::vector<std::string> config_arguments(const std::string& path, CLI::App& app, const std::string& command) {
    require_file(path, "config");
    std::ifstream in(path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed config: ") + e.what(), "config");
    }
    if (!j.is_object()) throw FormatError("config must be a JSON object", "config");
    CLI::App* sub = app.get_subcommand(command);
    std::vector<std::string> args;
    for (const auto& [key, value] : j.items()) {
        const auto dot = key.rfind('.');
        std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
        std::replace(name.begin(), name.end(), '_', '-');
        const CLI::Option* opt = nullptr;
        for (const auto* o : sub->get_options())
            if (option_key(o) == name) opt = o;
        if (!opt) {
            bool known = false;
            for (const auto* other : app.get_subcommands({}))
                for (const auto* o : other->get_options())
                    if (option_key(o) == name) known = true;
            if (!known) throw FormatError("unknown config key '" + key + "'", key);
            continue;
        }
        std::string text;
        if (value.is_string())
            text = value.get<std::string>();
        else if (value.is_boolean())
            text = value.get<bool>() ? "true" : "false";
        else if (value.is_number())
            text = value.dump();
        else
            throw FormatError("config value must be a scalar", key);
        if (opt->get_type_size() == 0) {
            if (text == "true") args.push_back("--" + name);
        } else {
            args.push_back("--" + name + "=" + text);
        }
    }
    return args;
}

std::string error_line(const std::string& kind, const std::string& field, const std::string& message) {
    json j{{"error", kind}, {"field", field}, {"message", message}};
    return j.dump();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    SynthConfig cfg;
    std::size_t b = 5, stride = 5;
    std::string crf = "identity";
    double gamma = 2.2;
    std::size_t export_samples = 0;
};

void cmd_synth(const Common& c, SynthArgs a) {
    a.cfg.blur = blur_config(a.b, a.stride, a.crf, a.gamma);
    const auto t0 = std::chrono::steady_clock::now();
    const auto ds = generate_dataset(a.cfg, c.seed);
    const auto path = out_path(c, "dataset.vten");
    write_dataset(path, ds);
    for (std::size_t i = 0; i < std::min(a.export_samples, ds.size()); ++i) {
        const std::string stem = "sample" + std::to_string(i);
        save_clip(out_path(c, stem + "_blurry.vten"), ds[i].blurry, ds[i].flow_gt);
        save_clip(out_path(c, stem + "_sharp.vten"), ds[i].sharp);
        save_frames(c, stem + "_blurry", ds[i].blurry);
        save_frames(c, stem + "_sharp", ds[i].sharp);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log("synth: " + std::to_string(ds.size()) + " samples -> " + path.string() + " (" + std::to_string(secs) + " s)");
}

struct BlurArgs {
    std::string input;
    std::size_t b = 5, stride = 1;
    std::string crf = "identity";
    double gamma = 2.2;
    bool latents = false;
};

void cmd_blur(const Common& c, const BlurArgs& a) {
    const VideoClip sharp = load_clip(a.input, "input");
    const BlurConfig cfg = blur_config(a.b, a.stride, a.crf, a.gamma);
    const VideoClip blurry = accumulate_blur(sharp, cfg);
    save_clip(out_path(c, "blurry.vten"), blurry);
    save_frames(c, "blurry", blurry);
    if (a.latents) save_clip(out_path(c, "latents.vten"), centered_latents(sharp, cfg));
    log("blur: " + std::to_string(sharp.length()) + " sharp -> " + std::to_string(blurry.length()) + " blurry frames");
}

struct UnsharpArgs {
    std::string input;
    std::string kernel = "laplacian";
    double lambda = 1.0;
    bool no_clamp = false;
};

void cmd_unsharp(const Common& c, const UnsharpArgs& a) {
    const VideoClip clip = load_clip(a.input, "input");
    UnsharpConfig cfg;
    if (a.kernel == "laplacian") {
        cfg.kernel = negative_laplacian();
    } else {
        require_file(a.kernel, "kernel");
        std::ifstream in(a.kernel);
        const auto ks = read_kernels(in);
        if (ks.empty()) throw FormatError("kernel file holds no kernel", "kernel");
        const Tensor& k = ks.front();
        if (k.rank() == 3 && k.dim(0) != 1) throw DimensionError("unsharp masking needs a single-slice kernel", "kernel");
        cfg.kernel = k.rank() == 3 ? k.reshaped({k.dim(1), k.dim(2)}) : k;
    }
    cfg.lambda = a.lambda;
    cfg.clamp = !a.no_clamp;
    cfg.validate();
    VideoClip out;
    for (const auto& f : clip.frames()) out.push_back(unsharp_mask(f, cfg));
    save_clip(out_path(c, "unsharp.vten"), out);
    save_frames(c, "unsharp", out);
    log("unsharp: " + std::to_string(out.length()) + " frames, lambda " + std::to_string(a.lambda));
}

struct TrainArgs {
    std::string dataset;
    std::string resume;
    double val_fraction = 0.1;
    ModelConfig model;
    std::string variant = "ahfnet";
    std::string basis = "default";
    TrainConfig train;
    nn::ScheduleConfig schedule{2e-4, 1e-7, 0};
    std::string flow = "gt";
};

void cmd_train(const Common& c, TrainArgs a) {
    require_file(a.dataset, "dataset");
    const auto ds = read_dataset(a.dataset);
    if (ds.empty()) throw PreconditionError("dataset is empty", "dataset");
    if (!(a.val_fraction >= 0.0 && a.val_fraction < 1.0)) throw UsageError("val-fraction must be in [0,1)", "val-fraction");
    const auto n_val = std::min(ds.size() - 1, static_cast<std::size_t>(std::round(a.val_fraction * ds.size())));
    const std::vector<DatasetSample> train_set(ds.begin(), ds.end() - static_cast<std::ptrdiff_t>(n_val));
    const std::vector<DatasetSample> val_set(ds.end() - static_cast<std::ptrdiff_t>(n_val), ds.end());

    if (a.flow != "gt" && a.flow != "block") throw UsageError("flow must be gt or block", "flow");
    a.train.ground_truth_flow = a.flow == "gt";
    a.train.seed = c.seed;
    a.model.variant = parse_variant(a.variant);
    a.model.basis = parse_basis_kind(a.basis);
    a.model.image_channels = ds.front().blurry.frame_shape()[0];

    std::optional<Model> model;
    nn::TrainState state;
    if (!a.resume.empty()) {
        require_file(a.resume, "resume");
        auto ck = load_checkpoint(a.resume);
        model.emplace(std::move(ck.model));
        state = std::move(ck.state);
    } else {
        model.emplace(a.model, c.seed);
        if (a.schedule.period == 0) a.schedule.period = a.train.iterations;
        state.schedule = a.schedule;
    }
    const auto mac = count_macs(model->config(), ds.front().blurry.frame_shape()[1], ds.front().blurry.frame_shape()[2]);
    log("train: " + std::to_string(train_set.size()) + " train / " + std::to_string(val_set.size()) + " val samples, " +
        std::to_string(model->parameters().scalar_count()) + " parameters, " + std::to_string(mac.macs_per_frame) +
        " MACs/frame");

    std::ofstream jl(out_path(c, "train_log.jsonl"));
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(*model, state, train_set, val_set, a.train, [&](const TrainLogRecord& r) {
        json j{{"iter", r.iter}, {"loss", r.loss}, {"lr", r.lr}};
        if (r.val_psnr) j["val_psnr"] = *r.val_psnr;
        jl << j.dump() << '\n';
        if (r.val_psnr || r.iter % 100 == 0) log("iter " + j.dump());
    });
    save_checkpoint(out_path(c, "checkpoint.vten"), *model, state);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json summary{{"blurry_psnr", result.blurry_psnr},
                 {"final_psnr", result.final_psnr},
                 {"kernels_checked", result.kernels_checked},
                 {"kernels_high_pass", result.kernels_high_pass},
                 {"seconds", secs}};
    std::ofstream(out_path(c, "train_summary.json")) << summary.dump(2) << '\n';
    log("train: done " + summary.dump());
}

struct InferArgs {
    std::string checkpoint;
    std::string input;
    std::string flow = "auto";
};

void cmd_infer(const Common& c, const InferArgs& a) {
    require_file(a.checkpoint, "checkpoint");
    const auto ck = load_checkpoint(a.checkpoint);
    const VideoClip clip = load_clip(a.input, "input");
    FlowProvider flows;
    if (a.flow == "zero") {
        flows = zero_flows(clip.frame_shape());
    } else if (a.flow == "block") {
        flows = block_matching_flows(clip);
    } else if (a.flow == "auto" || a.flow == "gt") {
        const auto gt = sibling_flow(a.input);
        if (gt)
            flows = ground_truth_flows(*gt);
        else if (a.flow == "gt")
            throw FormatError("no ground-truth flow stored with the input clip", "flow");
        else
            flows = block_matching_flows(clip);
    } else {
        throw UsageError("flow must be auto, gt, block or zero", "flow");
    }
    const VideoClip out = ck.model.infer(clip, flows);
    save_clip(out_path(c, "deblurred.vten"), out);
    save_frames(c, "deblurred", out);
    log("infer: " + std::to_string(out.length()) + " frames -> " + out_path(c, "deblurred.vten").string());
}

struct EvalArgs {
    std::string output;
    std::string truth;
};

void cmd_eval(const Common& c, const EvalArgs& a) {
    const VideoClip out = load_clip(a.output, "output");
    const VideoClip gt = load_clip(a.truth, "truth");
    if (out.length() != gt.length()) throw DimensionError("clip lengths differ", "truth");
    std::ofstream jl(out_path(c, "eval.jsonl"));
    std::ostringstream table;
    table << std::fixed << std::setprecision(4) << "frame      psnr      ssim\n";
    for (std::size_t t = 0; t < out.length(); ++t) {
        const double p = psnr(out[t], gt[t]);
        const double s = ssim(out[t], gt[t]);
        jl << json{{"frame", t}, {"psnr", p}, {"ssim", s}}.dump() << '\n';
        table << std::setw(5) << t << std::setw(10) << p << std::setw(10) << s << '\n';
    }
    const double mp = psnr(out, gt), ms = ssim(out, gt);
    jl << json{{"frame", "mean"}, {"psnr", mp}, {"ssim", ms}}.dump() << '\n';
    table << " mean" << std::setw(10) << mp << std::setw(10) << ms << '\n';
    std::ofstream(out_path(c, "eval.txt")) << table.str();
    std::cerr << table.str();
}

struct VerifyArgs {
    std::string basis = "default";
    std::string kernel_file;
    std::size_t trials = 1000;
    double tolerance = 1e-9;
};

void cmd_verify_kernels(const Common& c, const VerifyArgs& a) {
    std::size_t passed = 0, total = 0;
    double worst_dc = 0.0;
    if (!a.kernel_file.empty()) {
        require_file(a.kernel_file, "kernel-file");
        std::ifstream in(a.kernel_file);
        for (const auto& k : read_kernels(in)) {
            const auto rep = verify_high_pass(k, a.tolerance);
            ++total;
            passed += rep.high_pass;
            worst_dc = std::max(worst_dc, std::abs(rep.dc_gain));
        }
    } else {
        const KernelBasis basis = make_basis(parse_basis_kind(a.basis), c.seed);
        Rng rng(c.seed);
        for (std::size_t i = 0; i < a.trials; ++i) {
            std::vector<double> alpha(basis.size());
            for (auto& v : alpha) v = rng.uniform(0.0, 2.0);
            const auto k = combine(basis, CoefficientVector(alpha));
            const auto rep = verify_high_pass(k.kernel.reshaped(basis.extents()), a.tolerance);
            ++total;
            passed += rep.high_pass;
            worst_dc = std::max(worst_dc, std::abs(rep.dc_gain));
        }
    }
    std::ostringstream line;
    line << passed << "/" << total << " high-pass (max |dc| " << std::scientific << std::setprecision(3) << worst_dc << ")";
    std::ofstream(out_path(c, "verify_kernels.txt")) << line.str() << '\n';
    log(line.str());
    if (passed != total) throw PreconditionError(line.str(), "kernels");
}

struct SpectrumArgs {
    std::string output;
    std::string reference;
    std::string truth;
    std::string label = "reference";
    bool dump = false;
};

void cmd_analyze_spectrum(const Common& c, const SpectrumArgs& a) {
    const VideoClip out = load_clip(a.output, "output");
    const VideoClip ref = load_clip(a.reference, "reference");
    const VideoClip gt = load_clip(a.truth, "truth");
    const SubbandReport rep = subband_mse(out, ref, gt, a.label);
    std::ofstream jl(out_path(c, "subband.jsonl"));
    std::ostringstream table;
    table << "band   lo       hi       relative_mse    output_mse      " << a.label << "_mse\n";
    for (std::size_t b = 0; b < kSubbands; ++b) {
        jl << json{{"band", b}, {"lo", rep.edges[b]}, {"hi", rep.edges[b + 1]}, {"relative_mse", rep.mse[b]},
                   {"output_mse", rep.absolute[b]}, {"reference_mse", rep.reference[b]}, {"reference", a.label}}
                  .dump()
           << '\n';
        table << std::setw(4) << b << std::fixed << std::setprecision(4) << std::setw(9) << rep.edges[b] << std::setw(9)
              << rep.edges[b + 1] << std::scientific << std::setprecision(6) << std::setw(16) << rep.mse[b]
              << std::setw(16) << rep.absolute[b] << std::setw(16) << rep.reference[b] << '\n';
    }
    std::ofstream(out_path(c, "subband.txt")) << table.str();
    std::cerr << table.str();
    if (a.dump) {
        spectrum_dump(out[0], out_path(c, "spectrum_output"));
        spectrum_dump(gt[0], out_path(c, "spectrum_truth"));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Video deblurring with adaptive high-pass kernel prediction"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        sub->add_option("--seed", common.seed, "Seed for all randomness");
        sub->add_option("--config", common.config, "Flat namespaced JSON config (flags override it)");
        sub->add_option("--out-dir", common.out_dir, "Directory for output files");
    };

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic blurry/sharp dataset");
    add_common(s);
    s->add_option("--samples", synth.cfg.samples, "Number of samples");
    s->add_option("--height", synth.cfg.height, "Frame height");
    s->add_option("--width", synth.cfg.width, "Frame width");
    s->add_option("--frames", synth.cfg.frames, "Blurry frames per sample");
    s->add_option("--elements", synth.cfg.elements, "Moving elements per scene");
    s->add_option("--max-speed", synth.cfg.max_speed, "Max speed per axis, pixels per sharp frame");
    s->add_option("--accumulated", synth.b, "Sharp frames averaged per blurry frame (B)");
    s->add_option("--stride", synth.stride, "Sharp frames between blurry frames");
    s->add_option("--crf", synth.crf, "Camera response: identity or gamma");
    s->add_option("--gamma", synth.gamma, "Gamma of the gamma CRF");
    s->add_option("--export-samples", synth.export_samples, "Also write this many samples as clips and frames");

    BlurArgs blur;
    auto* b = app.add_subcommand("blur", "Accumulate a sharp clip into blurry frames");
    add_common(b);
    b->add_option("--input", blur.input, "Sharp clip (file.vten[:record], PGM/PPM file or directory)");
    b->add_option("--accumulated", blur.b, "Sharp frames averaged per blurry frame (B)");
    b->add_option("--stride", blur.stride, "Sharp frames between blurry frames");
    b->add_option("--crf", blur.crf, "Camera response: identity or gamma");
    b->add_option("--gamma", blur.gamma, "Gamma of the gamma CRF");
    b->add_flag("--latents", blur.latents, "Also write the centred sharp latents");

    UnsharpArgs unsharp;
    auto* u = app.add_subcommand("unsharp", "Unsharp masking with a fixed high-pass kernel");
    add_common(u);
    u->add_option("--input", unsharp.input, "Input clip or frame");
    u->add_option("--kernel", unsharp.kernel, "'laplacian' or a kernel text file");
    u->add_option("--lambda", unsharp.lambda, "Sharpening strength");
    u->add_flag("--no-clamp", unsharp.no_clamp, "Do not clamp the result to [0,1]");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model on a synthetic dataset");
    add_common(t);
    t->add_option("--dataset", tr.dataset, "Dataset written by synth");
    t->add_option("--resume", tr.resume, "Checkpoint to continue from");
    t->add_option("--val-fraction", tr.val_fraction, "Trailing fraction of samples held out");
    t->add_option("--variant", tr.variant, "ahfnet, conv3d-direct, naive-basis or identity-only");
    t->add_option("--basis", tr.basis, "Basis family for ahfnet");
    t->add_option("--n-paths", tr.model.n_paths, "Adaptive extraction paths N");
    t->add_option("--span", tr.model.span, "Window span l");
    t->add_option("--channels", tr.model.channels, "Recurrent width");
    t->add_option("--path-channels", tr.model.path_channels, "Preprocessing width");
    t->add_option("--gen-channels", tr.model.gen_channels, "Coefficient generator width");
    t->add_option("--res-blocks", tr.model.res_blocks, "Residual blocks per recurrent module");
    t->add_option("--downsample", tr.model.downsample, "Preprocessing scale: 1, 0.5 or 0.25");
    t->add_flag("--tie-directions", tr.model.tie_directions, "Share forward/backward recurrent weights");
    t->add_option("--iterations", tr.train.iterations, "Training iterations");
    t->add_option("--batch", tr.train.batch, "Clips per iteration");
    t->add_option("--sequence", tr.train.sequence, "Frames per training clip");
    t->add_option("--patch", tr.train.patch, "Square crop side");
    t->add_option("--val-every", tr.train.val_every, "Validation interval (0: end only)");
    t->add_option("--kernel-check-every", tr.train.kernel_check_every, "High-pass check interval (0: never)");
    t->add_flag("!--no-augment", tr.train.augment, "Disable flip/transpose augmentation");
    t->add_option("--lr", tr.schedule.initial_lr, "Initial learning rate");
    t->add_option("--min-lr", tr.schedule.min_lr, "Minimum learning rate");
    t->add_option("--period", tr.schedule.period, "Cosine restart period (0: iterations)");
    t->add_option("--flow", tr.flow, "Alignment flow: gt or block");

    InferArgs inf;
    auto* i = app.add_subcommand("infer", "Deblur a clip with a trained checkpoint");
    add_common(i);
    i->add_option("--checkpoint", inf.checkpoint, "Checkpoint written by train");
    i->add_option("--input", inf.input, "Blurry clip");
    i->add_option("--flow", inf.flow, "auto, gt, block or zero");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "PSNR/SSIM of outputs against ground truth");
    add_common(e);
    e->add_option("--output", ev.output, "Restored clip");
    e->add_option("--truth", ev.truth, "Ground-truth clip");

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify-kernels", "Check that combined kernels are high-pass");
    add_common(v);
    v->add_option("--basis", ver.basis, "Basis family");
    v->add_option("--kernel-file", ver.kernel_file, "Verify the kernels of this file instead");
    v->add_option("--trials", ver.trials, "Random non-negative coefficient vectors");
    v->add_option("--tolerance", ver.tolerance, "Maximum |DC gain|");

    SpectrumArgs sp;
    auto* a = app.add_subcommand("analyze-spectrum", "Subband MSE relative to a reference variant");
    add_common(a);
    a->add_option("--output", sp.output, "Clip of the analysed variant");
    a->add_option("--reference", sp.reference, "Clip of the reference variant");
    a->add_option("--truth", sp.truth, "Ground-truth clip");
    a->add_option("--label", sp.label, "Name of the reference variant");
    a->add_flag("--dump-spectra", sp.dump, "Write spectra of the first frames");

    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().front();
        if (!common.config.empty()) {
            // Re-parse with the config values placed before the explicit flags.
            std::vector<std::string> args{sub->get_name()};
            auto extra = config_arguments(common.config, app, sub->get_name());
            args.insert(args.end(), extra.begin(), extra.end());
            for (int k = 2; k < argc; ++k) args.emplace_back(argv[k]);
            std::reverse(args.begin(), args.end());
            app.clear();
            app.parse(args);
        }
        std::cerr << "config " << effective_config(sub).dump() << '\n';

        const std::string name = sub->get_name();
        if (name == "synth") cmd_synth(common, synth);
        else if (name == "blur") cmd_blur(common, blur);
        else if (name == "unsharp") cmd_unsharp(common, unsharp);
        else if (name == "train") cmd_train(common, tr);
        else if (name == "infer") cmd_infer(common, inf);
        else if (name == "eval") cmd_eval(common, ev);
        else if (name == "verify-kernels") cmd_verify_kernels(common, ver);
        else if (name == "analyze-spectrum") cmd_analyze_spectrum(common, sp);
        return 0;
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);
        std::cerr << error_line("usage", "", err.what()) << '\n';
        return 2;
    } catch (const Error& err) {
        std::cerr << error_line(err.kind(), err.field(), err.what()) << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << error_line("error", "", err.what()) << '\n';
        return 1;
    }
}
