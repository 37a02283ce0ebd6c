#include "hipass/blur.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "hipass/container.hpp"
#include "hipass/parallel.hpp"
#include "hipass/rng.hpp"

namespace hipass {

Texture parse_texture(const std::string& name) {
    if (name == "checker") return Texture::checker;
    if (name == "gaussian-blob") return Texture::gaussian_blob;
    if (name == "text-grating") return Texture::text_grating;
    if (name == "random-noise-patch") return Texture::random_noise_patch;
    throw UsageError("unknown texture '" + name + "'", "texture");
}

std::string to_string(Texture t) {
    switch (t) {
        case Texture::checker: return "checker";
        case Texture::gaussian_blob: return "gaussian-blob";
        case Texture::text_grating: return "text-grating";
        case Texture::random_noise_patch: return "random-noise-patch";
    }
    return "unknown";
}

void SceneSpec::validate() const {
    if (height == 0 || width == 0) throw DimensionError("canvas must be non-empty", "canvas");
    if (duration < 3) throw PreconditionError("scene duration must be at least 3 frames", "duration");
    for (const auto& e : elements) {
        if (!std::isfinite(e.vx) || !std::isfinite(e.vy)) throw PreconditionError("velocity must be finite", "velocity");
        if (!std::isfinite(e.x) || !std::isfinite(e.y)) throw PreconditionError("position must be finite", "position");
        if (!(e.scale > 0.0)) throw PreconditionError("element scale must be positive", "scale");
    }
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double hash_unit(std::uint64_t seed, std::int64_t a, std::int64_t b) {
    const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(a) * 0x1F123BB5ull ^
                                                     splitmix(static_cast<std::uint64_t>(b))));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double background(const SceneSpec& spec, double x, double y) {
    if (!spec.textured_background) return 0.5;
    const double u = x / static_cast<double>(spec.width), v = y / static_cast<double>(spec.height);
    return 0.45 + 0.15 * std::sin(2.0 * std::numbers::pi * u + 0.7) * std::cos(2.0 * std::numbers::pi * v);
}

// Texture value at element-local offset (u,v) from the centre, or a negative
// number when the offset is outside the element footprint.
double texture_value(const SceneElement& e, std::uint64_t seed, double u, double v) {
    const double half = e.scale / 2.0;
    switch (e.texture) {
        case Texture::checker: {
            if (std::abs(u) >= half || std::abs(v) >= half) return -1.0;
            const double cell = std::max(4.0, e.scale / 4.0);
            const auto cu = static_cast<std::int64_t>(std::floor((u + half) / cell));
            const auto cv = static_cast<std::int64_t>(std::floor((v + half) / cell));
            return ((cu + cv) % 2 == 0) ? 0.9 : 0.1;
        }
        case Texture::gaussian_blob: {
            const double r2 = u * u + v * v;
            if (r2 >= half * half) return -1.0;
            const double sigma = e.scale / 4.0;
            return 0.15 + 0.8 * std::exp(-r2 / (2.0 * sigma * sigma));
        }
        case Texture::text_grating: {
            if (std::abs(u) >= half || std::abs(v) >= half) return -1.0;
            // Rows of 6 px glyphs separated by 3 px gaps; strokes are 2 px
            // vertical bars chosen per column pair.
            const auto row = static_cast<std::int64_t>(std::floor((v + half) / 9.0));
            const double in_row = std::fmod(v + half, 9.0);
            if (in_row >= 6.0) return 0.95;
            const auto col = static_cast<std::int64_t>(std::floor((u + half) / 2.0));
            const bool ink = col % 2 == 0 && hash_unit(seed, row, col) < 0.6;
            return ink ? 0.05 : 0.95;
        }
        case Texture::random_noise_patch: {
            if (std::abs(u) >= half || std::abs(v) >= half) return -1.0;
            const auto cu = static_cast<std::int64_t>(std::floor((u + half) / 4.0));
            const auto cv = static_cast<std::int64_t>(std::floor((v + half) / 4.0));
            return 0.05 + 0.9 * hash_unit(seed, cu, cv);
        }
    }
    return -1.0;
}

}  // namespace

RenderedSequence render_sharp_sequence(const SceneSpec& spec) {
    spec.validate();
    const std::size_t h = spec.height, w = spec.width;
    RenderedSequence out;
    std::vector<bool> warned(spec.elements.size(), false);

    std::vector<Tensor> velocity;
    for (std::size_t t = 0; t < spec.duration; ++t) {
        Tensor frame({1, h, w});
        Tensor vel({2, h, w});
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) frame.at(0, y, x) = background(spec, double(x), double(y));

        for (std::size_t n = 0; n < spec.elements.size(); ++n) {
            const SceneElement& e = spec.elements[n];
            const double cx = e.x + e.vx * double(t), cy = e.y + e.vy * double(t);
            const double half = e.scale / 2.0;
            if (!warned[n] && (cx - half < 0.0 || cy - half < 0.0 || cx + half > double(w) || cy + half > double(h))) {
                warned[n] = true;
                out.warnings.push_back("element " + std::to_string(n) + " leaves the canvas at frame " +
                                       std::to_string(t) + "; clipped");
            }
            const std::uint64_t el_seed = splitmix(spec.seed * 1315423911ull + n);
            const auto y0 = static_cast<std::ptrdiff_t>(std::floor(cy - half)),
                       y1 = static_cast<std::ptrdiff_t>(std::ceil(cy + half));
            const auto x0 = static_cast<std::ptrdiff_t>(std::floor(cx - half)),
                       x1 = static_cast<std::ptrdiff_t>(std::ceil(cx + half));
            for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(y0, 0); y <= std::min<std::ptrdiff_t>(y1, std::ptrdiff_t(h) - 1);
                 ++y)
                for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x0, 0);
                     x <= std::min<std::ptrdiff_t>(x1, std::ptrdiff_t(w) - 1); ++x) {
                    const double v = texture_value(e, el_seed, double(x) - cx, double(y) - cy);
                    if (v < 0.0) continue;
                    frame.at(0, std::size_t(y), std::size_t(x)) = v;
                    vel.at(0, std::size_t(y), std::size_t(x)) = e.vx;
                    vel.at(1, std::size_t(y), std::size_t(x)) = e.vy;
                }
        }
        out.frames.push_back(std::move(frame));
        velocity.push_back(std::move(vel));
    }
    velocity.pop_back();
    out.flow = std::move(velocity);
    return out;
}

SceneSpec random_scene(std::size_t height, std::size_t width, std::size_t duration, std::size_t elements,
                       double max_speed, std::uint64_t seed) {
    Rng rng(seed);
    SceneSpec spec;
    spec.height = height;
    spec.width = width;
    spec.duration = duration;
    spec.seed = seed;
    const double extent = static_cast<double>(std::min(height, width));
    for (std::size_t n = 0; n < elements; ++n) {
        SceneElement e;
        e.texture = static_cast<Texture>(rng.index(4));
        e.scale = extent * rng.uniform(0.25, 0.5);
        e.x = rng.uniform(0.2, 0.8) * double(width);
        e.y = rng.uniform(0.2, 0.8) * double(height);
        e.vx = rng.uniform(-max_speed, max_speed);
        e.vy = rng.uniform(-max_speed, max_speed);
        spec.elements.push_back(e);
    }
    return spec;
}

void BlurConfig::validate() const {
    if (accumulated < 1) throw PreconditionError("B must be at least 1", "B");
    if (stride < 1) throw PreconditionError("stride must be at least 1", "stride");
    if (crf == Crf::gamma && !(gamma > 0.0)) throw PreconditionError("gamma must be positive", "gamma");
}

double apply_crf(double v, const BlurConfig& cfg) {
    if (cfg.crf == Crf::identity) return v;
    return std::pow(v, 1.0 / cfg.gamma);
}

std::size_t required_sharp_frames(std::size_t blurry_frames, const BlurConfig& cfg) {
    return (blurry_frames - 1) * cfg.stride + cfg.accumulated;
}

VideoClip accumulate_blur(const VideoClip& sharp, const BlurConfig& cfg) {
    cfg.validate();
    if (sharp.length() < cfg.accumulated)
        throw DimensionError("need at least B=" + std::to_string(cfg.accumulated) + " sharp frames, got " +
                                 std::to_string(sharp.length()),
                             "sharp");
    const std::size_t count = (sharp.length() - cfg.accumulated) / cfg.stride + 1;
    const double inv_b = 1.0 / static_cast<double>(cfg.accumulated);
    VideoClip out({}, sharp.frame_rate() / static_cast<double>(cfg.stride));
    for (std::size_t i = 0; i < count; ++i) {
        Tensor acc(sharp.frame_shape());
        for (std::size_t k = 0; k < cfg.accumulated; ++k) acc += sharp[i * cfg.stride + k];
        for (auto& v : acc.storage()) v = std::clamp(apply_crf(v * inv_b, cfg), 0.0, 1.0);
        out.push_back(std::move(acc));
    }
    return out;
}

VideoClip centered_latents(const VideoClip& sharp, const BlurConfig& cfg) {
    cfg.validate();
    if (sharp.length() < cfg.accumulated) throw DimensionError("too few sharp frames", "sharp");
    const std::size_t count = (sharp.length() - cfg.accumulated) / cfg.stride + 1;
    VideoClip out({}, sharp.frame_rate() / static_cast<double>(cfg.stride));
    for (std::size_t i = 0; i < count; ++i) out.push_back(sharp[i * cfg.stride + cfg.accumulated / 2]);
    return out;
}

void DatasetSample::validate() const {
    if (blurry.length() != sharp.length()) throw DimensionError("blurry and sharp lengths differ", "sample");
    if (blurry.length() > 0 && blurry.frame_shape() != sharp.frame_shape())
        throw DimensionError("blurry and sharp frame shapes differ", "sample");
    if (flow_gt.size() + 1 != blurry.length() && !(blurry.length() == 0 && flow_gt.empty()))
        throw DimensionError("expected length-1 flow fields", "flow_gt");
}

DatasetSample make_sample(const SceneSpec& spec, const BlurConfig& cfg) {
    const RenderedSequence seq = render_sharp_sequence(spec);
    DatasetSample s;
    s.blurry = accumulate_blur(seq.frames, cfg);
    s.sharp = centered_latents(seq.frames, cfg);
    const double stride = static_cast<double>(cfg.stride);
    for (std::size_t i = 0; i + 1 < s.blurry.length(); ++i) s.flow_gt.push_back(seq.flow[i * cfg.stride + cfg.accumulated / 2] * stride);
    return s;
}

std::vector<DatasetSample> generate_dataset(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.blur.validate();
    std::vector<DatasetSample> out(cfg.samples);
    const std::size_t duration = std::max<std::size_t>(3, required_sharp_frames(cfg.frames, cfg.blur));
    parallel_for(cfg.samples, [&](std::size_t i) {
        const SceneSpec spec =
            random_scene(cfg.height, cfg.width, duration, cfg.elements, cfg.max_speed, splitmix(seed) ^ splitmix(i + 1));
        DatasetSample s = make_sample(spec, cfg.blur);
        // Trim to exactly `frames` outputs (duration may round up to 3).
        while (s.blurry.length() > cfg.frames) {
            std::vector<Tensor> b(s.blurry.frames().begin(), s.blurry.frames().end() - 1);
            std::vector<Tensor> sh(s.sharp.frames().begin(), s.sharp.frames().end() - 1);
            s.blurry = VideoClip(std::move(b), s.blurry.frame_rate());
            s.sharp = VideoClip(std::move(sh), s.sharp.frame_rate());
            s.flow_gt.pop_back();
        }
        out[i] = std::move(s);
    });
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetSample>& samples) {
    std::vector<NamedTensor> records;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        s.validate();
        const std::string prefix = "sample" + std::to_string(i) + "/";
        records.push_back({prefix + "blurry", s.blurry.stacked(), DType::f64});
        records.push_back({prefix + "sharp", s.sharp.stacked(), DType::f64});
        if (!s.flow_gt.empty()) {
            const Shape& fs = s.flow_gt.front().shape();
            Tensor flow({s.flow_gt.size(), fs[0], fs[1], fs[2]});
            for (std::size_t t = 0; t < s.flow_gt.size(); ++t) flow.set_slice(t, s.flow_gt[t]);
            records.push_back({prefix + "flow", std::move(flow), DType::f64});
        }
    }
    write_container(path, records);
}

std::vector<DatasetSample> read_dataset(const std::filesystem::path& path) {
    const auto records = read_container(path);
    std::map<std::size_t, DatasetSample> by_index;
    for (const auto& r : records) {
        const auto slash = r.name.find('/');
        if (r.name.rfind("sample", 0) != 0 || slash == std::string::npos)
            throw FormatError("unexpected record '" + r.name + "' in dataset", r.name);
        std::size_t index = 0;
        try {
            index = std::stoul(r.name.substr(6, slash - 6));
        } catch (const std::exception&) {
            throw FormatError("bad sample index in '" + r.name + "'", r.name);
        }
        const std::string field = r.name.substr(slash + 1);
        DatasetSample& s = by_index[index];
        if (field == "blurry")
            s.blurry = VideoClip::from_stacked(r.tensor);
        else if (field == "sharp")
            s.sharp = VideoClip::from_stacked(r.tensor);
        else if (field == "flow") {
            require_rank(r.tensor, 4, "flow");
            for (std::size_t t = 0; t < r.tensor.dim(0); ++t) s.flow_gt.push_back(r.tensor.slice(t));
        } else
            throw FormatError("unexpected field '" + field + "'", r.name);
    }
    std::vector<DatasetSample> out;
    std::size_t expected = 0;
    for (auto& [index, s] : by_index) {
        if (index != expected++) throw FormatError("dataset sample indices are not contiguous", "sample");
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace hipass
