#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hipass/tensor.hpp"

namespace hipass {

enum class Texture { checker, gaussian_blob, text_grating, random_noise_patch };

Texture parse_texture(const std::string& name);
std::string to_string(Texture t);

struct SceneElement {
    Texture texture = Texture::checker;
    double x = 0.0;  // centre at frame 0, pixels
    double y = 0.0;
    double vx = 0.0;  // pixels per sharp frame
    double vy = 0.0;
    double scale = 16.0;  // footprint side length / diameter, pixels
};

struct SceneSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::vector<SceneElement> elements;
    std::size_t duration = 3;
    std::uint64_t seed = 0;
    bool textured_background = true;

    void validate() const;
};

struct RenderedSequence {
    VideoClip frames;
    // flow[t] is the [2,H,W] displacement (u,v) of the content under each
    // pixel of frame t between frames t and t+1; duration - 1 entries.
    std::vector<Tensor> flow;
    std::vector<std::string> warnings;
};

/// Rasterises the scene: elements are drawn in order (later on top) over a
/// static background, each translating at constant velocity.
RenderedSequence render_sharp_sequence(const SceneSpec& spec);

/// Scene with `elements` randomly textured, placed and moving elements,
/// speeds uniform in [-max_speed, max_speed] per axis.
SceneSpec random_scene(std::size_t height, std::size_t width, std::size_t duration, std::size_t elements,
                       double max_speed, std::uint64_t seed);

enum class Crf { identity, gamma };

struct BlurConfig {
    std::size_t accumulated = 5;  // B
    Crf crf = Crf::identity;
    double gamma = 2.2;
    std::size_t stride = 5;

    void validate() const;
};

/// g(v): identity or v^(1/gamma).
double apply_crf(double v, const BlurConfig& cfg);

/// Output frame i is g(mean of sharp frames [i*stride, i*stride + B)).
/// Length floor((len - B) / stride) + 1.
VideoClip accumulate_blur(const VideoClip& sharp, const BlurConfig& cfg);

/// Sharp frame at the temporal centre of every blur window
/// (index i*stride + B/2).
VideoClip centered_latents(const VideoClip& sharp, const BlurConfig& cfg);

/// Sharp frames required to produce `blurry_frames` outputs.
std::size_t required_sharp_frames(std::size_t blurry_frames, const BlurConfig& cfg);

struct DatasetSample {
    VideoClip blurry;
    VideoClip sharp;
    // flow_gt[i]: displacement from frame i to i+1 in frame i coordinates.
    std::vector<Tensor> flow_gt;

    void validate() const;
    bool operator==(const DatasetSample&) const = default;
};

DatasetSample make_sample(const SceneSpec& spec, const BlurConfig& cfg);

struct SynthConfig {
    std::size_t samples = 200;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t frames = 5;  // blurry frames per sample
    std::size_t elements = 4;
    double max_speed = 1.5;
    BlurConfig blur;
};

/// Generates `cfg.samples` samples, sample i seeded from (seed, i) so the
/// result does not depend on the worker count.
std::vector<DatasetSample> generate_dataset(const SynthConfig& cfg, std::uint64_t seed);

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetSample>& samples);
std::vector<DatasetSample> read_dataset(const std::filesystem::path& path);

}  // namespace hipass
