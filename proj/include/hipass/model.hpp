#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hipass/autodiff.hpp"
#include "hipass/flow.hpp"
#include "hipass/kernels.hpp"
#include "hipass/optim.hpp"
#include "hipass/tensor.hpp"

namespace hipass {

enum class Variant {
    ahfnet,         // high-pass basis + non-negative predicted coefficients
    conv3d_direct,  // every kernel entry predicted directly
    naive_basis,    // standard basis e_1..e_27 + non-negative coefficients
    identity_only,  // no extraction paths (N = 0)
};

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

struct ModelConfig {
    std::size_t n_paths = 2;         // N adaptive extraction paths
    std::size_t span = 1;            // window span l; windows hold 2l+1 frames
    std::size_t image_channels = 1;  // 1 (grey) or 3
    std::size_t channels = 16;       // recurrent / upsampler width
    std::size_t path_channels = 8;   // preprocessing width
    std::size_t gen_channels = 8;    // coefficient generator width
    std::size_t res_blocks = 4;
    double downsample = 0.25;  // 1, 0.5 or 0.25
    BasisKind basis = BasisKind::default_basis;
    std::uint64_t basis_seed = 0;
    Variant variant = Variant::ahfnet;
    bool tie_directions = false;  // share recurrent weights between directions

    void validate() const;
    std::size_t factor() const;
    std::size_t window() const { return 2 * span + 1; }
    std::size_t active_paths() const { return variant == Variant::identity_only ? 0 : n_paths; }
};

struct ExtractionOutput {
    nn::Var h;
    nn::Var h_rot;
    nn::Var combined;  // |h| + |h_rot|
    nn::Var coefficients;
    nn::Var kernel;          // [Tk,Hk,Wk]
    nn::Var rotated_kernel;  // built from the same coefficient node
};

/// Per-frame record of what the extraction paths generated.
struct ForwardTrace {
    struct PathRecord {
        Tensor coefficients;
        Tensor kernel;
        Tensor rotated_kernel;
        const nn::Node* coefficient_node = nullptr;
        const nn::Node* rotated_coefficient_node = nullptr;
    };
    std::vector<std::vector<PathRecord>> frames;  // [t][path]
};

namespace detail {

struct Conv {
    nn::Var weight;
    nn::Var bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    nn::Var operator()(const nn::Var& x) const;
};

struct Linear {
    nn::Var weight;
    nn::Var bias;
    nn::Var operator()(const nn::Var& x) const;
};

struct CoefficientGenerator {
    Conv conv1, conv2;
    Linear head;
    bool non_negative = true;
};

struct DenseBlock {
    bool down = false;
    Conv reduce;  // 1x1 after space-to-depth, only when down
    Conv conv1, conv2;
};

struct Preprocess {
    Conv head;
    DenseBlock block1, block2;
};

struct Recurrent {
    Conv fuse, head;
    std::vector<std::pair<Conv, Conv>> blocks;
};

struct Upsampler {
    Conv fuse;
    std::vector<Conv> stages;  // the last one is the final layer
};

}  // namespace detail

/// Adaptive high-frequency extraction network.
///
/// Path 0 feeds the raw frame to its preprocessing module; paths 1..N each
/// predict coefficients from the (2l+1)-frame window, build k_t and its
/// rotated counterpart, filter the window with both and pass
/// {h, h', |h|+|h'|} to their own preprocessing module. Two recurrent
/// passes (forward, backward) fuse the path features with the warped
/// previous state; the upsampler maps both states to a residual added to
/// the input frame.
class Model {
public:
    explicit Model(ModelConfig cfg, std::uint64_t seed = 0);
    // Layers hold handles into the parameter set, so copies would alias.
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const noexcept { return cfg_; }
    nn::ParameterSet& parameters() noexcept { return params_; }
    const nn::ParameterSet& parameters() const noexcept { return params_; }
    const KernelBasis& basis() const noexcept { return basis_; }

    /// Differentiable forward pass over a whole clip; one output per frame.
    std::vector<nn::Var> forward(const VideoClip& clip, const FlowProvider& flows, ForwardTrace* trace = nullptr) const;

    /// Inference without a tape.
    VideoClip infer(const VideoClip& clip, const FlowProvider& flows, ForwardTrace* trace = nullptr) const;

    /// [C,2l+1,H,W] window around frame t, replicating the terminal frames.
    Tensor window(const VideoClip& clip, std::size_t t) const;

    nn::Var coefficients(std::size_t path, const nn::Var& window) const;
    ExtractionOutput extract(std::size_t path, const nn::Var& window) const;
    /// Preprocessing module of path `path` (0 = identity path).
    nn::Var preprocess(std::size_t path, const nn::Var& features) const;

    /// Zeroes the upsampler's final layer, making forward() the identity.
    void zero_final_layer();

private:
    nn::Var recurrent(bool backward_dir, const nn::Var& features) const;
    nn::Var upsample(const nn::Var& forward_state, const nn::Var& backward_state) const;

    ModelConfig cfg_;
    nn::ParameterSet params_;
    KernelBasis basis_;
    Tensor basis_stacked_;
    Tensor rotated_stacked_;
    std::vector<detail::CoefficientGenerator> generators_;
    std::vector<detail::Preprocess> preprocess_;  // N + 1 entries
    detail::Recurrent rec_forward_, rec_backward_;
    detail::Upsampler up_;
};

/// Functional form: runs `model` on `clip` and returns the deblurred clip.
VideoClip forward_video(const Model& model, const VideoClip& clip, const FlowProvider& flows);

/// Pre-built model for one ablation variant.
Model build_variant(const ModelConfig& cfg, std::uint64_t seed = 0);

struct LayerCount {
    std::string name;
    std::uint64_t macs = 0;
    std::uint64_t params = 0;
};

struct MacReport {
    std::uint64_t macs_per_frame = 0;  // all layers of one frame's unrolled graph
    std::uint64_t params = 0;
    std::vector<LayerCount> layers;
};

/// MACs of a same-padded or strided KxK convolution: Cin*Cout*K*K*Hout*Wout.
std::uint64_t conv_macs(std::size_t cin, std::size_t cout, std::size_t k, std::size_t hout, std::size_t wout);
/// Parameters of a dense layer with bias: in*out + out.
std::uint64_t dense_params(std::size_t in, std::size_t out);

/// Analytic MAC and parameter count at frame size height x width.
MacReport count_macs(const ModelConfig& cfg, std::size_t height, std::size_t width);

/// Checkpoints: VTEN1 records named after parameters, plus
/// "__model_config__", "__train_state__" and Adam moments
/// "__adam_m__/<name>", "__adam_v__/<name>".
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nn::TrainState& state);

struct Checkpoint {
    Model model;
    nn::TrainState state;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hipass
