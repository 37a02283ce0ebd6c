#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "hipass/blur.hpp"
#include "hipass/model.hpp"
#include "hipass/optim.hpp"
#include "hipass/rng.hpp"

namespace hipass {

struct TrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch = 2;
    std::size_t sequence = 5;  // frames per training clip
    std::size_t patch = 64;    // square crop side; clamped to the frame
    double charbonnier_eps = 1e-3;
    std::size_t val_every = 500;  // 0: only at the end
    bool augment = true;          // flips and transposes, flows follow
    bool ground_truth_flow = true;
    std::size_t kernel_check_every = 100;  // verify generated kernels every n iterations (0: never)
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainLogRecord {
    std::size_t iter = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> val_psnr;
};

struct TrainResult {
    std::vector<TrainLogRecord> log;
    double blurry_psnr = 0.0;  // validation inputs vs targets
    double final_psnr = 0.0;
    std::size_t kernels_checked = 0;
    std::size_t kernels_high_pass = 0;
};

/// One training clip: frames, targets and flows (already cropped/augmented).
struct TrainClip {
    VideoClip blurry;
    VideoClip sharp;
    std::vector<Tensor> flow;
};

/// Random crop, subsequence and dihedral augmentation of one sample.
TrainClip sample_clip(const DatasetSample& sample, const TrainConfig& cfg, Rng& rng);

/// Applies one of the 8 dihedral transforms (bit 0: mirror x, bit 1: mirror
/// y, bit 2: transpose) to frames and flow vectors alike.
TrainClip transform_clip(const TrainClip& clip, unsigned code);

/// Mean Charbonnier loss over the frames of one clip.
nn::Var clip_loss(const Model& model, const TrainClip& clip, const TrainConfig& cfg);

/// Mean per-clip PSNR of the model on full validation samples.
double evaluate_psnr(const Model& model, const std::vector<DatasetSample>& samples, bool ground_truth_flow = true);
/// Same for the unprocessed blurry inputs.
double blurry_psnr(const std::vector<DatasetSample>& samples);

/// Adam + cosine restarts on Charbonnier loss. Throws DivergenceError when
/// the loss or a gradient becomes non-finite.
TrainResult train(Model& model, nn::TrainState& state, const std::vector<DatasetSample>& train_set,
                  const std::vector<DatasetSample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const TrainLogRecord&)>& on_log = {});

}  // namespace hipass
