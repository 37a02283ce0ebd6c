#pragma once

#include <functional>
#include <vector>

#include "hipass/tensor.hpp"

namespace hipass {

struct BlockMatchConfig {
    std::size_t block = 8;
    int range = 4;
};

/// Integer block-matching flow by diamond search on the luminance. Returns
/// [2,H,W] (u,v) with a(p) ~ b(p + flow(p)); every pixel of a block carries
/// the block's vector.
Tensor estimate_flow(const Tensor& a, const Tensor& b, const BlockMatchConfig& cfg = {});

/// Flow aligning frame `prev` onto frame `t` of a clip:
/// x_t(p) ~ x_prev(p + f(p)).
using FlowProvider = std::function<Tensor(std::size_t t, std::size_t prev)>;

/// Block-matching flows between clip frames, memoised per (t, prev).
FlowProvider block_matching_flows(const VideoClip& clip, BlockMatchConfig cfg = {});

/// Flows from per-pair ground truth (flow_gt[i] maps frame i to i+1 in
/// frame-i coordinates). The backward-looking flow of frame t reuses the
/// content velocity stored at frame t.
FlowProvider ground_truth_flows(std::vector<Tensor> flow_gt);

/// Zero flow everywhere.
FlowProvider zero_flows(const Shape& frame_shape);

/// Area-averages a full-resolution flow by `factor` and rescales the
/// vectors to the coarse grid.
Tensor downsample_flow(const Tensor& flow, std::size_t factor);

}  // namespace hipass
