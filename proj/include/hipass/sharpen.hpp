#pragma once

#include <string>
#include <vector>

#include "hipass/kernels.hpp"
#include "hipass/tensor.hpp"

namespace hipass {

struct UnsharpConfig {
    Tensor kernel;  // [Hk,Wk] high-pass
    double lambda = 1.0;
    bool clamp = true;

    void validate() const;
};

/// Negative 4-neighbour Laplacian [[0,-1,0],[-1,4,-1],[0,-1,0]].
Tensor negative_laplacian();

/// x + lambda * conv2d(x, k) with replicate padding, clamped to [0,1] when
/// cfg.clamp is set.
Tensor unsharp_mask(const Tensor& frame, const UnsharpConfig& cfg);

enum class FeatureFamily { sobel, laplacian, temporal, sobel_temporal };

FeatureFamily parse_feature_family(const std::string& name);

struct FeatureMap {
    std::string name;
    Tensor values;  // [C,H,W]
};

/// Fixed gradient features of a 3-frame window: |Sobel-x|, |Sobel-y| and
/// the Laplacian of the centre frame, and the temporal gradient
/// 0.5 x_{t-1} - x_t + 0.5 x_{t+1}.
std::vector<FeatureMap> gradient_features(const VideoClip& window, FeatureFamily family);

}  // namespace hipass
