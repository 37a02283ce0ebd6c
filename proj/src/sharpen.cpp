#include "hipass/sharpen.hpp"

#include <algorithm>

namespace hipass {

void UnsharpConfig::validate() const {
    require_rank(kernel, 2, "kernel");
    if (!(lambda >= 0.0)) throw PreconditionError("lambda must be non-negative", "lambda");
    if (!verify_high_pass(kernel, 1e-9).high_pass)
        throw PreconditionError("unsharp masking needs a high-pass (zero-sum) kernel", "kernel");
}

Tensor negative_laplacian() { return Tensor({3, 3}, {0, -1, 0, -1, 4, -1, 0, -1, 0}); }

Tensor unsharp_mask(const Tensor& frame, const UnsharpConfig& cfg) {
    cfg.validate();
    require_rank(frame, 3, "frame");
    Tensor out = frame;
    const Tensor detail = conv2d(frame, cfg.kernel, Padding::same_replicate);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += cfg.lambda * detail[i];
    if (cfg.clamp) out = clamp(std::move(out), 0.0, 1.0);
    return out;
}

FeatureFamily parse_feature_family(const std::string& name) {
    if (name == "sobel") return FeatureFamily::sobel;
    if (name == "laplacian") return FeatureFamily::laplacian;
    if (name == "temporal") return FeatureFamily::temporal;
    if (name == "sobel+temporal") return FeatureFamily::sobel_temporal;
    throw UsageError("unknown feature family '" + name + "'", "family");
}

std::vector<FeatureMap> gradient_features(const VideoClip& window, FeatureFamily family) {
    if (window.length() != 3)
        throw DimensionError("gradient features need a 3-frame window, got " + std::to_string(window.length()),
                             "window");
    const Tensor& centre = window[1];
    std::vector<FeatureMap> out;
    auto sobel = [&] {
        const KernelBasis b = make_basis(BasisKind::sobel);
        out.push_back({"sobel_x", abs(conv2d(centre, b.kernel(0).slice(1), Padding::same_replicate))});
        out.push_back({"sobel_y", abs(conv2d(centre, b.kernel(1).slice(1), Padding::same_replicate))});
    };
    auto temporal = [&] {
        Tensor g = window[0] * 0.5;
        g -= window[1];
        g += window[2] * 0.5;
        out.push_back({"temporal_gradient", std::move(g)});
    };
    switch (family) {
        case FeatureFamily::sobel: sobel(); break;
        case FeatureFamily::laplacian: {
            const KernelBasis b = make_basis(BasisKind::laplacian);
            out.push_back({"laplacian", conv2d(centre, b.kernel(0).slice(1), Padding::same_replicate)});
            break;
        }
        case FeatureFamily::temporal: temporal(); break;
        case FeatureFamily::sobel_temporal:
            sobel();
            temporal();
            break;
    }
    return out;
}

}  // namespace hipass
