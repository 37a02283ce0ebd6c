#include "hipass/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace hipass {

namespace {

Tensor luminance(const Tensor& frame) {
    require_rank(frame, 3, "frame");
    const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
    Tensor out({h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < h * w; ++i) out[i] += frame[ch * h * w + i] / static_cast<double>(c);
    return out;
}

}  // namespace

Tensor estimate_flow(const Tensor& a, const Tensor& b, const BlockMatchConfig& cfg) {
    require_same_shape(a, b, "b");
    const Tensor la = luminance(a), lb = luminance(b);
    const auto h = static_cast<int>(la.dim(0)), w = static_cast<int>(la.dim(1));
    const int bs = static_cast<int>(cfg.block);
    Tensor flow({2, la.dim(0), la.dim(1)});

    for (int by = 0; by < h; by += bs) {
        for (int bx = 0; bx < w; bx += bs) {
            const int ey = std::min(by + bs, h), ex = std::min(bx + bs, w);
            auto cost = [&](int du, int dv) {
                double s = 0.0;
                for (int y = by; y < ey; ++y) {
                    const int sy = std::clamp(y + dv, 0, h - 1);
                    for (int x = bx; x < ex; ++x) {
                        const int sx = std::clamp(x + du, 0, w - 1);
                        s += std::abs(la.at(std::size_t(y), std::size_t(x)) - lb.at(std::size_t(sy), std::size_t(sx)));
                    }
                }
                return s;
            };

            std::map<std::pair<int, int>, double> memo;
            auto eval = [&](int du, int dv) {
                if (std::abs(du) > cfg.range || std::abs(dv) > cfg.range) return std::numeric_limits<double>::infinity();
                auto [it, fresh] = memo.try_emplace({du, dv}, 0.0);
                if (fresh) it->second = cost(du, dv);
                return it->second;
            };

            int cu = 0, cv = 0;
            double best = eval(0, 0);
            static constexpr std::array<std::pair<int, int>, 8> large = {
                {{0, -2}, {1, -1}, {2, 0}, {1, 1}, {0, 2}, {-1, 1}, {-2, 0}, {-1, -1}}};
            static constexpr std::array<std::pair<int, int>, 4> small = {{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
            for (int iter = 0; iter < 4 * cfg.range + 4; ++iter) {
                int nu = cu, nv = cv;
                for (auto [du, dv] : large) {
                    const double c = eval(cu + du, cv + dv);
                    if (c < best) {
                        best = c;
                        nu = cu + du;
                        nv = cv + dv;
                    }
                }
                if (nu == cu && nv == cv) break;
                cu = nu;
                cv = nv;
            }
            int fu = cu, fv = cv;
            for (auto [du, dv] : small) {
                const double c = eval(cu + du, cv + dv);
                if (c < best) {
                    best = c;
                    fu = cu + du;
                    fv = cv + dv;
                }
            }
            for (int y = by; y < ey; ++y)
                for (int x = bx; x < ex; ++x) {
                    flow.at(0, std::size_t(y), std::size_t(x)) = fu;
                    flow.at(1, std::size_t(y), std::size_t(x)) = fv;
                }
        }
    }
    return flow;
}

FlowProvider block_matching_flows(const VideoClip& clip, BlockMatchConfig cfg) {
    struct Cache {
        VideoClip clip;
        BlockMatchConfig cfg;
        std::mutex mutex;
        std::map<std::pair<std::size_t, std::size_t>, Tensor> flows;
    };
    auto cache = std::make_shared<Cache>();
    cache->clip = clip;
    cache->cfg = cfg;
    return [cache](std::size_t t, std::size_t prev) {
        {
            std::lock_guard lock(cache->mutex);
            if (auto it = cache->flows.find({t, prev}); it != cache->flows.end()) return it->second;
        }
        Tensor f = estimate_flow(cache->clip[t], cache->clip[prev], cache->cfg);
        std::lock_guard lock(cache->mutex);
        cache->flows.emplace(std::make_pair(t, prev), f);
        return f;
    };
}

FlowProvider ground_truth_flows(std::vector<Tensor> flow_gt) {
    auto flows = std::make_shared<std::vector<Tensor>>(std::move(flow_gt));
    return [flows](std::size_t t, std::size_t prev) {
        if (flows->empty()) throw DimensionError("no ground-truth flow for a single-frame clip", "flow_gt");
        if (prev == t + 1) return (*flows).at(t);
        if (prev + 1 == t) return (*flows)[std::min(t, flows->size() - 1)] * -1.0;
        throw DimensionError("ground-truth flow only links neighbouring frames", "flow_gt");
    };
}

FlowProvider zero_flows(const Shape& frame_shape) {
    const Shape shape{2, frame_shape.at(1), frame_shape.at(2)};
    return [shape](std::size_t, std::size_t) { return Tensor(shape); };
}

Tensor downsample_flow(const Tensor& flow, std::size_t factor) {
    require_rank(flow, 3, "flow");
    if (factor == 1) return flow;
    const std::size_t h = flow.dim(1), w = flow.dim(2);
    if (h % factor != 0 || w % factor != 0) throw DimensionError("flow extents not divisible by factor", "flow");
    const std::size_t oh = h / factor, ow = w / factor;
    Tensor out({2, oh, ow});
    const double norm = 1.0 / static_cast<double>(factor * factor * factor);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) out.at(c, y / factor, x / factor) += flow.at(c, y, x) * norm;
    return out;
}

}  // namespace hipass
