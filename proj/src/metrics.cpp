#include "hipass/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hipass/container.hpp"
#include "hipass/parallel.hpp"
#include "hipass/signal.hpp"

namespace hipass {

namespace {

void require_same_clips(const VideoClip& a, const VideoClip& b, const char* field) {
    if (a.length() != b.length())
        throw DimensionError("clip lengths differ: " + std::to_string(a.length()) + " vs " + std::to_string(b.length()),
                             field);
    if (a.length() == 0) throw DimensionError("empty clip", field);
    for (std::size_t t = 0; t < a.length(); ++t) require_same_shape(a[t], b[t], field);
}

// Per-pixel [H,W] planes of a [C,H,W] or [H,W] tensor.
std::vector<Tensor> planes(const Tensor& t) {
    if (t.rank() == 2) return {t};
    require_rank(t, 3, "frame");
    std::vector<Tensor> out;
    for (std::size_t c = 0; c < t.dim(0); ++c) out.push_back(t.slice(c));
    return out;
}

Tensor gaussian_window() {
    constexpr int n = 11;
    constexpr double sigma = 1.5;
    Tensor w({n, n});
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double dy = i - n / 2, dx = j - n / 2;
            s += w.at(std::size_t(i), std::size_t(j)) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    w *= 1.0 / s;
    return w;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "b");
    if (a.empty()) throw DimensionError("empty frame", "a");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (!(peak > 0.0)) throw PreconditionError("peak must be positive", "peak");
    const double m = mse(a, b);
    if (m == 0.0) return kPsnrSentinel;
    return std::min(kPsnrSentinel, 10.0 * std::log10(peak * peak / m));
}

double psnr(const VideoClip& a, const VideoClip& b, double peak) {
    require_same_clips(a, b, "b");
    double s = 0.0;
    for (std::size_t t = 0; t < a.length(); ++t) s += psnr(a[t], b[t], peak);
    return s / static_cast<double>(a.length());
}

Tensor to_gray(const Tensor& frame) {
    if (frame.rank() == 2) return frame;
    require_rank(frame, 3, "frame");
    const std::size_t c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
    if (c == 1) return frame.reshaped({h, w});
    if (c != 3) throw DimensionError("expected 1 or 3 channels, got " + std::to_string(c), "frame");
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i)
        out[i] = 0.299 * frame[i] + 0.587 * frame[h * w + i] + 0.114 * frame[2 * h * w + i];
    return out;
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "b");
    const Tensor x = to_gray(a), y = to_gray(b);
    const std::size_t h = x.dim(0), w = x.dim(1);
    if (std::min(h, w) < 11)
        throw DimensionError("SSIM needs frames of at least 11x11, got " + std::to_string(h) + "x" + std::to_string(w),
                             "frame");
    static const Tensor g = gaussian_window();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (std::size_t i = 0; i + 11 <= h; ++i)
        for (std::size_t j = 0; j + 11 <= w; ++j) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (std::size_t u = 0; u < 11; ++u)
                for (std::size_t v = 0; v < 11; ++v) {
                    const double wt = g.at(u, v), xv = x.at(i + u, j + v), yv = y.at(i + u, j + v);
                    mx += wt * xv;
                    my += wt * yv;
                    sxx += wt * xv * xv;
                    syy += wt * yv * yv;
                    sxy += wt * xv * yv;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    return total / static_cast<double>((h - 10) * (w - 10));
}

double ssim(const VideoClip& a, const VideoClip& b) {
    require_same_clips(a, b, "b");
    std::vector<double> scores(a.length());
    parallel_for(a.length(), [&](std::size_t t) { scores[t] = ssim(a[t], b[t]); });
    double s = 0.0;
    for (double v : scores) s += v;
    return s / static_cast<double>(scores.size());
}

double subband_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
    auto centred = [](std::size_t k, std::size_t n) {
        const double f = static_cast<double>(k) / static_cast<double>(n);
        return f > 0.5 ? f - 1.0 : f;
    };
    const double fu = centred(u, height), fv = centred(v, width);
    return 2.0 * std::numbers::pi * std::hypot(fu, fv) / std::hypot(0.5, 0.5);
}

std::size_t subband_index(std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
    const double r = subband_radius(u, v, height, width);
    const auto band = static_cast<std::size_t>(std::floor(r / (2.0 * std::numbers::pi / kSubbands)));
    return std::min(band, kSubbands - 1);
}

SubbandReport subband_mse(const VideoClip& outputs, const VideoClip& reference_outputs, const VideoClip& ground_truth,
                          const std::string& reference_variant) {
    require_same_clips(outputs, ground_truth, "ground_truth");
    require_same_clips(reference_outputs, ground_truth, "reference_outputs");
    SubbandReport rep;
    rep.reference_variant = reference_variant;
    for (std::size_t i = 0; i <= kSubbands; ++i)
        rep.edges[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(kSubbands);

    std::array<double, kSubbands> out_sum{}, ref_sum{};
    std::size_t planes_seen = 0;
    for (std::size_t t = 0; t < outputs.length(); ++t) {
        const auto po = planes(outputs[t]), pr = planes(reference_outputs[t]), pg = planes(ground_truth[t]);
        for (std::size_t c = 0; c < pg.size(); ++c) {
            const Spectrum so = dft2d(po[c]), sr = dft2d(pr[c]), sg = dft2d(pg[c]);
            const std::size_t h = sg.rows, w = sg.cols;
            const double norm = 1.0 / static_cast<double>(h * w);
            std::array<double, kSubbands> eo{}, er{};
            std::array<std::size_t, kSubbands> cnt{};
            for (std::size_t u = 0; u < h; ++u)
                for (std::size_t v = 0; v < w; ++v) {
                    const std::size_t b = subband_index(u, v, h, w);
                    eo[b] += std::norm(so(u, v) - sg(u, v)) * norm;
                    er[b] += std::norm(sr(u, v) - sg(u, v)) * norm;
                    ++cnt[b];
                }
            for (std::size_t b = 0; b < kSubbands; ++b) {
                rep.energy[b] += eo[b];
                rep.total_energy += eo[b];
                rep.counts[b] = cnt[b];
                if (cnt[b] > 0) {
                    out_sum[b] += eo[b] / static_cast<double>(cnt[b]);
                    ref_sum[b] += er[b] / static_cast<double>(cnt[b]);
                }
            }
            ++planes_seen;
        }
    }
    for (std::size_t b = 0; b < kSubbands; ++b) {
        rep.absolute[b] = out_sum[b] / static_cast<double>(planes_seen);
        rep.reference[b] = ref_sum[b] / static_cast<double>(planes_seen);
        rep.mse[b] = rep.absolute[b] - rep.reference[b];
    }
    return rep;
}

Tensor centered_log_spectrum(const Tensor& frame) {
    const Tensor g = to_gray(frame);
    const Spectrum s = dft2d(g);
    const std::size_t h = s.rows, w = s.cols;
    Tensor out({h, w});
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) out.at((u + h / 2) % h, (v + w / 2) % w) = std::log1p(std::abs(s(u, v)));
    return out;
}

Tensor spectrum_dump(const Tensor& frame, const std::filesystem::path& stem) {
    const Tensor spec = centered_log_spectrum(frame);
    double lo = spec[0], hi = spec[0];
    for (double v : spec.storage()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor img({1, spec.dim(0), spec.dim(1)});
    for (std::size_t i = 0; i < spec.size(); ++i) img[i] = hi > lo ? (spec[i] - lo) / (hi - lo) : 0.0;
    auto pgm = stem, raw = stem;
    pgm += ".pgm";
    raw += ".vten";
    write_pnm(pgm, img);
    write_container(raw, {{"spectrum", spec, DType::f64}});
    return spec;
}

}  // namespace hipass
