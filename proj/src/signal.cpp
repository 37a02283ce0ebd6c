#include "hipass/signal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

namespace hipass {

Padding parse_padding(const std::string& name) {
    if (name == "same-zero") return Padding::same_zero;
    if (name == "same-replicate") return Padding::same_replicate;
    if (name == "same-circular") return Padding::same_circular;
    if (name == "valid") return Padding::valid;
    throw UsageError("unknown padding '" + name + "'", "padding");
}

namespace {

std::ptrdiff_t wrap(std::ptrdiff_t i, std::ptrdiff_t n) {
    i %= n;
    return i < 0 ? i + n : i;
}

// Shared body of conv2d / correlate2d on a [C,H,W] input.
Tensor filter2d(const Tensor& input, const Tensor& kernel, Padding padding, bool flip) {
    require_rank(kernel, 2, "kernel");
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
    if (kh % 2 == 0 || kw % 2 == 0)
        throw DimensionError("kernel extents must be odd, got " + shape_string(kernel.shape()), "kernel");

    const bool planar = input.rank() == 2;
    if (!planar) require_rank(input, 3, "input");
    const std::size_t c = planar ? 1 : input.dim(0);
    const std::size_t h = input.dim(planar ? 0 : 1), w = input.dim(planar ? 1 : 2);
    const auto ry = static_cast<std::ptrdiff_t>(kh / 2), rx = static_cast<std::ptrdiff_t>(kw / 2);

    std::size_t oh = h, ow = w;
    std::ptrdiff_t offset_y = -ry, offset_x = -rx;
    if (padding == Padding::valid) {
        if (h < kh || w < kw) throw DimensionError("valid convolution needs input at least as large as kernel", "input");
        oh = h - kh + 1;
        ow = w - kw + 1;
        offset_y = 0;
        offset_x = 0;
    }

    Tensor out(planar ? Shape{oh, ow} : Shape{c, oh, ow});
    const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
    const double* src = input.data().data();
    double* dst = out.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = src + ch * h * w;
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t i = 0; i < kh; ++i) {
                    std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) + offset_y;
                    for (std::size_t j = 0; j < kw; ++j) {
                        std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + j) + offset_x;
                        std::ptrdiff_t yy = sy, xx = sx;
                        if (yy < 0 || yy >= ih || xx < 0 || xx >= iw) {
                            if (padding == Padding::same_zero) continue;
                            if (padding == Padding::same_replicate) {
                                yy = std::clamp<std::ptrdiff_t>(yy, 0, ih - 1);
                                xx = std::clamp<std::ptrdiff_t>(xx, 0, iw - 1);
                            } else {
                                yy = wrap(yy, ih);
                                xx = wrap(xx, iw);
                            }
                        }
                        const double kv = flip ? kernel.at(kh - 1 - i, kw - 1 - j) : kernel.at(i, j);
                        acc += kv * plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
                    }
                }
                dst[(ch * oh + y) * ow + x] = acc;
            }
        }
    }
    return out;
}

bool is_pow2(std::size_t n) { return n > 0 && std::has_single_bit(n); }

// In-place 1-D transform of `n` values spaced `stride` apart.
void transform_1d(Complex* data, std::size_t n, std::size_t stride, bool inverse, std::vector<Complex>& scratch) {
    const double sign = inverse ? 1.0 : -1.0;
    scratch.resize(n);
    for (std::size_t i = 0; i < n; ++i) scratch[i] = data[i * stride];

    if (is_pow2(n)) {
        for (std::size_t i = 1, j = 0; i < n; ++i) {
            std::size_t bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(scratch[i], scratch[j]);
        }
        for (std::size_t len = 2; len <= n; len <<= 1) {
            const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
            for (std::size_t start = 0; start < n; start += len) {
                for (std::size_t k = 0; k < len / 2; ++k) {
                    const Complex wk = std::polar(1.0, ang * static_cast<double>(k));
                    const Complex u = scratch[start + k];
                    const Complex v = scratch[start + k + len / 2] * wk;
                    scratch[start + k] = u + v;
                    scratch[start + k + len / 2] = u - v;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) data[i * stride] = scratch[i];
        return;
    }

    for (std::size_t k = 0; k < n; ++k) {
        Complex acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / static_cast<double>(n);
            acc += scratch[i] * std::polar(1.0, ang);
        }
        data[k * stride] = acc;
    }
}

void transform_2d(Spectrum& s, bool inverse) {
    std::vector<Complex> scratch;
    for (std::size_t r = 0; r < s.rows; ++r) transform_1d(s.bins.data() + r * s.cols, s.cols, 1, inverse, scratch);
    for (std::size_t c = 0; c < s.cols; ++c) transform_1d(s.bins.data() + c, s.rows, s.cols, inverse, scratch);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding) {
    return filter2d(input, kernel, padding, true);
}

Tensor correlate2d(const Tensor& input, const Tensor& kernel, Padding padding) {
    return filter2d(input, kernel, padding, false);
}

Tensor conv3d_temporal(const Tensor& window, const Tensor& kernel, Padding spatial_padding) {
    require_rank(window, 4, "window");
    require_rank(kernel, 3, "kernel");
    const std::size_t c = window.dim(0), tk = window.dim(1), h = window.dim(2), w = window.dim(3);
    if (kernel.dim(0) != tk)
        throw DimensionError("window has " + std::to_string(tk) + " frames but kernel has " +
                                 std::to_string(kernel.dim(0)) + " temporal taps",
                             "kernel");
    Tensor out;
    for (std::size_t tap = 0; tap < tk; ++tap) {
        Tensor frames({c, h, w});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) frames.at(ch, y, x) = window.at(ch, tap, y, x);
        Tensor part = conv2d(frames, kernel.slice(tap), spatial_padding);
        if (out.empty())
            out = std::move(part);
        else
            out += part;
    }
    return out;
}

Spectrum dft2d(const Tensor& input) {
    require_rank(input, 2, "input");
    Spectrum s{input.dim(0), input.dim(1), {}};
    s.bins.assign(input.data().begin(), input.data().end());
    transform_2d(s, false);
    return s;
}

Spectrum dft2d(const Spectrum& input) {
    Spectrum s = input;
    transform_2d(s, false);
    return s;
}

Spectrum idft2d_complex(const Spectrum& spectrum) {
    Spectrum s = spectrum;
    transform_2d(s, true);
    const double scale = 1.0 / static_cast<double>(s.rows * s.cols);
    for (auto& b : s.bins) b *= scale;
    return s;
}

Tensor idft2d(const Spectrum& spectrum) {
    const Spectrum s = idft2d_complex(spectrum);
    Tensor out({s.rows, s.cols});
    for (std::size_t i = 0; i < s.bins.size(); ++i) out[i] = s.bins[i].real();
    return out;
}

Tensor rotate90(const Tensor& kernel) {
    if (kernel.rank() < 2) throw DimensionError("rotate90 needs at least rank 2", "kernel");
    const std::size_t hk = kernel.dim(kernel.rank() - 2), wk = kernel.dim(kernel.rank() - 1);
    Shape shape = kernel.shape();
    shape[shape.size() - 2] = wk;
    shape[shape.size() - 1] = hk;
    Tensor out(shape);
    const std::size_t slices = kernel.size() / (hk * wk);
    for (std::size_t s = 0; s < slices; ++s) {
        const double* src = kernel.data().data() + s * hk * wk;
        double* dst = out.data().data() + s * hk * wk;
        // Counter-clockwise: new(i, j) = old(j, wk-1-i).
        for (std::size_t i = 0; i < wk; ++i)
            for (std::size_t j = 0; j < hk; ++j) dst[i * hk + j] = src[j * wk + (wk - 1 - i)];
    }
    return out;
}

Tensor bilinear_warp(const Tensor& image, const Tensor& flow) {
    require_rank(image, 3, "image");
    require_rank(flow, 3, "flow");
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (flow.dim(0) != 2 || flow.dim(1) != h || flow.dim(2) != w)
        throw DimensionError("flow " + shape_string(flow.shape()) + " does not match image " +
                                 shape_string(image.shape()),
                             "flow");
    if (!flow.all_finite()) throw PreconditionError("flow must be finite", "flow");

    Tensor out({c, h, w});
    const double max_x = static_cast<double>(w - 1), max_y = static_cast<double>(h - 1);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double sx = std::clamp(static_cast<double>(x) + flow.at(0, y, x), 0.0, max_x);
            const double sy = std::clamp(static_cast<double>(y) + flow.at(1, y, x), 0.0, max_y);
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const auto y0 = static_cast<std::size_t>(std::floor(sy));
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = (1.0 - fx) * image.at(ch, y0, x0) + fx * image.at(ch, y0, x1);
                const double bottom = (1.0 - fx) * image.at(ch, y1, x0) + fx * image.at(ch, y1, x1);
                out.at(ch, y, x) = (1.0 - fy) * top + fy * bottom;
            }
        }
    }
    return out;
}

Tensor pixel_shuffle(const Tensor& input, std::size_t scale) {
    require_rank(input, 3, "input");
    if (scale == 0) throw DimensionError("scale must be positive", "scale");
    const std::size_t cs = input.dim(0), h = input.dim(1), w = input.dim(2), s2 = scale * scale;
    if (cs % s2 != 0)
        throw DimensionError(std::to_string(cs) + " channels not divisible by " + std::to_string(s2), "input");
    const std::size_t c = cs / s2;
    Tensor out({c, h * scale, w * scale});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < scale; ++i)
            for (std::size_t j = 0; j < scale; ++j)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        out.at(ch, y * scale + i, x * scale + j) = input.at(ch * s2 + i * scale + j, y, x);
    return out;
}

Tensor pixel_unshuffle(const Tensor& input, std::size_t scale) {
    require_rank(input, 3, "input");
    if (scale == 0) throw DimensionError("scale must be positive", "scale");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % scale != 0 || w % scale != 0)
        throw DimensionError("extents " + shape_string(input.shape()) + " not divisible by " + std::to_string(scale),
                             "input");
    const std::size_t s2 = scale * scale, oh = h / scale, ow = w / scale;
    Tensor out({c * s2, oh, ow});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < scale; ++i)
            for (std::size_t j = 0; j < scale; ++j)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x)
                        out.at(ch * s2 + i * scale + j, y, x) = input.at(ch, y * scale + i, x * scale + j);
    return out;
}

}  // namespace hipass
