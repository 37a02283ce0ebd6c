#pragma once

#include <complex>
#include <vector>

#include "hipass/tensor.hpp"

namespace hipass {

enum class Padding {
    same_zero,
    same_replicate,
    same_circular,
    valid,
};

Padding parse_padding(const std::string& name);

/// True 2-D convolution (kernel flipped) of every channel of a [C,H,W]
/// input with one odd-sized [Hk,Wk] kernel. Rank-2 inputs are treated as a
/// single channel and return rank 2.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding);

/// Same as conv2d but without flipping the kernel. Learned layers use this
/// form; the fixed high-pass filters always go through conv2d.
Tensor correlate2d(const Tensor& input, const Tensor& kernel, Padding padding);

/// Space-time filtering of a [C,Tk,H,W] window with a [Tk,Hk,Wk] kernel.
/// Temporal tap i multiplies frame i of the window (no temporal flip, no
/// temporal padding); each tap is a spatial conv2d and the taps are summed.
Tensor conv3d_temporal(const Tensor& window, const Tensor& kernel, Padding spatial_padding);

using Complex = std::complex<double>;

/// Complex [H,W] grid, row-major.
struct Spectrum {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Complex> bins;

    Complex& operator()(std::size_t r, std::size_t c) { return bins[r * cols + c]; }
    Complex operator()(std::size_t r, std::size_t c) const { return bins[r * cols + c]; }
};

/// Unnormalized forward DFT of an [H,W] tensor. Power-of-two axes use a
/// radix-2 FFT, others the direct sum.
Spectrum dft2d(const Tensor& input);
Spectrum dft2d(const Spectrum& input);

/// Inverse of dft2d (scaled by 1/(H*W)); returns the real part.
Tensor idft2d(const Spectrum& spectrum);
Spectrum idft2d_complex(const Spectrum& spectrum);

/// Rotates every trailing [Hk,Wk] slice 90 degrees counter-clockwise.
Tensor rotate90(const Tensor& kernel);

/// Backward warp: out(c,y,x) = image(c, y+v, x+u) with bilinear
/// interpolation, flow = [u;v] as [2,H,W]. Sample positions are clamped to
/// the image border.
Tensor bilinear_warp(const Tensor& image, const Tensor& flow);

/// Depth-to-space: [C*s*s,H,W] -> [C,s*H,s*W],
/// out(c, y*s+i, x*s+j) = in(c*s*s + i*s + j, y, x).
Tensor pixel_shuffle(const Tensor& input, std::size_t scale);
Tensor pixel_unshuffle(const Tensor& input, std::size_t scale);

}  // namespace hipass
