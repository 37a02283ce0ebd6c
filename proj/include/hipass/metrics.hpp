#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "hipass/tensor.hpp"

namespace hipass {

/// Reported in place of +inf for identical inputs.
inline constexpr double kPsnrSentinel = 100.0;

double mse(const Tensor& a, const Tensor& b);
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// Per-frame PSNR averaged over the clip.
double psnr(const VideoClip& a, const VideoClip& b, double peak = 1.0);

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, K1 0.01,
/// K2 0.03, dynamic range 1). Colour frames are compared on their luma.
double ssim(const Tensor& a, const Tensor& b);
double ssim(const VideoClip& a, const VideoClip& b);

/// BT.601 luma of a [C,H,W] frame as [H,W]; grey frames pass through.
Tensor to_gray(const Tensor& frame);

inline constexpr std::size_t kSubbands = 10;

/// Index of the band holding DFT bin (u, v) of an H x W spectrum: the
/// centred radial frequency is scaled so the corner (1/2, 1/2) maps to 2*pi
/// and [0, 2*pi] is cut into 10 equal intervals (the corner joins the last).
std::size_t subband_index(std::size_t u, std::size_t v, std::size_t height, std::size_t width);
double subband_radius(std::size_t u, std::size_t v, std::size_t height, std::size_t width);

struct SubbandReport {
    std::string reference_variant;
    std::array<double, kSubbands + 1> edges{};
    std::array<double, kSubbands> mse{};       // output MSE minus reference MSE
    std::array<double, kSubbands> absolute{};  // output MSE per band
    std::array<double, kSubbands> reference{};
    std::array<double, kSubbands> energy{};    // squared spectral error of the output, /(H*W)
    std::array<std::size_t, kSubbands> counts{};
    double total_energy = 0.0;  // spatial squared error of the output (Parseval)
};

/// Per-band spectral MSE of `outputs` against `ground_truth`, minus that of
/// `reference_outputs`, averaged over frames and channels.
SubbandReport subband_mse(const VideoClip& outputs, const VideoClip& reference_outputs, const VideoClip& ground_truth,
                          const std::string& reference_variant = "reference");

/// log(1 + |F|) of the luma spectrum, fftshifted so DC sits at (H/2, W/2).
Tensor centered_log_spectrum(const Tensor& frame);

/// Writes `<stem>.pgm` (min-max normalised) and `<stem>.vten` (raw
/// "spectrum" record); returns the spectrum.
Tensor spectrum_dump(const Tensor& frame, const std::filesystem::path& stem);

}  // namespace hipass
