#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hipass/signal.hpp"
#include "hipass/tensor.hpp"

namespace hipass {

/// Fixed set of M equally-sized [Tk,Hk,Wk] high-pass kernels.
class KernelBasis {
public:
    KernelBasis() = default;
    /// Throws PreconditionError if any kernel is not zero-sum (1e-12) and
    /// DimensionError if extents differ. `require_high_pass = false` is for
    /// the naive standard basis, which is deliberately not high-pass.
    KernelBasis(std::vector<Tensor> kernels, std::vector<std::string> names, bool require_high_pass = true);

    std::size_t size() const noexcept { return kernels_.size(); }
    const Tensor& kernel(std::size_t j) const { return kernels_.at(j); }
    const std::string& name(std::size_t j) const { return names_.at(j); }
    const std::vector<Tensor>& kernels() const noexcept { return kernels_; }
    const Shape& extents() const;  // {Tk,Hk,Wk}
    std::size_t kernel_size() const { return shape_size(extents()); }

    /// Same basis with every spatial slice rotated 90 degrees CCW.
    KernelBasis rotated() const;

    /// [M,Tk,Hk,Wk] packing.
    Tensor stacked() const;

private:
    std::vector<Tensor> kernels_;
    std::vector<std::string> names_;
    bool high_pass_ = true;
};

/// Non-negative mixing weights, one per basis kernel.
class CoefficientVector {
public:
    CoefficientVector() = default;
    /// Throws PreconditionError on a negative or non-finite entry.
    explicit CoefficientVector(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t j) const { return values_[j]; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> values_;
};

struct DynamicKernel {
    Tensor kernel;   // [1,Tk,Hk,Wk]
    Tensor rotated;  // same coefficients over the rotated basis
    CoefficientVector source_coefficients;
};

struct FrequencyResponse {
    std::size_t grid = 0;
    // Axes sampled at w = pi * i / (grid - 1). Magnitudes are [Gt,G,G]
    // with Gt = 1 for single-tap kernels, ordered (temporal, vertical,
    // horizontal).
    Tensor magnitudes;
    std::vector<Complex> response;
    double dc_gain = 0.0;
    double cutoff = 0.0;          // radial frequency of the first -3 dB crossing
    double peak_frequency = 0.0;  // radial frequency of the maximum magnitude
    double peak_magnitude = 0.0;

    double sample_frequency(std::size_t i) const;
};

struct HighPassReport {
    bool high_pass = false;
    double dc_gain = 0.0;
    double cutoff = 0.0;
    double peak_frequency = 0.0;
};

/// Sobel-x/4, Sobel-y/4 at the centre temporal tap, then the temporal
/// differencing kernels [0,-1,1] and [1,-1/2,-1/2] on the centre pixel.
KernelBasis make_default_basis();

/// new - (<new,against>/<against,against>) against.
Tensor gram_schmidt(const Tensor& v, const Tensor& against);

DynamicKernel combine(const KernelBasis& basis, const CoefficientVector& coeffs);

/// Samples the DTFT of a [Hk,Wk] or [Tk,Hk,Wk] kernel on a `grid`^d
/// lattice over [0,pi] per axis (grid >= 8).
FrequencyResponse frequency_response(const Tensor& kernel, std::size_t grid = 16);

HighPassReport verify_high_pass(const Tensor& kernel, double tolerance = 1e-9, std::size_t grid = 16);

/// Applies (I - 11^T/n) to the flattened kernel.
Tensor project_zero_mean(const Tensor& a);

/// Seeded standard-normal matrix projected to zero mean.
Tensor random_high_pass(std::size_t rows, std::size_t cols, std::uint64_t seed);
Tensor random_high_pass(const Shape& shape, std::uint64_t seed);

enum class BasisKind {
    default_basis,
    laplacian,
    kirsch,
    sobel,
    temporal,
    sobel_temporal,
    random,
    naive,
};

BasisKind parse_basis_kind(const std::string& name);
std::string to_string(BasisKind kind);

/// Ablation families, each embedded in 3x3x3 space-time kernels.
/// `naive` is the standard basis e_1..e_27 and is not high-pass.
KernelBasis make_basis(BasisKind kind, std::uint64_t seed = 0);
KernelBasis make_ablation_bases(BasisKind kind, std::uint64_t seed = 0);

/// Places a [Hk,Wk] kernel at the centre tap of a [tk,Hk,Wk] kernel.
Tensor embed_spatial(const Tensor& spatial, std::size_t tk = 3);
/// Places temporal taps on the centre pixel of a [T,hk,wk] kernel.
Tensor embed_temporal(const std::vector<double>& taps, std::size_t hk = 3, std::size_t wk = 3);

/// Plain-text kernel format: temporal slices as blocks of
/// whitespace-separated rows separated by blank lines, kernels separated by
/// a line holding "---", '#' starts a comment line.
void write_kernels(std::ostream& os, const std::vector<Tensor>& kernels);
std::vector<Tensor> read_kernels(std::istream& is);

}  // namespace hipass
