#include "hipass/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "hipass/rng.hpp"

namespace hipass {

namespace {

constexpr double kZeroSumTol = 1e-12;

Tensor as_3d(const Tensor& k) {
    if (k.rank() == 2) return k.reshaped({1, k.dim(0), k.dim(1)});
    if (k.rank() == 3) return k;
    if (k.rank() == 4 && k.dim(0) == 1) return k.reshaped({k.dim(1), k.dim(2), k.dim(3)});
    throw DimensionError("kernel must be [Hk,Wk], [Tk,Hk,Wk] or [1,Tk,Hk,Wk], got " + shape_string(k.shape()),
                         "kernel");
}

}  // namespace

KernelBasis::KernelBasis(std::vector<Tensor> kernels, std::vector<std::string> names, bool require_high_pass)
    : kernels_(std::move(kernels)), names_(std::move(names)), high_pass_(require_high_pass) {
    if (kernels_.empty()) throw DimensionError("basis needs at least one kernel", "kernels");
    if (names_.size() != kernels_.size()) throw DimensionError("one name per kernel required", "names");
    for (auto& k : kernels_) {
        k = as_3d(k);
        if (k.shape() != kernels_.front().shape())
            throw DimensionError("basis kernels differ in extent: " + shape_string(k.shape()) + " vs " +
                                     shape_string(kernels_.front().shape()),
                                 "kernels");
        if (high_pass_ && std::abs(k.sum()) > kZeroSumTol)
            throw PreconditionError("basis kernel does not sum to zero (sum " + std::to_string(k.sum()) + ")",
                                    "kernels");
    }
}

const Shape& KernelBasis::extents() const {
    if (kernels_.empty()) throw DimensionError("empty basis", "kernels");
    return kernels_.front().shape();
}

KernelBasis KernelBasis::rotated() const {
    std::vector<Tensor> rot;
    rot.reserve(kernels_.size());
    for (const auto& k : kernels_) rot.push_back(rotate90(k));
    std::vector<std::string> names;
    for (const auto& n : names_) names.push_back(n + "'");
    return KernelBasis(std::move(rot), std::move(names), high_pass_);
}

Tensor KernelBasis::stacked() const {
    const Shape& e = extents();
    Tensor out({kernels_.size(), e[0], e[1], e[2]});
    for (std::size_t j = 0; j < kernels_.size(); ++j) out.set_slice(j, kernels_[j]);
    return out;
}

CoefficientVector::CoefficientVector(std::vector<double> values) : values_(std::move(values)) {
    for (auto v : values_) {
        if (!std::isfinite(v)) throw PreconditionError("coefficients must be finite", "coeffs");
        if (v < 0.0) throw PreconditionError("coefficients must be non-negative, got " + std::to_string(v), "coeffs");
    }
}

double FrequencyResponse::sample_frequency(std::size_t i) const {
    return std::numbers::pi * static_cast<double>(i) / static_cast<double>(grid - 1);
}

Tensor embed_spatial(const Tensor& spatial, std::size_t tk) {
    require_rank(spatial, 2, "spatial");
    Tensor out({tk, spatial.dim(0), spatial.dim(1)});
    out.set_slice(tk / 2, spatial);
    return out;
}

Tensor embed_temporal(const std::vector<double>& taps, std::size_t hk, std::size_t wk) {
    Tensor out({taps.size(), hk, wk});
    for (std::size_t t = 0; t < taps.size(); ++t) out.at(t, hk / 2, wk / 2) = taps[t];
    return out;
}

namespace {

Tensor sobel_x() {
    return Tensor({3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1}) * 0.25;
}

Tensor sobel_y() {
    return Tensor({3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1}) * 0.25;
}

}  // namespace

KernelBasis make_default_basis() {
    const Tensor forward_diff({3}, {0.0, -1.0, 1.0});
    const Tensor second = gram_schmidt(Tensor({3}, {1.0, -1.0, 0.0}), forward_diff);
    return KernelBasis(
        {embed_spatial(sobel_x()), embed_spatial(sobel_y()), embed_temporal(forward_diff.storage()),
         embed_temporal(second.storage())},
        {"sobel_x", "sobel_y", "temporal_forward", "temporal_centered"});
}

Tensor gram_schmidt(const Tensor& v, const Tensor& against) {
    if (v.size() != against.size()) throw DimensionError("gram_schmidt: size mismatch", "against");
    const double norm2 = dot(against, against);
    if (norm2 == 0.0) throw SingularityError("cannot orthogonalise against a zero vector", "against");
    const double proj = dot(v, against) / norm2;
    Tensor out = v;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= proj * against[i];
    return out;
}

DynamicKernel combine(const KernelBasis& basis, const CoefficientVector& coeffs) {
    if (coeffs.size() != basis.size())
        throw DimensionError("expected " + std::to_string(basis.size()) + " coefficients, got " +
                                 std::to_string(coeffs.size()),
                             "coeffs");
    const Shape& e = basis.extents();
    Tensor k({1, e[0], e[1], e[2]});
    Tensor kr({1, e[0], e[2], e[1]});
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const Tensor& bj = basis.kernel(j);
        const Tensor rj = rotate90(bj);
        for (std::size_t i = 0; i < bj.size(); ++i) {
            k[i] += coeffs[j] * bj[i];
            kr[i] += coeffs[j] * rj[i];
        }
    }
    return {std::move(k), std::move(kr), coeffs};
}

FrequencyResponse frequency_response(const Tensor& kernel, std::size_t grid) {
    if (grid < 8) throw PreconditionError("frequency grid needs at least 8 samples per axis", "grid");
    const Tensor k = as_3d(kernel);
    const std::size_t tk = k.dim(0), hk = k.dim(1), wk = k.dim(2);
    const std::size_t gt = tk > 1 ? grid : 1;

    FrequencyResponse fr;
    fr.grid = grid;
    fr.magnitudes = Tensor({gt, grid, grid});
    fr.response.resize(gt * grid * grid);

    // Taps are indexed relative to the kernel centre so the phase is
    // symmetric; the magnitude does not depend on this choice.
    const double ct = static_cast<double>(tk / 2), cy = static_cast<double>(hk / 2), cx = static_cast<double>(wk / 2);
    const double step = std::numbers::pi / static_cast<double>(grid - 1);
    for (std::size_t a = 0; a < gt; ++a) {
        const double wt = step * static_cast<double>(a);
        for (std::size_t b = 0; b < grid; ++b) {
            const double wy = step * static_cast<double>(b);
            for (std::size_t c = 0; c < grid; ++c) {
                const double wx = step * static_cast<double>(c);
                Complex acc = 0.0;
                for (std::size_t t = 0; t < tk; ++t)
                    for (std::size_t y = 0; y < hk; ++y)
                        for (std::size_t x = 0; x < wk; ++x) {
                            const double v = k.at(t, y, x);
                            if (v == 0.0) continue;
                            const double phase = wt * (static_cast<double>(t) - ct) +
                                                 wy * (static_cast<double>(y) - cy) +
                                                 wx * (static_cast<double>(x) - cx);
                            acc += v * std::polar(1.0, -phase);
                        }
                const std::size_t idx = (a * grid + b) * grid + c;
                fr.response[idx] = acc;
                fr.magnitudes[idx] = std::abs(acc);
            }
        }
    }
    fr.dc_gain = fr.magnitudes[0];

    double peak = 0.0;
    std::size_t peak_idx = 0;
    for (std::size_t i = 0; i < fr.magnitudes.size(); ++i)
        if (fr.magnitudes[i] > peak) {
            peak = fr.magnitudes[i];
            peak_idx = i;
        }
    auto radius = [&](std::size_t idx) {
        const std::size_t c = idx % grid, b = (idx / grid) % grid, a = idx / (grid * grid);
        return step * std::sqrt(static_cast<double>(a * a + b * b + c * c));
    };
    fr.peak_magnitude = peak;
    fr.peak_frequency = radius(peak_idx);
    fr.cutoff = 0.0;
    if (peak > 0.0) {
        double best = std::numeric_limits<double>::infinity();
        const double threshold = peak / std::numbers::sqrt2;
        for (std::size_t i = 0; i < fr.magnitudes.size(); ++i)
            if (fr.magnitudes[i] >= threshold) best = std::min(best, radius(i));
        fr.cutoff = best;
    }
    return fr;
}

HighPassReport verify_high_pass(const Tensor& kernel, double tolerance, std::size_t grid) {
    const FrequencyResponse fr = frequency_response(kernel, grid);
    return {fr.dc_gain <= tolerance, fr.dc_gain, fr.cutoff, fr.peak_frequency};
}

Tensor project_zero_mean(const Tensor& a) {
    const double m = a.mean();
    Tensor out = a;
    for (auto& v : out.storage()) v -= m;
    return out;
}

Tensor random_high_pass(const Shape& shape, std::uint64_t seed) {
    const std::size_t n = shape_size(shape);
    if (n < 2) throw DimensionError("random high-pass kernel needs at least 2 entries", "shape");
    Rng rng(seed);
    Tensor a(shape);
    for (auto& v : a.storage()) v = rng.normal();
    return project_zero_mean(a);
}

Tensor random_high_pass(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows * cols < 2) throw DimensionError("random high-pass kernel needs at least 2 entries", "rows");
    return random_high_pass(Shape{rows, cols}, seed);
}

BasisKind parse_basis_kind(const std::string& name) {
    if (name == "default" || name == "sobel+temporal-diff") return BasisKind::default_basis;
    if (name == "laplacian") return BasisKind::laplacian;
    if (name == "kirsch") return BasisKind::kirsch;
    if (name == "sobel") return BasisKind::sobel;
    if (name == "temporal") return BasisKind::temporal;
    if (name == "sobel+temporal") return BasisKind::sobel_temporal;
    if (name == "random") return BasisKind::random;
    if (name == "naive") return BasisKind::naive;
    throw UsageError("unknown basis '" + name + "'", "basis");
}

std::string to_string(BasisKind kind) {
    switch (kind) {
        case BasisKind::default_basis: return "default";
        case BasisKind::laplacian: return "laplacian";
        case BasisKind::kirsch: return "kirsch";
        case BasisKind::sobel: return "sobel";
        case BasisKind::temporal: return "temporal";
        case BasisKind::sobel_temporal: return "sobel+temporal";
        case BasisKind::random: return "random";
        case BasisKind::naive: return "naive";
    }
    return "unknown";
}

KernelBasis make_basis(BasisKind kind, std::uint64_t seed) {
    const std::vector<double> grad_t = {0.5, -1.0, 0.5};
    switch (kind) {
        case BasisKind::default_basis: return make_default_basis();
        case BasisKind::laplacian:
            return KernelBasis({embed_spatial(Tensor({3, 3}, {0, 1, 0, 1, -4, 1, 0, 1, 0}))}, {"laplacian"});
        case BasisKind::kirsch: {
            const Tensor east = Tensor({3, 3}, {-3, -3, 5, -3, 0, 5, -3, -3, 5}) * (1.0 / 15.0);
            const Tensor north = Tensor({3, 3}, {5, 5, 5, -3, 0, -3, -3, -3, -3}) * (1.0 / 15.0);
            return KernelBasis({embed_spatial(east), embed_spatial(north)}, {"kirsch_e", "kirsch_n"});
        }
        case BasisKind::sobel:
            return KernelBasis({embed_spatial(sobel_x()), embed_spatial(sobel_y())}, {"sobel_x", "sobel_y"});
        case BasisKind::temporal: return KernelBasis({embed_temporal(grad_t)}, {"temporal_gradient"});
        case BasisKind::sobel_temporal:
            return KernelBasis({embed_spatial(sobel_x()), embed_spatial(sobel_y()), embed_temporal(grad_t)},
                               {"sobel_x", "sobel_y", "temporal_gradient"});
        case BasisKind::random: {
            std::vector<Tensor> ks;
            std::vector<std::string> names;
            for (std::uint64_t j = 0; j < 4; ++j) {
                ks.push_back(random_high_pass(Shape{3, 3, 3}, seed + j));
                names.push_back("random_" + std::to_string(j));
            }
            return KernelBasis(std::move(ks), std::move(names));
        }
        case BasisKind::naive: {
            std::vector<Tensor> ks;
            std::vector<std::string> names;
            for (std::size_t j = 0; j < 27; ++j) {
                Tensor e({3, 3, 3});
                e[j] = 1.0;
                ks.push_back(std::move(e));
                names.push_back("e" + std::to_string(j));
            }
            return KernelBasis(std::move(ks), std::move(names), false);
        }
    }
    throw UsageError("unknown basis kind", "basis");
}

KernelBasis make_ablation_bases(BasisKind kind, std::uint64_t seed) {
    if (kind == BasisKind::naive) throw UsageError("the naive basis is not a high-pass family", "basis");
    return make_basis(kind, seed);
}

void write_kernels(std::ostream& os, const std::vector<Tensor>& kernels) {
    os << std::setprecision(17);
    for (std::size_t n = 0; n < kernels.size(); ++n) {
        if (n) os << "---\n";
        const Tensor k = as_3d(kernels[n]);
        for (std::size_t t = 0; t < k.dim(0); ++t) {
            if (t) os << '\n';
            for (std::size_t y = 0; y < k.dim(1); ++y) {
                for (std::size_t x = 0; x < k.dim(2); ++x) os << (x ? " " : "") << k.at(t, y, x);
                os << '\n';
            }
        }
    }
}

std::vector<Tensor> read_kernels(std::istream& is) {
    std::vector<Tensor> kernels;
    std::vector<std::vector<std::vector<double>>> slices;  // current kernel
    std::vector<std::vector<double>> rows;                 // current slice
    std::size_t line_no = 0;

    auto close_slice = [&] {
        if (!rows.empty()) slices.push_back(std::move(rows));
        rows.clear();
    };
    auto close_kernel = [&] {
        close_slice();
        if (slices.empty()) return;
        const std::size_t h = slices.front().size(), w = slices.front().front().size();
        Tensor k({slices.size(), h, w});
        for (std::size_t t = 0; t < slices.size(); ++t) {
            if (slices[t].size() != h) throw FormatError("kernel slices differ in row count", "kernel");
            for (std::size_t y = 0; y < h; ++y) {
                if (slices[t][y].size() != w) throw FormatError("kernel rows differ in length", "kernel");
                for (std::size_t x = 0; x < w; ++x) k.at(t, y, x) = slices[t][y][x];
            }
        }
        kernels.push_back(std::move(k));
        slices.clear();
    };

    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            close_slice();
            continue;
        }
        if (line[first] == '#') continue;
        if (line.compare(first, 3, "---") == 0) {
            close_kernel();
            continue;
        }
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw FormatError("line " + std::to_string(line_no) + ": '" + tok + "' is not a number", "kernel");
            }
        }
        rows.push_back(std::move(row));
    }
    close_kernel();
    if (kernels.empty()) throw FormatError("no kernel found", "kernel");
    return kernels;
}

}  // namespace hipass
