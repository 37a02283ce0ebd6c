#include "hipass/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hipass {

std::size_t shape_size(const Shape& shape) {
    if (shape.empty()) return 0;
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

void check_extents(const Shape& shape) {
    for (auto e : shape)
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape), "shape");
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents(shape_);
    if (shape_size(shape_) != data_.size())
        throw DimensionError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                                 " values",
                             "shape");
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t index) const {
    if (rank() < 2 || index >= shape_[0]) throw DimensionError("slice index out of range for " + shape_string(shape_));
    Shape sub(shape_.begin() + 1, shape_.end());
    const std::size_t n = shape_size(sub);
    return Tensor(sub, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(index * n),
                                           data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * n)));
}

void Tensor::set_slice(std::size_t index, const Tensor& value) {
    if (rank() < 2 || index >= shape_[0] || !std::equal(shape_.begin() + 1, shape_.end(), value.shape().begin(),
                                                        value.shape().end()))
        throw DimensionError("set_slice: " + shape_string(value.shape()) + " does not fit " + shape_string(shape_));
    std::copy(value.data_.begin(), value.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(index * value.size()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "rhs");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape(*this, other, "rhs");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

double Tensor::sum() const {
    double s = 0.0;
    for (auto v : data_) s += v;
    return s;
}

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

double Tensor::max_abs() const {
    double m = 0.0;
    for (auto v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch " + shape_string(a.shape()) + " vs " +
                                                   shape_string(b.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "b");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor clamp(Tensor t, double lo, double hi) {
    for (auto& v : t.storage()) v = std::clamp(v, lo, hi);
    return t;
}

Tensor abs(Tensor t) {
    for (auto& v : t.storage()) v = std::abs(v);
    return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* field) {
    if (a.shape() != b.shape())
        throw DimensionError("shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()), field);
}

void require_rank(const Tensor& t, std::size_t rank, const char* field) {
    if (t.rank() != rank)
        throw DimensionError("expected rank " + std::to_string(rank) + ", got " + shape_string(t.shape()), field);
}

void validate_frame(const Tensor& frame, const char* field) {
    require_rank(frame, 3, field);
    if (frame.dim(0) != 1 && frame.dim(0) != 3)
        throw PreconditionError("frames must have 1 or 3 channels, got " + shape_string(frame.shape()), field);
    for (auto v : frame.data())
        if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("frame values must lie in [0,1]", field);
}

VideoClip::VideoClip(std::vector<Tensor> frames, double frame_rate)
    : frames_(std::move(frames)), frame_rate_(frame_rate) {
    for (const auto& f : frames_) {
        require_rank(f, 3, "frames");
        if (f.shape() != frames_.front().shape())
            throw DimensionError("clip frames differ in shape: " + shape_string(f.shape()) + " vs " +
                                     shape_string(frames_.front().shape()),
                                 "frames");
    }
}

const Shape& VideoClip::frame_shape() const {
    if (frames_.empty()) throw DimensionError("empty clip has no frame shape", "frames");
    return frames_.front().shape();
}

void VideoClip::push_back(Tensor frame) {
    require_rank(frame, 3, "frame");
    if (!frames_.empty() && frame.shape() != frames_.front().shape())
        throw DimensionError("clip frames differ in shape", "frame");
    frames_.push_back(std::move(frame));
}

Tensor VideoClip::stacked() const {
    const Shape& fs = frame_shape();
    Tensor out({frames_.size(), fs[0], fs[1], fs[2]});
    for (std::size_t t = 0; t < frames_.size(); ++t) out.set_slice(t, frames_[t]);
    return out;
}

VideoClip VideoClip::from_stacked(const Tensor& t, double frame_rate) {
    require_rank(t, 4, "clip");
    std::vector<Tensor> frames;
    frames.reserve(t.dim(0));
    for (std::size_t i = 0; i < t.dim(0); ++i) frames.push_back(t.slice(i));
    return VideoClip(std::move(frames), frame_rate);
}

}  // namespace hipass
