#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "hipass/error.hpp"

namespace hipass {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Images are stored as [C,H,W], temporal windows as [C,T,H,W] and clips
/// handed to the model as a list of [C,H,W] frames. Every extent is
/// positive; a default-constructed tensor is the only empty one.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;
    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

    Tensor reshaped(Shape shape) const;

    // Sub-tensor `index` along axis 0, and its inverse.
    Tensor slice(std::size_t index) const;
    void set_slice(std::size_t index, const Tensor& value);

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s);

    double sum() const;
    double mean() const;
    double max_abs() const;
    bool all_finite() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

double dot(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);
Tensor clamp(Tensor t, double lo, double hi);
Tensor abs(Tensor t);

void require_same_shape(const Tensor& a, const Tensor& b, const char* field);
void require_rank(const Tensor& t, std::size_t rank, const char* field);

/// Throws PreconditionError unless `frame` is a [C,H,W] image with C in {1,3}
/// and every value in [0,1].
void validate_frame(const Tensor& frame, const char* field = "frame");

/// Ordered list of equally-shaped [C,H,W] frames.
class VideoClip {
public:
    VideoClip() = default;
    explicit VideoClip(std::vector<Tensor> frames, double frame_rate = 30.0);

    std::size_t length() const noexcept { return frames_.size(); }
    const Tensor& operator[](std::size_t t) const { return frames_[t]; }
    Tensor& operator[](std::size_t t) { return frames_[t]; }
    const std::vector<Tensor>& frames() const noexcept { return frames_; }
    const Shape& frame_shape() const;
    double frame_rate() const noexcept { return frame_rate_; }

    void push_back(Tensor frame);

    // [T,C,H,W] packing used by the container format.
    Tensor stacked() const;
    static VideoClip from_stacked(const Tensor& t, double frame_rate = 30.0);

    // Frame rate is metadata and does not take part in equality.
    bool operator==(const VideoClip& other) const { return frames_ == other.frames_; }

private:
    std::vector<Tensor> frames_;
    double frame_rate_ = 30.0;
};

}  // namespace hipass
