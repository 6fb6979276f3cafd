#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "duocast/tensor.hpp"

namespace duocast {

// One frame: channels x height x width, row-major, finite values.
class Field {
 public:
  Field() = default;
  Field(int channels, int height, int width, double fill = 0.0);
  Field(int channels, int height, int width, std::vector<double> values);

  static Field single(int height, int width, std::vector<double> values) {
    return Field(1, height, width, std::move(values));
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  double& operator()(int c, int y, int x) {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double operator()(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double& operator()(int y, int x) { return (*this)(0, y, x); }
  double operator()(int y, int x) const { return (*this)(0, y, x); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> plane(int c) { return std::span<double>(values_).subspan(c * plane_size(), plane_size()); }
  std::span<const double> plane(int c) const {
    return std::span<const double>(values_).subspan(c * plane_size(), plane_size());
  }

  bool same_shape(const Field& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;
  double squared_norm() const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// S frames of identical shape.
class SequenceField {
 public:
  SequenceField() = default;
  explicit SequenceField(std::vector<Field> frames);
  SequenceField(int frames, int channels, int height, int width, double fill = 0.0);

  int length() const { return static_cast<int>(frames_.size()); }
  int channels() const { return frames_.front().channels(); }
  int height() const { return frames_.front().height(); }
  int width() const { return frames_.front().width(); }
  std::size_t size() const { return frames_.size() * frames_.front().size(); }

  Field& operator[](int i) { return frames_[static_cast<std::size_t>(i)]; }
  const Field& operator[](int i) const { return frames_[static_cast<std::size_t>(i)]; }
  const std::vector<Field>& frames() const { return frames_; }

  bool same_shape(const SequenceField& other) const {
    return length() == other.length() && frames_.front().same_shape(other.frames_.front());
  }
  bool all_finite() const;
  double squared_norm() const;

  // Frames [start, start + count).
  SequenceField slice(int start, int count) const;

  // [S, C, H, W] tensor view used by the model code.
  template <class Real>
  Tensor<Real> to_tensor() const;
  template <class Real>
  static SequenceField from_tensor(const Tensor<Real>& t);

 private:
  std::vector<Field> frames_;
};

// Elementwise helpers on same-shaped sequences.
SequenceField operator+(const SequenceField& a, const SequenceField& b);
SequenceField operator-(const SequenceField& a, const SequenceField& b);
SequenceField scaled(const SequenceField& a, double s);
double inner_product(const SequenceField& a, const SequenceField& b);
double max_abs_difference(const SequenceField& a, const SequenceField& b);
SequenceField clamp01(const SequenceField& a);

// Concatenates frames in time: [a_1..a_S, b_1..b_S'].
SequenceField concat_time(const SequenceField& a, const SequenceField& b);

}  // namespace duocast
