#include "duocast/field.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace duocast {

Field::Field(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels >= 1 && height >= 1 && width >= 1,
          "field shape components must be >= 1, got (" + std::to_string(channels) + "," + std::to_string(height) +
              "," + std::to_string(width) + ")");
  values_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Field::Field(int channels, int height, int width, std::vector<double> values)
    : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
  require(channels >= 1 && height >= 1 && width >= 1, "field shape components must be >= 1");
  require(values_.size() == static_cast<std::size_t>(channels) * height * width,
          "field value count " + std::to_string(values_.size()) + " does not match shape");
  require(all_finite(), "field values must be finite");
}

bool Field::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double Field::squared_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

SequenceField::SequenceField(std::vector<Field> frames) : frames_(std::move(frames)) {
  require(!frames_.empty(), "sequence must contain at least one frame");
  for (std::size_t i = 1; i < frames_.size(); ++i) {
    require(frames_[i].same_shape(frames_[0]), "frame " + std::to_string(i) + " shape differs from frame 0");
  }
}

SequenceField::SequenceField(int frames, int channels, int height, int width, double fill) {
  require(frames >= 1, "sequence must contain at least one frame");
  frames_.assign(static_cast<std::size_t>(frames), Field(channels, height, width, fill));
}

bool SequenceField::all_finite() const {
  return std::all_of(frames_.begin(), frames_.end(), [](const Field& f) { return f.all_finite(); });
}

double SequenceField::squared_norm() const {
  double s = 0.0;
  for (const auto& f : frames_) s += f.squared_norm();
  return s;
}

SequenceField SequenceField::slice(int start, int count) const {
  require(start >= 0 && count >= 1 && start + count <= length(),
          "frame slice [" + std::to_string(start) + "," + std::to_string(start + count) + ") out of range for length " +
              std::to_string(length()));
  return SequenceField(std::vector<Field>(frames_.begin() + start, frames_.begin() + start + count));
}

template <class Real>
Tensor<Real> SequenceField::to_tensor() const {
  Tensor<Real> t({length(), channels(), height(), width()});
  std::size_t k = 0;
  for (const auto& f : frames_) {
    for (double v : f.values()) t[k++] = static_cast<Real>(v);
  }
  return t;
}

template <class Real>
SequenceField SequenceField::from_tensor(const Tensor<Real>& t) {
  require(t.rank() == 4, "sequence tensor must be rank 4 [S,C,H,W], got " + shape_str(t.shape()));
  const int s = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const std::size_t per = static_cast<std::size_t>(c) * h * w;
  std::vector<Field> frames;
  frames.reserve(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    std::vector<double> v(per);
    for (std::size_t k = 0; k < per; ++k) v[k] = static_cast<double>(t[i * per + k]);
    frames.emplace_back(c, h, w, std::move(v));
  }
  return SequenceField(std::move(frames));
}

template Tensor<float> SequenceField::to_tensor<float>() const;
template Tensor<double> SequenceField::to_tensor<double>() const;
template SequenceField SequenceField::from_tensor<float>(const Tensor<float>&);
template SequenceField SequenceField::from_tensor<double>(const Tensor<double>&);

namespace {

template <class Op>
SequenceField zip(const SequenceField& a, const SequenceField& b, Op op) {
  require(a.same_shape(b), "sequence shape mismatch");
  SequenceField out = a;
  for (int i = 0; i < a.length(); ++i) {
    auto dst = out[i].values();
    auto src = b[i].values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = op(dst[k], src[k]);
  }
  return out;
}

}  // namespace

SequenceField operator+(const SequenceField& a, const SequenceField& b) {
  return zip(a, b, [](double x, double y) { return x + y; });
}

SequenceField operator-(const SequenceField& a, const SequenceField& b) {
  return zip(a, b, [](double x, double y) { return x - y; });
}

SequenceField scaled(const SequenceField& a, double s) {
  SequenceField out = a;
  for (int i = 0; i < out.length(); ++i)
    for (double& v : out[i].values()) v *= s;
  return out;
}

double inner_product(const SequenceField& a, const SequenceField& b) {
  require(a.same_shape(b), "sequence shape mismatch");
  double s = 0.0;
  for (int i = 0; i < a.length(); ++i) {
    auto x = a[i].values();
    auto y = b[i].values();
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  }
  return s;
}

double max_abs_difference(const SequenceField& a, const SequenceField& b) {
  require(a.same_shape(b), "sequence shape mismatch");
  double m = 0.0;
  for (int i = 0; i < a.length(); ++i) {
    auto x = a[i].values();
    auto y = b[i].values();
    for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::abs(x[k] - y[k]));
  }
  return m;
}

SequenceField clamp01(const SequenceField& a) {
  SequenceField out = a;
  for (int i = 0; i < out.length(); ++i)
    for (double& v : out[i].values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

SequenceField concat_time(const SequenceField& a, const SequenceField& b) {
  require(a[0].same_shape(b[0]), "frame shape mismatch in temporal concatenation");
  std::vector<Field> frames = a.frames();
  frames.insert(frames.end(), b.frames().begin(), b.frames().end());
  return SequenceField(std::move(frames));
}

}  // namespace duocast
