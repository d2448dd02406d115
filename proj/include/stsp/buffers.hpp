#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stsp/errors.hpp"

namespace stsp {

inline void require_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeMismatch(msg);
}

// Row-major, channel-interleaved float image with values clamped to [0,1].
class ImageBuffer {
public:
  ImageBuffer() = default;

  ImageBuffer(int height, int width, int channels, float fill = 0.0f)
      : h_(height), w_(width), c_(channels) {
    validate_dims();
    data_.assign(static_cast<std::size_t>(h_) * w_ * c_, clamp01(fill));
  }

  ImageBuffer(int height, int width, int channels, std::vector<float> data)
      : h_(height), w_(width), c_(channels), data_(std::move(data)) {
    validate_dims();
    if (data_.size() != static_cast<std::size_t>(h_) * w_ * c_)
      throw ShapeMismatch("ImageBuffer: data size does not match dims");
    for (float& v : data_) {
      if (!std::isfinite(v)) throw BadParams("ImageBuffer: non-finite pixel value");
      v = clamp01(v);
    }
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return data_.size(); }

  float operator()(int i, int j, int k = 0) const {
    return data_[(static_cast<std::size_t>(i) * w_ + j) * c_ + k];
  }
  float& at(int i, int j, int k = 0) {
    return data_[(static_cast<std::size_t>(i) * w_ + j) * c_ + k];
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const ImageBuffer& o) const {
    return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  static float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

private:
  void validate_dims() const {
    if (h_ <= 0 || w_ <= 0) throw BadParams("ImageBuffer: non-positive size");
    if (c_ != 1 && c_ != 3) throw BadParams("ImageBuffer: channels must be 1 or 3");
  }

  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<float> data_;
};

// Per-pixel horizontal disparities in pixels; NaN marks invalid.
class DisparityMap {
public:
  static constexpr float kInvalid = std::numeric_limits<float>::quiet_NaN();

  DisparityMap() = default;

  DisparityMap(int height, int width, float fill = kInvalid) : h_(height), w_(width) {
    if (h_ <= 0 || w_ <= 0) throw BadParams("DisparityMap: non-positive size");
    data_.assign(static_cast<std::size_t>(h_) * w_, fill);
  }

  DisparityMap(int height, int width, std::vector<float> data)
      : h_(height), w_(width), data_(std::move(data)) {
    if (h_ <= 0 || w_ <= 0) throw BadParams("DisparityMap: non-positive size");
    if (data_.size() != static_cast<std::size_t>(h_) * w_)
      throw ShapeMismatch("DisparityMap: data size does not match dims");
  }

  int height() const { return h_; }
  int width() const { return w_; }

  float operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * w_ + j]; }
  float& at(int i, int j) { return data_[static_cast<std::size_t>(i) * w_ + j]; }

  bool valid(int i, int j) const { return std::isfinite((*this)(i, j)); }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const DisparityMap& o) const { return h_ == o.h_ && w_ == o.w_; }

private:
  int h_ = 0, w_ = 0;
  std::vector<float> data_;
};

class ValidityMask {
public:
  ValidityMask() = default;

  ValidityMask(int height, int width, bool fill = false) : h_(height), w_(width) {
    if (h_ <= 0 || w_ <= 0) throw BadParams("ValidityMask: non-positive size");
    data_.assign(static_cast<std::size_t>(h_) * w_, fill ? 1 : 0);
  }

  int height() const { return h_; }
  int width() const { return w_; }

  bool operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * w_ + j] != 0; }
  void set(int i, int j, bool v) { data_[static_cast<std::size_t>(i) * w_ + j] = v ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data_) n += v;
    return n;
  }

  bool same_shape(const ValidityMask& o) const { return h_ == o.h_ && w_ == o.w_; }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

private:
  int h_ = 0, w_ = 0;
  std::vector<std::uint8_t> data_;
};

// Planar (channel, row, col) float tensor, unconstrained range. Latents,
// velocities and the STSP tensor file all use this layout.
class Tensor {
public:
  Tensor() = default;

  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c_(channels), h_(height), w_(width) {
    if (c_ <= 0 || h_ <= 0 || w_ <= 0) throw BadParams("Tensor: non-positive dims");
    data_.assign(static_cast<std::size_t>(c_) * h_ * w_, fill);
  }

  Tensor(int channels, int height, int width, std::vector<float> data)
      : c_(channels), h_(height), w_(width), data_(std::move(data)) {
    if (c_ <= 0 || h_ <= 0 || w_ <= 0) throw BadParams("Tensor: non-positive dims");
    if (data_.size() != static_cast<std::size_t>(c_) * h_ * w_)
      throw ShapeMismatch("Tensor: data size does not match dims");
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }

  float operator()(int k, int i, int j) const {
    return data_[(static_cast<std::size_t>(k) * h_ + i) * w_ + j];
  }
  float& at(int k, int i, int j) {
    return data_[(static_cast<std::size_t>(k) * h_ + i) * w_ + j];
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const Tensor& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

// Interleaved image -> planar tensor (clamps nothing; image is already [0,1]).
inline Tensor to_tensor(const ImageBuffer& img) {
  Tensor t(img.channels(), img.height(), img.width());
  for (int k = 0; k < img.channels(); ++k)
    for (int i = 0; i < img.height(); ++i)
      for (int j = 0; j < img.width(); ++j) t.at(k, i, j) = img(i, j, k);
  return t;
}

// Planar tensor -> interleaved image; values are clamped to [0,1].
inline ImageBuffer to_image(const Tensor& t) {
  if (t.channels() != 1 && t.channels() != 3)
    throw BadParams("to_image: tensor must have 1 or 3 channels");
  ImageBuffer img(t.height(), t.width(), t.channels());
  for (int k = 0; k < t.channels(); ++k)
    for (int i = 0; i < t.height(); ++i)
      for (int j = 0; j < t.width(); ++j) {
        float v = t(k, i, j);
        if (!std::isfinite(v)) throw BadParams("to_image: non-finite value");
        img.at(i, j, k) = ImageBuffer::clamp01(v);
      }
  return img;
}

}  // namespace stsp
