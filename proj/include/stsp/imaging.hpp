#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"
#include "stsp/parallel.hpp"

namespace stsp {

// LeftToRight: disparity lives in the left frame and the matching column in
// the other view is j - d. RightToLeft mirrors the sign (j + d).
enum class WarpDirection { LeftToRight, RightToLeft };

inline double warp_sign(WarpDirection dir) {
  return dir == WarpDirection::LeftToRight ? -1.0 : +1.0;
}

struct WarpResult {
  ImageBuffer image;
  ValidityMask mask;
};

namespace detail {
// Horizontal bilinear footprint at continuous column x. When x sits exactly
// on a pixel the footprint is that single pixel; otherwise both corners must
// be inside [0, W-1].
struct Footprint {
  bool valid;
  int x0, x1;
  double w0, w1;
};

inline Footprint footprint_at(double x, int width) {
  if (!std::isfinite(x)) return {false, 0, 0, 0, 0};
  const double fl = std::floor(x);
  const int x0 = static_cast<int>(fl);
  const double frac = x - fl;
  if (frac == 0.0) {
    if (x0 < 0 || x0 >= width) return {false, 0, 0, 0, 0};
    return {true, x0, x0, 1.0, 0.0};
  }
  if (x0 < 0 || x0 + 1 > width - 1) return {false, 0, 0, 0, 0};
  return {true, x0, x0 + 1, 1.0 - frac, frac};
}
}  // namespace detail

// Samples `target` at (i, j -+ d(i,j)) into the disparity's own frame.
// Pixels whose bilinear footprint leaves the image, or whose disparity is
// NaN, are masked out and written as zero.
inline WarpResult backward_warp(const ImageBuffer& target, const DisparityMap& disparity,
                                WarpDirection direction) {
  if (target.height() != disparity.height() || target.width() != disparity.width())
    throw ShapeMismatch("backward_warp: image/disparity shapes differ");
  const int h = target.height(), w = target.width(), c = target.channels();
  WarpResult out{ImageBuffer(h, w, c, 0.0f), ValidityMask(h, w, false)};
  const double sign = warp_sign(direction);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int j = 0; j < w; ++j) {
      const float d = disparity(i, j);
      const auto fp = detail::footprint_at(j + sign * static_cast<double>(d), w);
      if (!fp.valid) continue;
      out.mask.set(i, j, true);
      for (int k = 0; k < c; ++k) {
        const double v = fp.w0 * target(i, fp.x0, k) + fp.w1 * target(i, fp.x1, k);
        out.image.at(i, j, k) = static_cast<float>(v);
      }
    }
  });
  return out;
}

// Adjoint of the sampling above: scatters an output-frame gradient back onto
// the target image. grad_out is interleaved (h, w, c) like ImageBuffer data.
inline std::vector<float> backward_warp_adjoint(const std::vector<float>& grad_out,
                                                const DisparityMap& disparity,
                                                WarpDirection direction, int channels) {
  const int h = disparity.height(), w = disparity.width(), c = channels;
  if (grad_out.size() != static_cast<std::size_t>(h) * w * c)
    throw ShapeMismatch("backward_warp_adjoint: gradient size mismatch");
  std::vector<double> acc(grad_out.size(), 0.0);
  const double sign = warp_sign(direction);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const auto fp = detail::footprint_at(j + sign * static_cast<double>(disparity(i, j)), w);
      if (!fp.valid) continue;
      for (int k = 0; k < c; ++k) {
        const double g = grad_out[(static_cast<std::size_t>(i) * w + j) * c + k];
        acc[(static_cast<std::size_t>(i) * w + fp.x0) * c + k] += fp.w0 * g;
        acc[(static_cast<std::size_t>(i) * w + fp.x1) * c + k] += fp.w1 * g;
      }
    }
  std::vector<float> grad(acc.size());
  for (std::size_t n = 0; n < acc.size(); ++n) grad[n] = static_cast<float>(acc[n]);
  return grad;
}

// Nearest-column splat with a disparity z-buffer: source pixel (i, j) lands
// at column round(j -+ d); when two pixels collide the larger disparity
// (nearer surface) wins, equal disparities keep the first writer.
inline WarpResult forward_warp(const ImageBuffer& source, const DisparityMap& disparity,
                               WarpDirection direction) {
  if (source.height() != disparity.height() || source.width() != disparity.width())
    throw ShapeMismatch("forward_warp: image/disparity shapes differ");
  const int h = source.height(), w = source.width(), c = source.channels();
  WarpResult out{ImageBuffer(h, w, c, 0.0f), ValidityMask(h, w, false)};
  const double sign = warp_sign(direction);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    std::vector<float> best(static_cast<std::size_t>(w),
                            -std::numeric_limits<float>::infinity());
    for (int j = 0; j < w; ++j) {
      const float d = disparity(i, j);
      if (!std::isfinite(d)) continue;
      const long x = std::lround(j + sign * static_cast<double>(d));
      if (x < 0 || x >= w) continue;
      if (out.mask(i, static_cast<int>(x)) && !(d > best[x])) continue;
      best[x] = d;
      out.mask.set(i, static_cast<int>(x), true);
      for (int k = 0; k < c; ++k) out.image.at(i, static_cast<int>(x), k) = source(i, j, k);
    }
  });
  return out;
}

// mask(i,j) holds iff the left disparity is valid, the looked-up right column
// j - round(d) is in bounds and valid there, and the two estimates agree
// within tau pixels.
inline ValidityMask lr_consistency_mask(const DisparityMap& disp_left,
                                        const DisparityMap& disp_right, double tau) {
  if (!disp_left.same_shape(disp_right))
    throw ShapeMismatch("lr_consistency_mask: shapes differ");
  const int h = disp_left.height(), w = disp_left.width();
  ValidityMask mask(h, w, false);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const float dl = disp_left(i, j);
      if (!std::isfinite(dl)) continue;
      const long x = j - std::lround(static_cast<double>(dl));
      if (x < 0 || x >= w) continue;
      const float dr = disp_right(i, static_cast<int>(x));
      if (!std::isfinite(dr)) continue;
      if (std::abs(static_cast<double>(dl) - static_cast<double>(dr)) <= tau)
        mask.set(i, j, true);
    }
  return mask;
}

// Column-mirrored view of a disparity map; turns a right-referenced map into
// a left-convention one so lr_consistency_mask applies to either side.
inline DisparityMap flip_columns(const DisparityMap& d) {
  DisparityMap out(d.height(), d.width());
  for (int i = 0; i < d.height(); ++i)
    for (int j = 0; j < d.width(); ++j) out.at(i, j) = d(i, d.width() - 1 - j);
  return out;
}

inline ValidityMask flip_columns(const ValidityMask& m) {
  ValidityMask out(m.height(), m.width());
  for (int i = 0; i < m.height(); ++i)
    for (int j = 0; j < m.width(); ++j) out.set(i, j, m(i, m.width() - 1 - j));
  return out;
}

}  // namespace stsp
