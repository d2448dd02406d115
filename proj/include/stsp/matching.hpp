#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"
#include "stsp/imaging.hpp"
#include "stsp/parallel.hpp"

namespace stsp {

struct SgbmParams {
  int min_disparity = 0;
  int num_disparities = 128;  // must be divisible by 16
  int block_size = 5;         // odd, >= 3
  int p1 = 200;               // 8 * block_size^2 for the default block
  int p2 = 800;               // 32 * block_size^2
  int num_paths = 8;          // 4 or 8
  int uniqueness_ratio = 10;  // percent margin of the best cost
  double lr_threshold = 1.0;  // pixels

  void validate() const {
    if (num_disparities <= 0 || num_disparities % 16 != 0)
      throw BadParams("sgbm: num_disparities must be positive and divisible by 16");
    if (block_size < 3 || block_size % 2 == 0)
      throw BadParams("sgbm: block_size must be odd and >= 3");
    if (!(p2 > p1 && p1 > 0)) throw BadParams("sgbm: need p2 > p1 > 0");
    if (num_paths != 4 && num_paths != 8) throw BadParams("sgbm: num_paths must be 4 or 8");
    if (uniqueness_ratio < 0) throw BadParams("sgbm: uniqueness_ratio must be >= 0");
    if (lr_threshold < 0) throw BadParams("sgbm: lr_threshold must be >= 0");
  }

  static SgbmParams for_block(int block) {
    SgbmParams p;
    p.block_size = block;
    p.p1 = 8 * block * block;
    p.p2 = 32 * block * block;
    return p;
  }
};

// (height, width, num_disparities) matching costs in saturating 16-bit units.
struct CostVolume {
  int height = 0, width = 0, num_disparities = 0;
  std::vector<std::uint16_t> cost;

  std::uint16_t operator()(int i, int j, int k) const {
    return cost[(static_cast<std::size_t>(i) * width + j) * num_disparities + k];
  }
  std::uint16_t& at(int i, int j, int k) {
    return cost[(static_cast<std::size_t>(i) * width + j) * num_disparities + k];
  }
};

namespace detail {

constexpr int kCensusRadius = 2;              // 5x5 census
constexpr int kCensusBits = 24;               // neighbours of the center
inline std::uint16_t sat16(std::uint32_t v) { return v > 0xffff ? 0xffff : static_cast<std::uint16_t>(v); }

inline std::vector<float> luminance(const ImageBuffer& img) {
  std::vector<float> gray(static_cast<std::size_t>(img.height()) * img.width());
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j)
      gray[static_cast<std::size_t>(i) * img.width() + j] =
          img.channels() == 1
              ? img(i, j, 0)
              : 0.299f * img(i, j, 0) + 0.587f * img(i, j, 1) + 0.114f * img(i, j, 2);
  return gray;
}

// 5x5 census with clamped borders: bit set when the neighbour is darker
// than the center, scanned row-major with the center skipped.
inline std::vector<std::uint32_t> census_transform(const std::vector<float>& gray, int h, int w) {
  std::vector<std::uint32_t> census(gray.size());
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int j = 0; j < w; ++j) {
      const float center = gray[row * w + j];
      std::uint32_t code = 0;
      for (int di = -kCensusRadius; di <= kCensusRadius; ++di)
        for (int dj = -kCensusRadius; dj <= kCensusRadius; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int y = std::clamp(i + di, 0, h - 1);
          const int x = std::clamp(j + dj, 0, w - 1);
          code = (code << 1) | (gray[static_cast<std::size_t>(y) * w + x] < center ? 1u : 0u);
        }
      census[row * w + j] = code;
    }
  });
  return census;
}

// Census Hamming volume, block-summed over block_size. `sign` is -1 for the
// left-reference volume (match at j - d) and +1 for the right-reference one.
inline CostVolume census_block_cost(const std::vector<std::uint32_t>& census_ref,
                                    const std::vector<std::uint32_t>& census_oth, int h, int w,
                                    const SgbmParams& p, int sign) {
  const int nd = p.num_disparities;
  const int br = p.block_size / 2;
  const std::uint32_t max_block = static_cast<std::uint32_t>(kCensusBits) * p.block_size * p.block_size;
  CostVolume cv{h, w, nd, std::vector<std::uint16_t>(static_cast<std::size_t>(h) * w * nd)};

  parallel_for(static_cast<std::size_t>(nd), [&](std::size_t slice) {
    const int k = static_cast<int>(slice);
    const int d = p.min_disparity + k;
    std::vector<std::uint16_t> ham(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int x = j + sign * d;
        ham[static_cast<std::size_t>(i) * w + j] =
            (x < 0 || x >= w)
                ? static_cast<std::uint16_t>(kCensusBits)
                : static_cast<std::uint16_t>(std::popcount(
                      census_ref[static_cast<std::size_t>(i) * w + j] ^
                      census_oth[static_cast<std::size_t>(i) * w + x]));
      }
    // horizontal then vertical box sums with clamped borders
    std::vector<std::uint32_t> hsum(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        std::uint32_t acc = 0;
        for (int t = -br; t <= br; ++t)
          acc += ham[static_cast<std::size_t>(i) * w + std::clamp(j + t, 0, w - 1)];
        hsum[static_cast<std::size_t>(i) * w + j] = acc;
      }
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        std::uint32_t acc = 0;
        for (int t = -br; t <= br; ++t)
          acc += hsum[static_cast<std::size_t>(std::clamp(i + t, 0, h - 1)) * w + j];
        cv.at(i, j, k) = sat16(std::min(acc, max_block));
      }
  });
  return cv;
}

struct PathDir {
  int dr, dc;
};

inline std::vector<PathDir> path_directions(int num_paths) {
  std::vector<PathDir> dirs = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
  if (num_paths == 8) {
    dirs.push_back({1, 1});
    dirs.push_back({1, -1});
    dirs.push_back({-1, 1});
    dirs.push_back({-1, -1});
  }
  return dirs;
}

}  // namespace detail

// Census(5x5)-Hamming cost, block-summed over block_size x block_size.
// Out-of-range disparities get the saturated per-pixel maximum.
inline CostVolume matching_cost(const ImageBuffer& left, const ImageBuffer& right,
                                const SgbmParams& p) {
  if (!left.same_shape(right)) throw ShapeMismatch("matching_cost: shapes differ");
  p.validate();
  const int h = left.height(), w = left.width();
  const auto census_l = detail::census_transform(detail::luminance(left), h, w);
  const auto census_r = detail::census_transform(detail::luminance(right), h, w);
  return detail::census_block_cost(census_l, census_r, h, w, p, -1);
}

// Semi-global aggregation: per direction r,
//   L_r(p,d) = C(p,d) + min(L_r(p-r,d), L_r(p-r,d+-1)+P1, min_k L_r(p-r,k)+P2)
//              - min_k L_r(p-r,k),
// summed over num_paths directions with saturating 16-bit adds.
inline CostVolume aggregate_paths(const CostVolume& cv, const SgbmParams& p) {
  if (p.num_paths != 4 && p.num_paths != 8) throw BadParams("aggregate_paths: num_paths must be 4 or 8");
  if (p.p1 < 0 || p.p2 < 0) throw BadParams("aggregate_paths: penalties must be >= 0");
  const int h = cv.height, w = cv.width, nd = cv.num_disparities;
  CostVolume out{h, w, nd, std::vector<std::uint16_t>(cv.cost.size(), 0)};

  for (const auto dir : detail::path_directions(p.num_paths)) {
    // Scanline start pixels: those whose predecessor along the path is outside.
    std::vector<std::pair<int, int>> starts;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int pi = i - dir.dr, pj = j - dir.dc;
        if (pi < 0 || pi >= h || pj < 0 || pj >= w) starts.emplace_back(i, j);
      }
    parallel_for(starts.size(), [&](std::size_t sidx) {
      std::vector<std::uint32_t> prev(static_cast<std::size_t>(nd)), cur(static_cast<std::size_t>(nd));
      int i = starts[sidx].first, j = starts[sidx].second;
      bool first = true;
      std::uint32_t prev_min = 0;
      while (i >= 0 && i < h && j >= 0 && j < w) {
        const std::size_t base = (static_cast<std::size_t>(i) * w + j) * nd;
        if (first) {
          for (int k = 0; k < nd; ++k) cur[static_cast<std::size_t>(k)] = cv.cost[base + k];
          first = false;
        } else {
          for (int k = 0; k < nd; ++k) {
            std::uint32_t best = prev[static_cast<std::size_t>(k)];
            if (k > 0) best = std::min(best, prev[static_cast<std::size_t>(k) - 1] + static_cast<std::uint32_t>(p.p1));
            if (k + 1 < nd) best = std::min(best, prev[static_cast<std::size_t>(k) + 1] + static_cast<std::uint32_t>(p.p1));
            best = std::min(best, prev_min + static_cast<std::uint32_t>(p.p2));
            cur[static_cast<std::size_t>(k)] = cv.cost[base + k] + best - prev_min;
          }
        }
        std::uint32_t cur_min = cur[0];
        for (int k = 1; k < nd; ++k) cur_min = std::min(cur_min, cur[static_cast<std::size_t>(k)]);
        for (int k = 0; k < nd; ++k) {
          auto& slot = out.cost[base + k];
          slot = detail::sat16(static_cast<std::uint32_t>(slot) + cur[static_cast<std::size_t>(k)]);
        }
        prev.swap(cur);
        prev_min = cur_min;
        i += dir.dr;
        j += dir.dc;
      }
    });
  }
  return out;
}

// Winner-take-all with parabolic subpixel refinement, uniqueness filtering
// (any non-adjacent disparity within ratio percent of the best invalidates
// the pixel) and the documented tie-break toward the lower disparity.
inline DisparityMap extract_disparity(const CostVolume& cv, const SgbmParams& p) {
  const int h = cv.height, w = cv.width, nd = cv.num_disparities;
  DisparityMap disp(h, w, DisparityMap::kInvalid);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int i = static_cast<int>(row);
    for (int j = 0; j < w; ++j) {
      int best_k = 0;
      std::uint16_t best_c = cv(i, j, 0);
      for (int k = 1; k < nd; ++k) {
        const std::uint16_t c = cv(i, j, k);
        if (c < best_c) {  // strict: equal costs keep the lower disparity
          best_c = c;
          best_k = k;
        }
      }
      bool unique = true;
      for (int k = 0; k < nd && unique; ++k) {
        if (std::abs(k - best_k) <= 1) continue;
        if (static_cast<std::uint32_t>(cv(i, j, k)) * 100 <=
            static_cast<std::uint32_t>(best_c) * (100 + static_cast<std::uint32_t>(p.uniqueness_ratio)))
          unique = false;
      }
      if (!unique) continue;
      double d = p.min_disparity + best_k;
      if (best_k > 0 && best_k + 1 < nd) {
        const double cm = cv(i, j, best_k - 1), c0 = best_c, cp = cv(i, j, best_k + 1);
        const double denom = cm + cp - 2.0 * c0;
        if (denom > 0) d += (cm - cp) / (2.0 * denom);
      }
      if (d >= p.min_disparity && d < p.min_disparity + nd)
        disp.at(i, j) = static_cast<float>(d);
    }
  });
  return disp;
}

// Full pipeline: left- and right-referenced disparities, each LR-filtered at
// p.lr_threshold. The right map is checked through the exact column-mirror
// identity so the single left-convention mask function covers both sides.
inline std::pair<DisparityMap, DisparityMap> sgbm(const ImageBuffer& left,
                                                  const ImageBuffer& right,
                                                  const SgbmParams& p) {
  if (!left.same_shape(right)) throw ShapeMismatch("sgbm: shapes differ");
  p.validate();
  const int h = left.height(), w = left.width();
  const auto census_l = detail::census_transform(detail::luminance(left), h, w);
  const auto census_r = detail::census_transform(detail::luminance(right), h, w);

  CostVolume cost_l = detail::census_block_cost(census_l, census_r, h, w, p, -1);
  DisparityMap disp_l = extract_disparity(aggregate_paths(cost_l, p), p);
  cost_l.cost.clear();
  cost_l.cost.shrink_to_fit();

  CostVolume cost_r = detail::census_block_cost(census_r, census_l, h, w, p, +1);
  DisparityMap disp_r = extract_disparity(aggregate_paths(cost_r, p), p);
  cost_r.cost.clear();
  cost_r.cost.shrink_to_fit();

  const ValidityMask mask_l = lr_consistency_mask(disp_l, disp_r, p.lr_threshold);
  const ValidityMask mask_r =
      flip_columns(lr_consistency_mask(flip_columns(disp_r), flip_columns(disp_l), p.lr_threshold));

  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (!mask_l(i, j)) disp_l.at(i, j) = DisparityMap::kInvalid;
      if (!mask_r(i, j)) disp_r.at(i, j) = DisparityMap::kInvalid;
    }
  return {std::move(disp_l), std::move(disp_r)};
}

}  // namespace stsp
