#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"
#include "stsp/imaging.hpp"

namespace stsp {

struct LossWeights {
  double alpha = 0.85;       // SSIM vs l1 mix in the photometric loss
  double lambda_pix = 1.0;
  double lambda_warp = 0.3;
  double gamma_snr = 5.0;

  void validate() const {
    if (alpha < 0 || alpha > 1) throw BadParams("weights: alpha must be in [0,1]");
    if (lambda_pix < 0 || lambda_warp < 0) throw BadParams("weights: lambdas must be >= 0");
    if (!(gamma_snr > 0)) throw BadParams("weights: gamma_snr must be positive");
  }
};

// Scalar loss plus an optional flat gradient buffer. The gradient layout
// matches the differentiated argument's data(): interleaved (h,w,c) for
// image losses, planar (c,h,w) for velocity buffers. Empty = not exposed.
struct LossValue {
  double value = 0.0;
  std::vector<float> gradient;
};

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> w(kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double x = i - r;
      w[i] = std::exp(-(x * x) / (2.0 * kSsimSigma * kSsimSigma));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

// Symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, ...
inline int reflect_index(int x, int n) {
  while (x < 0 || x >= n) {
    if (x < 0) x = -x - 1;
    if (x >= n) x = 2 * n - 1 - x;
  }
  return x;
}

using Plane = std::vector<double>;  // h*w row-major

inline Plane gauss_blur(const Plane& in, int h, int w) {
  const auto& k = ssim_kernel();
  const int r = kSsimWindow / 2;
  Plane tmp(in.size()), out(in.size());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * in[static_cast<std::size_t>(i) * w + reflect_index(j + t, w)];
      tmp[static_cast<std::size_t>(i) * w + j] = acc;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[static_cast<std::size_t>(reflect_index(i + t, h)) * w + j];
      out[static_cast<std::size_t>(i) * w + j] = acc;
    }
  return out;
}

// Exact adjoint of gauss_blur (reflection scatters back onto edge pixels).
inline Plane gauss_blur_adjoint(const Plane& g, int h, int w) {
  const auto& k = ssim_kernel();
  const int r = kSsimWindow / 2;
  Plane tmp(g.size(), 0.0), out(g.size(), 0.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double v = g[static_cast<std::size_t>(i) * w + j];
      for (int t = -r; t <= r; ++t)
        tmp[static_cast<std::size_t>(reflect_index(i + t, h)) * w + j] += k[t + r] * v;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double v = tmp[static_cast<std::size_t>(i) * w + j];
      for (int t = -r; t <= r; ++t)
        out[static_cast<std::size_t>(i) * w + reflect_index(j + t, w)] += k[t + r] * v;
    }
  return out;
}

inline Plane channel_plane(const ImageBuffer& img, int k) {
  Plane p(static_cast<std::size_t>(img.height()) * img.width());
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j)
      p[static_cast<std::size_t>(i) * img.width() + j] = img(i, j, k);
  return p;
}

}  // namespace detail

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), C1=0.01^2,
// C2=0.03^2 on the [0,1] range; per-channel SSIM averaged over channels;
// symmetric-reflection borders. Gradient is with respect to `a`.
inline LossValue ssim(const ImageBuffer& a, const ImageBuffer& b, bool with_gradient = true) {
  if (!a.same_shape(b)) throw ShapeMismatch("ssim: shapes differ");
  const int h = a.height(), w = a.width(), c = a.channels();
  if (h < detail::kSsimWindow || w < detail::kSsimWindow)
    throw ImageTooSmall("ssim: image smaller than the 11x11 window");

  const std::size_t plane_n = static_cast<std::size_t>(h) * w;
  const double denom = static_cast<double>(plane_n) * c;
  double total = 0.0;
  std::vector<float> grad;
  if (with_gradient) grad.assign(static_cast<std::size_t>(h) * w * c, 0.0f);

  for (int ch = 0; ch < c; ++ch) {
    const detail::Plane pa = detail::channel_plane(a, ch);
    const detail::Plane pb = detail::channel_plane(b, ch);
    detail::Plane paa(plane_n), pbb(plane_n), pab(plane_n);
    for (std::size_t n = 0; n < plane_n; ++n) {
      paa[n] = pa[n] * pa[n];
      pbb[n] = pb[n] * pb[n];
      pab[n] = pa[n] * pb[n];
    }
    const detail::Plane mu_a = detail::gauss_blur(pa, h, w);
    const detail::Plane mu_b = detail::gauss_blur(pb, h, w);
    const detail::Plane e_aa = detail::gauss_blur(paa, h, w);
    const detail::Plane e_bb = detail::gauss_blur(pbb, h, w);
    const detail::Plane e_ab = detail::gauss_blur(pab, h, w);

    detail::Plane f_mu(plane_n, 0.0), f_eaa(plane_n, 0.0), f_eab(plane_n, 0.0);
    for (std::size_t n = 0; n < plane_n; ++n) {
      const double ma = mu_a[n], mb = mu_b[n];
      const double var_a = e_aa[n] - ma * ma;
      const double var_b = e_bb[n] - mb * mb;
      const double cov = e_ab[n] - ma * mb;
      const double a1 = 2.0 * ma * mb + detail::kSsimC1;
      const double a2 = 2.0 * cov + detail::kSsimC2;
      const double b1 = ma * ma + mb * mb + detail::kSsimC1;
      const double b2 = var_a + var_b + detail::kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (with_gradient) {
        f_mu[n] = 2.0 * mb * (a2 - a1) / (b1 * b2) - 2.0 * ma * s / b1 + 2.0 * ma * s / b2;
        f_eaa[n] = -s / b2;
        f_eab[n] = 2.0 * a1 / (b1 * b2);
      }
    }
    if (with_gradient) {
      const detail::Plane g_mu = detail::gauss_blur_adjoint(f_mu, h, w);
      const detail::Plane g_eaa = detail::gauss_blur_adjoint(f_eaa, h, w);
      const detail::Plane g_eab = detail::gauss_blur_adjoint(f_eab, h, w);
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const std::size_t n = static_cast<std::size_t>(i) * w + j;
          const double g = (g_mu[n] + 2.0 * pa[n] * g_eaa[n] + pb[n] * g_eab[n]) / denom;
          grad[(static_cast<std::size_t>(i) * w + j) * c + ch] = static_cast<float>(g);
        }
    }
  }
  return LossValue{total / denom, std::move(grad)};
}

// Photometric loss: alpha*(1 - SSIM) + (1-alpha)*mean-l1, gradient w.r.t. pred.
inline LossValue pixel_loss(const ImageBuffer& pred, const ImageBuffer& target,
                            const LossWeights& w, bool with_gradient = true) {
  if (!pred.same_shape(target)) throw ShapeMismatch("pixel_loss: shapes differ");
  w.validate();
  LossValue s = ssim(pred, target, with_gradient);
  const std::size_t n = pred.size();
  double l1 = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    l1 += std::abs(static_cast<double>(pred.data()[k]) - target.data()[k]);
  l1 /= static_cast<double>(n);

  LossValue out;
  out.value = w.alpha * (1.0 - s.value) + (1.0 - w.alpha) * l1;
  if (with_gradient) {
    out.gradient.resize(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double diff = static_cast<double>(pred.data()[k]) - target.data()[k];
      const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      out.gradient[k] =
          static_cast<float>(-w.alpha * s.gradient[k] + (1.0 - w.alpha) * sgn * inv_n);
    }
  }
  return out;
}

// Masked mean absolute residual between the disparity-warped prediction and
// the source view. The effective mask is the caller's mask intersected with
// the warp validity mask; an empty effective mask is an error so the caller
// explicitly decides to skip the term.
inline LossValue warp_loss(const ImageBuffer& pred_target, const ImageBuffer& source,
                           const DisparityMap& disp_source, const ValidityMask& mask,
                           WarpDirection direction = WarpDirection::LeftToRight,
                           bool with_gradient = true) {
  if (!pred_target.same_shape(source)) throw ShapeMismatch("warp_loss: image shapes differ");
  if (disp_source.height() != source.height() || disp_source.width() != source.width())
    throw ShapeMismatch("warp_loss: disparity shape differs");
  if (mask.height() != source.height() || mask.width() != source.width())
    throw ShapeMismatch("warp_loss: mask shape differs");

  const int h = source.height(), w = source.width(), c = source.channels();
  const WarpResult warped = backward_warp(pred_target, disp_source, direction);

  std::size_t m_count = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      if (mask(i, j) && warped.mask(i, j)) ++m_count;
  if (m_count == 0) throw EmptyMask("warp_loss: no valid pixels under the mask");

  double total = 0.0;
  std::vector<float> g_out;
  if (with_gradient) g_out.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
  const double inv = 1.0 / (static_cast<double>(m_count) * c);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      if (!(mask(i, j) && warped.mask(i, j))) continue;
      for (int k = 0; k < c; ++k) {
        const double r = static_cast<double>(warped.image(i, j, k)) - source(i, j, k);
        total += std::abs(r);
        if (with_gradient) {
          const double sgn = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
          g_out[(static_cast<std::size_t>(i) * w + j) * c + k] = static_cast<float>(sgn * inv);
        }
      }
    }

  LossValue out;
  out.value = total * inv;
  if (with_gradient)
    out.gradient = backward_warp_adjoint(g_out, disp_source, direction, c);
  return out;
}

// v-parameterization target: v = sqrt(abar)*eps - sqrt(1-abar)*x0.
inline Tensor velocity_target(const Tensor& x0, const Tensor& eps, double alpha_bar) {
  if (!x0.same_shape(eps)) throw ShapeMismatch("velocity_target: shapes differ");
  if (alpha_bar < 0 || alpha_bar > 1) throw BadParams("velocity_target: alpha_bar outside [0,1]");
  const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
  Tensor v(x0.channels(), x0.height(), x0.width());
  for (std::size_t n = 0; n < x0.size(); ++n)
    v.data()[n] = static_cast<float>(a * eps.data()[n] - b * x0.data()[n]);
  return v;
}

// Mean squared error, optionally scaled by a min-SNR weight.
inline LossValue velocity_loss(const Tensor& v_pred, const Tensor& v_true,
                               std::optional<double> snr_weight = std::nullopt,
                               bool with_gradient = true) {
  if (!v_pred.same_shape(v_true)) throw ShapeMismatch("velocity_loss: shapes differ");
  const double weight = snr_weight.value_or(1.0);
  const std::size_t n = v_pred.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = static_cast<double>(v_pred.data()[k]) - v_true.data()[k];
    acc += d * d;
  }
  LossValue out;
  out.value = weight * acc / static_cast<double>(n);
  if (with_gradient) {
    out.gradient.resize(n);
    const double scale = 2.0 * weight / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
      out.gradient[k] = static_cast<float>(
          scale * (static_cast<double>(v_pred.data()[k]) - v_true.data()[k]));
  }
  return out;
}

// l_vel + lambda_pix*l_pix + lambda_warp*l_warp. Component gradients are
// combined only when every present gradient has one common buffer shape
// (e.g. pix and warp both differentiate the predicted image).
inline LossValue total_loss(const LossValue& l_vel, const LossValue& l_pix,
                            const LossValue& l_warp, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(l_vel.value) || !std::isfinite(l_pix.value) || !std::isfinite(l_warp.value))
    throw BadParams("total_loss: non-finite component");
  LossValue out;
  out.value = l_vel.value + w.lambda_pix * l_pix.value + w.lambda_warp * l_warp.value;

  struct Term {
    const std::vector<float>* g;
    double scale;
  };
  std::vector<Term> terms;
  if (!l_vel.gradient.empty()) terms.push_back({&l_vel.gradient, 1.0});
  if (!l_pix.gradient.empty()) terms.push_back({&l_pix.gradient, w.lambda_pix});
  if (!l_warp.gradient.empty()) terms.push_back({&l_warp.gradient, w.lambda_warp});
  if (!terms.empty()) {
    const std::size_t n = terms.front().g->size();
    bool consistent = true;
    for (const Term& t : terms) consistent = consistent && t.g->size() == n;
    if (consistent) {
      out.gradient.assign(n, 0.0f);
      for (const Term& t : terms)
        for (std::size_t k = 0; k < n; ++k)
          out.gradient[k] += static_cast<float>(t.scale * (*t.g)[k]);
    }
  }
  return out;
}

}  // namespace stsp
