#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "stsp/buffers.hpp"
#include "stsp/errors.hpp"

namespace stsp {

// Forward-process schedule. alpha_bars are the cumulative products and are
// authoritative; after a zero-terminal rescale the terminal beta becomes 1
// exactly (forced by alpha_bar[T-1] = 0), so betas are in (0,1] then.
struct NoiseSchedule {
  int num_steps = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  bool zero_terminal_snr = false;

  double alpha_bar(int t) const {
    if (t < 0 || t >= num_steps) throw BadTimestep("timestep outside [0, T)");
    return alpha_bars[static_cast<std::size_t>(t)];
  }
};

// beta_t = (sqrt(b0) + (t/(T-1))*(sqrt(b1) - sqrt(b0)))^2, the scaled-linear
// rule; Stable Diffusion endpoints b0=0.00085, b1=0.012 are the defaults.
inline NoiseSchedule scaled_linear_schedule(int num_steps, double beta_start = 0.00085,
                                            double beta_end = 0.012) {
  if (num_steps < 2) throw InvalidRange("schedule: need at least 2 steps");
  if (!(beta_start > 0.0) || !(beta_start < beta_end) || !(beta_end < 1.0))
    throw InvalidRange("schedule: need 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.num_steps = num_steps;
  s.betas.resize(static_cast<std::size_t>(num_steps));
  s.alpha_bars.resize(static_cast<std::size_t>(num_steps));
  const double r0 = std::sqrt(beta_start), r1 = std::sqrt(beta_end);
  double prod = 1.0;
  for (int t = 0; t < num_steps; ++t) {
    const double r = r0 + (static_cast<double>(t) / (num_steps - 1)) * (r1 - r0);
    s.betas[static_cast<std::size_t>(t)] = r * r;
    prod *= 1.0 - r * r;
    s.alpha_bars[static_cast<std::size_t>(t)] = prod;
  }
  return s;
}

// Affinely rescales sqrt(alpha_bar) so the first value is preserved and the
// terminal value is exactly zero; betas are re-derived from the ratios.
inline NoiseSchedule rescale_zero_terminal_snr(const NoiseSchedule& in) {
  if (in.num_steps < 2) throw DegenerateSchedule("rescale: need at least 2 steps");
  const std::size_t last = static_cast<std::size_t>(in.num_steps) - 1;
  const double a0 = std::sqrt(in.alpha_bars[0]);
  const double aT = std::sqrt(in.alpha_bars[last]);
  if (!(a0 > aT)) throw DegenerateSchedule("rescale: sqrt(alpha_bar) must decrease");

  NoiseSchedule out = in;
  out.zero_terminal_snr = true;
  const double scale = a0 / (a0 - aT);
  double prev = 1.0;
  for (std::size_t t = 0; t <= last; ++t) {
    const double a = (std::sqrt(in.alpha_bars[t]) - aT) * scale;
    out.alpha_bars[t] = a * a;
    out.betas[t] = 1.0 - out.alpha_bars[t] / prev;
    prev = out.alpha_bars[t];
  }
  out.alpha_bars[last] = 0.0;  // exact by construction; pin against rounding
  out.betas[last] = 1.0;
  return out;
}

// z_t = sqrt(abar)*x0 + sqrt(1-abar)*(eps + noise_offset*offset_c), with one
// caller-supplied offset constant per channel (injectable randomness).
inline Tensor add_noise(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& s,
                        double noise_offset = 0.0,
                        std::span<const double> channel_offsets = {}) {
  if (!x0.same_shape(eps)) throw ShapeMismatch("add_noise: shapes differ");
  const double abar = s.alpha_bar(t);
  if (noise_offset != 0.0 && channel_offsets.size() != static_cast<std::size_t>(x0.channels()))
    throw BadParams("add_noise: need one channel offset per channel");
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor z(x0.channels(), x0.height(), x0.width());
  const std::size_t plane = static_cast<std::size_t>(x0.height()) * x0.width();
  for (int c = 0; c < x0.channels(); ++c) {
    const double off = noise_offset == 0.0 ? 0.0 : noise_offset * channel_offsets[static_cast<std::size_t>(c)];
    for (std::size_t n = 0; n < plane; ++n) {
      const std::size_t idx = static_cast<std::size_t>(c) * plane + n;
      z.data()[idx] = static_cast<float>(a * x0.data()[idx] + b * (eps.data()[idx] + off));
    }
  }
  return z;
}

// Closed-form clean sample: x0 = sqrt(abar)*z - sqrt(1-abar)*v.
inline Tensor x0_from_v(const Tensor& z_t, const Tensor& v, int t, const NoiseSchedule& s) {
  if (!z_t.same_shape(v)) throw ShapeMismatch("x0_from_v: shapes differ");
  const double abar = s.alpha_bar(t);
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor x0(z_t.channels(), z_t.height(), z_t.width());
  for (std::size_t n = 0; n < z_t.size(); ++n)
    x0.data()[n] = static_cast<float>(a * z_t.data()[n] - b * v.data()[n]);
  return x0;
}

// One deterministic DDIM (eta = 0) step from t down to t_prev.
inline Tensor ddim_step(const Tensor& z_t, const Tensor& v_pred, int t, int t_prev,
                        const NoiseSchedule& s) {
  if (!z_t.same_shape(v_pred)) throw ShapeMismatch("ddim_step: shapes differ");
  if (t_prev > t) throw BadTimestep("ddim_step: t_prev must not exceed t");
  const double abar_t = s.alpha_bar(t);
  const double abar_p = s.alpha_bar(t_prev);
  const double a = std::sqrt(abar_t), b = std::sqrt(1.0 - abar_t);
  const double ap = std::sqrt(abar_p), bp = std::sqrt(1.0 - abar_p);
  Tensor z_prev(z_t.channels(), z_t.height(), z_t.width());
  for (std::size_t n = 0; n < z_t.size(); ++n) {
    const double z = z_t.data()[n], v = v_pred.data()[n];
    const double x0 = a * z - b * v;
    const double eps = a * v + b * z;
    z_prev.data()[n] = static_cast<float>(ap * x0 + bp * eps);
  }
  return z_prev;
}

struct GuidanceConfig {
  double scale = 1.5;
  double uncond_drop_ratio = 0.1;  // training-side bookkeeping only

  void validate() const {
    if (!std::isfinite(scale) || scale < 0) throw BadParams("guidance: scale must be finite and >= 0");
    if (uncond_drop_ratio < 0 || uncond_drop_ratio > 1)
      throw BadParams("guidance: drop ratio must be in [0,1]");
  }
};

// v_uncond + scale * (v_cond - v_uncond).
inline Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, const GuidanceConfig& g) {
  if (!v_uncond.same_shape(v_cond)) throw ShapeMismatch("cfg_combine: shapes differ");
  g.validate();
  Tensor out(v_uncond.channels(), v_uncond.height(), v_uncond.width());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const double u = v_uncond.data()[n], c = v_cond.data()[n];
    out.data()[n] = static_cast<float>(u + g.scale * (c - u));
  }
  return out;
}

// min-SNR weight in v-prediction form: min(SNR, gamma) / (SNR + 1).
inline double min_snr_weight(int t, const NoiseSchedule& s, double gamma) {
  if (!(gamma > 0)) throw BadParams("min_snr_weight: gamma must be positive");
  const double abar = s.alpha_bar(t);
  if (abar >= 1.0) return 0.0;  // SNR = inf: min(.,gamma)/(inf+1) -> 0
  const double snr = abar / (1.0 - abar);
  return std::min(snr, gamma) / (snr + 1.0);
}

// Denoiser contract: (noisy latent, timestep) -> predicted velocity, with any
// conditioning captured by the callable itself. Must be deterministic.
using DenoiserFn = std::function<Tensor(const Tensor& z_t, int t)>;

// Analytic test denoiser: emits the exact velocity implied by a known clean
// sample, so x0_from_v(z, v, t) == x0_known for every (z, t). At abar = 1 the
// noise component is unobservable and v = 0 keeps the inversion exact.
inline DenoiserFn oracle_denoiser(Tensor x0_known, NoiseSchedule s) {
  return [x0 = std::move(x0_known), s = std::move(s)](const Tensor& z_t, int t) {
    if (!z_t.same_shape(x0)) throw ShapeMismatch("oracle_denoiser: latent shape differs");
    const double abar = s.alpha_bar(t);
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    Tensor v(z_t.channels(), z_t.height(), z_t.width());
    if (b <= 0.0) return v;  // zeros
    for (std::size_t n = 0; n < v.size(); ++n)
      v.data()[n] = static_cast<float>((a * z_t.data()[n] - x0.data()[n]) / b);
    return v;
  };
}

// n timesteps uniformly spaced over [0, T-1], terminal index included,
// returned in sampling order (descending).
inline std::vector<int> inference_timesteps(int train_steps, int n) {
  if (train_steps < 2 || n < 1) throw InvalidRange("inference_timesteps: bad counts");
  if (n == 1) return {train_steps - 1};
  std::vector<int> ts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double pos = static_cast<double>(n - 1 - i) * (train_steps - 1) / (n - 1);
    ts[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(pos));
  }
  return ts;
}

// Full deterministic DDIM trajectory followed by the closed-form clean-sample
// extraction at the last timestep.
inline Tensor run_ddim(const DenoiserFn& denoiser, const Tensor& z_init,
                       const std::vector<int>& timesteps, const NoiseSchedule& s) {
  if (timesteps.empty()) throw BadTimestep("run_ddim: empty timestep list");
  Tensor z = z_init;
  for (std::size_t k = 0; k + 1 < timesteps.size(); ++k) {
    const Tensor v = denoiser(z, timesteps[k]);
    z = ddim_step(z, v, timesteps[k], timesteps[k + 1], s);
  }
  const int t_last = timesteps.back();
  return x0_from_v(z, denoiser(z, t_last), t_last, s);
}

}  // namespace stsp
