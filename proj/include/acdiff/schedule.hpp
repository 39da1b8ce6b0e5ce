#pragma once

// Per-sample diffusion-rate sequences.
//
// base_schedule() re-interpolates a schedule of arbitrary length between
// extremes divided by the complexity ratio r_s; beta_tilde() gives the
// posterior-variance lower bound; hybrid_combine() mixes the two with a
// per-sample coefficient lambda and carries the derivatives needed to
// back-propagate into lambda.

#include "acdiff/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <string>
#include <string_view>

namespace acdiff {

enum class ScheduleKind { linear, quadratic, sigmoid };

ScheduleKind parse_schedule_kind(std::string_view name);
const char* to_string(ScheduleKind kind);

struct BaseScheduleConfig {
  ScheduleKind kind = ScheduleKind::linear;
  double beta_min = 1e-4;
  double beta_max = 0.1;
  int t_min = 20;
  int t_max = 200;

  /// Throws ContractError unless 0 < beta_min < beta_max < 1 and 1 <= t_min < t_max.
  void validate() const;
};

inline constexpr double kBetaFloor = 1e-6;
inline constexpr double kBetaCeiling = 0.999;

template <typename Scalar>
using Sequence = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Monotone interpolation of `length` values from `lo` to `hi` with exact
/// endpoints, evaluated like a linspace: lo + i * ((hi - lo) / (length - 1)).
/// A length-1 schedule is the single value `hi`.
template <typename Scalar>
Sequence<Scalar> interpolate_schedule(ScheduleKind kind, int length, Scalar lo, Scalar hi) {
  if (length < 1) throw ContractError("schedule length must be >= 1");
  Sequence<Scalar> out(length);
  if (length == 1) {
    out(0) = hi;
    return out;
  }
  const auto logistic = [](Scalar x) { return Scalar(1) / (Scalar(1) + std::exp(-x)); };
  const Scalar s_lo = logistic(Scalar(-6));
  const Scalar s_hi = logistic(Scalar(6));
  const Scalar sqrt_lo = std::sqrt(lo);
  const Scalar step = (hi - lo) / Scalar(length - 1);
  const Scalar sqrt_step = (std::sqrt(hi) - sqrt_lo) / Scalar(length - 1);
  for (int i = 0; i < length; ++i) {
    Scalar v = lo;
    switch (kind) {
      case ScheduleKind::linear:
        v = lo + Scalar(i) * step;
        break;
      case ScheduleKind::quadratic: {
        const Scalar r = sqrt_lo + Scalar(i) * sqrt_step;
        v = r * r;
        break;
      }
      case ScheduleKind::sigmoid: {
        const Scalar s = Scalar(i) / Scalar(length - 1);
        const Scalar w = (logistic(Scalar(12) * s - Scalar(6)) - s_lo) / (s_hi - s_lo);
        v = lo + w * (hi - lo);
        break;
      }
    }
    out(i) = std::clamp(v, lo, hi);
  }
  out(0) = lo;
  out(length - 1) = hi;
  return out;
}

/// Base rates for a sample: S(t_cond, clamp(beta_min / r_s), clamp(beta_max / r_s))
/// with the clamp range [kBetaFloor, kBetaCeiling].
template <typename Scalar = double>
Sequence<Scalar> base_schedule(const BaseScheduleConfig& cfg, int t_cond, Scalar r_s) {
  if (t_cond < 1) throw ContractError("base_schedule: T_cond must be >= 1, got " + std::to_string(t_cond));
  if (!(r_s > Scalar(0))) throw ContractError("base_schedule: r_s must be > 0");
  const auto clip = [](Scalar b) { return std::clamp(b, Scalar(kBetaFloor), Scalar(kBetaCeiling)); };
  return interpolate_schedule<Scalar>(cfg.kind, t_cond, clip(Scalar(cfg.beta_min) / r_s),
                                      clip(Scalar(cfg.beta_max) / r_s));
}

/// Fixed-length rates of the t_max schedule picked at an even stride:
/// entry i (1-based) is beta[round(i * t_max / t_cond)].
Sequence<double> subsampled_schedule(const BaseScheduleConfig& cfg, int t_cond);

/// (1 - abar_{t-1}) / (1 - abar_t) * beta_t with abar_0 = 1, so the first entry is 0.
template <typename Scalar>
Sequence<Scalar> beta_tilde(const Sequence<Scalar>& betas) {
  if (betas.size() == 0) throw ContractError("beta_tilde: empty schedule");
  Sequence<Scalar> out(betas.size());
  Scalar abar_prev = Scalar(1);
  for (Eigen::Index t = 0; t < betas.size(); ++t) {
    const Scalar b = betas(t);
    if (!(b > Scalar(0) && b < Scalar(1))) throw ContractError("beta_tilde: betas must lie in (0, 1)");
    const Scalar abar = abar_prev * (Scalar(1) - b);
    out(t) = (Scalar(1) - abar_prev) / (Scalar(1) - abar) * b;
    abar_prev = abar;
  }
  return out;
}

template <typename Scalar>
struct BasicHybridSchedule {
  Sequence<Scalar> betas;             // base rates beta_t
  Sequence<Scalar> betas_tilde;       // lower bounds
  Sequence<Scalar> betas_prime;       // lambda * beta + (1 - lambda) * beta_tilde
  Sequence<Scalar> alphas_prime;      // 1 - beta'
  Sequence<Scalar> alpha_bars_prime;  // running product of alpha'
  Sequence<Scalar> dbeta_dlambda;
  Sequence<Scalar> dalpha_bar_dlambda;
  Scalar lambda = Scalar(1);
  Scalar r_s = Scalar(1);
  int t_cond = 0;
  ScheduleKind kind = ScheduleKind::linear;

  // 1-based accessors matching the step index t in [1, t_cond].
  Scalar beta_prime(int t) const { return betas_prime(t - 1); }
  Scalar alpha_prime(int t) const { return alphas_prime(t - 1); }
  Scalar alpha_bar_prime(int t) const { return alpha_bars_prime(t - 1); }
  Scalar dalpha_bar(int t) const { return dalpha_bar_dlambda(t - 1); }
};

using HybridSchedule = BasicHybridSchedule<double>;

template <typename Scalar>
BasicHybridSchedule<Scalar> hybrid_combine(const Sequence<Scalar>& betas, Scalar lambda) {
  if (!(lambda >= Scalar(0) && lambda <= Scalar(1))) {
    throw ContractError("hybrid_combine: lambda must lie in [0, 1]");
  }
  BasicHybridSchedule<Scalar> h;
  const Eigen::Index n = betas.size();
  h.betas = betas;
  h.betas_tilde = beta_tilde(betas);
  h.betas_prime.resize(n);
  h.alphas_prime.resize(n);
  h.alpha_bars_prime.resize(n);
  h.dbeta_dlambda.resize(n);
  h.dalpha_bar_dlambda.resize(n);
  h.lambda = lambda;
  h.t_cond = static_cast<int>(n);

  Scalar abar = Scalar(1);
  Scalar log_slope = Scalar(0);  // sum_s -dbeta'_s / alpha'_s
  for (Eigen::Index t = 0; t < n; ++t) {
    const Scalar b = betas(t);
    const Scalar lo = h.betas_tilde(t);
    Scalar bp;
    Scalar slope = b - lo;
    if (lambda == Scalar(1)) {
      bp = b;
    } else {
      // lo + lambda * (b - lo) is monotone in lambda under rounding.
      bp = std::clamp(lo + lambda * (b - lo), lo, b);
    }
    if (t == 0 && bp < Scalar(kBetaFloor)) {
      bp = Scalar(kBetaFloor);
      slope = Scalar(0);
    }
    const Scalar a = Scalar(1) - bp;
    abar *= a;
    log_slope -= slope / a;
    h.betas_prime(t) = bp;
    h.alphas_prime(t) = a;
    h.alpha_bars_prime(t) = abar;
    h.dbeta_dlambda(t) = slope;
    h.dalpha_bar_dlambda(t) = abar * log_slope;
  }
  return h;
}

/// base_schedule + hybrid_combine with provenance filled in.
HybridSchedule make_hybrid_schedule(const BaseScheduleConfig& cfg, int t_cond, double r_s, double lambda);

/// CSV with header `t,beta,beta_tilde,beta_prime,alpha_bar_prime`, one row per step.
void write_schedule_csv(std::ostream& os, const HybridSchedule& schedule);

}  // namespace acdiff
