#include "acdiff/schedule.hpp"

#include <cstdio>
#include <ostream>

namespace acdiff {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::linear;
  if (name == "quadratic") return ScheduleKind::quadratic;
  if (name == "sigmoid") return ScheduleKind::sigmoid;
  throw ContractError("unknown schedule kind '" + std::string(name) + "'");
}

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::quadratic: return "quadratic";
    case ScheduleKind::sigmoid: return "sigmoid";
  }
  return "?";
}

void BaseScheduleConfig::validate() const {
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0)) {
    throw ContractError("schedule: need 0 < beta_min < beta_max < 1");
  }
  if (!(t_min >= 1 && t_min < t_max)) {
    throw ContractError("schedule: need 1 <= t_min < t_max");
  }
}

Sequence<double> subsampled_schedule(const BaseScheduleConfig& cfg, int t_cond) {
  if (t_cond < 1) throw ContractError("subsampled_schedule: T_cond must be >= 1");
  const Sequence<double> full = base_schedule<double>(cfg, cfg.t_max, 1.0);
  Sequence<double> out(t_cond);
  const long long t_max = cfg.t_max;
  for (long long i = 1; i <= t_cond; ++i) {
    // round-half-up of i * t_max / t_cond in integer arithmetic
    long long idx = (2 * i * t_max + t_cond) / (2LL * t_cond);
    idx = std::clamp(idx, 1LL, t_max);
    out(i - 1) = full(idx - 1);
  }
  return out;
}

HybridSchedule make_hybrid_schedule(const BaseScheduleConfig& cfg, int t_cond, double r_s, double lambda) {
  HybridSchedule h = hybrid_combine<double>(base_schedule<double>(cfg, t_cond, r_s), lambda);
  h.r_s = r_s;
  h.kind = cfg.kind;
  return h;
}

void write_schedule_csv(std::ostream& os, const HybridSchedule& schedule) {
  os << "t,beta,beta_tilde,beta_prime,alpha_bar_prime\n";
  char line[160];
  for (int t = 1; t <= schedule.t_cond; ++t) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", t, schedule.betas(t - 1),
                  schedule.betas_tilde(t - 1), schedule.betas_prime(t - 1),
                  schedule.alpha_bars_prime(t - 1));
    os << line;
  }
}

}  // namespace acdiff
