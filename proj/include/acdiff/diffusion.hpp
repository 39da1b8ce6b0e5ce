#pragma once

// Forward noising, conditional training and adaptive-length reverse sampling.

#include "acdiff/conditioning.hpp"
#include "acdiff/data.hpp"
#include "acdiff/denoiser.hpp"
#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"
#include "acdiff/schedule.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace acdiff {

/// adaptive: learned T_cond, r_s-scaled extremes and learned lambda.
/// fixed_T_fixed_beta: T_cond = t_max, lambda = 1, r_s = 1 (plain DDPM).
/// adaptive_T_fixed_beta: learned T_cond, rates taken at an even stride from
/// the t_max schedule, lambda = 1.
enum class Mode { adaptive, fixed_T_fixed_beta, adaptive_T_fixed_beta };

Mode parse_mode(std::string_view name);
const char* to_string(Mode mode);

struct ModelConfig {
  BaseScheduleConfig schedule;
  ConditioningConfig conditioning;
  DenoiserConfig denoiser;

  void validate() const;
};

struct Model {
  ModelConfig config;
  ConditioningParams cond;
  DenoiserParams den;

  static Model init(const ModelConfig& cfg, Rng& rng);
  /// Fixed order; names are unique and used by checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
};

/// Schedule used by `mode` for a sample with the given control signals.
HybridSchedule schedule_for(const BaseScheduleConfig& cfg, Mode mode, int t_cond, double r_s, double lambda);

struct DiffusionDraw {
  int t = 1;
  RowVector eps;
  RowVector x_t;
  const HybridSchedule* schedule = nullptr;
};

/// x_t = sqrt(abar'_t) x_0 + sqrt(1 - abar'_t) eps with eps ~ N(0, I) from rng.
DiffusionDraw forward_sample(const RowVector& x0, int t, const HybridSchedule& schedule, Rng& rng);
/// Same closed form on the tape; `alpha_bar` is B x 1 (one entry per row).
Var forward_noising(Var x0, Var alpha_bar, Var eps);

/// Inputs of a training batch that do not depend on parameters.
struct BatchInputs {
  Matrix x0;
  std::vector<int> class_ids;
  Matrix pooled;
  std::vector<double> r_s;
  Eigen::VectorXd step_targets;

  static BatchInputs from(std::span<const LabeledSample> batch, const ConditioningConfig& cfg);
};

/// Random quantities of one training step, drawn per sample in order:
/// t ~ U{1..T_cond}, then eps ~ N(0, I).
struct TrainingDraws {
  std::vector<int> t_cond;
  std::vector<double> r_s;  // as used by the schedule (1 in the fixed modes)
  std::vector<int> t;
  Matrix eps;
};

TrainingDraws draw_training(const Model& model, const BatchInputs& inputs, Mode mode, Rng& rng);

/// mean((eps - eps_theta(x_t, t, f_p, f_d))^2) with the embeddings, lambda and
/// the forward draw recorded on the tape. In adaptive mode the gradient reaches
/// G_beta through abar'. `schedules`, when given, receives the per-sample schedules.
Var conditional_loss(Tape& tape, Model& model, const BatchInputs& inputs, const TrainingDraws& draws, Mode mode,
                     std::vector<HybridSchedule>* schedules = nullptr);

/// One plain gradient-descent step on every parameter (G_T through its
/// auxiliary regression). Returns the pre-update diffusion loss.
double training_step(Model& model, std::span<const LabeledSample> batch, Rng& rng, double lr,
                     Mode mode = Mode::adaptive);

struct TrainOptions {
  int steps = 1000;
  int batch_size = 64;
  double lr = 1e-3;
  Mode mode = Mode::adaptive;
};

/// Draws batch indices uniformly with replacement from `rng`, then calls
/// training_step with the same rng. `on_step(step, loss)` is optional.
void train(Model& model, const std::vector<LabeledSample>& data, const TrainOptions& options, Rng& rng,
           const std::function<void(int, double)>& on_step = {});

/// x_{t-1} = (x_t - beta'_t / sqrt(1 - abar'_t) eps_hat) / sqrt(alpha'_t) + sqrt(beta'_t) z.
/// z must be zero at t = 1.
RowVector reverse_step(const RowVector& x_t, int t, const HybridSchedule& schedule, const RowVector& eps_hat,
                       const RowVector& z);

struct SamplePlan {
  int t_cond = 1;
  double r_s = 1.0;
  double u = 0.0;
  double lambda = 1.0;
  HybridSchedule schedule;
  Embedding f_p;
  Embedding f_d;
};

SamplePlan plan_sample(const Model& model, const PromptInput& prompt, const ConditionImage& condition, Mode mode);

struct GenerationRecord {
  int class_id = 0;
  int t_cond = 1;
  double lambda = 1.0;
  double r_s = 1.0;
  double u = 0.0;
  double alpha_bar_final = 1.0;  // abar'_{T_cond}
  double wall_time_s = 0.0;
};

struct GeneratedSample {
  RowVector x0;
  GenerationRecord record;
  std::vector<RowVector> trajectory;  // x_T, ..., x_0 when requested
};

/// Starts from x_T ~ N(0, I) drawn from rng, then draws z for every t > 1.
GeneratedSample generate(const Model& model, const PromptInput& prompt, const ConditionImage& condition, Rng& rng,
                         Mode mode = Mode::adaptive, bool record_trajectory = false);

/// Sample i uses rngs[i] exactly as generate() would; samples share denoiser
/// evaluations at equal t, so sample i runs its last T_cond(i) steps.
std::vector<GeneratedSample> generate_batch(const Model& model, std::span<const PromptInput> prompts,
                                            std::span<const ConditionImage> conditions, std::span<Rng> rngs,
                                            Mode mode = Mode::adaptive, bool record_trajectory = false);

}  // namespace acdiff
