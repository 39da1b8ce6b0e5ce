#include "acdiff/diffusion.hpp"

#include "acdiff/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace acdiff {

namespace {

RowVector normals(Index n, Rng& rng) {
  RowVector v(n);
  for (Index j = 0; j < n; ++j) v(j) = rng.normal();
  return v;
}

Matrix fused_embeddings(const Model& model, const BatchInputs& inputs) {
  Tape tape;
  return concat(prompt_embeddings(tape, model.cond, inputs.class_ids),
                condition_embeddings(tape, model.cond, inputs.pooled))
      .value();
}

std::string diagnostics(const TrainingDraws& draws, const std::vector<HybridSchedule>& schedules) {
  std::string out;
  char buf[160];
  const std::size_t shown = std::min<std::size_t>(draws.t.size(), 4);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i < schedules.size()) {
      std::snprintf(buf, sizeof buf, "; sample %zu: t=%d T_cond=%d lambda=%.6g beta'_t=%.6g", i, draws.t[i],
                    draws.t_cond[i], schedules[i].lambda, schedules[i].beta_prime(draws.t[i]));
    } else {
      std::snprintf(buf, sizeof buf, "; sample %zu: t=%d T_cond=%d", i, draws.t[i], draws.t_cond[i]);
    }
    out += buf;
  }
  return out;
}

}  // namespace

Mode parse_mode(std::string_view name) {
  if (name == "adaptive") return Mode::adaptive;
  if (name == "fixed_T_fixed_beta" || name == "fixed") return Mode::fixed_T_fixed_beta;
  if (name == "adaptive_T_fixed_beta") return Mode::adaptive_T_fixed_beta;
  throw ContractError("unknown mode '" + std::string(name) + "'");
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::adaptive: return "adaptive";
    case Mode::fixed_T_fixed_beta: return "fixed_T_fixed_beta";
    case Mode::adaptive_T_fixed_beta: return "adaptive_T_fixed_beta";
  }
  return "?";
}

void ModelConfig::validate() const {
  schedule.validate();
  denoiser.validate();
  if (conditioning.num_classes < 1 || conditioning.d_emb < 1 || conditioning.hidden < 1 || conditioning.bins < 2) {
    throw ContractError("conditioning: sizes must be positive and bins >= 2");
  }
  if (denoiser.emb_dim != conditioning.d_emb) {
    throw ContractError("denoiser embedding width must equal the conditioning embedding width");
  }
}

Model Model::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.cond = ConditioningParams::init(cfg.conditioning, rng);
  m.den = DenoiserParams::init(cfg.denoiser, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"cond.prompt_table", &cond.prompt_table}, {"cond.cond_w", &cond.cond_w}, {"cond.cond_b", &cond.cond_b},
      {"g_t.w1", &cond.g_t.w1},       {"g_t.b1", &cond.g_t.b1},       {"g_t.w2", &cond.g_t.w2},
      {"g_t.b2", &cond.g_t.b2},       {"g_beta.w1", &cond.g_beta.w1}, {"g_beta.b1", &cond.g_beta.b1},
      {"g_beta.w2", &cond.g_beta.w2}, {"g_beta.b2", &cond.g_beta.b2}};
  for (auto& named : den.named_tensors()) out.push_back(named);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Model::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<Model*>(this)->named_parameters()) out.emplace_back(name, t);
  return out;
}

HybridSchedule schedule_for(const BaseScheduleConfig& cfg, Mode mode, int t_cond, double r_s, double lambda) {
  switch (mode) {
    case Mode::adaptive:
      return make_hybrid_schedule(cfg, t_cond, r_s, lambda);
    case Mode::fixed_T_fixed_beta:
      return make_hybrid_schedule(cfg, cfg.t_max, 1.0, 1.0);
    case Mode::adaptive_T_fixed_beta: {
      HybridSchedule h = hybrid_combine<double>(subsampled_schedule(cfg, t_cond), 1.0);
      h.r_s = r_s;
      h.kind = cfg.kind;
      return h;
    }
  }
  throw ContractError("unknown mode");
}

DiffusionDraw forward_sample(const RowVector& x0, int t, const HybridSchedule& schedule, Rng& rng) {
  if (t < 1 || t > schedule.t_cond) {
    throw ContractError("forward_sample: t=" + std::to_string(t) + " outside [1, " +
                        std::to_string(schedule.t_cond) + "]");
  }
  DiffusionDraw d;
  d.t = t;
  d.schedule = &schedule;
  d.eps = normals(x0.size(), rng);
  const double abar = schedule.alpha_bar_prime(t);
  d.x_t = std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * d.eps;
  return d;
}

Var forward_noising(Var x0, Var alpha_bar, Var eps) {
  return scale_rows(x0, sqrt(alpha_bar)) + scale_rows(eps, sqrt(affine(alpha_bar, -1.0, 1.0)));
}

BatchInputs BatchInputs::from(std::span<const LabeledSample> batch, const ConditioningConfig& cfg) {
  if (batch.empty()) throw ContractError("training batch is empty");
  const auto n = static_cast<Index>(batch.size());
  const Index dim = batch[0].x0.size();
  BatchInputs in;
  in.x0.resize(n, dim);
  in.pooled.resize(n, kPooledSize);
  in.class_ids.resize(batch.size());
  in.r_s.resize(batch.size());
  in.step_targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    const LabeledSample& s = batch[static_cast<std::size_t>(i)];
    if (s.x0.size() != dim) throw DimensionError("training batch mixes sample dimensions");
    in.x0.row(i) = s.x0;
    in.pooled.row(i) = pool_condition(s.condition);
    in.class_ids[static_cast<std::size_t>(i)] = s.prompt.class_id;
    const double r_s = spatial_complexity(s.condition, cfg.bins);
    in.r_s[static_cast<std::size_t>(i)] = r_s;
    in.step_targets(i) = step_target(r_s, edge_density(s.condition));
  }
  return in;
}

TrainingDraws draw_training(const Model& model, const BatchInputs& inputs, Mode mode, Rng& rng) {
  const BaseScheduleConfig& cfg = model.config.schedule;
  const Index n = inputs.x0.rows();
  Matrix u;
  if (mode != Mode::fixed_T_fixed_beta) {
    Tape tape;
    u = fusion_head(tape, model.cond.g_t, tape.constant(fused_embeddings(model, inputs))).value();
  }
  TrainingDraws d;
  d.eps.resize(n, inputs.x0.cols());
  for (Index i = 0; i < n; ++i) {
    const bool fixed = mode == Mode::fixed_T_fixed_beta;
    const double r_s = fixed ? 1.0 : inputs.r_s[static_cast<std::size_t>(i)];
    const int t_cond = fixed ? cfg.t_max : conditional_steps(u(i, 0), r_s, cfg);
    d.t_cond.push_back(t_cond);
    d.r_s.push_back(r_s);
    d.t.push_back(static_cast<int>(rng.uniform_int(1, t_cond)));
    d.eps.row(i) = normals(inputs.x0.cols(), rng);
  }
  return d;
}

Var conditional_loss(Tape& tape, Model& model, const BatchInputs& inputs, const TrainingDraws& draws, Mode mode,
                     std::vector<HybridSchedule>* schedules) {
  const Index n = inputs.x0.rows();
  if (draws.t.size() != static_cast<std::size_t>(n) || draws.eps.rows() != n ||
      draws.eps.cols() != inputs.x0.cols()) {
    throw DimensionError("conditional_loss: draws do not match the batch");
  }
  const BaseScheduleConfig& cfg = model.config.schedule;
  Var f_p = prompt_embeddings(tape, model.cond, inputs.class_ids);
  Var f_d = condition_embeddings(tape, model.cond, inputs.pooled);

  Var lambda;
  if (mode == Mode::adaptive) lambda = fusion_head(tape, model.cond.g_beta, concat(f_p, f_d));

  Matrix abar(n, 1), dabar(n, 1);
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double lam = mode == Mode::adaptive ? lambda.value()(i, 0) : 1.0;
    HybridSchedule s = schedule_for(cfg, mode, draws.t_cond[k], draws.r_s[k], lam);
    if (draws.t[k] < 1 || draws.t[k] > s.t_cond) throw ContractError("conditional_loss: t outside [1, T_cond]");
    abar(i, 0) = s.alpha_bar_prime(draws.t[k]);
    dabar(i, 0) = s.dalpha_bar(draws.t[k]);
    if (schedules != nullptr) schedules->push_back(std::move(s));
  }
  Var alpha_bar = mode == Mode::adaptive ? map(lambda, std::move(abar), std::move(dabar)) : tape.constant(abar);

  Var eps = tape.constant(draws.eps);
  Var x_t = forward_noising(tape.constant(inputs.x0), alpha_bar, eps);
  Var eps_hat = predict_noise(tape, model.den, x_t, time_embed_rows(draws.t, model.config.denoiser.time_dim), f_p, f_d);
  return mean(square(eps - eps_hat));
}

double training_step(Model& model, std::span<const LabeledSample> batch, Rng& rng, double lr, Mode mode) {
  if (!(lr > 0.0)) throw ContractError("training_step: learning rate must be > 0");
  const BatchInputs inputs = BatchInputs::from(batch, model.config.conditioning);
  if (inputs.x0.cols() != model.config.denoiser.data_dim) {
    throw DimensionError("training_step: samples have " + std::to_string(inputs.x0.cols()) +
                         " values, model expects " + std::to_string(model.config.denoiser.data_dim));
  }
  const TrainingDraws draws = draw_training(model, inputs, mode, rng);
  const auto params = model.named_parameters();
  for (auto& [name, t] : params) t->zero_grad();

  std::vector<HybridSchedule> schedules;
  double loss_value = 0.0;
  {
    Tape tape;
    try {
      Var loss = conditional_loss(tape, model, inputs, draws, mode, &schedules);
      loss_value = loss.item();
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + diagnostics(draws, schedules));
    }
  }
  {
    Tape tape;
    tape.backward(step_head_loss(tape, model.cond, fused_embeddings(model, inputs), inputs.step_targets));
  }
  for (auto& [name, t] : params) {
    if (t->has_grad()) t->value() -= lr * t->grad();
  }
  return loss_value;
}

void train(Model& model, const std::vector<LabeledSample>& data, const TrainOptions& options, Rng& rng,
           const std::function<void(int, double)>& on_step) {
  if (options.steps < 0 || options.batch_size < 1) throw ContractError("train: need steps >= 0 and batch_size >= 1");
  if (options.steps > 0 && data.empty()) throw ContractError("train: empty dataset");
  std::vector<LabeledSample> batch(static_cast<std::size_t>(options.batch_size));
  const auto last = static_cast<std::int64_t>(data.size()) - 1;
  for (int step = 0; step < options.steps; ++step) {
    for (auto& s : batch) s = data[static_cast<std::size_t>(rng.uniform_int(0, last))];
    const double loss = training_step(model, batch, rng, options.lr, options.mode);
    if (on_step) on_step(step, loss);
  }
}

RowVector reverse_step(const RowVector& x_t, int t, const HybridSchedule& schedule, const RowVector& eps_hat,
                       const RowVector& z) {
  if (t < 1 || t > schedule.t_cond) {
    throw ContractError("reverse_step: t=" + std::to_string(t) + " outside [1, " + std::to_string(schedule.t_cond) +
                        "]");
  }
  if (eps_hat.size() != x_t.size() || z.size() != x_t.size()) {
    throw DimensionError("reverse_step: x_t, eps_hat and z must have the same size");
  }
  if (t == 1 && (z.array() != 0.0).any()) throw ContractError("reverse_step: z must be zero at t = 1");
  const double beta = schedule.beta_prime(t);
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar_prime(t));
  const RowVector mean = (x_t - coef * eps_hat) / std::sqrt(schedule.alpha_prime(t));
  return mean + std::sqrt(beta) * z;
}

SamplePlan plan_sample(const Model& model, const PromptInput& prompt, const ConditionImage& condition, Mode mode) {
  const BaseScheduleConfig& cfg = model.config.schedule;
  const CtsDecision d = cts_decide(prompt, condition, model.cond, cfg);
  SamplePlan p;
  p.u = d.u;
  p.f_p = d.f_p;
  p.f_d = d.f_d;
  switch (mode) {
    case Mode::adaptive:
      p.t_cond = d.t_cond;
      p.r_s = d.r_s;
      p.lambda = d.lambda;
      break;
    case Mode::fixed_T_fixed_beta:
      p.t_cond = cfg.t_max;
      p.r_s = 1.0;
      p.lambda = 1.0;
      break;
    case Mode::adaptive_T_fixed_beta:
      p.t_cond = d.t_cond;
      p.r_s = d.r_s;
      p.lambda = 1.0;
      break;
  }
  p.schedule = schedule_for(cfg, mode, p.t_cond, p.r_s, p.lambda);
  return p;
}

GeneratedSample generate(const Model& model, const PromptInput& prompt, const ConditionImage& condition, Rng& rng,
                         Mode mode, bool record_trajectory) {
  auto out = generate_batch(model, std::span<const PromptInput>(&prompt, 1),
                            std::span<const ConditionImage>(&condition, 1), std::span<Rng>(&rng, 1), mode,
                            record_trajectory);
  return std::move(out.front());
}

std::vector<GeneratedSample> generate_batch(const Model& model, std::span<const PromptInput> prompts,
                                            std::span<const ConditionImage> conditions, std::span<Rng> rngs,
                                            Mode mode, bool record_trajectory) {
  using Clock = std::chrono::steady_clock;
  if (prompts.size() != conditions.size() || prompts.size() != rngs.size()) {
    throw ContractError("generate_batch: prompts, conditions and rngs must have equal length");
  }
  const std::size_t n = prompts.size();
  const int dim = model.config.denoiser.data_dim;
  const int emb = model.config.denoiser.emb_dim;
  std::vector<GeneratedSample> out(n);
  std::vector<SamplePlan> plans;
  plans.reserve(n);
  int longest = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto start = Clock::now();
    plans.push_back(plan_sample(model, prompts[i], conditions[i], mode));
    const SamplePlan& p = plans.back();
    GenerationRecord& r = out[i].record;
    r.class_id = prompts[i].class_id;
    r.t_cond = p.t_cond;
    r.lambda = p.lambda;
    r.r_s = p.r_s;
    r.u = p.u;
    r.alpha_bar_final = p.schedule.alpha_bar_prime(p.t_cond);
    out[i].x0 = normals(dim, rngs[i]);
    if (record_trajectory) out[i].trajectory.push_back(out[i].x0);
    longest = std::max(longest, p.t_cond);
    r.wall_time_s += std::chrono::duration<double>(Clock::now() - start).count();
  }

  std::vector<std::size_t> active;
  for (int t = longest; t >= 1; --t) {
    const auto start = Clock::now();
    active.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (plans[i].t_cond >= t) active.push_back(i);
    }
    const auto rows = static_cast<Index>(active.size());
    Matrix x(rows, dim), f_p(rows, emb), f_d(rows, emb);
    for (Index a = 0; a < rows; ++a) {
      const std::size_t i = active[static_cast<std::size_t>(a)];
      x.row(a) = out[i].x0;
      f_p.row(a) = plans[i].f_p.values;
      f_d.row(a) = plans[i].f_d.values;
    }
    const Matrix time_emb = time_embed(t, model.config.denoiser.time_dim).replicate(rows, 1);
    Matrix eps_hat;
    {
      Tape tape;
      eps_hat = predict_noise(tape, model.den, tape.constant(std::move(x)), time_emb, tape.constant(std::move(f_p)),
                              tape.constant(std::move(f_d)))
                    .value();
    }
    for (Index a = 0; a < rows; ++a) {
      const std::size_t i = active[static_cast<std::size_t>(a)];
      const RowVector z = t > 1 ? normals(dim, rngs[i]) : RowVector::Zero(dim);
      out[i].x0 = reverse_step(out[i].x0, t, plans[i].schedule, eps_hat.row(a), z);
      if (record_trajectory) out[i].trajectory.push_back(out[i].x0);
    }
    const double share = std::chrono::duration<double>(Clock::now() - start).count() / static_cast<double>(rows);
    for (std::size_t i : active) out[i].record.wall_time_s += share;
  }
  return out;
}

}  // namespace acdiff
