#include "acdiff/conditioning.hpp"

#include "acdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acdiff {

namespace {

Matrix gaussian(Index rows, Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

// Pairwise summation: sums of 2^k equal terms are exact, which keeps the
// entropy of a uniform histogram exactly ln(bins).
double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() == 1) return v[0];
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

// Overlap of pixel cells [k, k+1) with the cells of an `out`-cell grid spanning `in` pixels.
Matrix pooling_weights(int in, int out) {
  Matrix w = Matrix::Zero(out, in);
  const double step = static_cast<double>(in) / out;
  for (int g = 0; g < out; ++g) {
    const double lo = g * step, hi = (g + 1) * step;
    for (int k = static_cast<int>(std::floor(lo)); k < in && k < hi; ++k) {
      w(g, k) = std::max(0.0, std::min(hi, k + 1.0) - std::max(lo, static_cast<double>(k)));
    }
    w.row(g) /= w.row(g).sum();
  }
  return w;
}

template <typename Head>
double head_output(Tape& tape, Head& head, Var fused) {
  return fusion_head(tape, head, fused).item();
}

}  // namespace

ConditionImage::ConditionImage(int w, int h, std::vector<double> px)
    : width(w), height(h), pixels(std::move(px)) {
  validate();
}

ConditionImage::ConditionImage(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), fill) {
  validate();
}

void ConditionImage::validate() const {
  if (width <= 0 || height <= 0) throw ContractError("condition image must be non-empty");
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw ContractError("condition image: pixel count does not match " + std::to_string(width) + "x" +
                        std::to_string(height));
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("condition image: pixel values must lie in [0, 1]");
  }
}

FusionHead FusionHead::init(int in, int hidden, Rng& rng) {
  FusionHead h;
  h.w1 = Tensor(gaussian(in, hidden, 1.0 / std::sqrt(in), rng), true);
  h.b1 = Tensor::zeros(1, hidden, true);
  h.w2 = Tensor(gaussian(hidden, 1, 1.0 / std::sqrt(hidden), rng), true);
  h.b2 = Tensor::zeros(1, 1, true);
  return h;
}

ConditioningParams ConditioningParams::init(const ConditioningConfig& cfg, Rng& rng) {
  if (cfg.num_classes < 1 || cfg.d_emb < 1 || cfg.hidden < 1 || cfg.bins < 2) {
    throw ContractError("conditioning config: sizes must be positive and bins >= 2");
  }
  ConditioningParams p;
  p.config = cfg;
  p.prompt_table = Tensor(gaussian(cfg.num_classes, cfg.d_emb, 1.0, rng), true);
  p.cond_w = Tensor(gaussian(kPooledSize, cfg.d_emb, 1.0 / std::sqrt(kPooledSize), rng), true);
  p.cond_b = Tensor::zeros(1, cfg.d_emb, true);
  p.g_t = FusionHead::init(2 * cfg.d_emb, cfg.hidden, rng);
  p.g_beta = FusionHead::init(2 * cfg.d_emb, cfg.hidden, rng);
  return p;
}

RowVector pool_condition(const ConditionImage& image) {
  image.validate();
  const Matrix wy = pooling_weights(image.height, kPoolGrid);
  const Matrix wx = pooling_weights(image.width, kPoolGrid);
  const Eigen::Map<const Matrix> px(image.pixels.data(), image.height, image.width);
  const Matrix pooled = wy * px * wx.transpose();
  return Eigen::Map<const RowVector>(pooled.data(), kPooledSize);
}

double spatial_complexity(const ConditionImage& image, int bins) {
  if (bins < 2) throw ContractError("spatial_complexity: bins must be >= 2");
  image.validate();
  std::vector<long long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : image.pixels) {
    const int b = std::min(static_cast<int>(v * bins), bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const double n = static_cast<double>(image.pixels.size());
  std::vector<double> terms(static_cast<std::size_t>(bins), 0.0);
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0) continue;
    const double p = static_cast<double>(counts[b]) / n;
    terms[b] = -p * std::log(p);
  }
  const double entropy = pairwise_sum(terms);
  return std::clamp(0.5 + entropy / std::log(static_cast<double>(bins)), 0.5, 1.5);
}

double edge_density(const ConditionImage& image) {
  image.validate();
  const auto above = std::count_if(image.pixels.begin(), image.pixels.end(), [](double v) { return v > 0.5; });
  return static_cast<double>(above) / static_cast<double>(image.pixels.size());
}

int conditional_steps(double u, double r_s, const BaseScheduleConfig& cfg) {
  const double base = cfg.t_min + u * (cfg.t_max - cfg.t_min);
  const double steps = std::floor(r_s * base + 0.5);
  return std::max(1, static_cast<int>(steps));
}

double step_target(double r_s, double density) {
  return std::clamp(0.5 * (r_s - 0.5) + 0.5 * density, 0.0, 1.0);
}

template <typename Params>
Var prompt_embeddings(Tape& tape, Params& params, std::span<const int> class_ids) {
  for (int id : class_ids) {
    if (id < 0 || id >= params.config.num_classes) {
      throw ContractError("class_id " + std::to_string(id) + " outside [0, " +
                          std::to_string(params.config.num_classes) + ")");
    }
  }
  return gather_rows(tape.param(params.prompt_table), class_ids);
}

template <typename Params>
Var condition_embeddings(Tape& tape, Params& params, const Matrix& pooled) {
  if (pooled.cols() != kPooledSize) {
    throw DimensionError("condition_embeddings: expected " + std::to_string(kPooledSize) + " pooled values, got " +
                         shape_string(pooled));
  }
  Var x = tape.constant(pooled);
  return silu(add_bias(matmul(x, tape.param(params.cond_w)), tape.param(params.cond_b)));
}

template <typename Head>
Var fusion_head(Tape& tape, Head& head, Var fused) {
  Var h = sigmoid(add_bias(matmul(fused, tape.param(head.w1)), tape.param(head.b1)));
  return sigmoid(add_bias(matmul(h, tape.param(head.w2)), tape.param(head.b2)));
}

template Var prompt_embeddings(Tape&, ConditioningParams&, std::span<const int>);
template Var prompt_embeddings(Tape&, const ConditioningParams&, std::span<const int>);
template Var condition_embeddings(Tape&, ConditioningParams&, const Matrix&);
template Var condition_embeddings(Tape&, const ConditioningParams&, const Matrix&);
template Var fusion_head(Tape&, FusionHead&, Var);
template Var fusion_head(Tape&, const FusionHead&, Var);

Embedding encode_prompt(const PromptInput& prompt, const ConditioningParams& params) {
  Tape tape;
  const int id = prompt.class_id;
  Var e = prompt_embeddings(tape, params, std::span<const int>(&id, 1));
  return Embedding{e.value().row(0), EmbeddingSource::prompt};
}

Embedding encode_condition(const ConditionImage& image, const ConditioningParams& params) {
  Tape tape;
  Var e = condition_embeddings(tape, params, pool_condition(image));
  return Embedding{e.value().row(0), EmbeddingSource::condition};
}

CtsDecision cts_decide(const PromptInput& prompt, const ConditionImage& condition,
                       const ConditioningParams& params, const BaseScheduleConfig& cfg) {
  CtsDecision d;
  Tape tape;
  const int id = prompt.class_id;
  Var fp = prompt_embeddings(tape, params, std::span<const int>(&id, 1));
  Var fd = condition_embeddings(tape, params, pool_condition(condition));
  Var fused = concat(fp, fd);
  d.f_p = Embedding{fp.value().row(0), EmbeddingSource::prompt};
  d.f_d = Embedding{fd.value().row(0), EmbeddingSource::condition};
  d.u = head_output(tape, params.g_t, fused);
  d.lambda = head_output(tape, params.g_beta, fused);
  d.r_s = spatial_complexity(condition, params.config.bins);
  d.t_cond = conditional_steps(d.u, d.r_s, cfg);
  return d;
}

Var step_head_loss(Tape& tape, ConditioningParams& params, const Matrix& fused, const Eigen::VectorXd& targets) {
  if (fused.rows() != targets.size()) {
    throw DimensionError("step_head_loss: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(fused));
  }
  Var u = fusion_head(tape, params.g_t, tape.constant(fused));
  Matrix t = targets;
  return mean(square(u - tape.constant(std::move(t))));
}

double train_gt_auxiliary(std::span<const PromptInput> prompts, std::span<const ConditionImage> conditions,
                          ConditioningParams& params, double lr) {
  if (prompts.empty() || prompts.size() != conditions.size()) {
    throw ContractError("train_gt_auxiliary: need a non-empty batch of matching prompts and conditions");
  }
  const auto n = static_cast<Index>(prompts.size());
  std::vector<int> ids(prompts.size());
  Matrix pooled(n, kPooledSize);
  Eigen::VectorXd targets(n);
  for (Index i = 0; i < n; ++i) {
    const auto& c = conditions[static_cast<std::size_t>(i)];
    ids[static_cast<std::size_t>(i)] = prompts[static_cast<std::size_t>(i)].class_id;
    pooled.row(i) = pool_condition(c);
    targets(i) = step_target(spatial_complexity(c, params.config.bins), edge_density(c));
  }
  Matrix fused;
  {
    Tape tape;
    const ConditioningParams& frozen = params;
    fused = concat(prompt_embeddings(tape, frozen, ids), condition_embeddings(tape, frozen, pooled)).value();
  }
  for (Tensor* t : params.g_t.tensors()) t->zero_grad();
  Tape tape;
  Var loss = step_head_loss(tape, params, fused, targets);
  const double value = loss.item();
  if (lr > 0.0) {
    tape.backward(loss);
    for (Tensor* t : params.g_t.tensors()) t->value() -= lr * t->grad();
  }
  return value;
}

}  // namespace acdiff
