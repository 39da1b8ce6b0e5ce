#pragma once

// Per-sample control signals: prompt/condition embeddings, the entropy-based
// complexity ratio r_s, the adaptive step count T_cond and the hybrid
// coefficient lambda.

#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"
#include "acdiff/schedule.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace acdiff {

struct PromptInput {
  int class_id = 0;
  std::string label;  // kept for manifests, ignored by the encoder
};

/// Grayscale image in [0, 1], row-major.
struct ConditionImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  ConditionImage() = default;
  ConditionImage(int w, int h, std::vector<double> px);
  ConditionImage(int w, int h, double fill);

  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width <= 0 || height <= 0; }
  /// Throws ContractError on size mismatch, empty image or values outside [0, 1].
  void validate() const;
  bool operator==(const ConditionImage&) const = default;
};

enum class EmbeddingSource { prompt, condition };

struct Embedding {
  RowVector values;
  EmbeddingSource source = EmbeddingSource::prompt;
};

inline constexpr int kPoolGrid = 8;
inline constexpr int kPooledSize = kPoolGrid * kPoolGrid;

struct ConditioningConfig {
  int num_classes = 5;
  int d_emb = 64;
  int hidden = 32;
  int bins = 32;
};

/// Two-layer MLP  in -> hidden -> 1  with sigmoid after both layers.
struct FusionHead {
  Tensor w1, b1, w2, b2;

  static FusionHead init(int in, int hidden, Rng& rng);
  std::vector<Tensor*> tensors() { return {&w1, &b1, &w2, &b2}; }
};

struct ConditioningParams {
  ConditioningConfig config;
  Tensor prompt_table;  // num_classes x d_emb
  Tensor cond_w;        // 64 x d_emb
  Tensor cond_b;        // 1 x d_emb
  FusionHead g_t;       // step-count head
  FusionHead g_beta;    // hybrid-coefficient head

  static ConditioningParams init(const ConditioningConfig& cfg, Rng& rng);
  std::vector<Tensor*> encoder_tensors() { return {&prompt_table, &cond_w, &cond_b}; }
};

struct CtsDecision {
  int t_cond = 1;
  double r_s = 1.0;
  double u = 0.5;  // G_T output before the affine step map
  double lambda = 1.0;
  Embedding f_p;
  Embedding f_d;
};

/// Area-weighted average pooling onto an 8x8 grid, flattened row-major.
RowVector pool_condition(const ConditionImage& image);

/// r_s = 0.5 + H / ln(bins), clamped to [0.5, 1.5], where H is the Shannon
/// entropy (nats) of the `bins`-bin histogram of pixel values on [0, 1].
double spatial_complexity(const ConditionImage& image, int bins = 32);

/// Fraction of pixels strictly above 0.5.
double edge_density(const ConditionImage& image);

/// round-half-up(r_s * (t_min + u * (t_max - t_min))), at least 1.
int conditional_steps(double u, double r_s, const BaseScheduleConfig& cfg);

/// Regression target for the step head: clamp01(0.5 (r_s - 0.5) + 0.5 density).
double step_target(double r_s, double density);

Embedding encode_prompt(const PromptInput& prompt, const ConditioningParams& params);
Embedding encode_condition(const ConditionImage& image, const ConditioningParams& params);

// Batched tape versions; row i of the result belongs to sample i. Passing
// const params records frozen leaves (inference), non-const params record
// trainable leaves. Instantiated for both.
template <typename Params>
Var prompt_embeddings(Tape& tape, Params& params, std::span<const int> class_ids);
template <typename Params>
Var condition_embeddings(Tape& tape, Params& params, const Matrix& pooled);
template <typename Head>
Var fusion_head(Tape& tape, Head& head, Var fused);

CtsDecision cts_decide(const PromptInput& prompt, const ConditionImage& condition,
                       const ConditioningParams& params, const BaseScheduleConfig& cfg);

/// Mean squared error of the step head against step_target() on detached
/// embeddings `fused` (B x 2 d_emb); only G_T receives gradient.
Var step_head_loss(Tape& tape, ConditioningParams& params, const Matrix& fused,
                   const Eigen::VectorXd& targets);

/// One gradient-descent step of the step head on a batch; returns the
/// pre-update loss. lr = 0 evaluates without updating.
double train_gt_auxiliary(std::span<const PromptInput> prompts, std::span<const ConditionImage> conditions,
                          ConditioningParams& params, double lr);

}  // namespace acdiff
