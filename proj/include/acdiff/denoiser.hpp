#pragma once

// Conditioned noise estimator: a residual MLP whose hidden feature receives
// projected time, prompt and condition embeddings additively.
//
//   h0  = silu(x W_in + b_in) + temb P_t + f_p P_p + f_d P_d
//   h1  = h0 + silu(h0 W_1 + b_1)
//   h2  = h1 + silu(h1 W_2 + b_2)
//   out = h2 W_out + b_out

#include "acdiff/conditioning.hpp"
#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace acdiff {

struct DenoiserConfig {
  int data_dim = 2;
  int hidden = 128;
  int time_dim = 64;
  int emb_dim = 64;

  void validate() const;
};

struct DenoiserParams {
  DenoiserConfig config;
  Tensor w_in, b_in;
  Tensor w1, b1;
  Tensor w2, b2;
  Tensor w_out, b_out;
  Tensor p_t, p_p, p_d;

  /// Weights N(0, 1/fan_in), biases zero.
  static DenoiserParams init(const DenoiserConfig& cfg, Rng& rng);
  static DenoiserParams zeros(const DenoiserConfig& cfg);

  std::vector<std::pair<std::string, Tensor*>> named_tensors();
};

/// v[2k] = sin(t / 10000^(2k/dim)), v[2k+1] = cos(same); dim must be even.
RowVector time_embed(int t, int dim);
/// One time_embed row per entry of `steps`.
Matrix time_embed_rows(std::span<const int> steps, int dim);

/// Batched forward pass: x (B x data_dim), time_emb (B x time_dim),
/// f_p and f_d (B x emb_dim). Const params record frozen leaves.
template <typename Params>
Var predict_noise(Tape& tape, Params& params, Var x, const Matrix& time_emb, Var f_p, Var f_d);

/// Single-sample evaluation without gradients.
RowVector predict_noise(const RowVector& x_t, int t, const Embedding& f_p, const Embedding& f_d,
                        const DenoiserParams& params);

}  // namespace acdiff
