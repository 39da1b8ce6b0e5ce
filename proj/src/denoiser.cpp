#include "acdiff/denoiser.hpp"

#include "acdiff/errors.hpp"

#include <cmath>

namespace acdiff {

namespace {

Tensor weight(Index in, Index out, Rng& rng) {
  Matrix m(in, out);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return Tensor(std::move(m), true);
}

void check_width(Var v, Index rows, Index cols, const char* what) {
  if (v.rows() != rows || v.cols() != cols) {
    throw DimensionError(std::string("predict_noise: ") + what + " has shape " + shape_string(v.value()) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

void DenoiserConfig::validate() const {
  if (data_dim < 1 || hidden < 1 || emb_dim < 1) throw ContractError("denoiser: sizes must be positive");
  if (time_dim < 2 || time_dim % 2 != 0) throw ContractError("denoiser: time embedding width must be even and >= 2");
}

DenoiserParams DenoiserParams::init(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  DenoiserParams p;
  p.config = cfg;
  p.w_in = weight(cfg.data_dim, cfg.hidden, rng);
  p.b_in = Tensor::zeros(1, cfg.hidden, true);
  p.w1 = weight(cfg.hidden, cfg.hidden, rng);
  p.b1 = Tensor::zeros(1, cfg.hidden, true);
  p.w2 = weight(cfg.hidden, cfg.hidden, rng);
  p.b2 = Tensor::zeros(1, cfg.hidden, true);
  p.w_out = weight(cfg.hidden, cfg.data_dim, rng);
  p.b_out = Tensor::zeros(1, cfg.data_dim, true);
  p.p_t = weight(cfg.time_dim, cfg.hidden, rng);
  p.p_p = weight(cfg.emb_dim, cfg.hidden, rng);
  p.p_d = weight(cfg.emb_dim, cfg.hidden, rng);
  return p;
}

DenoiserParams DenoiserParams::zeros(const DenoiserConfig& cfg) {
  cfg.validate();
  DenoiserParams p;
  p.config = cfg;
  p.w_in = Tensor::zeros(cfg.data_dim, cfg.hidden, true);
  p.b_in = Tensor::zeros(1, cfg.hidden, true);
  p.w1 = Tensor::zeros(cfg.hidden, cfg.hidden, true);
  p.b1 = Tensor::zeros(1, cfg.hidden, true);
  p.w2 = Tensor::zeros(cfg.hidden, cfg.hidden, true);
  p.b2 = Tensor::zeros(1, cfg.hidden, true);
  p.w_out = Tensor::zeros(cfg.hidden, cfg.data_dim, true);
  p.b_out = Tensor::zeros(1, cfg.data_dim, true);
  p.p_t = Tensor::zeros(cfg.time_dim, cfg.hidden, true);
  p.p_p = Tensor::zeros(cfg.emb_dim, cfg.hidden, true);
  p.p_d = Tensor::zeros(cfg.emb_dim, cfg.hidden, true);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> DenoiserParams::named_tensors() {
  return {{"den.w_in", &w_in}, {"den.b_in", &b_in},   {"den.w1", &w1},   {"den.b1", &b1},
          {"den.w2", &w2},     {"den.b2", &b2},       {"den.w_out", &w_out}, {"den.b_out", &b_out},
          {"den.p_t", &p_t},   {"den.p_p", &p_p},     {"den.p_d", &p_d}};
}

RowVector time_embed(int t, int dim) {
  if (t < 1) throw ContractError("time_embed: t must be >= 1, got " + std::to_string(t));
  if (dim < 2 || dim % 2 != 0) throw ContractError("time_embed: dimension must be even and >= 2");
  RowVector v(dim);
  for (int k = 0; 2 * k < dim; ++k) {
    const double angle = t / std::pow(10000.0, 2.0 * k / dim);
    v(2 * k) = std::sin(angle);
    v(2 * k + 1) = std::cos(angle);
  }
  return v;
}

Matrix time_embed_rows(std::span<const int> steps, int dim) {
  Matrix m(static_cast<Index>(steps.size()), dim);
  for (std::size_t i = 0; i < steps.size(); ++i) m.row(static_cast<Index>(i)) = time_embed(steps[i], dim);
  return m;
}

template <typename Params>
Var predict_noise(Tape& tape, Params& params, Var x, const Matrix& time_emb, Var f_p, Var f_d) {
  const DenoiserConfig& cfg = params.config;
  const Index batch = x.rows();
  check_width(x, batch, cfg.data_dim, "x_t");
  if (time_emb.rows() != batch || time_emb.cols() != cfg.time_dim) {
    throw DimensionError("predict_noise: time embedding has shape " + shape_string(time_emb));
  }
  check_width(f_p, batch, cfg.emb_dim, "prompt embedding");
  check_width(f_d, batch, cfg.emb_dim, "condition embedding");

  Var h = silu(add_bias(matmul(x, tape.param(params.w_in)), tape.param(params.b_in)));
  h = h + matmul(tape.constant(time_emb), tape.param(params.p_t));
  h = h + matmul(f_p, tape.param(params.p_p));
  h = h + matmul(f_d, tape.param(params.p_d));
  h = h + silu(add_bias(matmul(h, tape.param(params.w1)), tape.param(params.b1)));
  h = h + silu(add_bias(matmul(h, tape.param(params.w2)), tape.param(params.b2)));
  return add_bias(matmul(h, tape.param(params.w_out)), tape.param(params.b_out));
}

template Var predict_noise(Tape&, DenoiserParams&, Var, const Matrix&, Var, Var);
template Var predict_noise(Tape&, const DenoiserParams&, Var, const Matrix&, Var, Var);

RowVector predict_noise(const RowVector& x_t, int t, const Embedding& f_p, const Embedding& f_d,
                        const DenoiserParams& params) {
  Tape tape;
  Var out = predict_noise(tape, params, tape.constant(Matrix(x_t)), Matrix(time_embed(t, params.config.time_dim)),
                          tape.constant(Matrix(f_p.values)), tape.constant(Matrix(f_d.values)));
  return out.value().row(0);
}

}  // namespace acdiff
