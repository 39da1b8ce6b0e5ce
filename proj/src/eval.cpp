#include "acdiff/eval.hpp"

#include "acdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace acdiff {

namespace {

// Stream index reserved for projection directions, far from the per-sample streams.
constexpr std::uint64_t kProjectionStream = std::uint64_t{1} << 40;

Matrix subsample_rows(const Matrix& m, Index k, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = static_cast<Index>(rng.uniform_int(i, m.rows() - 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Matrix out(k, m.cols());
  for (Index i = 0; i < k; ++i) out.row(i) = m.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double sliced_wasserstein(const Matrix& a, const Matrix& b, int projections, Rng& rng) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractError("sliced_wasserstein: empty sample set");
  if (a.cols() != b.cols()) {
    throw DimensionError("sliced_wasserstein: dimensions differ (" + shape_string(a) + " vs " + shape_string(b) + ")");
  }
  if (projections < 1) throw ContractError("sliced_wasserstein: projections must be >= 1");

  Matrix x = a, y = b;
  if (x.rows() > y.rows()) x = subsample_rows(x, y.rows(), rng);
  if (y.rows() > x.rows()) y = subsample_rows(y, x.rows(), rng);

  const Index dim = x.cols();
  double total = 0.0;
  Eigen::VectorXd dir(dim);
  for (int p = 0; p < projections; ++p) {
    double norm = 0.0;
    while (norm == 0.0) {
      for (Index j = 0; j < dim; ++j) dir(j) = rng.normal();
      norm = dir.norm();
    }
    dir /= norm;
    Eigen::VectorXd px = x * dir;
    Eigen::VectorXd py = y * dir;
    std::sort(px.data(), px.data() + px.size());
    std::sort(py.data(), py.data() + py.size());
    total += std::sqrt((px - py).squaredNorm() / static_cast<double>(px.size()));
  }
  return total / projections;
}

MetricReport run_benchmark(const Model& model, const std::vector<LabeledSample>& held_out, Mode mode, int n,
                           std::uint64_t seed, const BenchmarkOptions& options,
                           std::vector<GeneratedSample>* samples) {
  if (n < 1) throw ContractError("run_benchmark: n must be >= 1");
  if (held_out.empty()) throw ContractError("run_benchmark: held-out set is empty");

  const auto size = static_cast<long long>(held_out.size());
  std::vector<PromptInput> prompts;
  std::vector<ConditionImage> conditions;
  std::vector<Rng> rngs;
  Matrix reference(n, held_out.front().x0.size());
  for (int i = 0; i < n; ++i) {
    const long long k = n <= size ? i * size / n : i % size;
    const LabeledSample& s = held_out[static_cast<std::size_t>(k)];
    prompts.push_back(s.prompt);
    conditions.push_back(s.condition);
    rngs.push_back(Rng::stream(seed, static_cast<std::uint64_t>(i)));
    reference.row(i) = s.x0;
  }
  auto generated = generate_batch(model, prompts, conditions, rngs, mode);

  MetricReport r;
  r.tag = mode;
  r.n = n;
  r.seed = seed;
  const int classes = model.config.conditioning.num_classes;
  r.per_class_steps.assign(static_cast<std::size_t>(classes), 0.0);
  r.per_class_count.assign(static_cast<std::size_t>(classes), 0);
  Matrix produced(n, reference.cols());
  double steps = 0.0, time = 0.0;
  for (int i = 0; i < n; ++i) {
    const GenerationRecord& rec = generated[static_cast<std::size_t>(i)].record;
    produced.row(i) = generated[static_cast<std::size_t>(i)].x0;
    steps += rec.t_cond;
    time += rec.wall_time_s;
    r.per_class_steps[static_cast<std::size_t>(rec.class_id)] += rec.t_cond;
    ++r.per_class_count[static_cast<std::size_t>(rec.class_id)];
  }
  for (int k = 0; k < classes; ++k) {
    const auto c = static_cast<std::size_t>(k);
    if (r.per_class_count[c] > 0) r.per_class_steps[c] /= r.per_class_count[c];
  }
  r.avg_steps = steps / n;
  r.avg_time_s = time / n;
  Rng projection_rng = Rng::stream(seed, kProjectionStream);
  r.sliced_wasserstein = sliced_wasserstein(produced, reference, options.projections, projection_rng);
  if (samples != nullptr) *samples = std::move(generated);
  return r;
}

void write_report_text(std::ostream& os, const MetricReport& r) {
  os << "ablation_tag=" << to_string(r.tag) << '\n'
     << "n=" << r.n << '\n'
     << "seed=" << r.seed << '\n'
     << "sliced_wasserstein=" << fmt(r.sliced_wasserstein) << '\n'
     << "avg_steps=" << fmt(r.avg_steps) << '\n';
}

void write_per_class_csv(std::ostream& os, const MetricReport& r) {
  os << "class,count,avg_steps\n";
  for (std::size_t k = 0; k < r.per_class_steps.size(); ++k) {
    os << k << ',' << r.per_class_count[k] << ',' << fmt(r.per_class_steps[k]) << '\n';
  }
}

void write_report(const std::filesystem::path& dir, const MetricReport& report) {
  std::filesystem::create_directories(dir);
  std::ofstream text(dir / "report.txt");
  std::ofstream csv(dir / "per_class.csv");
  std::ofstream timing(dir / "timing.txt");
  if (!text || !csv || !timing) throw FormatError("cannot write report files in " + dir.string());
  write_report_text(text, report);
  write_per_class_csv(csv, report);
  timing << "avg_time_s=" << fmt(report.avg_time_s) << '\n';
}

}  // namespace acdiff
