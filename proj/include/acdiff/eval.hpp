#pragma once

#include "acdiff/data.hpp"
#include "acdiff/diffusion.hpp"
#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace acdiff {

/// Mean over `projections` random unit directions of the 1-D 2-Wasserstein
/// distance between the sorted projections of the rows of a and b. The larger
/// set is subsampled without replacement to the size of the smaller one.
double sliced_wasserstein(const Matrix& a, const Matrix& b, int projections, Rng& rng);

struct MetricReport {
  Mode tag = Mode::adaptive;
  int n = 0;
  std::uint64_t seed = 0;
  double sliced_wasserstein = 0.0;
  double avg_steps = 0.0;
  double avg_time_s = 0.0;
  std::vector<double> per_class_steps;  // 0 for classes without samples
  std::vector<int> per_class_count;
};

struct BenchmarkOptions {
  int projections = 128;
};

/// Generates n samples conditioned on held-out (prompt, condition) pairs taken
/// at an even stride, sample i from Rng::stream(seed, i), and compares them with
/// the held-out x_0 of the same pairs. `samples`, when given, receives the outputs.
MetricReport run_benchmark(const Model& model, const std::vector<LabeledSample>& held_out, Mode mode, int n,
                           std::uint64_t seed, const BenchmarkOptions& options = {},
                           std::vector<GeneratedSample>* samples = nullptr);

/// report.txt (key=value) and per_class.csv; both exclude wall time so they
/// are reproducible byte for byte. Timing goes to timing.txt.
void write_report(const std::filesystem::path& dir, const MetricReport& report);
void write_report_text(std::ostream& os, const MetricReport& report);
void write_per_class_csv(std::ostream& os, const MetricReport& report);

}  // namespace acdiff
