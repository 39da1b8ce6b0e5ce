#pragma once

#include "acdiff/conditioning.hpp"
#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace acdiff {

enum class DatasetKind { gauss_mixture_2d, two_moons_2d, shapes_16x16, cifar10 };

DatasetKind parse_dataset_kind(std::string_view name);
const char* to_string(DatasetKind kind);

/// Layout of one flattened sample x_0.
struct DataShape {
  bool image = false;
  int width = 0;   // images only
  int height = 0;  // images only
  int dim = 2;

  static DataShape of(DatasetKind kind);
};

struct LabeledSample {
  RowVector x0;
  PromptInput prompt;
  ConditionImage condition;
};

struct ToyDatasetSpec {
  DatasetKind kind = DatasetKind::shapes_16x16;
  int num_classes = 5;
  int samples_per_class = 100;
  /// Per-class structure in [0, 1]; empty means default_profile(num_classes).
  std::vector<double> complexity;

  /// k / (num_classes - 1): strictly increasing from 0 to 1.
  static std::vector<double> default_profile(int num_classes);
};

/// Number of mixture components / strokes used for a complexity level.
int structure_count(double complexity, int num_classes);

/// Class-major list of samples; deterministic given the rng state.
std::vector<LabeledSample> generate_toy(const ToyDatasetSpec& spec, Rng& rng);

/// The condition image attached to x_0: the Sobel edge map of the image for
/// image data, a rasterized 16x16 density sketch around the point for 2-D data.
ConditionImage derive_condition(const DataShape& shape, const RowVector& x0);

/// Maps x_0 in [-1, 1] back to a [0, 1] image (values clamped).
ConditionImage to_image(const DataShape& shape, const RowVector& x0);

/// 3x3 Sobel gradient magnitude with reflect padding, divided by its maximum.
ConditionImage sobel_edges(const ConditionImage& image);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Reads CIFAR-10 binary records (label byte + 3072 channel-major RGB bytes).
/// Images become grayscale (0.299 R + 0.587 G + 0.114 B) scaled to [-1, 1];
/// conditions are their edge maps. subset_size = 0 reads every record.
std::vector<LabeledSample> load_cifar10(const std::filesystem::path& path, std::size_t subset_size = 0);
const char* cifar10_label_name(int label);

// Binary PGM (P5, maxval 255).
ConditionImage read_pgm(std::istream& in);
ConditionImage read_pgm(const std::filesystem::path& path);
void write_pgm(std::ostream& out, const ConditionImage& image);
void write_pgm(const std::filesystem::path& path, const ConditionImage& image);

/// Writes condition_NNNNN.pgm files and a manifest.txt of `path label` lines.
void write_dataset_manifest(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples);
std::vector<std::pair<std::string, int>> read_dataset_manifest(const std::filesystem::path& manifest);

}  // namespace acdiff
