#include "acdiff/data.hpp"

#include "acdiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace acdiff {

namespace {

constexpr int kSketchSize = 16;
constexpr double kSketchExtent = 3.0;  // sketch covers [-3, 3]^2
constexpr double kMixtureSigma = 0.2;
constexpr double kMixtureRadius = 2.0;

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double s = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  const double ex = px - (ax + s * dx), ey = py - (ay + s * dy);
  return std::sqrt(ex * ex + ey * ey);
}

RowVector draw_strokes(int strokes, Rng& rng) {
  constexpr int n = 16;
  RowVector img = RowVector::Zero(n * n);
  for (int s = 0; s < strokes; ++s) {
    const double ax = 2.0 + 11.0 * rng.uniform(), ay = 2.0 + 11.0 * rng.uniform();
    const double bx = 2.0 + 11.0 * rng.uniform(), by = 2.0 + 11.0 * rng.uniform();
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double d = segment_distance(x, y, ax, ay, bx, by);
        const double v = std::clamp(1.5 - d, 0.0, 1.0);
        img(y * n + x) = std::max(img(y * n + x), v);
      }
    }
  }
  return (2.0 * img.array() - 1.0).matrix();
}

RowVector mixture_point(int components, Rng& rng) {
  const auto j = rng.uniform_int(0, components - 1);
  double cx = 0.0, cy = 0.0;
  if (components > 1) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(j) / components;
    cx = kMixtureRadius * std::cos(angle);
    cy = kMixtureRadius * std::sin(angle);
  }
  RowVector p(2);
  p(0) = cx + kMixtureSigma * rng.normal();
  p(1) = cy + kMixtureSigma * rng.normal();
  return p;
}

RowVector moon_point(double noise, Rng& rng) {
  const bool upper = rng.uniform() < 0.5;
  const double theta = std::numbers::pi * rng.uniform();
  double x = upper ? std::cos(theta) : 1.0 - std::cos(theta);
  double y = upper ? std::sin(theta) : 0.5 - std::sin(theta);
  RowVector p(2);
  p(0) = x - 0.5 + noise * rng.normal();
  p(1) = y - 0.25 + noise * rng.normal();
  return p;
}

ConditionImage density_sketch(const RowVector& point) {
  ConditionImage img(kSketchSize, kSketchSize, 0.0);
  const double cx = (point(0) + kSketchExtent) / (2.0 * kSketchExtent) * kSketchSize - 0.5;
  const double cy = (point(1) + kSketchExtent) / (2.0 * kSketchExtent) * kSketchSize - 0.5;
  double peak = 0.0;
  for (int y = 0; y < kSketchSize; ++y) {
    for (int x = 0; x < kSketchSize; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double v = std::exp(-0.5 * d2);
      img.at(x, y) = v;
      peak = std::max(peak, v);
    }
  }
  for (double& v : img.pixels) v = peak > 0.0 ? std::min(v / peak, 1.0) : 0.0;
  return img;
}

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_positive(const std::string& tok, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError(std::string("pgm: bad ") + what + " '" + tok + "'");
  }
}

constexpr const char* kCifarLabels[] = {"airplane", "automobile", "bird", "cat", "deer",
                                        "dog", "frog", "horse", "ship", "truck"};

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "gauss_mixture_2d") return DatasetKind::gauss_mixture_2d;
  if (name == "two_moons_2d") return DatasetKind::two_moons_2d;
  if (name == "shapes_16x16") return DatasetKind::shapes_16x16;
  if (name == "cifar10") return DatasetKind::cifar10;
  throw ContractError("unknown dataset kind '" + std::string(name) + "'");
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gauss_mixture_2d: return "gauss_mixture_2d";
    case DatasetKind::two_moons_2d: return "two_moons_2d";
    case DatasetKind::shapes_16x16: return "shapes_16x16";
    case DatasetKind::cifar10: return "cifar10";
  }
  return "?";
}

DataShape DataShape::of(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gauss_mixture_2d:
    case DatasetKind::two_moons_2d:
      return DataShape{false, 0, 0, 2};
    case DatasetKind::shapes_16x16:
      return DataShape{true, 16, 16, 256};
    case DatasetKind::cifar10:
      return DataShape{true, 32, 32, 1024};
  }
  throw ContractError("unknown dataset kind");
}

std::vector<double> ToyDatasetSpec::default_profile(int num_classes) {
  std::vector<double> c(static_cast<std::size_t>(std::max(num_classes, 0)), 0.0);
  for (int k = 0; k < num_classes; ++k) {
    c[static_cast<std::size_t>(k)] = num_classes > 1 ? static_cast<double>(k) / (num_classes - 1) : 0.0;
  }
  return c;
}

int structure_count(double complexity, int num_classes) {
  return 1 + static_cast<int>(std::lround(complexity * std::max(num_classes - 1, 1)));
}

std::vector<LabeledSample> generate_toy(const ToyDatasetSpec& spec, Rng& rng) {
  if (spec.kind == DatasetKind::cifar10) throw ContractError("generate_toy: cifar10 is not a toy dataset");
  if (spec.num_classes < 1 || spec.samples_per_class < 0) {
    throw ContractError("generate_toy: need num_classes >= 1 and samples_per_class >= 0");
  }
  std::vector<double> profile = spec.complexity.empty() ? ToyDatasetSpec::default_profile(spec.num_classes)
                                                        : spec.complexity;
  if (profile.size() != static_cast<std::size_t>(spec.num_classes)) {
    throw ContractError("generate_toy: complexity profile needs one entry per class");
  }
  for (double c : profile) {
    if (!(c >= 0.0 && c <= 1.0)) throw ContractError("generate_toy: complexity must lie in [0, 1]");
  }

  const DataShape shape = DataShape::of(spec.kind);
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class);
  for (int k = 0; k < spec.num_classes; ++k) {
    const double c = profile[static_cast<std::size_t>(k)];
    for (int i = 0; i < spec.samples_per_class; ++i) {
      RowVector x0;
      switch (spec.kind) {
        case DatasetKind::gauss_mixture_2d:
          x0 = mixture_point(structure_count(c, spec.num_classes), rng);
          break;
        case DatasetKind::two_moons_2d:
          x0 = moon_point(0.05 + 0.2 * c, rng);
          break;
        case DatasetKind::shapes_16x16:
          x0 = draw_strokes(structure_count(c, spec.num_classes), rng);
          break;
        case DatasetKind::cifar10:
          break;
      }
      LabeledSample s;
      s.condition = derive_condition(shape, x0);
      s.x0 = std::move(x0);
      s.prompt = PromptInput{k, "class_" + std::to_string(k)};
      out.push_back(std::move(s));
    }
  }
  return out;
}

ConditionImage to_image(const DataShape& shape, const RowVector& x0) {
  if (!shape.image) throw ContractError("to_image: data is not an image");
  if (x0.size() != shape.dim) throw DimensionError("to_image: sample has wrong dimension");
  std::vector<double> px(static_cast<std::size_t>(shape.dim));
  for (int i = 0; i < shape.dim; ++i) px[static_cast<std::size_t>(i)] = std::clamp((x0(i) + 1.0) / 2.0, 0.0, 1.0);
  return ConditionImage(shape.width, shape.height, std::move(px));
}

ConditionImage derive_condition(const DataShape& shape, const RowVector& x0) {
  if (x0.size() != shape.dim) {
    throw DimensionError("derive_condition: expected " + std::to_string(shape.dim) + " values, got " +
                         std::to_string(x0.size()));
  }
  if (shape.image) return sobel_edges(to_image(shape, x0));
  return density_sketch(x0);
}

ConditionImage sobel_edges(const ConditionImage& image) {
  image.validate();
  const int w = image.width, h = image.height;
  if (w < 3 || h < 3) throw ContractError("sobel_edges: image must be at least 3x3");
  ConditionImage out(w, h, 0.0);
  double peak = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return image.at(reflect(x + dx, w), reflect(y + dy, h)); };
      const double gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
      const double gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
      const double m = std::sqrt(gx * gx + gy * gy);
      out.at(x, y) = m;
      peak = std::max(peak, m);
    }
  }
  if (peak > 0.0) {
    for (double& v : out.pixels) v = std::min(v / peak, 1.0);
  }
  return out;
}

const char* cifar10_label_name(int label) {
  if (label < 0 || label > 9) throw ContractError("cifar10 label out of range");
  return kCifarLabels[label];
}

std::vector<LabeledSample> load_cifar10(const std::filesystem::path& path, std::size_t subset_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cifar10: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) throw FormatError("cifar10: truncated record at byte offset 0 of " + path.string() + " (empty file)");
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() / kCifarRecordBytes * kCifarRecordBytes;
    throw FormatError("cifar10: truncated record at byte offset " + std::to_string(offset) + " of " +
                      path.string());
  }
  std::size_t records = bytes.size() / kCifarRecordBytes;
  if (subset_size > 0) records = std::min(records, subset_size);

  const DataShape shape = DataShape::of(DatasetKind::cifar10);
  std::vector<LabeledSample> out;
  out.reserve(records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t offset = r * kCifarRecordBytes;
    const int label = bytes[offset];
    if (label > 9) {
      throw FormatError("cifar10: label " + std::to_string(label) + " at byte offset " + std::to_string(offset));
    }
    const unsigned char* red = &bytes[offset + 1];
    const unsigned char* green = red + 1024;
    const unsigned char* blue = green + 1024;
    RowVector x0(1024);
    for (int i = 0; i < 1024; ++i) {
      const double gray = (0.299 * red[i] + 0.587 * green[i] + 0.114 * blue[i]) / 255.0;
      x0(i) = 2.0 * gray - 1.0;
    }
    LabeledSample s;
    s.condition = derive_condition(shape, x0);
    s.x0 = std::move(x0);
    s.prompt = PromptInput{label, kCifarLabels[label]};
    out.push_back(std::move(s));
  }
  return out;
}

ConditionImage read_pgm(std::istream& in) {
  if (next_token(in) != "P5") throw FormatError("pgm: bad magic (expected P5)");
  const int w = parse_positive(next_token(in), "width");
  const int h = parse_positive(next_token(in), "height");
  const int maxval = parse_positive(next_token(in), "maxval");
  if (maxval != 255) throw FormatError("pgm: maxval must be 255, got " + std::to_string(maxval));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<unsigned char> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("pgm: truncated pixel data");
  std::vector<double> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = raw[i] / 255.0;
  return ConditionImage(w, h, std::move(px));
}

ConditionImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("pgm: cannot open " + path.string());
  return read_pgm(in);
}

void write_pgm(std::ostream& out, const ConditionImage& image) {
  image.validate();
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const long q = std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0);
    raw[i] = static_cast<char>(static_cast<unsigned char>(q));
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
}

void write_pgm(const std::filesystem::path& path, const ConditionImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("pgm: cannot write " + path.string());
  write_pgm(out, image);
}

void write_dataset_manifest(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
  char name[64];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof name, "condition_%05zu.pgm", i);
    write_pgm(dir / name, samples[i].condition);
    manifest << name << ' ' << samples[i].prompt.class_id << '\n';
  }
}

std::vector<std::pair<std::string, int>> read_dataset_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open manifest " + manifest.string());
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string path;
    int label = -1;
    if (!(row >> path >> label) || label < 0) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected `path label`");
    }
    out.emplace_back(std::move(path), label);
  }
  return out;
}

}  // namespace acdiff
