#include "acdiff/config.hpp"

#include "acdiff/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace acdiff {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ContractError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename F>
auto named(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ContractError& e) {
    throw ContractError("config key '" + key + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const char* key, const std::string& why) {
    if (!ok) throw ContractError(std::string("config key '") + key + "': " + why);
  };
  const DataShape shape = DataShape::of(dataset);
  require(data_dim == shape.dim, "data_dim",
          std::string(to_string(dataset)) + " samples have " + std::to_string(shape.dim) + " values");
  require(num_classes >= 1, "num_classes", "must be >= 1");
  require(dataset != DatasetKind::cifar10 || num_classes == 10, "num_classes", "cifar10 has 10 classes");
  require(dataset != DatasetKind::cifar10 || !dataset_path.empty(), "dataset_path", "required for cifar10");
  require(samples_per_class >= 0, "samples_per_class", "must be >= 0");
  require(t_min >= 1, "t_min", "must be >= 1");
  require(t_max > t_min, "t_max", "must exceed t_min");
  require(beta_min > 0.0 && beta_min < 1.0, "beta_min", "must lie in (0, 1)");
  require(beta_max > beta_min && beta_max < 1.0, "beta_max", "must lie in (beta_min, 1)");
  require(bins >= 2, "bins", "must be >= 2");
  require(d_emb >= 1, "d_emb", "must be >= 1");
  require(hidden >= 1, "hidden", "must be >= 1");
  require(denoiser_hidden >= 1, "denoiser_hidden", "must be >= 1");
  require(time_dim >= 2 && time_dim % 2 == 0, "time_dim", "must be even and >= 2");
  require(lr > 0.0, "lr", "must be > 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(steps >= 0, "steps", "must be >= 0");
  model_config().validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.schedule = BaseScheduleConfig{schedule, beta_min, beta_max, t_min, t_max};
  m.conditioning = ConditioningConfig{num_classes, d_emb, hidden, bins};
  m.denoiser = DenoiserConfig{data_dim, denoiser_hidden, time_dim, d_emb};
  return m;
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << "dataset = " << to_string(dataset) << '\n'
     << "dataset_path = " << dataset_path << '\n'
     << "num_classes = " << num_classes << '\n'
     << "data_dim = " << data_dim << '\n'
     << "samples_per_class = " << samples_per_class << '\n'
     << "t_min = " << t_min << '\n'
     << "t_max = " << t_max << '\n'
     << "beta_min = " << format_double(beta_min) << '\n'
     << "beta_max = " << format_double(beta_max) << '\n'
     << "schedule = " << to_string(schedule) << '\n'
     << "bins = " << bins << '\n'
     << "d_emb = " << d_emb << '\n'
     << "hidden = " << hidden << '\n'
     << "denoiser_hidden = " << denoiser_hidden << '\n'
     << "time_dim = " << time_dim << '\n'
     << "lr = " << format_double(lr) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "steps = " << steps << '\n'
     << "train_mode = " << to_string(train_mode) << '\n'
     << "seed = " << seed << '\n';
  return os.str();
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"dataset", [&](auto& k, auto& v) { c.dataset = named(k, [&] { return parse_dataset_kind(v); }); }},
      {"dataset_path", [&](auto&, auto& v) { c.dataset_path = v; }},
      {"num_classes", [&](auto& k, auto& v) { c.num_classes = parse_int<int>(k, v); }},
      {"data_dim", [&](auto& k, auto& v) { c.data_dim = parse_int<int>(k, v); }},
      {"samples_per_class", [&](auto& k, auto& v) { c.samples_per_class = parse_int<int>(k, v); }},
      {"t_min", [&](auto& k, auto& v) { c.t_min = parse_int<int>(k, v); }},
      {"t_max", [&](auto& k, auto& v) { c.t_max = parse_int<int>(k, v); }},
      {"beta_min", [&](auto& k, auto& v) { c.beta_min = parse_double(k, v); }},
      {"beta_max", [&](auto& k, auto& v) { c.beta_max = parse_double(k, v); }},
      {"schedule", [&](auto& k, auto& v) { c.schedule = named(k, [&] { return parse_schedule_kind(v); }); }},
      {"bins", [&](auto& k, auto& v) { c.bins = parse_int<int>(k, v); }},
      {"d_emb", [&](auto& k, auto& v) { c.d_emb = parse_int<int>(k, v); }},
      {"hidden", [&](auto& k, auto& v) { c.hidden = parse_int<int>(k, v); }},
      {"denoiser_hidden", [&](auto& k, auto& v) { c.denoiser_hidden = parse_int<int>(k, v); }},
      {"time_dim", [&](auto& k, auto& v) { c.time_dim = parse_int<int>(k, v); }},
      {"lr", [&](auto& k, auto& v) { c.lr = parse_double(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_int<int>(k, v); }},
      {"steps", [&](auto& k, auto& v) { c.steps = parse_int<int>(k, v); }},
      {"train_mode", [&](auto& k, auto& v) { c.train_mode = named(k, [&] { return parse_mode(v); }); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_int<std::uint64_t>(k, v); }},
  };

  bool data_dim_given = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ContractError("config key '" + key + "': unknown key");
    it->second(key, value);
    data_dim_given |= key == "data_dim";
  }
  if (!data_dim_given) c.data_dim = DataShape::of(c.dataset).dim;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

std::vector<LabeledSample> load_dataset(const RunConfig& config, std::uint64_t seed) {
  if (config.dataset == DatasetKind::cifar10) return load_cifar10(config.dataset_path);
  ToyDatasetSpec spec;
  spec.kind = config.dataset;
  spec.num_classes = config.num_classes;
  spec.samples_per_class = config.samples_per_class;
  Rng rng = Rng::stream(seed, 1);
  return generate_toy(spec, rng);
}

}  // namespace acdiff
