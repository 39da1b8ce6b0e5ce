// acdiff: train, generate, eval, schedule and dataset commands.
//
// Exit status: 0 success, 1 contract/format error, 2 numeric error.

#include "acdiff/checkpoint.hpp"
#include "acdiff/config.hpp"
#include "acdiff/data.hpp"
#include "acdiff/diffusion.hpp"
#include "acdiff/errors.hpp"
#include "acdiff/eval.hpp"
#include "acdiff/schedule.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace acdiff;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

int cmd_train(const fs::path& config_path, const fs::path& out, fs::path log) {
  const RunConfig cfg = RunConfig::load(config_path);
  if (log.empty()) log = fs::path(out.string() + ".loss.csv");
  Rng init_rng = Rng::stream(cfg.seed, 0);
  Model model = Model::init(cfg.model_config(), init_rng);
  const auto data = load_dataset(cfg, cfg.seed);

  std::ofstream loss_csv = open_out(log);
  loss_csv << "step,loss\n";
  Rng rng = Rng::stream(cfg.seed, 2);
  TrainOptions opt{cfg.steps, cfg.batch_size, cfg.lr, cfg.train_mode};
  train(model, data, opt, rng, [&](int step, double loss) { loss_csv << step << ',' << fmt17(loss) << '\n'; });
  save_checkpoint(out, cfg, model);
  return 0;
}

int cmd_generate(const fs::path& ckpt, int class_id, const fs::path& condition_path, int count, std::uint64_t seed,
                 const fs::path& out_dir, const std::string& mode_name) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const Mode mode = parse_mode(mode_name);
  if (class_id < 0 || class_id >= ck.config.num_classes) {
    throw ContractError("class " + std::to_string(class_id) + " outside [0, " + std::to_string(ck.config.num_classes) +
                        ")");
  }
  if (count < 0) throw ContractError("count must be >= 0");
  const ConditionImage condition = read_pgm(condition_path);
  const DataShape shape = DataShape::of(ck.config.dataset);
  const PromptInput prompt{class_id, ""};

  fs::create_directories(out_dir);
  std::ofstream manifest = open_out(out_dir / "manifest.csv");
  std::ofstream timing = open_out(out_dir / "timing.csv");
  manifest << "index,class,t_cond,lambda,r_s,u,alpha_bar_final,output\n";
  timing << "index,wall_time_s\n";
  std::ofstream points;
  if (!shape.image && count > 0) {
    points = open_out(out_dir / "samples.csv");
    points << "index,x,y\n";
  }
  char name[64];
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    const GeneratedSample s = generate(ck.model, prompt, condition, rng, mode);
    std::string output = "samples.csv";
    if (shape.image) {
      std::snprintf(name, sizeof name, "sample_%05d.pgm", i);
      write_pgm(out_dir / name, to_image(shape, s.x0));
      output = name;
    } else {
      points << i << ',' << fmt17(s.x0(0)) << ',' << fmt17(s.x0(1)) << '\n';
    }
    const GenerationRecord& r = s.record;
    manifest << i << ',' << r.class_id << ',' << r.t_cond << ',' << fmt17(r.lambda) << ',' << fmt17(r.r_s) << ','
             << fmt17(r.u) << ',' << fmt17(r.alpha_bar_final) << ',' << output << '\n';
    timing << i << ',' << fmt17(r.wall_time_s) << '\n';
  }
  return 0;
}

int cmd_eval(const fs::path& ckpt, const std::string& mode_name, int n, std::uint64_t seed, const fs::path& out_dir,
             const fs::path& data_path, int projections) {
  const Checkpoint ck = load_checkpoint(ckpt);
  const Mode mode = parse_mode(mode_name);
  std::vector<LabeledSample> held_out;
  if (!data_path.empty()) {
    held_out = load_cifar10(data_path);
  } else {
    held_out = load_dataset(ck.config, ck.config.seed + 1);
  }
  const MetricReport report = run_benchmark(ck.model, held_out, mode, n, seed, BenchmarkOptions{projections});
  write_report(out_dir, report);
  write_report_text(std::cout, report);
  return 0;
}

int cmd_schedule(const fs::path& config_path, double r_s, double lambda, int steps, const fs::path& out) {
  const RunConfig cfg = RunConfig::load(config_path);
  const HybridSchedule s = make_hybrid_schedule(cfg.model_config().schedule, steps, r_s, lambda);
  if (out.empty()) {
    write_schedule_csv(std::cout, s);
  } else {
    std::ofstream f = open_out(out);
    write_schedule_csv(f, s);
  }
  return 0;
}

int cmd_dataset(const fs::path& config_path, const fs::path& out_dir, bool held_out) {
  const RunConfig cfg = RunConfig::load(config_path);
  write_dataset_manifest(out_dir, load_dataset(cfg, held_out ? cfg.seed + 1 : cfg.seed));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive conditional diffusion: training, sampling and evaluation"};
  app.require_subcommand(1);

  fs::path config, out, log, ckpt, condition, data;
  std::string mode = "adaptive";
  int class_id = 0, count = 1, n = 100, steps = 0, projections = 128;
  std::uint64_t seed = 0;
  double r_s = 1.0, lambda = 1.0;
  bool held_out = false;

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--config", config, "Run configuration")->required();
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--log", log, "Loss CSV (default: <out>.loss.csv)");

  auto* gen = app.add_subcommand("generate", "Sample from a checkpoint");
  gen->add_option("--ckpt", ckpt)->required();
  gen->add_option("--class", class_id)->required();
  gen->add_option("--condition", condition, "Condition image (binary PGM)")->required();
  gen->add_option("--count", count)->required();
  gen->add_option("--seed", seed)->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--mode", mode, "adaptive | fixed_T_fixed_beta | adaptive_T_fixed_beta");

  auto* eval = app.add_subcommand("eval", "Benchmark a checkpoint on held-out pairs");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--mode", mode)->required();
  eval->add_option("--n", n)->required();
  eval->add_option("--seed", seed)->required();
  eval->add_option("--out", out, "Report directory (default: .)");
  eval->add_option("--data", data, "CIFAR-10 batch file to evaluate on");
  eval->add_option("--projections", projections);

  auto* sched = app.add_subcommand("schedule", "Dump a per-sample schedule as CSV");
  sched->add_option("--config", config)->required();
  sched->add_option("--rs", r_s)->required();
  sched->add_option("--lambda", lambda)->required();
  sched->add_option("--steps", steps)->required();
  sched->add_option("--out", out, "CSV path (default: stdout)");

  auto* dataset = app.add_subcommand("dataset", "Export condition images and a manifest");
  dataset->add_option("--config", config)->required();
  dataset->add_option("--out", out)->required();
  dataset->add_flag("--held-out", held_out, "Export the held-out split");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train) return cmd_train(config, out, log);
    if (*gen) return cmd_generate(ckpt, class_id, condition, count, seed, out, mode);
    if (*eval) return cmd_eval(ckpt, mode, n, seed, out.empty() ? fs::path(".") : out, data, projections);
    if (*sched) return cmd_schedule(config, r_s, lambda, steps, out);
    if (*dataset) return cmd_dataset(config, out, held_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
