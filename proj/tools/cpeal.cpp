// SPDX-License-Identifier: Apache-2.0
//
// cpeal: generate embedding datasets, run active-learning experiments,
// sweep the calibration weight, and aggregate results.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpeal/alloop.hpp"
#include "cpeal/errors.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cpeal;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct GenSynthArgs {
  SynthSpec spec;
  std::string out;
};

int cmd_gen_synth(const GenSynthArgs& args) {
  const EmbeddingDataset ds = gen_synthetic(args.spec);
  save_dataset(ds, args.out);
  std::cout << "wrote " << args.out << ": n=" << ds.size()
            << " E=" << ds.dim() << " K=" << ds.num_classes << "\n";
  return kOk;
}

void guard_out_dir(const fs::path& out_dir, bool force) {
  if (!force && fs::exists(out_dir / "results.csv"))
    throw ConfigError("output dir already holds results.csv (use --force): " +
                      out_dir.string());
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            bool force, int jobs) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  guard_out_dir(out_dir, force);
  const auto records = run_experiment(cfg, fs::path(out_dir), jobs);
  std::cout << "wrote " << (fs::path(out_dir) / "results.csv").string() << " ("
            << records.size() << " rows)\n";
  const auto rows = aggregate_report(out_dir);
  std::cout << format_summary(rows);
  return kOk;
}

std::vector<double> parse_alpha_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    grid.push_back(std::stod(item));
  }
  if (grid.empty()) throw ConfigError("--alpha-grid is empty");
  for (double a : grid)
    if (!(a > 0 && a <= 1.0))
      throw ConfigError("alpha grid values must lie in (0, 1]; alpha = 0 is "
                        "the entropy baseline");
  return grid;
}

std::string alpha_dir_name(double alpha) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "alpha_%g", alpha);
  return buf;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& grid_csv, bool force, int jobs) {
  const ExperimentConfig base = load_experiment_config(config_path);
  if (std::find(base.strategies.begin(), base.strategies.end(),
                Strategy::kCpeal) == base.strategies.end())
    throw ConfigError("sweep needs \"cpeal\" in the strategy list");
  const std::vector<double> grid = parse_alpha_grid(grid_csv);

  const fs::path root(out_dir);
  if (!force && fs::exists(root / "best_alpha.txt"))
    throw ConfigError("output dir already holds a sweep (use --force): " +
                      root.string());
  fs::create_directories(root);

  double best_alpha = 0;
  double best_acc = -1;
  for (double alpha : grid) {
    ExperimentConfig cfg = base;
    cfg.train.alpha_final = alpha;
    const fs::path sub = root / alpha_dir_name(alpha);
    guard_out_dir(sub, force);
    const auto records = run_experiment(cfg, sub, jobs);

    // Mean final-cycle accuracy of the calibrated strategy.
    double sum = 0;
    int count = 0;
    for (const auto& rec : records)
      if (rec.strategy == Strategy::kCpeal && rec.cycle == cfg.cycles) {
        sum += rec.accuracy;
        ++count;
      }
    const double mean_acc = sum / count;
    std::cout << "alpha=" << alpha << " mean final cpeal accuracy="
              << mean_acc << "\n";
    if (mean_acc > best_acc) {  // ties keep the earlier (smaller) alpha
      best_acc = mean_acc;
      best_alpha = alpha;
    }
  }

  std::ofstream best(root / "best_alpha.txt", std::ios::trunc);
  best << best_alpha << "\n";
  std::cout << "best alpha: " << best_alpha << " (mean final accuracy "
            << best_acc << ")\n";
  return kOk;
}

int cmd_report(const std::string& results_dir) {
  const auto rows = aggregate_report(results_dir);
  std::cout << format_summary(rows);
  std::cout << "wrote " << (fs::path(results_dir) / "summary.csv").string()
            << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"calibrated parameter-efficient active learning on embedding datasets"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic CPEB dataset");
  GenSynthArgs gen_args;
  gen->add_option("--classes", gen_args.spec.num_classes, "number of classes")->required();
  gen->add_option("--dim", gen_args.spec.dim, "embedding dimension")->required();
  gen->add_option("--per-class", gen_args.spec.per_class, "points per class")->required();
  gen->add_option("--sep", gen_args.spec.class_separation, "distance between class means")->required();
  gen->add_option("--scale", gen_args.spec.within_class_scale, "within-class spread")->capture_default_str();
  gen->add_option("--test-fraction", gen_args.spec.test_fraction, "fraction held out as test")->capture_default_str();
  gen->add_option("--seed", gen_args.spec.seed, "generator seed")->required();
  gen->add_option("--out", gen_args.out, "output .cpeb path")->required();

  // run
  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  std::string run_config, run_out = "results";
  bool run_force = false;
  bool print_default = false;
  int run_jobs = 1;
  run->add_option("--config", run_config, "experiment config (JSON)");
  run->add_option("--out", run_out, "output directory")->capture_default_str();
  run->add_flag("--force", run_force, "overwrite existing results");
  run->add_option("--jobs", run_jobs, "parallel (seed x strategy) workers")->capture_default_str();
  run->add_flag("--print-default-config", print_default,
                "print the default config JSON and exit");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid-search the calibration weight alpha");
  std::string sweep_config, sweep_out = "sweep", sweep_grid;
  bool sweep_force = false;
  int sweep_jobs = 1;
  sweep->add_option("--config", sweep_config, "experiment config (JSON)")->required();
  sweep->add_option("--out", sweep_out, "output directory")->capture_default_str();
  sweep->add_option("--alpha-grid", sweep_grid, "comma-separated alpha values in (0,1]")->required();
  sweep->add_flag("--force", sweep_force, "overwrite existing results");
  sweep->add_option("--jobs", sweep_jobs, "parallel workers")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "aggregate results.csv files into summary.csv");
  std::string report_dir;
  report->add_option("--dir", report_dir, "directory holding results.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(gen_args);
    if (run->parsed()) {
      if (print_default) {
        std::cout << to_json(default_experiment_config()).dump(2) << "\n";
        return kOk;
      }
      if (run_config.empty())
        throw ConfigError("run needs --config (or --print-default-config)");
      return cmd_run(run_config, run_out, run_force, run_jobs);
    }
    if (sweep->parsed())
      return cmd_sweep(sweep_config, sweep_out, sweep_grid, sweep_force, sweep_jobs);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}
