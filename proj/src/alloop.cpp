// SPDX-License-Identifier: Apache-2.0
#include "cpeal/alloop.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "cpeal/errors.hpp"
#include "cpeal/metrics.hpp"

namespace cpeal {

namespace {

using nlohmann::json;

std::string fmt_real(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_ms(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void reject_unknown_keys(const json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed) known |= item.key() == key;
    if (!known)
      throw ConfigError(std::string("unknown field \"") + item.key() +
                        "\" in " + where);
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) obj.at(key).get_to(out);
}

constexpr const char* kResultsHeader =
    "seed,cycle,strategy,n_labeled,accuracy,ece,selection_time_ms,"
    "train_time_ms";

}  // namespace

void validate(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path && !cfg.synth)
    throw ConfigError("config needs a dataset path or a synth block");
  if (cfg.dataset_path && cfg.synth)
    throw ConfigError("config has both a dataset path and a synth block");
  if (cfg.cycles < 1) throw ValidationError("cycles must be >= 1");
  if (cfg.seeds.empty()) throw ValidationError("seeds must be non-empty");
  if (cfg.strategies.empty()) throw ValidationError("strategies must be non-empty");
  if (cfg.budget_per_cycle < 0)
    throw ValidationError("budget_per_cycle must be >= 0 (0 means K)");
  if (cfg.initial_labeled_per_class < 0)
    throw ValidationError("initial_labeled_per_class must be >= 0");
  if (cfg.ece_bins < 1) throw ValidationError("ece_bins must be >= 1");
  if (cfg.head.kind == HeadKind::kPrompt && cfg.head.ctx <= 0)
    throw ValidationError("ctx must be positive");
  if (cfg.head.kind == HeadKind::kLora && cfg.head.rank <= 0)
    throw ValidationError("lora rank must be positive");
  validate(cfg.train);
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.synth = SynthSpec{10, 32, 200, 4.0, 1.0, 0.25, 7};
  cfg.strategies = {Strategy::kRandom, Strategy::kEntropy, Strategy::kCpeal};
  return cfg;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(doc, "config",
                      {"dataset", "head", "train", "strategies", "cycles",
                       "seeds", "budget_per_cycle", "initial_labeled_per_class",
                       "ece_bins"});
  ExperimentConfig cfg;
  cfg.strategies.clear();

  if (!doc.contains("dataset")) throw ConfigError("config is missing \"dataset\"");
  const json& ds = doc.at("dataset");
  reject_unknown_keys(ds, "dataset", {"path", "synth"});
  if (ds.contains("path")) cfg.dataset_path = ds.at("path").get<std::string>();
  if (ds.contains("synth")) {
    const json& sy = ds.at("synth");
    reject_unknown_keys(sy, "dataset.synth",
                        {"classes", "dim", "per_class", "separation", "scale",
                         "test_fraction", "seed"});
    SynthSpec spec;
    read_field(sy, "classes", spec.num_classes);
    read_field(sy, "dim", spec.dim);
    read_field(sy, "per_class", spec.per_class);
    read_field(sy, "separation", spec.class_separation);
    read_field(sy, "scale", spec.within_class_scale);
    read_field(sy, "test_fraction", spec.test_fraction);
    read_field(sy, "seed", spec.seed);
    cfg.synth = spec;
  }

  if (doc.contains("head")) {
    const json& hd = doc.at("head");
    reject_unknown_keys(hd, "head", {"kind", "ctx", "logit_scale", "rank",
                                     "lora_scale", "frozen"});
    const auto kind = hd.value("kind", std::string("prompt"));
    if (kind == "prompt") {
      cfg.head.kind = HeadKind::kPrompt;
    } else if (kind == "lora") {
      cfg.head.kind = HeadKind::kLora;
    } else {
      throw ConfigError("head.kind must be \"prompt\" or \"lora\"");
    }
    read_field(hd, "ctx", cfg.head.ctx);
    read_field(hd, "logit_scale", cfg.head.logit_scale);
    read_field(hd, "rank", cfg.head.rank);
    read_field(hd, "lora_scale", cfg.head.lora_scale);
    if (hd.contains("frozen")) {
      const auto frozen = hd.at("frozen").get<std::string>();
      if (frozen == "class_seed") {
        cfg.head.frozen = FrozenProjection::kClassSeed;
      } else if (frozen == "orthonormal") {
        cfg.head.frozen = FrozenProjection::kOrthonormal;
      } else {
        throw ConfigError("head.frozen must be \"class_seed\" or \"orthonormal\"");
      }
    }
  }

  if (doc.contains("train")) {
    const json& tr = doc.at("train");
    reject_unknown_keys(tr, "train",
                        {"base_lr", "warmup_lr", "warmup_epochs", "epochs",
                         "weight_decay", "batch_size", "alpha_final", "anneal",
                         "interw"});
    read_field(tr, "base_lr", cfg.train.base_lr);
    read_field(tr, "warmup_lr", cfg.train.warmup_lr);
    read_field(tr, "warmup_epochs", cfg.train.warmup_epochs);
    read_field(tr, "epochs", cfg.train.epochs);
    read_field(tr, "weight_decay", cfg.train.weight_decay);
    read_field(tr, "batch_size", cfg.train.batch_size);
    read_field(tr, "alpha_final", cfg.train.alpha_final);
    read_field(tr, "anneal", cfg.train.anneal);
    read_field(tr, "interw", cfg.train.interw);
  }

  if (doc.contains("strategies")) {
    for (const auto& name : doc.at("strategies"))
      cfg.strategies.push_back(strategy_from_name(name.get<std::string>()));
  } else {
    cfg.strategies = default_experiment_config().strategies;
  }
  read_field(doc, "cycles", cfg.cycles);
  if (doc.contains("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : doc.at("seeds"))
      cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  read_field(doc, "budget_per_cycle", cfg.budget_per_cycle);
  read_field(doc, "initial_labeled_per_class", cfg.initial_labeled_per_class);
  read_field(doc, "ece_bins", cfg.ece_bins);

  validate(cfg);
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json doc;
  if (cfg.dataset_path) {
    doc["dataset"] = {{"path", *cfg.dataset_path}};
  } else if (cfg.synth) {
    doc["dataset"]["synth"] = {{"classes", cfg.synth->num_classes},
                               {"dim", cfg.synth->dim},
                               {"per_class", cfg.synth->per_class},
                               {"separation", cfg.synth->class_separation},
                               {"scale", cfg.synth->within_class_scale},
                               {"test_fraction", cfg.synth->test_fraction},
                               {"seed", cfg.synth->seed}};
  }
  if (cfg.head.kind == HeadKind::kPrompt) {
    doc["head"] = {{"kind", "prompt"},
                   {"ctx", cfg.head.ctx},
                   {"logit_scale", cfg.head.logit_scale}};
  } else {
    doc["head"] = {{"kind", "lora"},
                   {"rank", cfg.head.rank},
                   {"lora_scale", cfg.head.lora_scale},
                   {"frozen", cfg.head.frozen == FrozenProjection::kClassSeed
                                  ? "class_seed"
                                  : "orthonormal"}};
  }
  doc["train"] = {{"base_lr", cfg.train.base_lr},
                  {"warmup_lr", cfg.train.warmup_lr},
                  {"warmup_epochs", cfg.train.warmup_epochs},
                  {"epochs", cfg.train.epochs},
                  {"weight_decay", cfg.train.weight_decay},
                  {"batch_size", cfg.train.batch_size},
                  {"alpha_final", cfg.train.alpha_final},
                  {"anneal", cfg.train.anneal},
                  {"interw", cfg.train.interw}};
  doc["strategies"] = json::array();
  for (Strategy s : cfg.strategies)
    doc["strategies"].push_back(std::string(to_string(s)));
  doc["cycles"] = cfg.cycles;
  doc["seeds"] = cfg.seeds;
  doc["budget_per_cycle"] = cfg.budget_per_cycle;
  doc["initial_labeled_per_class"] = cfg.initial_labeled_per_class;
  doc["ece_bins"] = cfg.ece_bins;
  return doc;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return parse_experiment_config(doc);
}

Matrix make_frozen_projection(const EmbeddingDataset& ds,
                              FrozenProjection mode, std::uint64_t seed) {
  const Index e = ds.dim();
  const Index k = ds.num_classes;
  SplitMix64 rng(mix_seed(seed, 0xC1A55E5ULL));

  if (mode == FrozenProjection::kOrthonormal) {
    Matrix w = gaussian_matrix(e, k, 1.0, rng);
    if (k <= e) {
      Eigen::HouseholderQR<Matrix> qr(w);
      return qr.householderQ() * Matrix::Identity(e, k);
    }
    for (Index c = 0; c < k; ++c) w.col(c).normalize();  // K > E: unit columns
    return w;
  }

  // One seeded train embedding per class as the class column.
  Matrix w(e, k);
  for (Index c = 0; c < k; ++c) {
    std::vector<Index> rows;
    for (Index i = 0; i < ds.size(); ++i)
      if (ds.is_train(i) && ds.labels[static_cast<std::size_t>(i)] == c)
        rows.push_back(i);
    if (rows.empty())
      throw ValidationError("class " + std::to_string(c) + " has no train rows");
    const Index pick = rows[static_cast<std::size_t>(
        rng.below(static_cast<Index>(rows.size())))];
    w.col(c) = ds.features.row(pick).cast<Real>().transpose();
  }
  return w;
}

namespace {

Head make_head(const ExperimentConfig& cfg, const EmbeddingDataset& ds,
               const Matrix& frozen_w, std::uint64_t head_seed) {
  if (cfg.head.kind == HeadKind::kPrompt)
    return init_prompt_head(ds.num_classes, ds.dim(), head_seed, cfg.head.ctx,
                            cfg.head.logit_scale);
  return init_lora_head(frozen_w, cfg.head.rank, head_seed,
                        cfg.head.lora_scale);
}

std::vector<CycleRecord> run_unit(const ExperimentConfig& cfg,
                                  const EmbeddingDataset& ds,
                                  std::uint64_t seed, Strategy strategy,
                                  Index budget) {
  PoolState pool = make_pool(ds);

  if (cfg.initial_labeled_per_class > 0) {
    SplitMix64 rng(mix_seed(seed, 0x1217ULL));
    std::vector<Index> warm;
    for (Index c = 0; c < ds.num_classes; ++c) {
      std::vector<Index> rows;
      for (Index i : pool.unlabeled_idx)
        if (ds.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
      for (Index pos : sample_without_replacement(
               static_cast<Index>(rows.size()), cfg.initial_labeled_per_class,
               rng))
        warm.push_back(rows[static_cast<std::size_t>(pos)]);
    }
    pool = reveal_labels(pool, warm);
  }

  Matrix frozen_w;
  if (cfg.head.kind == HeadKind::kLora)
    frozen_w = make_frozen_projection(ds, cfg.head.frozen, seed);

  // The entropy/softmax/margin/random/coreset/badge baselines train with
  // plain cross entropy; only cpeal carries the calibration term.
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = seed;
  if (strategy != Strategy::kCpeal) train_cfg.alpha_final = 0;

  const std::vector<Index> test_rows = ds.test_indices();
  const Matrix test_feats = gather_features(ds, test_rows);
  const std::vector<int> test_labels = gather_labels(ds, test_rows);

  std::vector<CycleRecord> records;
  for (int t = 1; t <= cfg.cycles; ++t) {
    Head head = make_head(cfg, ds, frozen_w, mix_seed(seed, t));

    const auto train_started = std::chrono::steady_clock::now();
    train_cycle(head, ds, pool, train_cfg);
    const double train_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - train_started)
                                .count();

    const std::uint64_t sel_seed =
        mix_seed(seed, static_cast<std::uint64_t>(t),
                 1000 + static_cast<std::uint64_t>(strategy));
    const SelectionResult sel = select(strategy, head, ds, pool, budget, sel_seed);

    for (Index idx : sel.indices)
      if (!ds.is_train(idx))
        throw Error("selection leaked a test row");  // guarded every cycle
    pool = reveal_labels(pool, sel.indices);
    pool.cycle = t;

    const Activation act = forward(head, test_feats);
    CycleRecord rec;
    rec.seed = seed;
    rec.cycle = t;
    rec.strategy = strategy;
    rec.n_labeled = static_cast<Index>(pool.labeled_idx.size());
    rec.accuracy = accuracy(argmax_rows(act.probs), test_labels);
    rec.ece = ece(act.probs, test_labels, cfg.ece_bins).ece;
    rec.selected = sel.indices;
    rec.selection_time_ms = sel.elapsed_ms;
    rec.train_time_ms = train_ms;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg,
                                        const EmbeddingDataset& ds, int jobs) {
  validate(cfg);
  const Index budget =
      cfg.budget_per_cycle == 0 ? ds.num_classes : cfg.budget_per_cycle;
  const Index train_rows = static_cast<Index>(ds.train_indices().size());
  const Index needed = cfg.initial_labeled_per_class * ds.num_classes +
                       static_cast<Index>(cfg.cycles) * budget;
  if (needed > train_rows)
    throw ConfigError("budget needs " + std::to_string(needed) +
                      " train rows, dataset has " + std::to_string(train_rows));

  struct Unit {
    std::uint64_t seed;
    Strategy strategy;
  };
  std::vector<Unit> units;
  for (std::uint64_t seed : cfg.seeds)
    for (Strategy strategy : cfg.strategies) units.push_back({seed, strategy});

  std::vector<std::vector<CycleRecord>> per_unit(units.size());
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(units.size())));
  if (workers == 1) {
    for (std::size_t u = 0; u < units.size(); ++u)
      per_unit[u] = run_unit(cfg, ds, units[u].seed, units[u].strategy, budget);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (;;) {
          const std::size_t u = cursor.fetch_add(1);
          if (u >= units.size()) return;
          try {
            per_unit[u] =
                run_unit(cfg, ds, units[u].seed, units[u].strategy, budget);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<CycleRecord> records;  // canonical (seed, strategy, cycle) order
  for (auto& unit_records : per_unit)
    for (auto& rec : unit_records) records.push_back(std::move(rec));
  return records;
}

std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out_dir,
                                        int jobs) {
  validate(cfg);
  const EmbeddingDataset ds = cfg.dataset_path
                                  ? load_dataset(*cfg.dataset_path)
                                  : gen_synthetic(*cfg.synth);
  auto records = run_experiment(cfg, ds, jobs);
  std::filesystem::create_directories(out_dir);
  write_results_csv(records, out_dir / "results.csv");
  return records;
}

void write_results_csv(const std::vector<CycleRecord>& records,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kResultsHeader << '\n';
  for (const auto& rec : records)
    out << rec.seed << ',' << rec.cycle << ',' << to_string(rec.strategy) << ','
        << rec.n_labeled << ',' << fmt_real(rec.accuracy) << ','
        << fmt_real(rec.ece) << ',' << fmt_ms(rec.selection_time_ms) << ','
        << fmt_ms(rec.train_time_ms) << '\n';
}

std::vector<CycleRecord> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader)
    throw ValidationError("unexpected results.csv schema in " + path.string());

  std::vector<CycleRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 8)
      throw ValidationError("malformed results row: " + line);
    CycleRecord rec;
    rec.seed = std::stoull(cols[0]);
    rec.cycle = std::stoi(cols[1]);
    rec.strategy = strategy_from_name(cols[2]);
    rec.n_labeled = static_cast<Index>(std::stoll(cols[3]));
    rec.accuracy = std::stod(cols[4]);
    rec.ece = std::stod(cols[5]);
    rec.selection_time_ms = std::stod(cols[6]);
    rec.train_time_ms = std::stod(cols[7]);
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

Real mean_of(const std::vector<Real>& xs) {
  Real sum = 0;
  for (Real x : xs) sum += x;
  return sum / static_cast<Real>(xs.size());
}

Real sample_std(const std::vector<Real>& xs, Real mean) {
  if (xs.size() < 2) return 0;
  Real ss = 0;
  for (Real x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<Real>(xs.size() - 1));
}

}  // namespace

std::vector<SummaryRow> aggregate_report(
    const std::filesystem::path& results_dir) {
  std::vector<std::filesystem::path> files;
  const auto direct = results_dir / "results.csv";
  if (std::filesystem::exists(direct)) files.push_back(direct);
  std::vector<std::filesystem::path> subdirs;
  if (std::filesystem::is_directory(results_dir))
    for (const auto& entry : std::filesystem::directory_iterator(results_dir))
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "results.csv"))
        subdirs.push_back(entry.path() / "results.csv");
  std::sort(subdirs.begin(), subdirs.end());
  files.insert(files.end(), subdirs.begin(), subdirs.end());
  if (files.empty())
    throw ValidationError("no results.csv under " + results_dir.string());

  std::vector<CycleRecord> records;
  for (const auto& file : files) {
    auto part = read_results_csv(file);  // schema enforced per file
    records.insert(records.end(), part.begin(), part.end());
  }

  std::map<std::pair<std::string, int>, std::pair<std::vector<Real>, std::vector<Real>>>
      groups;  // (strategy, cycle) -> (accs, eces)
  for (const auto& rec : records) {
    auto& group = groups[{std::string(to_string(rec.strategy)), rec.cycle}];
    group.first.push_back(rec.accuracy);
    group.second.push_back(rec.ece);
  }

  std::vector<SummaryRow> rows;
  for (const auto& [key, vals] : groups) {
    SummaryRow row;
    row.strategy = key.first;
    row.cycle = key.second;
    row.acc_mean = mean_of(vals.first);
    row.acc_std = sample_std(vals.first, row.acc_mean);
    row.ece_mean = mean_of(vals.second);
    row.ece_std = sample_std(vals.second, row.ece_mean);
    rows.push_back(row);
  }
  for (auto& row : rows) {
    const auto entropy_it = groups.find({"entropy", row.cycle});
    if (entropy_it != groups.end())
      row.delta_vs_entropy = row.acc_mean - mean_of(entropy_it->second.first);
  }

  std::ofstream out(results_dir / "summary.csv", std::ios::trunc);
  if (!out) throw IoError("cannot write summary.csv");
  out << "strategy,cycle,acc_mean,acc_std,ece_mean,ece_std,delta_vs_entropy\n";
  for (const auto& row : rows)
    out << row.strategy << ',' << row.cycle << ',' << fmt_real(row.acc_mean)
        << ',' << fmt_real(row.acc_std) << ',' << fmt_real(row.ece_mean) << ','
        << fmt_real(row.ece_std) << ',' << fmt_real(row.delta_vs_entropy)
        << '\n';
  return rows;
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::string text =
      "strategy   cycle  accuracy            ece                 d_vs_entropy\n";
  char buf[160];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf,
                  "%-10s %5d  %7.4f +/- %6.4f  %7.4f +/- %6.4f  %+8.4f\n",
                  row.strategy.c_str(), row.cycle, row.acc_mean, row.acc_std,
                  row.ece_mean, row.ece_std, row.delta_vs_entropy);
    text += buf;
  }
  return text;
}

}  // namespace cpeal
