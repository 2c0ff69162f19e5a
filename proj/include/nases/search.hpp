#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nases/config.hpp"
#include "nases/controller.hpp"
#include "nases/evaluator.hpp"

namespace nases {

// ---------------------------------------------------------------------------
// Orchestrates the full procedure: load the pretrained autoencoder, warm-start
// the controller, then iterate evaluate -> REINFORCE -> sample -> decode ->
// discretize. The decoder stays frozen; only controller weights move. Every
// run is a pure function of the configured seeds, and the loop can resume
// from the checkpoint written at each iteration boundary.
// ---------------------------------------------------------------------------

enum class EvaluatorKind { Synthetic, Child };

struct SearchConfig {
  SpaceConfig space{15, true};
  std::string autoencoder_dir;
  std::string out_dir;
  std::size_t iterations = 300;
  double sigma = 0.1;
  double controller_lr = 1e-5;
  double baseline_decay = 0.95;
  std::uint64_t seed_search = 1;
  std::uint64_t seed_eval = 2;
  std::size_t checkpoint_every = 1;
  bool record_timing = false;  // keeps records.csv byte-reproducible when off

  EvaluatorKind evaluator = EvaluatorKind::Synthetic;
  EvalBudget budget;  // e1=70 / e2=630 / batch 128; desk configs override

  // synthetic evaluator
  std::string oracle_target_path;   // architecture JSON; empty -> seeded random target
  std::uint64_t oracle_seed = 424242;

  // child evaluator
  std::string data = "blobs";       // "blobs" or a CIFAR-10 binary directory
  std::size_t blob_per_class = 200;
  std::size_t subset = 0;           // first k per class, 0 = all
  double split_ratio = 0.9;
  std::uint64_t split_seed = 5;
  ChildTrainOptions child;
};

struct SearchRecord {
  std::size_t iteration = 0;
  Architecture arch;
  Embedding action;  // sampled at this iteration (produces the next arch)
  double reward = 0.0;
  double baseline = 0.0;  // value the advantage was computed against
  double advantage = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct SearchReport {
  std::vector<SearchRecord> records;
  Architecture best;
  double best_reward = 0.0;
  std::size_t best_iteration = 0;
  Architecture initial;
  double wall_ms_total = 0.0;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline constexpr const char* kRecordsHeader =
    "iter,arch_json,reward,baseline,advantage,grad_norm,wall_ms";

inline std::string record_csv_line(const SearchRecord& r) {
  std::string line = std::to_string(r.iteration);
  line += "," + csv_quote(architecture_to_json(r.arch));
  line += "," + fmt17(r.reward);
  line += "," + fmt17(r.baseline);
  line += "," + fmt17(r.advantage);
  line += "," + fmt17(r.grad_norm);
  line += "," + fmt17(r.wall_ms);
  return line;
}

// Parses one records.csv data line (arch_json is the only quoted field).
inline SearchRecord parse_record_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  if (fields.size() != 7) fail(ErrorKind::Format, "malformed records.csv line: " + line);
  SearchRecord r;
  r.iteration = std::stoull(fields[0]);
  r.arch = architecture_from_json(fields[1]);
  r.reward = std::stod(fields[2]);
  r.baseline = std::stod(fields[3]);
  r.advantage = std::stod(fields[4]);
  r.grad_norm = std::stod(fields[5]);
  r.wall_ms = std::stod(fields[6]);
  return r;
}

inline std::vector<SearchRecord> load_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  std::vector<SearchRecord> records;
  std::string line;
  if (!std::getline(is, line) || line != kRecordsHeader)
    fail(ErrorKind::Format, "records.csv header mismatch in " + path);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    records.push_back(parse_record_line(line));
  }
  return records;
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc | std::ios::binary);
    if (!os) fail(ErrorKind::Io, "cannot write " + tmp);
    os << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::unique_ptr<Evaluator> make_evaluator(const SearchConfig& cfg) {
  if (cfg.evaluator == EvaluatorKind::Synthetic) {
    Architecture target;
    if (!cfg.oracle_target_path.empty()) {
      std::ifstream is(cfg.oracle_target_path);
      if (!is) fail(ErrorKind::Io, "cannot open oracle target: " + cfg.oracle_target_path);
      std::ostringstream buf;
      buf << is.rdbuf();
      target = architecture_from_json(buf.str());
    } else {
      target = random_architecture(cfg.space, cfg.oracle_seed);
    }
    return std::make_unique<SyntheticOracle>(std::move(target), cfg.space);
  }

  LabeledImages pool, test;
  if (cfg.data == "blobs") {
    pool = make_blob_dataset(cfg.blob_per_class, derive_seed(cfg.split_seed, 800));
    test = make_blob_dataset(cfg.blob_per_class / 5 + 1, derive_seed(cfg.split_seed, 801));
  } else {
    pool = load_cifar_dir(cfg.data, /*train=*/true);
    test = load_cifar_dir(cfg.data, /*train=*/false);
  }
  if (cfg.subset > 0) {
    pool = subset_per_class(pool, cfg.subset);
    test = subset_per_class(test, std::max<std::size_t>(1, cfg.subset / 5));
  }
  auto split = std::make_shared<DatasetSplit>(
      split_dataset(pool, std::move(test), cfg.split_ratio, cfg.split_seed));
  return std::make_unique<ChildEvaluator>(std::move(split), cfg.child);
}

namespace detail {

struct LoopState {
  std::size_t completed = 0;
  Architecture arch;                  // architecture entering the next iteration
  std::optional<PolicySample> sample; // sample that produced `arch`
  Architecture best;
  double best_reward = 0.0;
  std::size_t best_iteration = 0;
  Architecture initial;
};

inline nlohmann::json sample_to_json(const PolicySample& s) {
  return nlohmann::json{{"input", s.input},     {"mean", s.mean},
                        {"action", s.action},   {"log_prob", s.log_prob},
                        {"seed", s.seed},       {"update_stamp", s.update_stamp}};
}

inline PolicySample sample_from_json(const nlohmann::json& j) {
  PolicySample s;
  s.input = j.at("input").get<OriginVector>();
  s.mean = j.at("mean").get<Embedding>();
  s.action = j.at("action").get<Embedding>();
  s.log_prob = j.at("log_prob").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.update_stamp = j.at("update_stamp").get<std::uint64_t>();
  return s;
}

inline void save_state(const std::string& out_dir, const LoopState& st) {
  nlohmann::json j{{"completed", st.completed},
                   {"arch", to_json(st.arch)},
                   {"best", to_json(st.best)},
                   {"best_reward", st.best_reward},
                   {"best_iteration", st.best_iteration},
                   {"initial", to_json(st.initial)}};
  if (st.sample) j["sample"] = sample_to_json(*st.sample);
  write_text_atomic(out_dir + "/state.json", j.dump(2) + "\n");
}

inline LoopState load_state(const std::string& out_dir) {
  std::ifstream is(out_dir + "/state.json");
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Format, "corrupt state.json in " + out_dir);
  LoopState st;
  st.completed = j.at("completed").get<std::size_t>();
  st.arch = architecture_from_json(j.at("arch"));
  st.best = architecture_from_json(j.at("best"));
  st.best_reward = j.at("best_reward").get<double>();
  st.best_iteration = j.at("best_iteration").get<std::size_t>();
  st.initial = architecture_from_json(j.at("initial"));
  if (j.contains("sample")) st.sample = sample_from_json(j["sample"]);
  return st;
}

}  // namespace detail

inline void validate(const SearchConfig& cfg) {
  if (cfg.iterations < 1) fail(ErrorKind::Config, "iterations must be at least 1");
  if (cfg.out_dir.empty()) fail(ErrorKind::Config, "out_dir must be set");
  if (cfg.autoencoder_dir.empty()) fail(ErrorKind::Config, "autoencoder_dir must be set");
  if (cfg.checkpoint_every < 1) fail(ErrorKind::Config, "checkpoint_every must be at least 1");
  validate_controller_settings(cfg.sigma, cfg.baseline_decay);
}

inline SearchReport run_search(const SearchConfig& cfg) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  AutoencoderModel ae = load_autoencoder(cfg.autoencoder_dir);
  if (ae.dims.layer_count != cfg.space.layer_count ||
      ae.origin_dim != origin_dim(cfg.space))
    fail(ErrorKind::Config, "autoencoder checkpoint does not match the search space");

  std::filesystem::create_directories(cfg.out_dir);
  const std::string records_path = cfg.out_dir + "/records.csv";
  const std::string ctrl_dir = cfg.out_dir + "/controller";
  std::unique_ptr<Evaluator> evaluator = make_evaluator(cfg);

  ControllerModel ctrl;
  detail::LoopState st;
  std::vector<SearchRecord> records;
  const bool resuming = std::filesystem::exists(cfg.out_dir + "/state.json");
  if (resuming) {
    st = detail::load_state(cfg.out_dir);
    ctrl = load_controller(ctrl_dir);
    records = detail::load_records(records_path);
    if (records.size() != st.completed)
      fail(ErrorKind::Format, "records.csv disagrees with state.json");
    if (st.completed > cfg.iterations)
      fail(ErrorKind::Config, "run already has more iterations than requested");
  } else {
    save_autoencoder(ae, cfg.out_dir + "/autoencoder");
    ctrl = init_from_simulator(ae, cfg.sigma, cfg.baseline_decay);
    st.arch = random_architecture(cfg.space, derive_seed(cfg.seed_search, 1000));
    st.initial = st.arch;
    st.best = st.arch;
    std::ofstream os(records_path, std::ios::trunc | std::ios::binary);
    if (!os) fail(ErrorKind::Io, "cannot write " + records_path);
    os << detail::kRecordsHeader << "\n";
  }

  std::ofstream log(cfg.out_dir + "/search.log", std::ios::app);
  std::ofstream csv(records_path, std::ios::app | std::ios::binary);
  if (!csv) fail(ErrorKind::Io, "cannot append to " + records_path);

  for (std::size_t t = st.completed + 1; t <= cfg.iterations; ++t) {
    const auto iter_started = std::chrono::steady_clock::now();
    SearchRecord rec;
    rec.iteration = t;
    rec.arch = st.arch;

    EvalBudget budget = cfg.budget;
    budget.seed = derive_seed(cfg.seed_eval, 2000, t);
    try {
      rec.reward = evaluator->evaluate(st.arch, budget).value;
    } catch (const Error& e) {
      rec.reward = 0.0;
      log << "iter " << t << ": evaluation failed (" << e.what() << "); reward 0\n";
    }

    if (st.sample) {
      UpdateReport up = reinforce_update(ctrl, *st.sample, rec.reward, cfg.controller_lr);
      rec.baseline = up.baseline_before;
      rec.advantage = up.advantage;
      rec.grad_norm = up.grad_norm;
    } else {
      update_baseline(ctrl, rec.reward);  // first observation seeds the EMA
      rec.baseline = rec.reward;
      rec.advantage = 0.0;
      rec.grad_norm = 0.0;
    }

    PolicySample sample =
        sample_action(ctrl, encode_origin(st.arch, cfg.space), derive_seed(cfg.seed_search, 3000, t));
    rec.action = sample.action;
    Architecture next = discretize(decode(ae, sample.action), cfg.space);

    if (rec.reward > st.best_reward || st.best_iteration == 0) {
      st.best_reward = rec.reward;
      st.best = st.arch;
      st.best_iteration = t;
    }
    if (cfg.record_timing)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              iter_started)
                        .count();
    csv << detail::record_csv_line(rec) << "\n";
    csv.flush();
    records.push_back(rec);

    st.arch = std::move(next);
    st.sample = std::move(sample);
    st.completed = t;
    if (t % cfg.checkpoint_every == 0 || t == cfg.iterations) {
      save_controller(ctrl, ctrl_dir);
      detail::save_state(cfg.out_dir, st);
    }
  }

  SearchReport report;
  report.records = std::move(records);
  report.best = st.best;
  report.best_reward = st.best_reward;
  report.best_iteration = st.best_iteration;
  report.initial = st.initial;
  report.wall_ms_total =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
          .count();

  double mean = 0.0;
  for (const SearchRecord& r : report.records) mean += r.reward;
  if (!report.records.empty()) mean /= static_cast<double>(report.records.size());
  nlohmann::json rj{{"iterations", report.records.size()},
                    {"best_reward", report.best_reward},
                    {"best_iteration", report.best_iteration},
                    {"best_architecture", to_json(report.best)},
                    {"mean_reward", mean},
                    {"initial_architecture", to_json(report.initial)},
                    {"initial_architecture_rule", "random_architecture(seed_search)"},
                    {"evaluator", evaluator->name()},
                    {"wall_ms_total", cfg.record_timing ? report.wall_ms_total : 0.0}};
  detail::write_text_atomic(cfg.out_dir + "/report.json", rj.dump(2) + "\n");
  detail::write_text_atomic(cfg.out_dir + "/best_arch.json",
                            architecture_to_json(report.best) + "\n");
  return report;
}

// Final phase: retrain the chosen architecture from scratch on the pooled
// train+validation data and score it once on the test split.
inline Reward run_final(const SearchConfig& cfg, const Architecture& arch) {
  if (cfg.evaluator != EvaluatorKind::Child)
    fail(ErrorKind::Config, "final training requires the child evaluator");
  validate_architecture(arch, cfg.space);

  LabeledImages pool, test;
  if (cfg.data == "blobs") {
    pool = make_blob_dataset(cfg.blob_per_class, derive_seed(cfg.split_seed, 800));
    test = make_blob_dataset(cfg.blob_per_class / 5 + 1, derive_seed(cfg.split_seed, 801));
  } else {
    pool = load_cifar_dir(cfg.data, true);
    test = load_cifar_dir(cfg.data, false);
  }
  if (cfg.subset > 0) {
    pool = subset_per_class(pool, cfg.subset);
    test = subset_per_class(test, std::max<std::size_t>(1, cfg.subset / 5));
  }
  DatasetSplit split = split_dataset(pool, std::move(test), cfg.split_ratio, cfg.split_seed);

  EvalBudget budget = cfg.budget;
  budget.seed = derive_seed(cfg.seed_eval, 2100);
  Reward r = train_final(arch, split, budget, cfg.child);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    nlohmann::json j{{"test_accuracy", r.value},
                     {"test_error", 1.0 - r.value},
                     {"epochs", budget.epochs_e2},
                     {"param_count", r.param_count},
                     {"architecture", to_json(arch)},
                     {"wall_ms", r.wall_ms}};
    detail::write_text_atomic(cfg.out_dir + "/final.json", j.dump(2) + "\n");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Config-file binding. All keys are optional unless noted; CLI flags override.
// ---------------------------------------------------------------------------

inline SearchConfig search_config_from(const ConfigMap& m) {
  SearchConfig cfg;
  cfg.space.layer_count = m.integer("space.layers", cfg.space.layer_count);
  cfg.space.skips_enabled = m.boolean("space.skips", cfg.space.skips_enabled);

  cfg.autoencoder_dir = m.str("search.autoencoder", cfg.autoencoder_dir);
  cfg.out_dir = m.str("search.out", cfg.out_dir);
  cfg.iterations = m.integer("search.iterations", cfg.iterations);
  cfg.sigma = m.real("search.sigma", cfg.sigma);
  cfg.controller_lr = m.real("search.lr", cfg.controller_lr);
  cfg.baseline_decay = m.real("search.baseline_decay", cfg.baseline_decay);
  cfg.seed_search = m.integer("search.seed", cfg.seed_search);
  cfg.seed_eval = m.integer("search.eval_seed", cfg.seed_eval);
  cfg.checkpoint_every = m.integer("search.checkpoint_every", cfg.checkpoint_every);
  cfg.record_timing = m.boolean("search.record_timing", cfg.record_timing);

  // either a bare top-level `evaluator = ...` or `[evaluator] kind = ...`
  const std::string kind = m.str("evaluator.kind", m.str("evaluator", "synthetic"));
  if (kind == "synthetic") cfg.evaluator = EvaluatorKind::Synthetic;
  else if (kind == "child") cfg.evaluator = EvaluatorKind::Child;
  else fail(ErrorKind::Config, "evaluator must be synthetic or child");

  cfg.oracle_target_path = m.str("evaluator.target", cfg.oracle_target_path);
  cfg.oracle_seed = m.integer("evaluator.oracle_seed", cfg.oracle_seed);
  cfg.budget.epochs_e1 = m.integer("evaluator.epochs", cfg.budget.epochs_e1);
  cfg.budget.epochs_e2 = m.integer("evaluator.final_epochs", cfg.budget.epochs_e2);
  cfg.budget.batch_size = m.integer("evaluator.batch", cfg.budget.batch_size);
  cfg.data = m.str("evaluator.data", cfg.data);
  cfg.blob_per_class = m.integer("evaluator.blob_per_class", cfg.blob_per_class);
  cfg.subset = m.integer("evaluator.subset", cfg.subset);
  cfg.split_ratio = m.real("evaluator.split_ratio", cfg.split_ratio);
  cfg.split_seed = m.integer("evaluator.split_seed", cfg.split_seed);
  cfg.child.net.filters = m.integer("evaluator.filters", cfg.child.net.filters);
  cfg.child.net.classes = m.integer("evaluator.classes", cfg.child.net.classes);
  cfg.child.net.double_filters_at_reduction =
      m.boolean("evaluator.double_filters", cfg.child.net.double_filters_at_reduction);
  cfg.child.cutout = m.integer("evaluator.cutout", cfg.child.cutout);
  cfg.child.schedule.l_max = m.real("evaluator.l_max", cfg.child.schedule.l_max);
  cfg.child.schedule.l_min = m.real("evaluator.l_min", cfg.child.schedule.l_min);
  cfg.child.schedule.t0 = m.integer("evaluator.t0", cfg.child.schedule.t0);
  cfg.child.momentum = m.real("evaluator.momentum", cfg.child.momentum);
  cfg.child.weight_decay = m.real("evaluator.weight_decay", cfg.child.weight_decay);
  return cfg;
}

}  // namespace nases
