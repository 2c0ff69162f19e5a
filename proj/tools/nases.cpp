#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nases/nases.hpp"

namespace {

using namespace nases;

Architecture read_arch_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open architecture file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return architecture_from_json(buf.str());
}

SearchConfig load_search_config(const std::string& config_path) {
  return search_config_from(load_config_file(config_path));
}

void copy_config_into_run(const std::string& config_path, const std::string& out_dir) {
  if (config_path.empty() || out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  std::filesystem::copy_file(config_path, out_dir + "/config.toml",
                             std::filesystem::copy_options::overwrite_existing);
}

int cmd_pretrain(std::size_t layers, std::size_t embed_dim, std::size_t hidden,
                 std::size_t epochs, std::size_t batches, std::size_t batch, double lr,
                 std::uint64_t seed, bool one_hot, const std::string& out) {
  SpaceConfig space{layers, true};
  AutoencoderModel model = make_autoencoder(space, embed_dim, hidden, seed);
  PretrainOptions opt;
  opt.epochs = epochs;
  opt.batches_per_epoch = batches;
  opt.batch = batch;
  opt.lr = lr;
  opt.seed = seed;
  opt.sample_kind = one_hot ? PretrainSampleKind::OneHot : PretrainSampleKind::Uniform;
  PretrainReport report = pretrain(model, opt);
  save_autoencoder(model, out);

  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [epoch, mse] : report.loss_curve)
    curve.push_back({{"epoch", epoch}, {"holdout_mse", mse}});
  nlohmann::json j{{"epochs", report.epochs},
                   {"initial_holdout_mse", report.initial_holdout_mse},
                   {"final_train_mse", report.final_train_mse},
                   {"final_holdout_mse", report.final_holdout_mse},
                   {"improved", report.improved},
                   {"curve", curve}};
  std::ofstream os(out + "/pretrain_report.json", std::ios::trunc);
  os << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  if (!report.improved)
    std::cerr << "warning: holdout MSE did not improve over the initial model\n";
  return 0;
}

int cmd_search(const SearchConfig& cfg) {
  SearchReport report = run_search(cfg);
  std::cout << "best_reward " << detail::fmt17(report.best_reward) << " at iteration "
            << report.best_iteration << "\n"
            << "best " << architecture_to_json(report.best) << "\n"
            << "run directory: " << cfg.out_dir << "\n";
  return 0;
}

int cmd_final_train(SearchConfig cfg, const std::string& arch_path) {
  Architecture arch;
  if (!arch_path.empty()) {
    arch = read_arch_file(arch_path);
  } else {
    const std::string best = cfg.out_dir + "/best_arch.json";
    if (!std::filesystem::exists(best))
      fail(ErrorKind::Config, "no --arch given and no best_arch.json in " + cfg.out_dir);
    arch = read_arch_file(best);
  }
  Reward r = run_final(cfg, arch);
  nlohmann::json j{{"test_accuracy", r.value},
                   {"test_error", 1.0 - r.value},
                   {"param_count", r.param_count},
                   {"epochs", cfg.budget.epochs_e2}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_eval_arch(const SearchConfig& cfg, const std::string& arch_path) {
  Architecture arch = read_arch_file(arch_path);
  validate_architecture(arch, cfg.space);
  std::unique_ptr<Evaluator> evaluator = make_evaluator(cfg);
  EvalBudget budget = cfg.budget;
  budget.seed = derive_seed(cfg.seed_eval, 2000, 1);
  Reward r = evaluator->evaluate(arch, budget);
  nlohmann::json j{{"reward", r.value},
                   {"evaluator", evaluator->name()},
                   {"param_count", r.param_count},
                   {"final_epoch_value", r.final_epoch_value}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_enumerate(const SearchConfig& cfg, std::uint64_t cap, const std::string& out_path) {
  std::unique_ptr<Evaluator> evaluator = make_evaluator(cfg);
  std::vector<Architecture> all = enumerate_space(cfg.space, cap);
  std::ostringstream csv;
  csv << "arch_json,reward\n";
  EvalBudget budget = cfg.budget;
  budget.seed = derive_seed(cfg.seed_eval, 2000, 1);
  for (const Architecture& a : all)
    csv << detail::csv_quote(architecture_to_json(a)) << ","
        << detail::fmt17(evaluator->evaluate(a, budget).value) << "\n";
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream os(out_path, std::ios::trunc | std::ios::binary);
    if (!os) fail(ErrorKind::Io, "cannot write " + out_path);
    os << csv.str();
    std::cout << "wrote " << all.size() << " rows to " << out_path << "\n";
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  const std::string records_path = run_dir + "/records.csv";
  std::vector<SearchRecord> records = detail::load_records(records_path);
  if (records.empty()) fail(ErrorKind::Format, "no records in " + records_path);
  double mean = 0.0, best = records.front().reward;
  std::size_t best_iter = records.front().iteration;
  for (const SearchRecord& r : records) {
    mean += r.reward;
    if (r.reward > best) {
      best = r.reward;
      best_iter = r.iteration;
    }
  }
  mean /= static_cast<double>(records.size());
  nlohmann::json j{{"iterations", records.size()},
                   {"mean_reward", mean},
                   {"best_reward", best},
                   {"best_iteration", best_iter},
                   {"first_reward", records.front().reward},
                   {"last_reward", records.back().reward}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural architecture search in embedding space"};
  app.require_subcommand(1);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train the architecture autoencoder");
  std::size_t layers = 15, embed_dim = 32, hidden = 64, epochs = 50, batches = 256, batch = 64;
  double pre_lr = 1e-5;
  std::uint64_t pre_seed = 0;
  bool one_hot = false;
  std::string pre_out;
  pre->add_option("--layers", layers, "architecture layer count");
  pre->add_option("--embed-dim", embed_dim, "embedding dimension n");
  pre->add_option("--hidden", hidden, "LSTM hidden width");
  pre->add_option("--epochs", epochs, "pretraining epochs");
  pre->add_option("--batches", batches, "batches per epoch");
  pre->add_option("--batch-size", batch, "samples per batch");
  pre->add_option("--lr", pre_lr, "Adam learning rate");
  pre->add_option("--seed", pre_seed, "seed");
  pre->add_flag("--one-hot", one_hot, "pretrain on encoded architectures instead of uniform noise");
  pre->add_option("--out", pre_out, "output checkpoint directory")->required();

  // shared search-config options
  std::string config_path, out_override, arch_path, data_override, evaluator_override;
  std::uint64_t seed_override = 0, eval_seed_override = 0;
  bool have_seed = false, have_eval_seed = false;
  std::size_t iters_override = 0;
  double sigma_override = -1.0, lr_override = -1.0;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "config file (TOML-style)");
    if (config_required) opt->required();
    cmd->add_option("--out", out_override, "override [search].out");
    cmd->add_option("--iterations", iters_override, "override [search].iterations");
    cmd->add_option("--sigma", sigma_override, "override [search].sigma");
    cmd->add_option("--lr", lr_override, "override [search].lr");
    cmd->add_option("--seed", seed_override, "override [search].seed")
        ->each([&](const std::string&) { have_seed = true; });
    cmd->add_option("--eval-seed", eval_seed_override, "override [search].eval_seed")
        ->each([&](const std::string&) { have_eval_seed = true; });
    cmd->add_option("--data", data_override, "override [evaluator].data");
    cmd->add_option("--evaluator", evaluator_override, "override evaluator kind (synthetic|child)");
  };

  auto* search = app.add_subcommand("search", "run the embedding-space search loop");
  add_common(search, true);

  auto* final_train = app.add_subcommand("final-train", "retrain an architecture and test it");
  add_common(final_train, true);
  final_train->add_option("--arch", arch_path, "architecture JSON (default: run's best_arch.json)");

  auto* eval_arch = app.add_subcommand("eval-arch", "evaluate one architecture");
  add_common(eval_arch, true);
  eval_arch->add_option("--arch", arch_path, "architecture JSON file")->required();

  auto* enumerate = app.add_subcommand("enumerate", "brute-force a small space to CSV");
  std::size_t enum_layers = 4;
  bool no_skips = false;
  std::uint64_t enum_cap = 1000000;
  std::string enum_out;
  enumerate->add_option("--config", config_path, "config file (TOML-style)");
  enumerate->add_option("--layers", enum_layers, "layer count");
  enumerate->add_flag("--no-skips", no_skips, "disable skip connections");
  enumerate->add_option("--cap", enum_cap, "enumeration cap");
  enumerate->add_option("--out", enum_out, "output CSV path (default stdout)");
  enumerate->add_option("--data", data_override, "override [evaluator].data");
  enumerate->add_option("--evaluator", evaluator_override, "evaluator kind (synthetic|child)");
  std::uint64_t enum_oracle_seed = 0;
  bool have_enum_oracle = false;
  enumerate->add_option("--oracle-seed", enum_oracle_seed, "synthetic oracle target seed")
      ->each([&](const std::string&) { have_enum_oracle = true; });

  auto* report = app.add_subcommand("report", "summarize a run directory");
  std::string run_dir;
  report->add_option("--run", run_dir, "run directory with records.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed())
      return cmd_pretrain(layers, embed_dim, hidden, epochs, batches, batch, pre_lr, pre_seed,
                          one_hot, pre_out);

    if (report->parsed()) return cmd_report(run_dir);

    SearchConfig cfg;
    if (!config_path.empty()) cfg = load_search_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (iters_override > 0) cfg.iterations = iters_override;
    if (sigma_override > 0.0) cfg.sigma = sigma_override;
    if (lr_override > 0.0) cfg.controller_lr = lr_override;
    if (have_seed) cfg.seed_search = seed_override;
    if (have_eval_seed) cfg.seed_eval = eval_seed_override;
    if (!data_override.empty()) cfg.data = data_override;
    if (!evaluator_override.empty()) {
      if (evaluator_override == "synthetic") cfg.evaluator = EvaluatorKind::Synthetic;
      else if (evaluator_override == "child") cfg.evaluator = EvaluatorKind::Child;
      else fail(ErrorKind::Config, "evaluator must be synthetic or child");
    }

    if (search->parsed()) {
      copy_config_into_run(config_path, cfg.out_dir);
      return cmd_search(cfg);
    }
    if (final_train->parsed()) return cmd_final_train(cfg, arch_path);
    if (eval_arch->parsed()) return cmd_eval_arch(cfg, arch_path);
    if (enumerate->parsed()) {
      cfg.space.layer_count = enum_layers;
      if (no_skips) cfg.space.skips_enabled = false;
      if (have_enum_oracle) cfg.oracle_seed = enum_oracle_seed;
      return cmd_enumerate(cfg, enum_cap, enum_out);
    }
  } catch (const nases::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
