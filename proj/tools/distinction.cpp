// Command-line front end for the experiment harness.
//
//   distinction run   --dataset iris --regime B --seed 0 --epochs 20 --out dir
//   distinction suite --datasets iris,wine,bc --regimes A,B,C --seeds 10 --out dir
//   distinction rules --from dir/run.jsonl
//   distinction baseline --dataset iris --seeds 10

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "distinction/harness.hpp"

namespace fs = std::filesystem;
using namespace distinction;

namespace {

std::size_t parse_cap(const std::string& v) {
  if (v == "inf" || v == "none" || v == "unlimited") return EngineConfig::kUnlimited;
  return std::stoull(v);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = {
      {"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
      {"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
      {"regime", [](RunConfig& c, const std::string& v) { c.regime = parse_regime(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.epochs = std::stoull(v); }},
      {"train_fraction", [](RunConfig& c, const std::string& v) { c.train_fraction = std::stod(v); }},
      {"initial_energy", [](RunConfig& c, const std::string& v) { c.engine.initial_energy = std::stod(v); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.engine.natgrad.learning_rate = std::stod(v); }},
      {"fisher_decay", [](RunConfig& c, const std::string& v) { c.engine.natgrad.fisher_decay = std::stod(v); }},
      {"lambda_complexity", [](RunConfig& c, const std::string& v) { c.engine.lambda_complexity = std::stod(v); }},
      {"lambda_energy", [](RunConfig& c, const std::string& v) { c.engine.lambda_energy = std::stod(v); }},
      {"genesis_cost", [](RunConfig& c, const std::string& v) { c.engine.genesis_cost = std::stod(v); }},
      {"wedge_cost", [](RunConfig& c, const std::string& v) { c.engine.wedge_cost = std::stod(v); }},
      {"reward_correct", [](RunConfig& c, const std::string& v) { c.engine.reward_correct = std::stod(v); }},
      {"reward_wrong", [](RunConfig& c, const std::string& v) { c.engine.reward_wrong = std::stod(v); }},
      {"energy_decay", [](RunConfig& c, const std::string& v) { c.engine.energy_decay = std::stod(v); }},
      {"max_structural_steps", [](RunConfig& c, const std::string& v) { c.engine.max_structural_steps = parse_cap(v); }},
      {"max_structural_moves", [](RunConfig& c, const std::string& v) { c.engine.max_structural_moves = parse_cap(v); }},
      {"max_rules", [](RunConfig& c, const std::string& v) { c.engine.max_rules = parse_cap(v); }},
      {"min_positives", [](RunConfig& c, const std::string& v) { c.engine.min_positives = std::stoull(v); }},
      {"min_negatives", [](RunConfig& c, const std::string& v) { c.engine.min_negatives = std::stoull(v); }},
      {"cooldown", [](RunConfig& c, const std::string& v) { c.engine.cooldown = std::stoull(v); }},
      {"epsilon", [](RunConfig& c, const std::string& v) { c.engine.natgrad.epsilon = std::stod(v); }},
      {"fisher_exponent", [](RunConfig& c, const std::string& v) { c.engine.natgrad.fisher_exponent = std::stod(v); }},
      {"natural_gradient", [](RunConfig& c, const std::string& v) { c.engine.natgrad.precondition = parse_bool(v); }},
      {"reliability_rate", [](RunConfig& c, const std::string& v) { c.engine.reliability_rate = std::stod(v); }},
      {"loss_floor", [](RunConfig& c, const std::string& v) { c.engine.loss_floor = std::stod(v); }},
      {"ridge", [](RunConfig& c, const std::string& v) { c.engine.ridge = std::stod(v); }},
      {"max_reentry_depth", [](RunConfig& c, const std::string& v) { c.engine.max_reentry_depth = std::stoull(v); }},
      {"compress_on_freeze", [](RunConfig& c, const std::string& v) { c.engine.compress_on_freeze = parse_bool(v); }},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// key = value lines; '#' starts a comment.
void load_config_file(const std::string& path, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(n) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = config_keys().find(key);
    if (it == config_keys().end())
      throw std::runtime_error(path + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    try {
      it->second(rc, value);
    } catch (const std::logic_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": bad value for '" + key + "': " + e.what());
    }
  }
}

// Flags shared by run and suite. Values stay empty unless given, so they
// override the config file only when present.
struct EngineFlags {
  std::string config;
  std::optional<std::size_t> epochs;
  bool no_natgrad = false;
  std::optional<double> lambda_c;
  std::optional<double> lambda_e;
  std::optional<std::size_t> cooldown;
  std::string data_dir;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key=value configuration file");
    app->add_option("--epochs", epochs, "training epochs (default 20)");
    app->add_flag("--no-natgrad", no_natgrad, "plain gradient steps instead of the Fisher-preconditioned step");
    app->add_option("--lambda-c", lambda_c, "complexity coefficient in J");
    app->add_option("--lambda-e", lambda_e, "energy-cost coefficient in J");
    app->add_option("--cooldown", cooldown, "minimum steps between elective structural moves");
    app->add_option("--data-dir", data_dir, "directory holding the dataset CSV files");
  }

  RunConfig base() const {
    RunConfig rc;
    if (!config.empty()) load_config_file(config, rc);
    if (epochs) rc.epochs = *epochs;
    if (no_natgrad) rc.engine.natgrad.precondition = false;
    if (lambda_c) rc.engine.lambda_complexity = *lambda_c;
    if (lambda_e) rc.engine.lambda_energy = *lambda_e;
    if (cooldown) rc.engine.cooldown = *cooldown;
    if (!data_dir.empty()) rc.data_dir = data_dir;
    return rc;
  }
};

std::string run_stem(const RunRecord& rec) {
  return rec.dataset + "_" + std::string(1, to_char(rec.regime)) + "_s" + std::to_string(rec.seed);
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(os);
  if (!os) throw std::runtime_error("error while writing '" + path.string() + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule-learning engine with energy-budgeted structural moves"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "train and evaluate one (dataset, regime, seed)");
  EngineFlags run_flags;
  run_flags.attach(run_cmd);
  std::optional<std::string> run_dataset, run_regime;
  std::optional<std::uint64_t> run_seed;
  std::string run_out;
  run_cmd->add_option("--dataset", run_dataset, "iris, wine, bc or digits");
  run_cmd->add_option("--regime", run_regime, "A (uncapped), B (capped), C (no elective structure)");
  run_cmd->add_option("--seed", run_seed, "split, shuffle and engine seed");
  run_cmd->add_option("--out", run_out, "output directory (run.jsonl, rules.txt, phase.csv)");

  // suite
  auto* suite_cmd = app.add_subcommand("suite", "datasets x regimes x seeds");
  EngineFlags suite_flags;
  suite_flags.attach(suite_cmd);
  std::string suite_datasets = "iris", suite_regimes = "B", suite_out;
  std::size_t suite_seeds = 10, suite_threads = 0;
  suite_cmd->add_option("--datasets", suite_datasets, "comma-separated dataset names")->capture_default_str();
  suite_cmd->add_option("--regimes", suite_regimes, "comma-separated regimes")->capture_default_str();
  suite_cmd->add_option("--seeds", suite_seeds, "seeds 0..N-1")->capture_default_str();
  suite_cmd->add_option("--threads", suite_threads, "worker threads (0 = all cores)");
  suite_cmd->add_option("--out", suite_out, "output directory")->required();

  // rules
  auto* rules_cmd = app.add_subcommand("rules", "print the learned rules of a logged run");
  std::string rules_from;
  rules_cmd->add_option("--from", rules_from, "run JSON-lines file")->required()->check(CLI::ExistingFile);

  // baseline
  auto* base_cmd = app.add_subcommand("baseline", "L2 logistic regression reference");
  std::string base_dataset = "iris", base_data_dir;
  std::size_t base_seeds = 10;
  base_cmd->add_option("--dataset", base_dataset)->capture_default_str();
  base_cmd->add_option("--seeds", base_seeds)->capture_default_str();
  base_cmd->add_option("--data-dir", base_data_dir);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      RunConfig rc = run_flags.base();
      if (run_dataset) rc.dataset = *run_dataset;
      if (run_regime) rc.regime = parse_regime(*run_regime);
      if (run_seed) rc.seed = *run_seed;
      const auto t0 = std::chrono::steady_clock::now();
      const auto rec = run(rc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!run_out.empty()) {
        fs::create_directories(run_out);
        write_file(fs::path(run_out) / "run.jsonl", [&](std::ostream& os) { write_jsonl(rec, os); });
        write_file(fs::path(run_out) / "rules.txt", [&](std::ostream& os) { os << export_rules(rec); });
        write_file(fs::path(run_out) / "phase.csv", [&](std::ostream& os) { write_phase_csv(rec, os); });
      }
      std::printf("%s regime %c seed %llu: test accuracy %.4f, n_struct %zu, freeze step %s, E %.1f, C %.1f (%.2f s)\n",
                  rec.dataset.c_str(), to_char(rec.regime), static_cast<unsigned long long>(rec.seed),
                  rec.test_accuracy, rec.structural_moves,
                  rec.freeze_step ? std::to_string(*rec.freeze_step).c_str() : "-", rec.final_energy,
                  rec.final_complexity, secs);
      std::cout << export_rules(rec);
      return 0;
    }

    if (*suite_cmd) {
      SuiteConfig sc;
      sc.base = suite_flags.base();
      sc.datasets = split_list(suite_datasets);
      sc.regimes.clear();
      for (const auto& r : split_list(suite_regimes)) sc.regimes.push_back(parse_regime(r));
      sc.seeds = suite_seeds;
      sc.threads = suite_threads;
      const fs::path out(suite_out);
      fs::create_directories(out / "runs");
      fs::create_directories(out / "phase");
      const auto t0 = std::chrono::steady_clock::now();
      const auto rows = run_suite(sc, [&](const RunRecord& rec) {
        const auto stem = run_stem(rec);
        write_file(out / "runs" / (stem + ".jsonl"), [&](std::ostream& os) { write_jsonl(rec, os); });
        write_file(out / "phase" / (stem + ".csv"), [&](std::ostream& os) { write_phase_csv(rec, os); });
      });
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_file(out / "summary.csv", [&](std::ostream& os) { write_summary_csv(rows, os); });
      std::printf("%-8s %-6s %5s %9s %8s\n", "dataset", "regime", "runs", "mean", "std");
      for (const auto& c : cell_stats(rows))
        std::printf("%-8s %-6c %5zu %8.2f%% %7.2f%%\n", c.dataset.c_str(), to_char(c.regime), c.runs,
                    100.0 * c.mean, 100.0 * c.stddev);
      std::printf("%zu runs in %.1f s; summary at %s\n", rows.size(), secs, (out / "summary.csv").c_str());
      return 0;
    }

    if (*rules_cmd) {
      std::ifstream in(rules_from);
      const auto rec = read_jsonl(in);
      std::cout << export_rules(rec);
      return 0;
    }

    if (*base_cmd) {
      RunConfig rc;
      rc.dataset = base_dataset;
      if (!base_data_dir.empty()) rc.data_dir = base_data_dir;
      double sum = 0.0;
      for (std::size_t seed = 0; seed < base_seeds; ++seed) {
        rc.seed = seed;
        const double acc = logistic_baseline(prepare_split(rc));
        std::printf("seed %zu: %.4f\n", seed, acc);
        sum += acc;
      }
      std::printf("mean: %.4f\n", sum / static_cast<double>(base_seeds));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
