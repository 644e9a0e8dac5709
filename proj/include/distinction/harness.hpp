#pragma once

// Experiment runner: regimes, seeded online training over a stratified split,
// per-epoch evaluation, phase diagnostics, rule export and JSON-lines I/O.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "distinction/data.hpp"
#include "distinction/engine.hpp"

#ifndef DISTINCTION_DATA_DIR
#define DISTINCTION_DATA_DIR "data"
#endif

namespace distinction {

enum class Regime { A, B, C };

inline char to_char(Regime r) { return r == Regime::A ? 'A' : r == Regime::B ? 'B' : 'C'; }

inline Regime parse_regime(const std::string& s) {
  if (s == "A" || s == "a") return Regime::A;
  if (s == "B" || s == "b") return Regime::B;
  if (s == "C" || s == "c") return Regime::C;
  throw std::invalid_argument("unknown regime '" + s + "' (expected A, B or C)");
}

/// A: uncapped structure (energy and J still gate actions).
/// B: structure closes after max_structural_steps or max_structural_moves.
/// C: no elective structure; coverage genesis still runs.
inline void apply_regime(EngineConfig& cfg, Regime r) {
  switch (r) {
    case Regime::A:
      cfg.max_structural_steps = EngineConfig::kUnlimited;
      cfg.max_structural_moves = EngineConfig::kUnlimited;
      break;
    case Regime::B:
      break;
    case Regime::C:
      cfg.max_structural_moves = 0;
      break;
  }
}

struct DatasetSpec {
  std::string file;
  std::string label_column;
};

/// Short names accepted on the command line.
inline DatasetSpec dataset_spec(const std::string& name) {
  if (name == "iris") return {"iris.csv", "species"};
  if (name == "wine") return {"wine.csv", "cultivar"};
  if (name == "bc" || name == "breast_cancer" || name == "breast-cancer")
    return {"breast_cancer.csv", "diagnosis"};
  if (name == "digits") return {"digits.csv", "digit"};
  throw std::invalid_argument("unknown dataset '" + name + "'");
}

inline Dataset load_named_dataset(const std::string& name,
                                  const std::string& data_dir = DISTINCTION_DATA_DIR) {
  const auto spec = dataset_spec(name);
  return load_csv((std::filesystem::path(data_dir) / spec.file).string(), spec.label_column, name);
}

struct RunConfig {
  std::string dataset = "iris";
  std::string data_dir = DISTINCTION_DATA_DIR;
  Regime regime = Regime::B;
  std::uint64_t seed = 0;
  std::size_t epochs = 20;
  double train_fraction = 0.7;
  // Table defaults; the regime is applied on top of these.
  EngineConfig engine;
};

/// The engine configuration a run actually uses.
inline EngineConfig effective_engine_config(const RunConfig& rc, std::size_t n_classes) {
  EngineConfig cfg = rc.engine;
  apply_regime(cfg, rc.regime);
  cfg.n_classes = n_classes;
  return cfg;
}

struct StepLog {
  std::size_t t = 0;
  std::size_t epoch = 0;
  Action action = Action::Noop;
  double energy = 0.0;
  double energy_delta = 0.0;
  double action_cost = 0.0;
  double complexity = 0.0;
  std::size_t n_hyp = 0;
  bool correct = false;
  double loss = 0.0;
  std::optional<HypothesisId> winner;
  bool frozen = false;
  std::vector<HypothesisId> ids;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct RuleLine {
  HypothesisId id = 0;
  ClassLabel outcome = 0;
  std::string label;
  std::string form;
  std::optional<std::string> alias;
  double reliability = 0.0;
  double cost = 0.0;
};

struct RunRecord {
  std::string dataset;
  Regime regime = Regime::B;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  EngineConfig engine;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epoch_logs;
  double test_accuracy = 0.0;
  std::optional<std::size_t> freeze_step;
  std::size_t structural_moves = 0;
  double final_energy = 0.0;
  double final_complexity = 0.0;
  std::vector<RuleLine> rules;
  std::vector<std::pair<RegistryKey, std::string>> registry;
};

inline double accuracy(const Engine& engine, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (engine.infer(ds.X[i]).prediction == ds.y[i]) ++right;
  return static_cast<double>(right) / static_cast<double>(ds.size());
}

inline std::vector<RuleLine> extract_rules(const Engine& engine, const Dataset& ds) {
  std::vector<RuleLine> out;
  for (const auto& h : engine.hypotheses()) {
    RuleLine r;
    r.id = h.id;
    r.outcome = h.outcome;
    r.label = ds.label_name(h.outcome);
    r.form = render(h.form);
    r.alias = render_alias(h.form);
    r.reliability = h.reliability;
    r.cost = tropical_cost(h, engine.registry());
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const RuleLine& a, const RuleLine& b) { return a.id < b.id; });
  return out;
}

/// Step hook that does nothing. A hook sees the engine just before and just
/// after every training step.
struct NoStepHook {
  void before(const Engine&, std::span<const double>, ClassLabel) {}
  void after(const Engine&, const Observation&) {}
};

/// Trains on a prepared (already standardized) split. Test accuracy is
/// measured after each epoch through const inference only.
template <class Hook>
RunRecord run_on_split(const RunConfig& rc, const Split& split, Hook&& hook) {
  const std::size_t n_classes =
      std::max(split.train.n_classes(), split.test.n_classes());
  RunRecord rec;
  rec.dataset = rc.dataset;
  rec.regime = rc.regime;
  rec.seed = rc.seed;
  rec.epochs = rc.epochs;
  rec.train_size = split.train.size();
  rec.test_size = split.test.size();
  rec.engine = effective_engine_config(rc, n_classes);

  Engine engine(split.train.dim(), rec.engine, rc.seed);
  std::mt19937_64 order_rng(rc.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  rec.steps.reserve(rc.epochs * order.size());

  for (std::size_t epoch = 0; epoch < rc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    std::size_t right = 0;
    for (auto i : order) {
      hook.before(engine, split.train.X[i], split.train.y[i]);
      const auto obs = engine.step(split.train.X[i], split.train.y[i]);
      hook.after(engine, obs);
      StepLog s;
      s.t = engine.step_count();
      s.epoch = epoch;
      s.action = obs.action;
      s.energy = engine.energy();
      s.energy_delta = obs.energy_delta;
      s.action_cost = obs.action_cost;
      s.complexity = engine.total_complexity();
      s.n_hyp = engine.hypotheses().size();
      s.correct = obs.correct;
      s.loss = obs.loss;
      s.winner = obs.winner;
      s.frozen = engine.frozen();
      for (const auto& h : engine.hypotheses()) s.ids.push_back(h.id);
      rec.steps.push_back(std::move(s));
      if (obs.correct) ++right;
    }
    EpochLog e;
    e.epoch = epoch;
    e.train_accuracy = order.empty() ? 0.0 : static_cast<double>(right) / static_cast<double>(order.size());
    e.test_accuracy = accuracy(engine, split.test);
    rec.epoch_logs.push_back(e);
  }
  rec.test_accuracy = rec.epoch_logs.empty() ? accuracy(engine, split.test)
                                             : rec.epoch_logs.back().test_accuracy;
  rec.freeze_step = engine.freeze_step();
  rec.structural_moves = engine.structural_moves();
  rec.final_energy = engine.energy();
  rec.final_complexity = engine.total_complexity();
  rec.rules = extract_rules(engine, split.train);
  for (const auto& [k, f] : engine.registry().entries()) rec.registry.emplace_back(k, render(f));
  return rec;
}

inline RunRecord run_on_split(const RunConfig& rc, const Split& split) {
  return run_on_split(rc, split, NoStepHook{});
}

inline Split prepare_split(const RunConfig& rc) {
  const auto ds = load_named_dataset(rc.dataset, rc.data_dir);
  return standardize(stratified_split(ds, rc.train_fraction, rc.seed));
}

inline RunRecord run(const RunConfig& rc) { return run_on_split(rc, prepare_split(rc)); }

// ---------------------------------------------------------------------------
// Diagnostics

/// Structural actions among the `window` most recent steps, divided by window.
inline std::vector<double> transition_rate(const RunRecord& rec, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
  std::vector<double> out(rec.steps.size());
  std::size_t in_window = 0;
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    if (is_structural(rec.steps[i].action)) ++in_window;
    if (i >= window && is_structural(rec.steps[i - window].action)) --in_window;
    out[i] = static_cast<double>(in_window) / static_cast<double>(window);
  }
  return out;
}

struct SurvivalPoint {
  std::size_t step_index = 0;
  double rate = 0.0;
};

/// Fraction of hypothesis ids alive at step i - lag that are still alive at
/// step i. Steps whose reference set is empty are omitted.
inline std::vector<SurvivalPoint> survival_rate(const RunRecord& rec, std::size_t lag) {
  if (lag == 0) throw std::invalid_argument("lag must be >= 1");
  std::vector<SurvivalPoint> out;
  for (std::size_t i = lag; i < rec.steps.size(); ++i) {
    const auto& before = rec.steps[i - lag].ids;
    if (before.empty()) continue;
    const std::set<HypothesisId> now(rec.steps[i].ids.begin(), rec.steps[i].ids.end());
    std::size_t kept = 0;
    for (auto id : before) kept += now.count(id);
    out.push_back({i, static_cast<double>(kept) / static_cast<double>(before.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rule text

inline std::string format_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// One line per hypothesis, ordered by id:
///   H3 [class=versicolor] ~(|[~(A0), ~(~(A3))]) {A0 ∧ ¬A3} (r=0.78, cost=5.10)
/// followed by any registry entries as "@k := form".
inline std::string export_rules(const RunRecord& rec) {
  std::vector<RuleLine> rules = rec.rules;
  std::sort(rules.begin(), rules.end(), [](const RuleLine& a, const RuleLine& b) { return a.id < b.id; });
  std::ostringstream os;
  for (const auto& r : rules) {
    os << 'H' << r.id << " [class=" << r.label << "] " << r.form;
    if (r.alias) os << " {" << *r.alias << '}';
    os << " (r=" << format_fixed(r.reliability, 2) << ", cost=" << format_fixed(r.cost, 2) << ")\n";
  }
  for (const auto& [k, text] : rec.registry) os << '@' << k << " := " << text << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON lines

inline nlohmann::json engine_config_json(const EngineConfig& c) {
  auto cap = [](std::size_t v) -> nlohmann::json {
    if (v == EngineConfig::kUnlimited) return nullptr;
    return v;
  };
  return {{"initial_energy", c.initial_energy},
          {"energy_decay", c.energy_decay},
          {"reward_correct", c.reward_correct},
          {"reward_wrong", c.reward_wrong},
          {"genesis_cost", c.genesis_cost},
          {"wedge_cost", c.wedge_cost},
          {"lambda_complexity", c.lambda_complexity},
          {"lambda_energy", c.lambda_energy},
          {"max_structural_steps", cap(c.max_structural_steps)},
          {"max_structural_moves", cap(c.max_structural_moves)},
          {"max_rules", cap(c.max_rules)},
          {"min_positives", c.min_positives},
          {"min_negatives", c.min_negatives},
          {"cooldown", c.cooldown},
          {"learning_rate", c.natgrad.learning_rate},
          {"fisher_decay", c.natgrad.fisher_decay},
          {"epsilon", c.natgrad.epsilon},
          {"fisher_exponent", c.natgrad.fisher_exponent},
          {"natural_gradient", c.natgrad.precondition},
          {"reliability_rate", c.reliability_rate},
          {"loss_floor", c.loss_floor},
          {"ridge", c.ridge},
          {"max_reentry_depth", c.max_reentry_depth},
          {"compress_on_freeze", c.compress_on_freeze},
          {"n_classes", c.n_classes}};
}

inline EngineConfig engine_config_from_json(const nlohmann::json& j) {
  EngineConfig c;
  auto cap = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    field = j.at(key).is_null() ? EngineConfig::kUnlimited : j.at(key).get<std::size_t>();
  };
  auto num = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  num("initial_energy", c.initial_energy);
  num("energy_decay", c.energy_decay);
  num("reward_correct", c.reward_correct);
  num("reward_wrong", c.reward_wrong);
  num("genesis_cost", c.genesis_cost);
  num("wedge_cost", c.wedge_cost);
  num("lambda_complexity", c.lambda_complexity);
  num("lambda_energy", c.lambda_energy);
  cap("max_structural_steps", c.max_structural_steps);
  cap("max_structural_moves", c.max_structural_moves);
  cap("max_rules", c.max_rules);
  num("min_positives", c.min_positives);
  num("min_negatives", c.min_negatives);
  num("cooldown", c.cooldown);
  num("learning_rate", c.natgrad.learning_rate);
  num("fisher_decay", c.natgrad.fisher_decay);
  num("epsilon", c.natgrad.epsilon);
  num("fisher_exponent", c.natgrad.fisher_exponent);
  num("natural_gradient", c.natgrad.precondition);
  num("reliability_rate", c.reliability_rate);
  num("loss_floor", c.loss_floor);
  num("ridge", c.ridge);
  num("max_reentry_depth", c.max_reentry_depth);
  num("compress_on_freeze", c.compress_on_freeze);
  num("n_classes", c.n_classes);
  return c;
}

/// Serializes a run as JSON lines: one "meta" object, one "step" object per
/// training step, one "epoch" object per epoch, and a closing "final" object.
inline void write_jsonl(const RunRecord& rec, std::ostream& os) {
  using nlohmann::json;
  json meta = {{"type", "meta"},
               {"dataset", rec.dataset},
               {"regime", std::string(1, to_char(rec.regime))},
               {"seed", rec.seed},
               {"epochs", rec.epochs},
               {"train_size", rec.train_size},
               {"test_size", rec.test_size},
               {"engine", engine_config_json(rec.engine)}};
  if (rec.regime == Regime::C)
    meta["note"] = "coverage-genesis remains active with max_structural_moves = 0";
  os << meta.dump() << '\n';
  for (const auto& s : rec.steps) {
    json j = {{"type", "step"},
              {"t", s.t},
              {"epoch", s.epoch},
              {"action", std::string(to_string(s.action))},
              {"E", s.energy},
              {"dE", s.energy_delta},
              {"cost", s.action_cost},
              {"C", s.complexity},
              {"n_hyp", s.n_hyp},
              {"correct", s.correct},
              {"loss", s.loss},
              {"winner", s.winner ? json(*s.winner) : json(nullptr)},
              {"frozen", s.frozen},
              {"ids", s.ids}};
    os << j.dump() << '\n';
  }
  for (const auto& e : rec.epoch_logs)
    os << json{{"type", "epoch"},
               {"epoch", e.epoch},
               {"train_acc", e.train_accuracy},
               {"test_acc", e.test_accuracy}}
              .dump()
       << '\n';
  json rules = json::array();
  for (const auto& r : rec.rules)
    rules.push_back({{"id", r.id},
                     {"outcome", r.outcome},
                     {"label", r.label},
                     {"form", r.form},
                     {"alias", r.alias ? json(*r.alias) : json(nullptr)},
                     {"reliability", r.reliability},
                     {"cost", r.cost}});
  json registry = json::array();
  for (const auto& [k, text] : rec.registry) registry.push_back({{"key", k}, {"form", text}});
  os << json{{"type", "final"},
             {"test_acc", rec.test_accuracy},
             {"freeze_step", rec.freeze_step ? json(*rec.freeze_step) : json(nullptr)},
             {"n_struct", rec.structural_moves},
             {"final_E", rec.final_energy},
             {"final_C", rec.final_complexity},
             {"rules", rules},
             {"registry", registry}}
            .dump()
     << '\n';
}

inline std::string to_jsonl(const RunRecord& rec) {
  std::ostringstream os;
  write_jsonl(rec, os);
  return os.str();
}

inline RunRecord read_jsonl(std::istream& in) {
  using nlohmann::json;
  RunRecord rec;
  std::string line;
  std::size_t lineno = 0;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto type = j.value("type", std::string{});
    if (type == "meta") {
      saw_meta = true;
      rec.dataset = j.at("dataset").get<std::string>();
      rec.regime = parse_regime(j.at("regime").get<std::string>());
      rec.seed = j.at("seed").get<std::uint64_t>();
      rec.epochs = j.at("epochs").get<std::size_t>();
      rec.train_size = j.at("train_size").get<std::size_t>();
      rec.test_size = j.at("test_size").get<std::size_t>();
      rec.engine = engine_config_from_json(j.at("engine"));
    } else if (type == "step") {
      StepLog s;
      s.t = j.at("t").get<std::size_t>();
      s.epoch = j.at("epoch").get<std::size_t>();
      s.action = parse_action(j.at("action").get<std::string>());
      s.energy = j.at("E").get<double>();
      s.energy_delta = j.at("dE").get<double>();
      s.action_cost = j.at("cost").get<double>();
      s.complexity = j.at("C").get<double>();
      s.n_hyp = j.at("n_hyp").get<std::size_t>();
      s.correct = j.at("correct").get<bool>();
      s.loss = j.value("loss", 0.0);
      if (!j.at("winner").is_null()) s.winner = j.at("winner").get<HypothesisId>();
      s.frozen = j.value("frozen", false);
      s.ids = j.at("ids").get<std::vector<HypothesisId>>();
      rec.steps.push_back(std::move(s));
    } else if (type == "epoch") {
      rec.epoch_logs.push_back({j.at("epoch").get<std::size_t>(), j.at("train_acc").get<double>(),
                                j.at("test_acc").get<double>()});
    } else if (type == "final") {
      rec.test_accuracy = j.at("test_acc").get<double>();
      if (!j.at("freeze_step").is_null()) rec.freeze_step = j.at("freeze_step").get<std::size_t>();
      rec.structural_moves = j.at("n_struct").get<std::size_t>();
      rec.final_energy = j.at("final_E").get<double>();
      rec.final_complexity = j.at("final_C").get<double>();
      for (const auto& r : j.at("rules")) {
        RuleLine rl;
        rl.id = r.at("id").get<HypothesisId>();
        rl.outcome = r.at("outcome").get<ClassLabel>();
        rl.label = r.at("label").get<std::string>();
        rl.form = r.at("form").get<std::string>();
        if (!r.at("alias").is_null()) rl.alias = r.at("alias").get<std::string>();
        rl.reliability = r.at("reliability").get<double>();
        rl.cost = r.at("cost").get<double>();
        rec.rules.push_back(std::move(rl));
      }
      for (const auto& e : j.at("registry"))
        rec.registry.emplace_back(e.at("key").get<RegistryKey>(), e.at("form").get<std::string>());
    } else {
      throw DataError("line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
    }
  }
  if (!saw_meta) throw DataError("run log has no meta record");
  return rec;
}

/// (t, complexity, energy, running train accuracy) per step.
inline void write_phase_csv(const RunRecord& rec, std::ostream& os) {
  os << "t,complexity,energy,running_train_acc\n";
  std::size_t right = 0;
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    const auto& s = rec.steps[i];
    if (s.correct) ++right;
    os << s.t << ',' << s.complexity << ',' << s.energy << ','
       << static_cast<double>(right) / static_cast<double>(i + 1) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Logistic-regression reference

struct LogisticOptions {
  std::size_t max_iterations = 20000;
  double step = 0.0;  // <= 0 selects 1/L from a bound on the Hessian
  double l2 = 1.0;    // penalty 0.5 * l2 * |W|^2 on weights, bias unpenalized
  double tolerance = 1e-6;
};

struct LogisticModel {
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  std::vector<Vector> weights;  // per class
  Vector bias;
  std::size_t iterations = 0;

  std::vector<double> probabilities(std::span<const double> x) const {
    std::vector<double> u(n_classes);
    for (std::size_t k = 0; k < n_classes; ++k) {
      u[k] = bias[k];
      for (std::size_t j = 0; j < dim; ++j) u[k] += weights[k][j] * x[j];
    }
    const double top = *std::max_element(u.begin(), u.end());
    double z = 0.0;
    for (auto& v : u) z += (v = std::exp(v - top));
    for (auto& v : u) v /= z;
    return u;
  }

  ClassLabel predict(std::span<const double> x) const {
    const auto p = probabilities(x);
    return static_cast<ClassLabel>(std::max_element(p.begin(), p.end()) - p.begin());
  }
};

/// Full-batch gradient descent on sum of cross-entropies + 0.5 l2 |W|^2.
inline LogisticModel fit_logistic(const Dataset& train, const LogisticOptions& opt = {}) {
  LogisticModel m;
  m.dim = train.dim();
  m.n_classes = std::max<std::size_t>(train.n_classes(), 2);
  m.weights.assign(m.n_classes, Vector(m.dim, 0.0));
  m.bias.assign(m.n_classes, 0.0);
  double step = opt.step;
  if (step <= 0.0) {
    double trace = 0.0;
    for (const auto& x : train.X) {
      trace += 1.0;
      for (double v : x) trace += v * v;
    }
    step = 1.0 / (0.5 * trace + opt.l2);
  }
  std::vector<Vector> gw(m.n_classes, Vector(m.dim));
  Vector gb(m.n_classes);
  for (m.iterations = 0; m.iterations < opt.max_iterations; ++m.iterations) {
    for (std::size_t k = 0; k < m.n_classes; ++k) {
      for (std::size_t j = 0; j < m.dim; ++j) gw[k][j] = opt.l2 * m.weights[k][j];
      gb[k] = 0.0;
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto p = m.probabilities(train.X[i]);
      for (std::size_t k = 0; k < m.n_classes; ++k) {
        const double r = p[k] - (static_cast<ClassLabel>(k) == train.y[i] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < m.dim; ++j) gw[k][j] += r * train.X[i][j];
        gb[k] += r;
      }
    }
    double norm2 = 0.0;
    for (std::size_t k = 0; k < m.n_classes; ++k) {
      norm2 += gb[k] * gb[k];
      for (double v : gw[k]) norm2 += v * v;
    }
    if (std::sqrt(norm2) < opt.tolerance) break;
    for (std::size_t k = 0; k < m.n_classes; ++k) {
      for (std::size_t j = 0; j < m.dim; ++j) m.weights[k][j] -= step * gw[k][j];
      m.bias[k] -= step * gb[k];
    }
  }
  return m;
}

inline double logistic_baseline(const Split& split, std::size_t epochs = 20000, double lr = 0.0) {
  LogisticOptions opt;
  opt.max_iterations = epochs;
  opt.step = lr;
  const auto model = fit_logistic(split.train, opt);
  if (split.test.size() == 0) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < split.test.size(); ++i)
    if (model.predict(split.test.X[i]) == split.test.y[i]) ++right;
  return static_cast<double>(right) / static_cast<double>(split.test.size());
}

// ---------------------------------------------------------------------------
// Suites

struct SummaryRow {
  std::string dataset;
  Regime regime = Regime::B;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::size_t structural_moves = 0;
  std::optional<std::size_t> freeze_step;
  double final_energy = 0.0;
  double final_complexity = 0.0;
};

inline SummaryRow summarize(const RunRecord& rec) {
  return {rec.dataset,          rec.regime,      rec.seed,         rec.test_accuracy,
          rec.structural_moves, rec.freeze_step, rec.final_energy, rec.final_complexity};
}

struct CellStats {
  std::string dataset;
  Regime regime = Regime::B;
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

inline std::vector<CellStats> cell_stats(const std::vector<SummaryRow>& rows) {
  std::map<std::pair<std::string, char>, std::vector<double>> cells;
  std::vector<std::pair<std::string, char>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.dataset, to_char(r.regime));
    if (!cells.count(key)) order.push_back(key);
    cells[key].push_back(r.test_accuracy);
  }
  std::vector<CellStats> out;
  for (const auto& key : order) {
    const auto& v = cells[key];
    CellStats c;
    c.dataset = key.first;
    c.regime = parse_regime(std::string(1, key.second));
    c.runs = v.size();
    c.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - c.mean) * (a - c.mean);
    c.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    out.push_back(c);
  }
  return out;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os) {
  os << "dataset,regime,seed,test_acc,n_struct,freeze_step,final_E,final_C\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.dataset << ',' << to_char(r.regime) << ',' << r.seed << ',' << r.test_accuracy << ','
       << r.structural_moves << ',';
    if (r.freeze_step) os << *r.freeze_step;
    os << ',' << r.final_energy << ',' << r.final_complexity << '\n';
  }
}

struct SuiteConfig {
  std::vector<std::string> datasets{"iris"};
  std::vector<Regime> regimes{Regime::B};
  std::size_t seeds = 10;
  RunConfig base;  // dataset, regime and seed are overridden per run
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Runs datasets x regimes x seeds. Results come back in that nesting order
/// regardless of scheduling; `each` (if set) receives every record in order.
template <class Callback>
std::vector<SummaryRow> run_suite(const SuiteConfig& sc, Callback&& each) {
  struct Job {
    RunConfig rc;
  };
  std::vector<Job> jobs;
  for (const auto& ds : sc.datasets)
    for (auto regime : sc.regimes)
      for (std::size_t seed = 0; seed < sc.seeds; ++seed) {
        RunConfig rc = sc.base;
        rc.dataset = ds;
        rc.regime = regime;
        rc.seed = seed;
        jobs.push_back({rc});
      }
  std::vector<std::optional<RunRecord>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::size_t n_threads = sc.threads ? sc.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, std::max<std::size_t>(jobs.size(), 1));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run(jobs[i].rc);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  std::vector<SummaryRow> rows;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    each(*results[i]);
    rows.push_back(summarize(*results[i]));
  }
  return rows;
}

inline std::vector<SummaryRow> run_suite(const SuiteConfig& sc) {
  return run_suite(sc, [](const RunRecord&) {});
}

}  // namespace distinction
