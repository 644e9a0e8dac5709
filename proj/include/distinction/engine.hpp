#pragma once

// The learner's step function. Each sample runs inference, the energy
// update, the class-coverage guarantee, one preconditioned gradient step, and
// (while structure is still open) a one-step-lookahead choice between noop,
// genesis and wedge scored by the local objective
//
//   J(a) = loss(successor) + lambda_c * dComplexity + lambda_e * cost(a).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distinction/form.hpp"
#include "distinction/hypothesis.hpp"
#include "distinction/manifold.hpp"

namespace distinction {

enum class Action { Noop, Genesis, Wedge, Death, CoverageGenesis };

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::Noop: return "noop";
    case Action::Genesis: return "genesis";
    case Action::Wedge: return "wedge";
    case Action::Death: return "death";
    case Action::CoverageGenesis: return "coverage-genesis";
  }
  return "?";
}

inline Action parse_action(std::string_view s) {
  for (Action a : {Action::Noop, Action::Genesis, Action::Wedge, Action::Death, Action::CoverageGenesis})
    if (to_string(a) == s) return a;
  throw std::invalid_argument("unknown action '" + std::string(s) + "'");
}

/// Actions that change the hypothesis set and count as structural moves.
inline bool is_structural(Action a) {
  return a == Action::Genesis || a == Action::Wedge || a == Action::CoverageGenesis;
}

struct EngineConfig {
  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  double initial_energy = 10000.0;
  double energy_decay = 1.0;
  double reward_correct = 10.0;
  double reward_wrong = -10.0;
  double genesis_cost = 5.0;
  double wedge_cost = 8.0;
  double lambda_complexity = 0.001;
  double lambda_energy = 0.001;
  std::size_t max_structural_steps = 500;
  std::size_t max_structural_moves = 20;
  std::size_t max_rules = 30;
  std::size_t min_positives = 2;
  std::size_t min_negatives = 1;
  // Minimum steps between elective structural moves (T_max / N_max).
  std::size_t cooldown = 25;
  NatGradConfig natgrad;
  double reliability_rate = 0.1;
  double loss_floor = 1e-12;
  double ridge = 1.0;
  std::size_t max_reentry_depth = Registry::kDefaultMaxDepth;
  bool compress_on_freeze = true;
  // Size of the label space, when known. Freezing waits until every label in
  // [0, n_classes) owns a hypothesis; 0 means "the labels seen so far".
  std::size_t n_classes = 0;

  void validate() const {
    natgrad.validate();
    if (genesis_cost < 0 || wedge_cost < 0) throw std::invalid_argument("action costs must be >= 0");
    if (!std::isfinite(reward_correct) || !std::isfinite(reward_wrong))
      throw std::invalid_argument("rewards must be finite");
    if (!(reliability_rate > 0.0 && reliability_rate <= 1.0))
      throw std::invalid_argument("reliability rate must lie in (0,1]");
    if (!(ridge > 0.0)) throw std::invalid_argument("ridge must be > 0");
  }
};

struct Candidate {
  Action action = Action::Noop;
  double objective = 0.0;
  double cost = 0.0;
};

struct Observation {
  ClassLabel prediction = 0;
  double confidence = 0.0;
  std::optional<HypothesisId> winner;
  double energy_delta = 0.0;  // reward term only
  Action action = Action::Noop;
  double action_cost = 0.0;   // energy spent by the action
  bool correct = false;
  double loss = 0.0;          // cross-entropy of the pre-update prediction
  // Scored candidates, empty when structure selection did not run.
  std::vector<Candidate> candidates;
  // True when noop scored no worse than every affordable structural candidate.
  bool freeze_condition = true;
};

struct Inference {
  ClassLabel prediction = 0;
  double confidence = 0.0;
  std::optional<HypothesisId> winner;
  std::map<ClassLabel, double> logits;
  std::map<ClassLabel, double> probabilities;
};

/// Class logits u_k = sum of effective_weight * eval over hypotheses voting k,
/// softmax over `classes`, and the tropical winner among firing hypotheses.
inline Inference infer(const std::vector<Hypothesis>& hypotheses, const ParamStore& params,
                       const Registry& registry, const std::set<ClassLabel>& classes,
                       std::span<const double> x) {
  Inference out;
  std::set<ClassLabel> all = classes;
  for (const auto& h : hypotheses) all.insert(h.outcome);
  if (hypotheses.empty()) {
    out.prediction = all.empty() ? 0 : *all.begin();
    out.confidence = all.empty() ? 1.0 : 1.0 / static_cast<double>(all.size());
    for (ClassLabel k : all) {
      out.logits[k] = 0.0;
      out.probabilities[k] = out.confidence;
    }
    return out;
  }
  for (ClassLabel k : all) out.logits[k] = 0.0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& h : hypotheses) {
    const double p = eval_soft(h.form, x, params, registry);
    out.logits[h.outcome] += effective_weight(h) * p;
    if (p > 0.5) {
      const double c = tropical_cost(h, registry);
      if (c < best_cost || (c == best_cost && out.winner && h.id < *out.winner)) {
        best_cost = c;
        out.winner = h.id;
      }
    }
  }
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& [k, u] : out.logits) top = std::max(top, u);
  double z = 0.0;
  for (const auto& [k, u] : out.logits) z += std::exp(u - top);
  double best_p = -1.0;
  for (const auto& [k, u] : out.logits) {
    const double p = std::exp(u - top) / z;
    out.probabilities[k] = p;
    if (p > best_p) {  // strict: ties keep the smaller label
      best_p = p;
      out.prediction = k;
    }
  }
  out.confidence = best_p;
  return out;
}

/// Cross-entropy of y under the hypothesis set, or log(|classes|+1) when no
/// hypothesis votes for y.
inline double loss_of(const std::vector<Hypothesis>& hypotheses, const ParamStore& params,
                      const Registry& registry, std::span<const double> x, ClassLabel y,
                      const std::set<ClassLabel>& classes, double floor = 1e-12) {
  const bool covered = std::any_of(hypotheses.begin(), hypotheses.end(),
                                   [&](const Hypothesis& h) { return h.outcome == y; });
  if (!covered) {
    std::set<ClassLabel> all = classes;
    all.insert(y);
    return std::log(static_cast<double>(all.size()) + 1.0);
  }
  const auto inf = infer(hypotheses, params, registry, classes, x);
  return -std::log(inf.probabilities.at(y) + floor);
}

/// J for moving from `current` to `successor` at energy cost `cost`.
inline double evaluate_objective(const std::vector<Hypothesis>& current,
                                 const std::vector<Hypothesis>& successor,
                                 const ParamStore& successor_params, const Registry& registry,
                                 std::span<const double> x, ClassLabel y,
                                 const std::set<ClassLabel>& classes, double cost,
                                 const EngineConfig& cfg) {
  const double loss = loss_of(successor, successor_params, registry, x, y, classes, cfg.loss_floor);
  const double dc = total_complexity(successor, registry) - total_complexity(current, registry);
  return loss + cfg.lambda_complexity * dc + cfg.lambda_energy * cost;
}

class Engine {
 public:
  Engine(std::size_t dim, EngineConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        params_(dim),
        registry_(cfg_.max_reentry_depth),
        energy_(cfg_.initial_energy),
        rng_(seed) {
    cfg_.validate();
  }

  const EngineConfig& config() const { return cfg_; }
  std::size_t dim() const { return params_.dim(); }
  const std::vector<Hypothesis>& hypotheses() const { return hypotheses_; }
  const ParamStore& params() const { return params_; }
  const Registry& registry() const { return registry_; }
  double energy() const { return energy_; }
  std::size_t history_size() const { return history_.size(); }
  const Vector& history_input(HistoryIndex i) const { return history_.at(i).first; }
  ClassLabel history_label(HistoryIndex i) const { return history_.at(i).second; }
  std::size_t step_count() const { return steps_; }
  std::size_t structural_moves() const { return structural_moves_; }
  bool frozen() const { return frozen_; }
  std::optional<std::size_t> freeze_step() const { return freeze_step_; }
  const std::set<ClassLabel>& classes_seen() const { return classes_; }
  double total_complexity() const { return distinction::total_complexity(hypotheses_, registry_); }

  const Hypothesis* find(HypothesisId id) const {
    for (const auto& h : hypotheses_)
      if (h.id == id) return &h;
    return nullptr;
  }

  Inference infer(std::span<const double> x) const {
    check_dim(x);
    return distinction::infer(hypotheses_, params_, registry_, classes_, x);
  }

  /// Every known class owns at least one hypothesis.
  bool coverage_complete() const {
    std::set<ClassLabel> need = classes_;
    for (std::size_t k = 0; k < cfg_.n_classes; ++k) need.insert(static_cast<ClassLabel>(k));
    for (const auto& h : hypotheses_) need.erase(h.outcome);
    return need.empty();
  }

  Observation step(std::span<const double> x, ClassLabel y) {
    check_dim(x);
    ++steps_;
    Observation obs;

    const Inference inf = infer(x);
    obs.prediction = inf.prediction;
    obs.confidence = inf.confidence;
    obs.winner = inf.winner;
    obs.correct = !hypotheses_.empty() && inf.prediction == y;
    {
      auto it = inf.probabilities.find(y);
      const double py = it == inf.probabilities.end() ? 0.0 : it->second;
      obs.loss = -std::log(py + cfg_.loss_floor);
    }

    obs.energy_delta = obs.correct ? cfg_.reward_correct : cfg_.reward_wrong;
    energy_ = cfg_.energy_decay * energy_ + obs.energy_delta;

    history_.emplace_back(Vector(x.begin(), x.end()), y);
    const HistoryIndex now = history_.size() - 1;
    classes_.insert(y);

    if (energy_ <= 0.0) {
      hypotheses_.clear();
      energy_ = 0.0;
      obs.action = Action::Death;
      return obs;
    }

    const bool covered = std::any_of(hypotheses_.begin(), hypotheses_.end(),
                                     [&](const Hypothesis& h) { return h.outcome == y; });
    if (!covered) {
      if (hypotheses_.size() < cfg_.max_rules) {
        auto cand = make_genesis(x, y, now);
        commit(std::move(cand));
        obs.action = Action::CoverageGenesis;
        obs.action_cost = cfg_.genesis_cost;
      }
      return obs;
    }

    if (inf.winner) {
      parametric_update(x, y);
      Hypothesis& w = *find_mut(*inf.winner);
      const bool right = w.outcome == y;
      update_reliability(w, right, cfg_.reliability_rate);
      record_memory(w, now, right);
    }

    if (structure_open()) {
      auto cands = build_candidates(x, y, inf.winner, now);
      std::size_t chosen = 0;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        obs.candidates.push_back({cands[i].action, cands[i].objective, cands[i].cost});
        if (cands[i].objective < cands[chosen].objective) chosen = i;
      }
      obs.freeze_condition = chosen == 0;
      obs.action = cands[chosen].action;
      obs.action_cost = cands[chosen].cost;
      if (chosen != 0) commit(std::move(cands[chosen]));
    }

    if (!frozen_ &&
        (steps_ >= cfg_.max_structural_steps || structural_moves_ >= cfg_.max_structural_moves) &&
        coverage_complete()) {
      frozen_ = true;
      freeze_step_ = steps_;
      if (cfg_.compress_on_freeze) compress(hypotheses_, registry_);
    }
    return obs;
  }

  /// Diagnostic: whether noop is J-optimal among the structural actions that
  /// would be available for (x, y) in the current state. Does not mutate.
  bool check_freeze_condition(std::span<const double> x, ClassLabel y) const {
    check_dim(x);
    Engine scratch = *this;
    scratch.history_.emplace_back(Vector(x.begin(), x.end()), y);
    scratch.classes_.insert(y);
    const auto inf = scratch.infer(x);
    auto cands = scratch.build_candidates(x, y, inf.winner, scratch.history_.size() - 1);
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (cands[i].objective < cands[0].objective) return false;
    return true;
  }

  /// Order-sensitive hash of the complete mutable state.
  std::uint64_t fingerprint() const {
    Fnv h;
    h.add(energy_);
    h.add(steps_);
    h.add(structural_moves_);
    h.add(last_structural_step_);
    h.add(static_cast<std::uint64_t>(frozen_));
    h.add(next_id_);
    for (ClassLabel k : classes_) h.add(static_cast<std::uint64_t>(k));
    for (const auto& [x, y] : history_) {
      for (double v : x) h.add(v);
      h.add(static_cast<std::uint64_t>(y));
    }
    for (const auto& hyp : hypotheses_) {
      h.add(hyp.id);
      h.add_text(render(hyp.form));
      h.add(static_cast<std::uint64_t>(hyp.outcome));
      h.add(hyp.reliability);
      h.add(hyp.weight);
      for (auto i : hyp.positives) h.add(i);
      h.add(std::uint64_t{~0ULL});
      for (auto i : hyp.negatives) h.add(i);
    }
    for (std::size_t a = 0; a < params_.size(); ++a) {
      for (double v : params_.extended(a)) h.add(v);
      for (double v : params_.fisher(a)) h.add(v);
    }
    for (const auto& [k, f] : registry_.entries()) {
      h.add(k);
      h.add_text(render(f));
    }
    std::ostringstream rng_state;
    rng_state << rng_;
    h.add_text(rng_state.str());
    return h.value;
  }

 private:
  struct Fnv {
    std::uint64_t value = 1469598103934665603ULL;
    void add_bytes(const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        value ^= b[i];
        value *= 1099511628211ULL;
      }
    }
    void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
    void add(double v) { add_bytes(&v, sizeof v); }
    void add_text(const std::string& s) { add_bytes(s.data(), s.size()); }
  };

  struct Successor {
    Action action = Action::Noop;
    double cost = 0.0;
    double objective = 0.0;
    std::vector<Hypothesis> hypotheses;  // new entries carry placeholder ids
    std::optional<ParamStore> params;    // set when an atom was allocated
    std::size_t replaced = 0;            // wedge: position of the shrunk hypothesis
  };

  void check_dim(std::span<const double> x) const {
    if (x.size() != params_.dim())
      throw DimensionError("input has dimension " + std::to_string(x.size()) + ", engine expects " +
                           std::to_string(params_.dim()));
  }

  Hypothesis* find_mut(HypothesisId id) {
    for (auto& h : hypotheses_)
      if (h.id == id) return &h;
    return nullptr;
  }

  bool structure_open() const {
    return !frozen_ && steps_ < cfg_.max_structural_steps &&
           structural_moves_ < cfg_.max_structural_moves &&
           steps_ - last_structural_step_ >= cfg_.cooldown;
  }

  double draw_weight() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return 1.0 + 0.05 * unit(rng_);
  }

  /// Softmax cross-entropy gradient pushed through every hypothesis form.
  void parametric_update(std::span<const double> x, ClassLabel y) {
    const auto inf = infer(x);
    GradMap grads;
    for (const auto& h : hypotheses_) {
      const double residual = inf.probabilities.at(h.outcome) - (h.outcome == y ? 1.0 : 0.0);
      add_grad_soft(h.form, x, params_, registry_, residual * effective_weight(h), grads);
    }
    params_.fisher_update(grads, cfg_.natgrad.fisher_decay);
    params_.natural_step(grads, cfg_.natgrad);
  }

  Successor make_genesis(std::span<const double> x, ClassLabel y, HistoryIndex now) {
    Successor s;
    s.action = Action::Genesis;
    s.cost = cfg_.genesis_cost;
    auto init = genesis_atom_init(rng_, x);
    s.params = params_;
    const AtomId atom = s.params->alloc_atom(init.weights, init.bias);
    Hypothesis h;
    h.form = Form::atom(atom);
    h.outcome = y;
    h.reliability = 0.5;
    h.positives.push_back(now);
    h.weight = draw_weight();
    s.hypotheses = hypotheses_;
    s.hypotheses.push_back(std::move(h));
    return s;
  }

  Successor make_wedge(const Hypothesis& winner, std::span<const double> x, ClassLabel y,
                       HistoryIndex now) {
    Successor s;
    s.action = Action::Wedge;
    s.cost = cfg_.wedge_cost;
    std::vector<Vector> pos, neg;
    for (auto i : winner.positives) pos.push_back(history_[i].first);
    std::set<HistoryIndex> neg_idx(winner.negatives.begin(), winner.negatives.end());
    neg_idx.insert(now);
    for (auto i : neg_idx) neg.push_back(history_[i].first);
    if (pos.empty()) pos.emplace_back(x.begin(), x.end());
    const auto sep = fit_separator(pos, neg, cfg_.ridge);
    s.params = params_;
    const AtomId atom = s.params->alloc_atom(sep.weights, sep.bias);

    s.hypotheses = hypotheses_;
    for (std::size_t i = 0; i < s.hypotheses.size(); ++i) {
      if (s.hypotheses[i].id == winner.id) {
        s.replaced = i;
        s.hypotheses[i].form = conj(winner.form, Form::atom(atom));
      }
    }
    Hypothesis exc;
    exc.form = conj_not(winner.form, Form::atom(atom));
    exc.outcome = y;
    exc.reliability = 0.5;
    exc.positives.push_back(now);
    exc.weight = draw_weight();
    s.hypotheses.push_back(std::move(exc));
    return s;
  }

  /// Noop first, then at most one structural alternative. Unaffordable
  /// alternatives are dropped.
  std::vector<Successor> build_candidates(std::span<const double> x, ClassLabel y,
                                          std::optional<HypothesisId> winner, HistoryIndex now) {
    std::vector<Successor> out;
    Successor noop;
    noop.objective =
        evaluate_objective(hypotheses_, hypotheses_, params_, registry_, x, y, classes_, 0.0, cfg_);
    out.push_back(std::move(noop));

    const bool room = hypotheses_.size() < cfg_.max_rules;
    std::optional<Successor> alt;
    if (!winner) {
      if (room) alt = make_genesis(x, y, now);
    } else if (const Hypothesis* w = find(*winner);
               w != nullptr && w->outcome != y && room &&
               w->positives.size() >= cfg_.min_positives &&
               w->negatives.size() >= cfg_.min_negatives) {
      alt = make_wedge(*w, x, y, now);
    }
    if (alt && alt->cost <= energy_) {
      alt->objective = evaluate_objective(hypotheses_, alt->hypotheses, *alt->params, registry_, x,
                                          y, classes_, alt->cost, cfg_);
      out.push_back(std::move(*alt));
    }
    return out;
  }

  void commit(Successor s) {
    if (s.action == Action::Wedge) {
      s.hypotheses[s.replaced].id = next_id_++;
      s.hypotheses.back().id = next_id_++;
    } else {
      s.hypotheses.back().id = next_id_++;
    }
    hypotheses_ = std::move(s.hypotheses);
    params_ = std::move(*s.params);
    energy_ -= s.cost;
    ++structural_moves_;
    last_structural_step_ = steps_;
  }

  EngineConfig cfg_;
  std::vector<Hypothesis> hypotheses_;
  ParamStore params_;
  Registry registry_;
  double energy_;
  std::vector<std::pair<Vector, ClassLabel>> history_;
  std::size_t steps_ = 0;
  std::size_t structural_moves_ = 0;
  std::size_t last_structural_step_ = 0;
  bool frozen_ = false;
  std::optional<std::size_t> freeze_step_;
  std::set<ClassLabel> classes_;
  HypothesisId next_id_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace distinction
