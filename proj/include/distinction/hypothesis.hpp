#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "distinction/form.hpp"

namespace distinction {

using HypothesisId = std::size_t;
using ClassLabel = int;
using HistoryIndex = std::size_t;

/// A form bound to the class it votes for.
struct Hypothesis {
  static constexpr std::size_t kMemoryCap = 64;

  HypothesisId id = 0;
  Form form;
  ClassLabel outcome = 0;
  double reliability = 0.5;
  std::deque<HistoryIndex> positives;  // history rows where this hypothesis won and was right
  std::deque<HistoryIndex> negatives;  // ... and was wrong
  double weight = 1.0;
};

/// complexity + 5 (1 - reliability). Lower wins.
inline double tropical_cost(const Hypothesis& h, const Registry& registry) {
  return complexity(h.form, registry) + 5.0 * (1.0 - h.reliability);
}

inline void update_reliability(Hypothesis& h, bool correct, double rate) {
  h.reliability = (1.0 - rate) * h.reliability + rate * (correct ? 1.0 : 0.0);
  if (h.reliability < 0.0) h.reliability = 0.0;
  if (h.reliability > 1.0) h.reliability = 1.0;
}

inline double effective_weight(const Hypothesis& h) {
  return h.weight * (0.5 + 0.5 * h.reliability);
}

inline void record_memory(Hypothesis& h, HistoryIndex idx, bool positive) {
  auto& m = positive ? h.positives : h.negatives;
  m.push_back(idx);
  if (m.size() > Hypothesis::kMemoryCap) m.pop_front();
}

/// Shares repeated subforms between hypotheses through the registry.
/// Evaluation is unchanged; ids, outcomes and reliabilities are untouched.
inline std::size_t compress(std::vector<Hypothesis>& hypotheses, Registry& registry) {
  std::vector<Form> forms;
  forms.reserve(hypotheses.size());
  for (const auto& h : hypotheses) forms.push_back(h.form);
  const std::size_t added = compress_forms(forms, registry);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) hypotheses[i].form = forms[i];
  return added;
}

inline double total_complexity(const std::vector<Hypothesis>& hypotheses, const Registry& registry) {
  double c = 0.0;
  for (const auto& h : hypotheses) c += complexity(h.form, registry);
  return c;
}

}  // namespace distinction
