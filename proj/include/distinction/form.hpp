#pragma once

// Laws-of-Form expressions with probabilistic semantics.
//
//   0        void        eval 0
//   ()       mark        eval 1
//   A<i>     atom        sigmoid(theta_i . x + b_i)
//   ~(f)     cross       1 - eval(f)
//   |[f,..]  call        noisy-OR: 1 - prod(1 - eval(g))
//   @<k>     reentry     eval(registry[k]) one level deeper
//
// Forms are immutable trees with shared structure; copying a Form is cheap.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "distinction/manifold.hpp"

namespace distinction {

using RegistryKey = std::size_t;

class ResolutionError : public std::out_of_range {
 public:
  explicit ResolutionError(RegistryKey k)
      : std::out_of_range("reentry key @" + std::to_string(k) + " is not in the registry") {}
};

class FormParseError : public std::runtime_error {
 public:
  FormParseError(std::string_view text, std::size_t pos, const std::string& what)
      : std::runtime_error("cannot parse form at offset " + std::to_string(pos) + " of '" +
                           std::string(text) + "': " + what) {}
};

class Form {
 public:
  enum class Kind { Void, Mark, Atom, Cross, Call, ReEntry };

  Form() : Form(Kind::Void, 0, {}) {}

  static Form void_form() { return Form(); }
  static Form mark() { return Form(Kind::Mark, 0, {}); }
  static Form atom(AtomId id) { return Form(Kind::Atom, id, {}); }
  static Form cross(Form child) { return Form(Kind::Cross, 0, {std::move(child)}); }
  static Form call(std::vector<Form> children) {
    if (children.empty()) throw std::invalid_argument("a call needs at least one child");
    return Form(Kind::Call, 0, std::move(children));
  }
  static Form reentry(RegistryKey key) { return Form(Kind::ReEntry, key, {}); }

  Kind kind() const { return node_->kind; }
  AtomId atom_id() const { return node_->index; }
  RegistryKey key() const { return node_->index; }
  const Form& child() const { return node_->children.front(); }
  std::span<const Form> children() const { return node_->children; }

  friend bool operator==(const Form& a, const Form& b) {
    if (a.node_ == b.node_) return true;
    if (a.kind() != b.kind() || a.node_->index != b.node_->index) return false;
    return std::equal(a.node_->children.begin(), a.node_->children.end(),
                      b.node_->children.begin(), b.node_->children.end());
  }

 private:
  struct Node {
    Kind kind;
    std::size_t index;
    std::vector<Form> children;
  };

  Form(Kind k, std::size_t index, std::vector<Form> children)
      : node_(std::make_shared<const Node>(Node{k, index, std::move(children)})) {}

  std::shared_ptr<const Node> node_;
};

/// f AND g, written with cross and call only: ~(|[~f, ~g]).
inline Form conj(Form f, Form g) {
  return Form::cross(Form::call({Form::cross(std::move(f)), Form::cross(std::move(g))}));
}

/// f AND NOT g: ~(|[~f, g]).
inline Form conj_not(Form f, Form g) {
  return Form::cross(Form::call({Form::cross(std::move(f)), std::move(g)}));
}

/// Storage for shared subforms referenced through ReEntry.
class Registry {
 public:
  static constexpr std::size_t kDefaultMaxDepth = 8;

  explicit Registry(std::size_t max_depth = kDefaultMaxDepth) : max_depth_(max_depth) {}

  std::size_t max_depth() const { return max_depth_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(RegistryKey k) const { return entries_.count(k) != 0; }

  const Form& at(RegistryKey k) const {
    auto it = entries_.find(k);
    if (it == entries_.end()) throw ResolutionError(k);
    return it->second;
  }

  RegistryKey add(Form f) {
    const RegistryKey k = next_key_++;
    entries_.emplace(k, std::move(f));
    return k;
  }

  const std::map<RegistryKey, Form>& entries() const { return entries_; }

  bool operator==(const Registry&) const = default;

 private:
  std::size_t max_depth_;
  RegistryKey next_key_ = 0;
  std::map<RegistryKey, Form> entries_;
};

/// Number of primitive distinctions. A reentry counts 0.5 and is not expanded.
inline double complexity(const Form& f, const Registry& registry) {
  switch (f.kind()) {
    case Form::Kind::Void:
    case Form::Kind::Mark:
      return 0.0;
    case Form::Kind::Atom:
      return 1.0;
    case Form::Kind::Cross:
      return 1.0 + complexity(f.child(), registry);
    case Form::Kind::Call: {
      double c = 0.0;
      for (const auto& g : f.children()) c += complexity(g, registry);
      return c;
    }
    case Form::Kind::ReEntry:
      if (!registry.contains(f.key())) throw ResolutionError(f.key());
      return 0.5;
  }
  return 0.0;
}

inline double eval_soft(const Form& f, std::span<const double> x, const ParamStore& params,
                        const Registry& registry, std::size_t depth = 0) {
  if (depth > registry.max_depth()) return 0.5;
  switch (f.kind()) {
    case Form::Kind::Void:
      return 0.0;
    case Form::Kind::Mark:
      return 1.0;
    case Form::Kind::Atom:
      return params.activation(f.atom_id(), x);
    case Form::Kind::Cross:
      return 1.0 - eval_soft(f.child(), x, params, registry, depth);
    case Form::Kind::Call: {
      double none = 1.0;
      for (const auto& g : f.children()) none *= 1.0 - eval_soft(g, x, params, registry, depth);
      return 1.0 - none;
    }
    case Form::Kind::ReEntry:
      return eval_soft(registry.at(f.key()), x, params, registry, depth + 1);
  }
  return 0.0;
}

namespace detail {

inline void accumulate_grad(const Form& f, std::span<const double> x, const ParamStore& params,
                            const Registry& registry, std::size_t depth, double scale,
                            GradMap& out) {
  if (depth > registry.max_depth()) return;
  switch (f.kind()) {
    case Form::Kind::Void:
    case Form::Kind::Mark:
      return;
    case Form::Kind::Atom: {
      const AtomId id = f.atom_id();
      const double p = params.activation(id, x);
      const double s = scale * p * (1.0 - p);
      auto& g = out[id];
      if (g.empty()) g.assign(x.size() + 1, 0.0);
      for (std::size_t j = 0; j < x.size(); ++j) g[j] += s * x[j];
      g[x.size()] += s;
      return;
    }
    case Form::Kind::Cross:
      accumulate_grad(f.child(), x, params, registry, depth, -scale, out);
      return;
    case Form::Kind::Call: {
      // d(1 - prod(1-p_g))/dp_i = prod_{j != i}(1-p_j). Computed directly from
      // prefix/suffix products so a saturated child (p = 1) needs no special case.
      const auto kids = f.children();
      const std::size_t n = kids.size();
      std::vector<double> off(n);
      for (std::size_t i = 0; i < n; ++i)
        off[i] = 1.0 - eval_soft(kids[i], x, params, registry, depth);
      std::vector<double> suffix(n + 1, 1.0);
      for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * off[i];
      double prefix = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        accumulate_grad(kids[i], x, params, registry, depth, scale * prefix * suffix[i + 1], out);
        prefix *= off[i];
      }
      return;
    }
    case Form::Kind::ReEntry:
      accumulate_grad(registry.at(f.key()), x, params, registry, depth + 1, scale, out);
      return;
  }
}

}  // namespace detail

/// Gradient of eval_soft with respect to every atom's [w; b] reachable in f.
inline GradMap grad_soft(const Form& f, std::span<const double> x, const ParamStore& params,
                         const Registry& registry) {
  if (x.size() != params.dim())
    throw DimensionError("input has dimension " + std::to_string(x.size()) + ", store expects " +
                         std::to_string(params.dim()));
  GradMap out;
  detail::accumulate_grad(f, x, params, registry, 0, 1.0, out);
  return out;
}

/// Adds scale * grad_soft(f) into out.
inline void add_grad_soft(const Form& f, std::span<const double> x, const ParamStore& params,
                          const Registry& registry, double scale, GradMap& out) {
  detail::accumulate_grad(f, x, params, registry, 0, scale, out);
}

inline void collect_atoms(const Form& f, const Registry& registry, std::set<AtomId>& out,
                          std::size_t depth = 0) {
  if (depth > registry.max_depth()) return;
  switch (f.kind()) {
    case Form::Kind::Atom:
      out.insert(f.atom_id());
      return;
    case Form::Kind::Cross:
    case Form::Kind::Call:
      for (const auto& g : f.children()) collect_atoms(g, registry, out, depth);
      return;
    case Form::Kind::ReEntry:
      collect_atoms(registry.at(f.key()), registry, out, depth + 1);
      return;
    default:
      return;
  }
}

// ---------------------------------------------------------------------------
// Text

inline std::string render(const Form& f) {
  switch (f.kind()) {
    case Form::Kind::Void:
      return "0";
    case Form::Kind::Mark:
      return "()";
    case Form::Kind::Atom:
      return "A" + std::to_string(f.atom_id());
    case Form::Kind::Cross:
      return "~(" + render(f.child()) + ")";
    case Form::Kind::Call: {
      std::string s = "|[";
      bool first = true;
      for (const auto& g : f.children()) {
        if (!first) s += ", ";
        s += render(g);
        first = false;
      }
      return s + "]";
    }
    case Form::Kind::ReEntry:
      return "@" + std::to_string(f.key());
  }
  return {};
}

namespace detail {

// Precedence: 3 atomic / negation, 2 conjunction, 1 disjunction.
struct Alias {
  std::string text;
  int prec;
};

inline std::string wrap(const Alias& a, int min_prec) {
  return a.prec < min_prec ? "(" + a.text + ")" : a.text;
}

Alias alias_of(const Form& f);

inline Alias negated(const Form& f) {
  if (f.kind() == Form::Kind::Cross) return alias_of(f.child());
  return {"¬" + wrap(alias_of(f), 3), 3};
}

inline Alias alias_of(const Form& f) {
  switch (f.kind()) {
    case Form::Kind::Void:
      return {"⊥", 3};
    case Form::Kind::Mark:
      return {"⊤", 3};
    case Form::Kind::Atom:
    case Form::Kind::ReEntry:
      return {render(f), 3};
    case Form::Kind::Cross: {
      const Form& inner = f.child();
      if (inner.kind() == Form::Kind::Call && inner.children().size() > 1) {
        std::string s;
        for (const auto& g : inner.children()) {
          if (!s.empty()) s += " ∧ ";
          s += wrap(negated(g), 2);
        }
        return {s, 2};
      }
      return negated(inner);
    }
    case Form::Kind::Call: {
      if (f.children().size() == 1) return alias_of(f.children().front());
      std::string s;
      for (const auto& g : f.children()) {
        if (!s.empty()) s += " ∨ ";
        s += wrap(alias_of(g), 1);
      }
      return {s, 1};
    }
  }
  return {};
}

}  // namespace detail

/// Logical alias using conjunction/negation, when it reads differently from
/// the raw syntax. Best-effort pattern matching over cross/call nesting.
inline std::optional<std::string> render_alias(const Form& f) {
  auto a = detail::alias_of(f);
  if (a.text == render(f)) return std::nullopt;
  return a.text;
}

/// Inverse of render().
inline Form parse_form(std::string_view text) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> FormParseError {
    return FormParseError(text, pos, what);
  };
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto expect = [&](std::string_view tok) {
    skip_ws();
    if (text.substr(pos, tok.size()) != tok) throw fail("expected '" + std::string(tok) + "'");
    pos += tok.size();
  };
  auto number = [&]() -> std::size_t {
    const std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (start == pos) throw fail("expected an index");
    return std::stoul(std::string(text.substr(start, pos - start)));
  };
  auto parse = [&](auto&& self) -> Form {
    skip_ws();
    if (pos >= text.size()) throw fail("unexpected end of input");
    const char c = text[pos];
    if (c == '0') {
      ++pos;
      return Form::void_form();
    }
    if (c == '(') {
      expect("()");
      return Form::mark();
    }
    if (c == 'A') {
      ++pos;
      return Form::atom(number());
    }
    if (c == '@') {
      ++pos;
      return Form::reentry(number());
    }
    if (c == '~') {
      expect("~(");
      Form inner = self(self);
      expect(")");
      return Form::cross(std::move(inner));
    }
    if (c == '|') {
      expect("|[");
      std::vector<Form> kids;
      kids.push_back(self(self));
      skip_ws();
      while (pos < text.size() && text[pos] == ',') {
        ++pos;
        kids.push_back(self(self));
        skip_ws();
      }
      expect("]");
      return Form::call(std::move(kids));
    }
    throw fail(std::string("unexpected character '") + c + "'");
  };
  Form f = parse(parse);
  skip_ws();
  if (pos != text.size()) throw fail("trailing input");
  return f;
}

// ---------------------------------------------------------------------------
// Compression

namespace detail {

inline void collect_subforms(const Form& f, std::map<std::string, Form>& out) {
  out.emplace(render(f), f);
  for (const auto& g : f.children()) collect_subforms(g, out);
}

inline Form replace_subform(const Form& f, const Form& target, const Form& with) {
  if (f == target) return with;
  switch (f.kind()) {
    case Form::Kind::Cross:
      return Form::cross(replace_subform(f.child(), target, with));
    case Form::Kind::Call: {
      std::vector<Form> kids;
      kids.reserve(f.children().size());
      for (const auto& g : f.children()) kids.push_back(replace_subform(g, target, with));
      return Form::call(std::move(kids));
    }
    default:
      return f;
  }
}

}  // namespace detail

/// Extracts subforms of complexity >= 2 that appear in at least two of the
/// given forms into the registry, largest first, and rewrites the forms to
/// reference them. Returns the number of registry entries added.
inline std::size_t compress_forms(std::vector<Form>& forms, Registry& registry) {
  std::size_t added = 0;
  for (;;) {
    std::map<std::string, std::pair<Form, std::size_t>> counts;
    for (const auto& f : forms) {
      std::map<std::string, Form> subs;
      detail::collect_subforms(f, subs);
      for (auto& [text, sub] : subs) {
        auto [it, inserted] = counts.try_emplace(text, sub, 0);
        ++it->second.second;
      }
    }
    const Form* best = nullptr;
    double best_c = 0.0;
    for (const auto& [text, entry] : counts) {
      const auto& [sub, n] = entry;
      if (n < 2 || sub.kind() == Form::Kind::ReEntry) continue;
      const double c = complexity(sub, registry);
      // map iteration is lexicographic, so ties resolve to the smallest text
      if (c >= 2.0 && c > best_c) {
        best = &sub;
        best_c = c;
      }
    }
    if (best == nullptr) return added;
    const Form target = *best;
    const Form ref = Form::reentry(registry.add(target));
    for (auto& f : forms) f = detail::replace_subform(f, target, ref);
    ++added;
  }
}

}  // namespace distinction
