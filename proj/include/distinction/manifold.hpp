#pragma once

// Parameter storage for atoms and the information-geometric update rules
// applied to it: diagonal Fisher EMA, preconditioned gradient steps, and the
// ridge separator fit used when a hypothesis is split.

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace distinction {

using AtomId = std::size_t;
using Vector = std::vector<double>;

/// Gradient per atom: d weight entries followed by the bias entry.
using GradMap = std::map<AtomId, Vector>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownAtomError : public std::out_of_range {
 public:
  explicit UnknownAtomError(AtomId id)
      : std::out_of_range("atom " + std::to_string(id) + " is not allocated") {}
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct NatGradConfig {
  double learning_rate = 0.02;
  double fisher_decay = 0.95;
  double epsilon = 1e-8;
  // Preconditioner is g / (F^exponent + eps). 0.5 is the RMSProp-style form,
  // 1.0 the textbook inverse Fisher.
  double fisher_exponent = 0.5;
  // When false the step is plain SGD: theta -= eta * g.
  bool precondition = true;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!(fisher_decay > 0.0 && fisher_decay < 1.0))
      throw std::invalid_argument("fisher decay must lie in (0,1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  }
};

/// Dense, append-only table of atom parameters. Atom i evaluates to
/// sigmoid(weights(i) . x + bias(i)).
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return atoms_.size(); }

  AtomId alloc_atom(std::span<const double> w, double b) {
    if (w.size() != dim_)
      throw DimensionError("atom weight has dimension " + std::to_string(w.size()) +
                           ", store expects " + std::to_string(dim_));
    Atom a;
    a.theta.assign(w.begin(), w.end());
    a.theta.push_back(b);
    a.fisher.assign(dim_ + 1, 1.0);
    atoms_.push_back(std::move(a));
    return atoms_.size() - 1;
  }

  std::span<const double> weights(AtomId id) const {
    return std::span<const double>(at(id).theta).first(dim_);
  }
  double bias(AtomId id) const { return at(id).theta[dim_]; }
  /// Extended vector [w; b].
  std::span<const double> extended(AtomId id) const { return at(id).theta; }
  std::span<const double> fisher(AtomId id) const { return at(id).fisher; }

  void set_params(AtomId id, std::span<const double> w, double b) {
    if (w.size() != dim_) throw DimensionError("weight dimension mismatch");
    auto& a = at(id);
    std::copy(w.begin(), w.end(), a.theta.begin());
    a.theta[dim_] = b;
  }

  double pre_activation(AtomId id, std::span<const double> x) const {
    if (x.size() != dim_)
      throw DimensionError("input has dimension " + std::to_string(x.size()) +
                           ", store expects " + std::to_string(dim_));
    const auto& t = at(id).theta;
    double z = t[dim_];
    for (std::size_t j = 0; j < dim_; ++j) z += t[j] * x[j];
    return z;
  }

  double activation(AtomId id, std::span<const double> x) const {
    return sigmoid(pre_activation(id, x));
  }

  /// F <- beta F + (1-beta) g^2 on every coordinate present in grads.
  void fisher_update(const GradMap& grads, double beta) {
    for (const auto& [id, g] : grads) {
      auto& a = at(id);
      check_grad(g);
      for (std::size_t j = 0; j <= dim_; ++j)
        a.fisher[j] = beta * a.fisher[j] + (1.0 - beta) * g[j] * g[j];
    }
  }

  void natural_step(const GradMap& grads, const NatGradConfig& cfg) {
    for (const auto& [id, g] : grads) {
      auto& a = at(id);
      check_grad(g);
      for (std::size_t j = 0; j <= dim_; ++j) {
        const double scale =
            cfg.precondition ? 1.0 / (std::pow(a.fisher[j], cfg.fisher_exponent) + cfg.epsilon)
                             : 1.0;
        a.theta[j] -= cfg.learning_rate * g[j] * scale;
      }
    }
  }

  bool operator==(const ParamStore&) const = default;

 private:
  struct Atom {
    Vector theta;   // d weights then bias
    Vector fisher;  // d+1 diagonal entries
    bool operator==(const Atom&) const = default;
  };

  Atom& at(AtomId id) {
    if (id >= atoms_.size()) throw UnknownAtomError(id);
    return atoms_[id];
  }
  const Atom& at(AtomId id) const {
    if (id >= atoms_.size()) throw UnknownAtomError(id);
    return atoms_[id];
  }
  void check_grad(const Vector& g) const {
    if (g.size() != dim_ + 1) throw DimensionError("gradient must have d+1 entries");
  }

  std::size_t dim_ = 0;
  std::vector<Atom> atoms_;
};

struct AtomInit {
  Vector weights;
  double bias = 0.0;
};

/// Random unit direction through x, offset so that w.x + b = 0.1.
template <class Rng>
AtomInit genesis_atom_init(Rng& rng, std::span<const double> x) {
  if (x.empty()) throw DimensionError("genesis needs d >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  AtomInit init;
  init.weights.resize(x.size());
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& w : init.weights) {
      w = normal(rng);
      norm += w * w;
    }
    norm = std::sqrt(norm);
  } while (!(norm > 0.0));
  double dot = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    init.weights[j] /= norm;
    dot += init.weights[j] * x[j];
  }
  init.bias = -dot + 0.1;
  return init;
}

/// Ridge least squares on [x;1] with targets +1 / -1. The ridge term covers
/// the bias coordinate too.
inline AtomInit fit_separator(std::span<const Vector> positives, std::span<const Vector> negatives,
                              double ridge) {
  if (positives.empty() || negatives.empty())
    throw std::invalid_argument("fit_separator needs examples of both classes");
  const auto d = static_cast<Eigen::Index>(positives.front().size());
  Eigen::MatrixXd gram = ridge * Eigen::MatrixXd::Identity(d + 1, d + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd row(d + 1);
  auto accumulate = [&](const Vector& x, double target) {
    if (static_cast<Eigen::Index>(x.size()) != d) throw DimensionError("separator inputs differ in dimension");
    for (Eigen::Index j = 0; j < d; ++j) row[j] = x[static_cast<std::size_t>(j)];
    row[d] = 1.0;
    gram.noalias() += row * row.transpose();
    rhs += target * row;
  };
  for (const auto& x : positives) accumulate(x, 1.0);
  for (const auto& x : negatives) accumulate(x, -1.0);
  const Eigen::VectorXd v = gram.ldlt().solve(rhs);
  AtomInit out;
  out.weights.assign(v.data(), v.data() + d);
  out.bias = v[d];
  return out;
}

}  // namespace distinction
