#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "distinction/form.hpp"
#include "distinction/hypothesis.hpp"
#include "oracles.hpp"

using namespace distinction;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Store with d=1 whose atoms have zero weight, so atom i evaluates to probs[i]
// everywhere.
ParamStore constant_atoms(std::initializer_list<double> probs) {
  ParamStore s(1);
  for (double p : probs) s.alloc_atom(Vector{0.0}, logit(p));
  return s;
}

}  // namespace

TEST(Complexity, Primitives) {
  Registry reg;
  EXPECT_EQ(complexity(Form::void_form(), reg), 0.0);
  EXPECT_EQ(complexity(Form::mark(), reg), 0.0);
  EXPECT_EQ(complexity(Form::atom(3), reg), 1.0);
  EXPECT_EQ(complexity(Form::cross(Form::cross(Form::atom(0))), reg), 3.0);
}

TEST(Complexity, ReEntryCountsHalfWithoutExpanding) {
  Registry reg;
  const auto k = reg.add(Form::cross(Form::cross(Form::cross(Form::atom(9)))));
  const Form f = Form::call({Form::atom(0), Form::cross(Form::atom(1)), Form::reentry(k)});
  EXPECT_DOUBLE_EQ(complexity(f, reg), 3.5);
}

TEST(Complexity, UnresolvedReEntryThrows) {
  Registry reg;
  EXPECT_THROW(complexity(Form::reentry(4), reg), ResolutionError);
}

TEST(Complexity, CallIsAdditiveOnRandomForms) {
  std::mt19937_64 rng(7);
  Registry reg;
  oracle::FormGen gen(rng, 5);
  for (int i = 0; i < 200; ++i) {
    std::vector<Form> kids{gen(3), gen(3), gen(2)};
    double sum = 0.0;
    for (const auto& k : kids) sum += complexity(k, reg);
    EXPECT_EQ(complexity(Form::call(kids), reg), sum);
  }
}

TEST(Form, CallRequiresChildren) { EXPECT_THROW(Form::call({}), std::invalid_argument); }

TEST(EvalSoft, Constants) {
  ParamStore s(2);
  Registry reg;
  const Vector x{0.3, -1.0};
  EXPECT_EQ(eval_soft(Form::void_form(), x, s, reg), 0.0);
  EXPECT_EQ(eval_soft(Form::mark(), x, s, reg), 1.0);
  EXPECT_EQ(eval_soft(Form::cross(Form::mark()), x, s, reg), 0.0);
}

TEST(EvalSoft, NoisyOrOfTwoHalves) {
  auto s = constant_atoms({0.5, 0.5});
  Registry reg;
  const Vector x{1.0};
  EXPECT_NEAR(eval_soft(Form::call({Form::atom(0), Form::atom(1)}), x, s, reg), 0.75, 1e-15);
}

TEST(EvalSoft, AtomIsSigmoidOfAffine) {
  ParamStore s(2);
  s.alloc_atom(Vector{0.5, -2.0}, 0.25);
  Registry reg;
  const Vector x{1.0, 0.5};
  EXPECT_NEAR(eval_soft(Form::atom(0), x, s, reg), 1.0 / (1.0 + std::exp(-(0.5 - 1.0 + 0.25))), 1e-15);
}

TEST(EvalSoft, DimensionMismatchThrows) {
  ParamStore s(2);
  s.alloc_atom(Vector{1.0, 1.0}, 0.0);
  Registry reg;
  const Vector x{1.0};
  EXPECT_THROW(eval_soft(Form::atom(0), x, s, reg), DimensionError);
  EXPECT_THROW(grad_soft(Form::atom(0), x, s, reg), DimensionError);
}

TEST(EvalSoft, UnresolvedReEntryThrows) {
  ParamStore s(1);
  Registry reg;
  const Vector x{1.0};
  EXPECT_THROW(eval_soft(Form::reentry(0), x, s, reg), ResolutionError);
}

TEST(EvalSoft, DepthGuardReturnsHalf) {
  ParamStore s(1);
  // @0 -> @1 -> @2 -> @3 -> mark; depth 3 > 2 is cut off.
  Registry chain(2);
  chain.add(Form::reentry(1));
  chain.add(Form::reentry(2));
  chain.add(Form::reentry(3));
  chain.add(Form::mark());
  const Vector x{0.0};
  EXPECT_EQ(eval_soft(Form::reentry(0), x, s, chain), 0.5);
  EXPECT_EQ(eval_soft(Form::reentry(2), x, s, chain), 1.0);
}

TEST(EvalSoft, SelfReferenceTerminates) {
  ParamStore s(1);
  Registry reg;
  const auto k = reg.add(Form::cross(Form::reentry(0)));
  ASSERT_EQ(k, 0u);
  const Vector x{0.0};
  const double v = eval_soft(Form::reentry(0), x, s, reg);
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
  EXPECT_TRUE(grad_soft(Form::reentry(0), x, s, reg).empty());
}

TEST(EvalSoftProperty, RangeAndCondensation) {
  std::mt19937_64 rng(11);
  const std::size_t d = 3;
  for (int trial = 0; trial < 500; ++trial) {
    auto store = oracle::random_store(rng, d, 4, 2.0);
    Registry reg;
    oracle::FormGen base(rng, 4);
    reg.add(base(2));
    reg.add(base(3));
    oracle::FormGen gen(rng, 4, reg.size());
    const Form f = gen(5);
    const auto x = oracle::random_input(rng, d, 2.0);
    const double v = eval_soft(f, x, store, reg);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(eval_soft(Form::cross(Form::cross(f)), x, store, reg), v, 1e-12);
  }
}

TEST(EvalSoftProperty, CancellationInSharpLimit) {
  std::mt19937_64 rng(12);
  const std::size_t d = 3;
  Registry reg;
  int checked = 0;
  while (checked < 300) {
    auto store = oracle::random_store(rng, d, 1);
    const auto x = oracle::random_input(rng, d);
    if (std::abs(store.pre_activation(0, x)) < 0.01) continue;
    Vector w(store.weights(0).begin(), store.weights(0).end());
    for (auto& v : w) v *= 1e3;
    store.set_params(0, w, store.bias(0) * 1e3);
    const Form a = Form::atom(0);
    EXPECT_GE(eval_soft(Form::call({a, Form::cross(a)}), x, store, reg), 1.0 - 1e-3);
    ++checked;
  }
}

TEST(EvalSoftProperty, NoisyOrIsMonotoneInEachChild) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  Registry reg;
  const Vector x{0.0};
  for (int trial = 0; trial < 300; ++trial) {
    const double a = u(rng), b = u(rng), c = u(rng);
    const double a_up = std::min(0.999, a + 0.5 * u(rng));
    auto lo = constant_atoms({a, b, c});
    auto hi = constant_atoms({a_up, b, c});
    const Form f = Form::call({Form::atom(0), Form::atom(1), Form::atom(2)});
    EXPECT_LE(eval_soft(f, x, lo, reg), eval_soft(f, x, hi, reg) + 1e-15);
  }
}

TEST(GradSoft, ConstantFormsHaveNoGradient) {
  ParamStore s(1);
  s.alloc_atom(Vector{1.0}, 0.0);
  Registry reg;
  const Vector x{2.0};
  EXPECT_TRUE(grad_soft(Form::mark(), x, s, reg).empty());
  EXPECT_TRUE(grad_soft(Form::void_form(), x, s, reg).empty());
}

TEST(GradSoft, AtomAtHalf) {
  ParamStore s(1);
  s.alloc_atom(Vector{0.0}, 0.0);  // p = 0.5 everywhere
  Registry reg;
  const Vector x{2.0};
  const auto g = grad_soft(Form::atom(0), x, s, reg);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(g.at(0)[0], 0.5);
  EXPECT_DOUBLE_EQ(g.at(0)[1], 0.25);
}

TEST(GradSoft, CrossNegatesAndMatchesFiniteDifferences) {
  ParamStore s(1);
  s.alloc_atom(Vector{0.0}, 0.0);
  Registry reg;
  const Vector x{2.0};
  const Form f = Form::cross(Form::atom(0));
  // frozen from oracle::finite_difference_grad (h = 1e-5): [-0.5, -0.25]
  const auto fd = oracle::finite_difference_grad(f, x, s, reg);
  EXPECT_NEAR(fd[0][0], -0.5, 1e-9);
  EXPECT_NEAR(fd[0][1], -0.25, 1e-9);
  const auto g = grad_soft(f, x, s, reg);
  EXPECT_DOUBLE_EQ(g.at(0)[0], -0.5);
  EXPECT_DOUBLE_EQ(g.at(0)[1], -0.25);
}

TEST(GradSoft, SaturatedCallChild) {
  // Child A1 is a Mark-like constant 1 through a cross of void; the atom
  // sibling's weight is the product over the saturated sibling, i.e. 0.
  ParamStore s(1);
  s.alloc_atom(Vector{0.0}, 0.0);
  Registry reg;
  const Vector x{1.0};
  const Form f = Form::call({Form::atom(0), Form::mark()});
  const auto g = grad_soft(f, x, s, reg);
  ASSERT_TRUE(g.count(0));
  EXPECT_EQ(g.at(0)[0], 0.0);
  EXPECT_EQ(g.at(0)[1], 0.0);

  // The saturated child itself gets the sibling product (1 - p_sibling).
  ParamStore sharp(1);
  sharp.alloc_atom(Vector{0.0}, 800.0);  // sigmoid(800) == 1 in double
  sharp.alloc_atom(Vector{0.0}, logit(0.25));
  ASSERT_EQ(sharp.activation(0, x), 1.0);
  const Form two = Form::call({Form::atom(0), Form::atom(1)});
  const auto gs = grad_soft(two, x, sharp, reg);
  EXPECT_EQ(gs.at(1)[1], 0.0);
  EXPECT_EQ(gs.at(0)[1], 0.0);  // p(1-p) is already 0 at saturation
  EXPECT_TRUE(std::isfinite(gs.at(0)[0]));
}

TEST(GradSoftProperty, MatchesCentralFiniteDifferences) {
  std::mt19937_64 rng(21);
  const std::size_t d = 3;
  int checked = 0;
  while (checked < 1000) {
    auto store = oracle::random_store(rng, d, 4, 0.4);
    Registry reg;
    oracle::FormGen base(rng, 4);
    reg.add(base(2));
    oracle::FormGen gen(rng, 4, reg.size());
    const Form f = gen(5);
    const auto x = oracle::random_input(rng, d, 0.8);
    bool saturated = false;
    for (AtomId a = 0; a < store.size(); ++a) {
      const double p = store.activation(a, x);
      saturated |= p <= 0.01 || p >= 0.99;
    }
    if (saturated) continue;
    const auto fd = oracle::finite_difference_grad(f, x, store, reg);
    const auto g = grad_soft(f, x, store, reg);
    double scale = 0.0, err = 0.0;
    for (AtomId a = 0; a < store.size(); ++a)
      for (std::size_t j = 0; j <= d; ++j) {
        const double analytic = g.count(a) ? g.at(a)[j] : 0.0;
        scale = std::max(scale, std::abs(fd[a][j]));
        err = std::max(err, std::abs(analytic - fd[a][j]));
      }
    EXPECT_LE(err, 1e-4 * std::max(scale, 1e-6)) << render(f);
    std::set<AtomId> atoms;
    collect_atoms(f, reg, atoms);
    for (const auto& [a, v] : g) EXPECT_TRUE(atoms.count(a)) << "gradient key outside the form";
    ++checked;
  }
}

TEST(Conj, TruthTableAndProduct) {
  ParamStore s(1);
  Registry reg;
  const Vector x{0.0};
  EXPECT_NEAR(eval_soft(conj(Form::mark(), Form::mark()), x, s, reg), 1.0, 1e-15);
  EXPECT_NEAR(eval_soft(conj(Form::void_form(), Form::mark()), x, s, reg), 0.0, 1e-15);
  auto c = constant_atoms({0.8, 0.5});
  EXPECT_NEAR(eval_soft(conj(Form::atom(0), Form::atom(1)), x, c, reg), 0.4, 1e-12);
}

TEST(ConjProperty, EqualsProductOfOperands) {
  std::mt19937_64 rng(31);
  const std::size_t d = 2;
  for (int trial = 0; trial < 300; ++trial) {
    auto store = oracle::random_store(rng, d, 3);
    Registry reg;
    oracle::FormGen gen(rng, 3);
    const Form f = gen(3), g = gen(3);
    const auto x = oracle::random_input(rng, d);
    const double pf = eval_soft(f, x, store, reg), pg = eval_soft(g, x, store, reg);
    EXPECT_NEAR(eval_soft(conj(f, g), x, store, reg), pf * pg, 1e-12);
    EXPECT_NEAR(eval_soft(conj_not(f, g), x, store, reg), pf * (1.0 - pg), 1e-12);
  }
}

TEST(Render, Syntax) {
  EXPECT_EQ(render(Form::atom(0)), "A0");
  EXPECT_EQ(render(Form::cross(Form::atom(3))), "~(A3)");
  EXPECT_EQ(render(Form::void_form()), "0");
  EXPECT_EQ(render(Form::mark()), "()");
  EXPECT_EQ(render(Form::reentry(2)), "@2");
  const Form f = conj(Form::atom(0), Form::cross(Form::atom(3)));
  EXPECT_EQ(render(f), "~(|[~(A0), ~(~(A3))])");
  EXPECT_EQ(render_alias(f), "A0 ∧ ¬A3");
}

TEST(Render, Aliases) {
  EXPECT_FALSE(render_alias(Form::atom(0)).has_value());
  EXPECT_EQ(render_alias(Form::cross(Form::atom(2))), "¬A2");
  // wedge exception on a conjunction: (A0 ∧ ¬A3) ∧ ¬A5 flattens
  const Form shrunk = conj(Form::atom(0), Form::cross(Form::atom(3)));
  EXPECT_EQ(render_alias(conj_not(shrunk, Form::atom(5))), "A0 ∧ ¬A3 ∧ ¬A5");
  EXPECT_EQ(render_alias(conj(Form::cross(Form::atom(0)), Form::atom(5))), "¬A0 ∧ A5");
  EXPECT_EQ(render_alias(Form::call({Form::atom(1), conj(Form::atom(2), Form::atom(3))})),
            "A1 ∨ A2 ∧ A3");
}

TEST(RenderProperty, ParseRoundTrip) {
  std::mt19937_64 rng(41);
  oracle::FormGen gen(rng, 12, 3);
  for (int i = 0; i < 500; ++i) {
    const Form f = gen(6);
    const auto text = render(f);
    EXPECT_EQ(parse_form(text), f) << text;
    EXPECT_EQ(render(parse_form(text)), text);
  }
}

TEST(Parse, RejectsMalformedText) {
  EXPECT_THROW(parse_form("~(A1"), FormParseError);
  EXPECT_THROW(parse_form("|[]"), FormParseError);
  EXPECT_THROW(parse_form("B2"), FormParseError);
  EXPECT_THROW(parse_form("A1 A2"), FormParseError);
  EXPECT_THROW(parse_form("A"), FormParseError);
}

TEST(Compress, SharedSubformIsExtractedOnce) {
  Registry reg;
  const Form shared = Form::cross(Form::atom(1));
  std::vector<Hypothesis> hs(2);
  hs[0].form = Form::call({Form::atom(0), shared});
  hs[1].form = Form::call({shared, Form::atom(2)});
  EXPECT_EQ(compress(hs, reg), 1u);
  ASSERT_EQ(reg.size(), 1u);
  EXPECT_EQ(reg.at(0), shared);
  EXPECT_EQ(render(hs[0].form), "|[A0, @0]");
  EXPECT_EQ(render(hs[1].form), "|[@0, A2]");
}

TEST(Compress, NothingSharedIsIdentity) {
  Registry reg;
  std::vector<Hypothesis> hs(2);
  hs[0].form = Form::cross(Form::atom(0));
  hs[1].form = Form::cross(Form::atom(1));
  const auto before0 = hs[0].form, before1 = hs[1].form;
  EXPECT_EQ(compress(hs, reg), 0u);
  EXPECT_EQ(reg.size(), 0u);
  EXPECT_EQ(hs[0].form, before0);
  EXPECT_EQ(hs[1].form, before1);
}

TEST(Compress, ExtractsMaximalSharedSubform) {
  Registry reg;
  const Form f = conj(Form::atom(0), Form::cross(Form::atom(3)));
  std::vector<Hypothesis> hs(2);
  hs[0].form = conj(f, Form::atom(5));
  hs[1].form = conj_not(f, Form::atom(5));
  compress(hs, reg);
  // ~f is shared by both wedge halves and is the largest common piece
  EXPECT_EQ(reg.at(0), Form::cross(f));
}

TEST(CompressProperty, PreservesSemanticsAndNeverAddsComplexity) {
  std::mt19937_64 rng(51);
  const std::size_t d = 3;
  for (int trial = 0; trial < 100; ++trial) {
    auto store = oracle::random_store(rng, d, 3);
    oracle::FormGen gen(rng, 3);
    std::vector<Form> pool{gen(3), gen(3), gen(2)};
    std::vector<Hypothesis> hs(5);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (auto& h : hs) h.form = conj(pool[pick(rng)], gen(2));
    Registry reg;
    const auto original = hs;
    const double c_before = total_complexity(hs, reg);
    compress(hs, reg);
    EXPECT_LE(total_complexity(hs, reg), c_before);
    for (int i = 0; i < 100; ++i) {
      const auto x = oracle::random_input(rng, d);
      for (std::size_t k = 0; k < hs.size(); ++k)
        EXPECT_DOUBLE_EQ(eval_soft(hs[k].form, x, store, reg),
                         eval_soft(original[k].form, x, store, Registry{}));
    }
  }
}
