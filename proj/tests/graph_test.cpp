#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/graph.hpp"
#include "nodesplit/model_io.hpp"
#include "nodesplit/split.hpp"

using namespace nodesplit;

namespace {

double log_choose(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

ModelGraph beta_binomial() {
  ModelGraph g;
  g.add_stochastic("theta", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_observed("y", Distribution::binomial(Operand::value(10), Operand::node("theta")), 3);
  return g;
}

bool has_kind(const std::vector<Diagnostic>& d, Diagnostic::Kind k) {
  for (const auto& x : d) {
    if (x.kind == k) return true;
  }
  return false;
}

}  // namespace

TEST(Validate, MinimalGraphIsClean) {
  EXPECT_TRUE(validate_graph(beta_binomial()).empty());
}

TEST(Validate, UnresolvedReference) {
  ModelGraph g;
  g.add_observed("y", Distribution::binomial(Operand::value(10), Operand::node("missing")), 3);
  auto d = validate_graph(g);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].kind, Diagnostic::Kind::UnresolvedReference);
}

TEST(Validate, CycleDetected) {
  ModelGraph g;
  g.add_deterministic("a", Expr::node("b"));
  g.add_deterministic("b", Expr::node("a"));
  auto d = validate_graph(g);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].kind, Diagnostic::Kind::CycleDetected);
}

TEST(Validate, SupportAndArity) {
  ModelGraph g;
  g.add_stochastic("p", Distribution::normal(Operand::value(0), Operand::value(1)),
                   Support::UnitInterval);
  g.add_node(NodeDef{"q", NodeRole::StochasticFounder, Distribution{DistKind::Normal, {}}, {}, 0,
                     Support::Real});
  g.add_observed("y", Distribution::binomial(Operand::value(5), Operand::node("p")), 7);
  auto d = validate_graph(g);
  EXPECT_TRUE(has_kind(d, Diagnostic::Kind::SupportMismatch));
  EXPECT_TRUE(has_kind(d, Diagnostic::Kind::BadArity));
  EXPECT_TRUE(has_kind(d, Diagnostic::Kind::InvalidObservation));
}

TEST(Validate, DuplicateNode) {
  ModelGraph g = beta_binomial();
  g.add_stochastic("theta", Distribution::jeffreys_proportion());
  EXPECT_TRUE(has_kind(validate_graph(g), Diagnostic::Kind::DuplicateNode));
}

TEST(LogJoint, BinomialClosedForm) {
  double lp = log_joint_density(beta_binomial(), {{"theta", 0.3}});
  EXPECT_NEAR(lp, log_choose(10, 3) + 3 * std::log(0.3) + 7 * std::log(0.7), 1e-12);
}

TEST(LogJoint, MissingValueThrows) {
  EXPECT_THROW(log_joint_density(beta_binomial(), {}), MissingValue);
}

TEST(LogJoint, IndicatorViolationIsMinusInfinity) {
  ModelGraph g;
  g.add_stochastic("lo", Distribution::uniform(Operand::value(0), Operand::value(10)));
  g.add_stochastic("x", Distribution::uniform(Operand::value(0), Operand::value(10)));
  g.add_deterministic("ok", Expr::indicator(Expr::node("lo"), Expr::node("x"), Expr::constant(5)));
  g.add_observed("c", Distribution::bernoulli(Operand::node("ok")), 1);
  EXPECT_TRUE(std::isfinite(log_joint_density(g, {{"lo", 1}, {"x", 2}})));
  EXPECT_EQ(log_joint_density(g, {{"lo", 3}, {"x", 2}}), -std::numeric_limits<double>::infinity());
}

TEST(Canonical, OrderIgnoresInsertionOrder) {
  ModelGraph a, b;
  a.add_stochastic("m", Distribution::normal(Operand::value(0), Operand::value(1)));
  a.add_stochastic("s", Distribution::uniform(Operand::value(0), Operand::value(5)));
  a.add_observed("y", Distribution::normal(Operand::node("m"), Operand::node("s")), 1.5);
  b.add_observed("y", Distribution::normal(Operand::node("m"), Operand::node("s")), 1.5);
  b.add_stochastic("s", Distribution::uniform(Operand::value(0), Operand::value(5)));
  b.add_stochastic("m", Distribution::normal(Operand::value(0), Operand::value(1)));
  EXPECT_EQ(serialize_model(a), serialize_model(b));
}

TEST(ModelIo, ParseAndRoundTrip) {
  const char* text = R"(
# toy model
[nodes]
a ~ Normal(0, 10)
b ~ Normal(-1.5, 2e-3) : real
s ~ Uniform(0, 5)
f = a - (b - 3) * -2 / (a + b) : real
g = -(-a) + ilogit(logit(0.25)) - exp(log(s)) : real
h = indicator(0, s, 5) : real
neg = -3 : real
[observations]
y ~ Normal(f, s) = 0.1
z ~ Binomial(20, 0.5) = 7
[blocks]
a, b
[split]
separator a : identity
partition p1 : y
partition p2 : z
copy a @ p1 : founder Normal(0, 100)
copy a @ p2 : derived
shared s
pairs first
)";
  ModelFile mf = parse_model(text);
  EXPECT_TRUE(validate_graph(mf.graph).empty());
  ASSERT_TRUE(mf.split.has_value());
  EXPECT_EQ(mf.split->pairs, PairPlan::AgainstFirst);
  EXPECT_EQ(mf.graph.node("b").dist->params[0].constant, -1.5);
  EXPECT_EQ(mf.graph.node("neg").expr->value, -3.0);
  std::string once = serialize_model(mf.graph, mf.split);
  ModelFile again = parse_model(once);
  EXPECT_EQ(serialize_model(again.graph, again.split), once);
  EXPECT_EQ(*again.split, *mf.split);
  for (const auto& n : mf.graph.nodes()) {
    if (n.expr) {
      EXPECT_EQ(*again.graph.node(n.id).expr, *n.expr) << n.id;
    }
  }
}

TEST(ModelIo, NumbersRoundTripExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 200; ++i) {
    double v = u(rng) / 3.0;
    Expr e = Expr::node("x") * Expr::constant(v) - Expr::constant(-v);
    EXPECT_EQ(parse_expr(format_expr(e)), e);
  }
}

TEST(ModelIo, ParseErrors) {
  EXPECT_THROW(parse_model("[nodes]\na ~ Gamma(1, 2)\n"), ParseError);
  EXPECT_THROW(parse_model("a ~ Normal(0, 1)\n"), ParseError);
  EXPECT_THROW(parse_model("[nodes]\na = sqrt(b)\n"), ParseError);
}

namespace {

// theta ~ N(0, 10^2) with two normal observations of known sd.
ModelGraph normal_two_data() {
  ModelGraph g;
  g.add_stochastic("theta", Distribution::normal(Operand::value(0), Operand::value(10)));
  g.add_observed("y1", Distribution::normal(Operand::node("theta"), Operand::value(1)), 0.4);
  g.add_observed("y2", Distribution::normal(Operand::node("theta"), Operand::value(2)), -1.1);
  return g;
}

double normal_lpdf(double x, double m, double s) {
  double z = (x - m) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2 * M_PI);
}

}  // namespace

TEST(Split, FactorisesIntoIndependentPartitions) {
  SplitSpec spec;
  spec.separators.push_back({"theta", std::nullopt, {}});
  spec.partitions = {{"a", {"y1"}}, {"b", {"y2"}}};
  SplitModel sm = split(normal_two_data(), spec);
  EXPECT_EQ(sm.m, 2u);
  EXPECT_EQ(sm.separator_copies.at({0, 0}), "theta@a");
  EXPECT_EQ(sm.separator_copies.at({0, 1}), "theta@b");
  ASSERT_EQ(sm.contrast_pairs().size(), 1u);
  EXPECT_EQ(sm.contrast_label(sm.contrast_pairs()[0]), "theta:a-b");

  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0, 3);
  for (int i = 0; i < 100; ++i) {
    double ta = nd(rng), tb = nd(rng);
    double expected = normal_lpdf(ta, 0, 10) + normal_lpdf(0.4, ta, 1) + normal_lpdf(tb, 0, 10) +
                      normal_lpdf(-1.1, tb, 2);
    double got = log_joint_density(sm.graph, {{"theta@a", ta}, {"theta@b", tb}});
    EXPECT_NEAR(got, expected, 1e-10);
  }
}

TEST(Split, FounderCopySeversDefinition) {
  ModelGraph g;
  g.add_stochastic("pi", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_stochastic("kappa", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_deterministic("pk", Expr::node("pi") * Expr::node("kappa"), Support::UnitInterval);
  g.add_observed("y1", Distribution::binomial(Operand::value(100), Operand::node("pk")), 10);
  g.add_observed("y2", Distribution::binomial(Operand::value(100), Operand::node("pi")), 40);
  SplitSpec spec;
  spec.separators.push_back({"pk", std::nullopt, {{"prior", false, {}}, {"lik", true, {}}}});
  spec.partitions = {{"prior", {"y2"}}, {"lik", {"y1"}}};
  SplitModel sm = split(g, spec);
  const NodeDef& copy = sm.graph.node("pk@lik");
  EXPECT_EQ(copy.role, NodeRole::StochasticFounder);
  EXPECT_EQ(copy.dist->kind, DistKind::JeffreysProportion);
  EXPECT_FALSE(sm.graph.contains("pi@lik"));
  EXPECT_FALSE(sm.graph.contains("kappa@lik"));
  EXPECT_EQ(sm.graph.node("pk@prior").role, NodeRole::Deterministic);
  EXPECT_EQ(*sm.spec.separators[0].transform, Transform::Logit);
  EXPECT_EQ(sm.m_q, (std::vector<std::size_t>{1, 1}));
}

TEST(Split, SharedNodeStaysSingle) {
  ModelGraph g;
  g.add_stochastic("mu", Distribution::normal(Operand::value(0), Operand::value(10)));
  g.add_stochastic("s", Distribution::uniform(Operand::value(0), Operand::value(5)));
  g.add_observed("y1", Distribution::normal(Operand::node("mu"), Operand::node("s")), 1);
  g.add_observed("y2", Distribution::normal(Operand::node("mu"), Operand::node("s")), 2);
  SplitSpec spec;
  spec.separators.push_back({"mu", std::nullopt, {}});
  spec.partitions = {{"a", {"y1"}}, {"b", {"y2"}}};
  spec.shared_nodes = {"s"};
  SplitModel sm = split(g, spec);
  EXPECT_TRUE(sm.graph.contains("s"));
  EXPECT_FALSE(sm.graph.contains("s@a"));
  EXPECT_EQ(sm.graph.node("y1").dist->params[1].ref, "s");
  EXPECT_EQ(sm.graph.node("y2").dist->params[0].ref, "mu@b");
}

TEST(Split, Errors) {
  SplitSpec observed_sep;
  observed_sep.separators.push_back({"y1", std::nullopt, {}});
  observed_sep.partitions = {{"a", {"y1"}}};
  EXPECT_THROW(split(normal_two_data(), observed_sep), InvalidSeparator);

  SplitSpec no_data;
  no_data.separators.push_back({"theta", std::nullopt, {{"a", false, {}}, {"b", true, {}}}});
  no_data.partitions = {{"a", {"y1", "y2"}}, {"b", {}}};
  EXPECT_THROW(split(normal_two_data(), no_data), UnidentifiablePartition);
}

TEST(Split, SerializedSplitGraphParsesBack) {
  SplitSpec spec;
  spec.separators.push_back({"theta", std::nullopt, {}});
  spec.partitions = {{"a", {"y1"}}, {"b", {"y2"}}};
  SplitModel sm = split(normal_two_data(), spec);
  std::string text = serialize_model(sm.graph);
  EXPECT_EQ(serialize_model(parse_model(text).graph), text);
}

TEST(Compiled, SaturatedDensity) {
  ModelGraph g = beta_binomial();
  CompiledGraph cg(g);
  auto v = cg.blank_values();
  v[g.index_of("theta")] = 0.3;
  std::size_t y = g.index_of("y");
  EXPECT_NEAR(cg.saturated_log_density(y, v),
              log_choose(10, 3) + 3 * std::log(0.3) + 7 * std::log(0.7), 1e-12);
}
