#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/inference.hpp"
#include "nodesplit/split.hpp"

using namespace nodesplit;

namespace {

SamplerConfig short_config(std::uint64_t seed = 3) {
  SamplerConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 24000;
  cfg.burn_in = 4000;
  cfg.thin = 2;
  cfg.seed = seed;
  return cfg;
}

void expect_posterior(const PosteriorSamples& s, const NodeId& id, double mean, double sd) {
  const double mcse = mc_standard_error(s, id);
  EXPECT_NEAR(s.mean(id), mean, 4 * mcse + 1e-12) << id;
  EXPECT_NEAR(s.sd(id), sd, 0.05 * sd) << id;
}

}  // namespace

TEST(Sampler, BetaBinomialConjugate) {
  ModelGraph g;
  g.add_stochastic("theta", Distribution::jeffreys_proportion());
  g.add_observed("y", Distribution::binomial(Operand::value(10), Operand::node("theta")), 3);
  auto s = sample(g, short_config());
  // Beta(3.5, 7.5)
  const double a = 3.5, b = 7.5;
  expect_posterior(s, "theta", a / (a + b), std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1))));
}

TEST(Sampler, JeffreysPoissonConjugate) {
  ModelGraph g;
  g.add_stochastic("lambda", Distribution::jeffreys_rate());
  g.add_observed("y", Distribution::poisson(Operand::node("lambda")), 12);
  auto s = sample(g, short_config());
  // Gamma(12.5, 1)
  expect_posterior(s, "lambda", 12.5, std::sqrt(12.5));
}

TEST(Sampler, NormalNormalConjugate) {
  ModelGraph g;
  g.add_stochastic("mu", Distribution::normal(Operand::value(0), Operand::value(10)));
  g.add_observed("y", Distribution::normal(Operand::node("mu"), Operand::value(1)), 2);
  auto s = sample(g, short_config());
  expect_posterior(s, "mu", 2.0 * 100.0 / 101.0, std::sqrt(100.0 / 101.0));
}

TEST(Sampler, CorrelatedBlock) {
  // a ~ N(0,1), b ~ N(a, 0.1): strongly correlated pair updated jointly.
  ModelGraph g;
  g.add_stochastic("a", Distribution::normal(Operand::value(0), Operand::value(1)));
  g.add_stochastic("b", Distribution::normal(Operand::node("a"), Operand::value(0.1)));
  g.add_observed("y", Distribution::normal(Operand::node("b"), Operand::value(1)), 1);
  g.add_block({"a", "b"});
  auto s = sample(g, short_config());
  // Joint Gaussian: b ~ N(0, 1.01) prior, y | b ~ N(b, 1).
  const double vb = 1.01 * 1.0 / 2.01;
  expect_posterior(s, "b", vb * 1.0, std::sqrt(vb));
  EXPECT_GT(s.acceptance.at("a"), 0.1);
  EXPECT_LT(s.acceptance.at("a"), 0.45);
}

TEST(Sampler, DeterministicAndReproducible) {
  ModelGraph g;
  g.add_stochastic("p", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_deterministic("lo", Expr::unary(Expr::Op::Logit, Expr::node("p")));
  g.add_observed("y", Distribution::binomial(Operand::value(50), Operand::node("p")), 20);
  auto cfg = short_config(99);
  cfg.threads = 2;
  auto s1 = sample(g, cfg);
  cfg.threads = 1;
  auto s2 = sample(g, cfg);
  std::ostringstream o1, o2;
  write_samples_csv(o1, s1);
  write_samples_csv(o2, s2);
  EXPECT_EQ(o1.str(), o2.str());
  auto p = s1.column("p");
  auto lo = s1.column("lo");
  for (std::size_t i = 0; i < p.size(); ++i) {
    ASSERT_GT(p[i], 0.0);
    ASSERT_LT(p[i], 1.0);
    ASSERT_EQ(lo[i], dist::logit(p[i]));
  }
  auto cfg3 = short_config(100);
  EXPECT_NE(sample(g, cfg3).column("p"), p);
}

TEST(Sampler, IndicatorConstraintHoldsInEveryDraw) {
  ModelGraph g;
  g.add_stochastic("lo", Distribution::uniform(Operand::value(0), Operand::value(10)));
  g.add_stochastic("hi", Distribution::uniform(Operand::value(0), Operand::value(10)));
  g.add_stochastic("x", Distribution::uniform(Operand::value(0), Operand::value(10)));
  g.add_deterministic("ok", Expr::indicator(Expr::node("lo"), Expr::node("x"), Expr::node("hi")));
  g.add_observed("c", Distribution::bernoulli(Operand::node("ok")), 1);
  auto s = sample(g, short_config());
  auto lo = s.column("lo"), hi = s.column("hi"), x = s.column("x");
  for (std::size_t i = 0; i < x.size(); ++i) {
    ASSERT_LE(lo[i], x[i]);
    ASSERT_LE(x[i], hi[i]);
  }
}

TEST(Sampler, InitialisationFailure) {
  ModelGraph g;
  g.add_stochastic("x", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_deterministic("ok", Expr::indicator(Expr::constant(2), Expr::node("x"), Expr::constant(3)));
  g.add_observed("c", Distribution::bernoulli(Operand::node("ok")), 1);
  EXPECT_THROW(sample(g, short_config()), InitialisationFailure);
}

TEST(Sampler, ConfigValidation) {
  SamplerConfig cfg;
  cfg.burn_in = cfg.iterations;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg = SamplerConfig{};
  cfg.thin = 0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
}

TEST(Sampler, PartitionsAreIndependent) {
  ModelGraph g;
  g.add_stochastic("theta", Distribution::normal(Operand::value(0), Operand::value(10)));
  g.add_observed("y1", Distribution::normal(Operand::node("theta"), Operand::value(1)), 0.4);
  g.add_observed("y2", Distribution::normal(Operand::node("theta"), Operand::value(2)), -1.1);
  SplitSpec spec;
  spec.separators.push_back({"theta", std::nullopt, {}});
  spec.partitions = {{"a", {"y1"}}, {"b", {"y2"}}};
  SplitModel sm = split(g, spec);
  auto joint = sample(sm.graph, short_config(5));

  ModelGraph alone;
  alone.add_stochastic("theta@a", Distribution::normal(Operand::value(0), Operand::value(10)));
  alone.add_observed("y1", Distribution::normal(Operand::node("theta@a"), Operand::value(1)), 0.4);
  auto sep = sample(alone, short_config(6));
  const double se = std::hypot(mc_standard_error(joint, "theta@a"), mc_standard_error(sep, "theta@a"));
  EXPECT_NEAR(joint.mean("theta@a"), sep.mean("theta@a"), 3 * se);
}

TEST(Mcse, IidNormal) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> x(10000);
  for (auto& v : x) v = nd(rng);
  EXPECT_NEAR(mc_standard_error(x), 0.01, 0.002);
}

TEST(Mcse, ConstantColumn) {
  std::vector<double> x(5000, 3.25);
  EXPECT_EQ(mc_standard_error(x), 0.0);
}

TEST(Mcse, Ar1MatchesAnalytic) {
  const double rho = 0.9;
  const std::size_t n = 50000;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, std::sqrt(1 - rho * rho));
  std::vector<double> x(n);
  double prev = 0.0;
  for (auto& v : x) {
    prev = rho * prev + nd(rng);
    v = prev;
  }
  const double analytic = std::sqrt((1 + rho) / (1 - rho)) / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(mc_standard_error(x) / analytic, 1.0, 0.2);
}

TEST(Deviance, PerfectFitHasZeroPlugin) {
  ModelGraph g;
  g.add_stochastic("p", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_observed("y", Distribution::binomial(Operand::value(20), Operand::node("p")), 5);
  g.add_stochastic("r", Distribution::jeffreys_rate());
  g.add_observed("z", Distribution::poisson(Operand::node("r")), 7);
  PosteriorSamples s({"p", "r"}, 1, 10);
  for (std::size_t d = 0; d < 10; ++d) {
    s.value(0, d, 0) = 0.25;
    s.value(0, d, 1) = 7.0;
  }
  auto dev = deviance_summary(g, s);
  EXPECT_NEAR(dev.plugin_deviance, 0.0, 1e-12);
  EXPECT_NEAR(dev.mean_deviance, 0.0, 1e-12);
  EXPECT_EQ(dev.dic, dev.mean_deviance + dev.p_D);
}

TEST(Deviance, MatchesClosedFormResidualDeviance) {
  ModelGraph g;
  g.add_stochastic("p", Distribution::uniform(Operand::value(0), Operand::value(1)));
  g.add_observed("y", Distribution::binomial(Operand::value(20), Operand::node("p")), 5);
  PosteriorSamples s({"p"}, 1, 2);
  s.value(0, 0, 0) = 0.2;
  s.value(0, 1, 0) = 0.4;
  auto binom_dev = [](double y, double n, double p) {
    double yh = n * p;
    return 2 * (y * std::log(y / yh) + (n - y) * std::log((n - y) / (n - yh)));
  };
  auto dev = deviance_summary(g, s);
  EXPECT_NEAR(dev.mean_deviance, 0.5 * (binom_dev(5, 20, 0.2) + binom_dev(5, 20, 0.4)), 1e-10);
  EXPECT_NEAR(dev.plugin_deviance, binom_dev(5, 20, 0.3), 1e-10);
}

TEST(Rhat, DetectsDisagreeingChains) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> x(4000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = nd(rng) + (i < 2000 ? 0.0 : 3.0);
  EXPECT_GT(split_rhat(x, 2), 1.5);
  for (auto& v : x) v = nd(rng);
  EXPECT_LT(split_rhat(x, 2), 1.01);
}
