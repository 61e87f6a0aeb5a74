#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/inference.hpp"
#include "nodesplit/synthesis.hpp"

using namespace nodesplit;

namespace {

SamplerConfig quick(std::size_t iterations = 40000, std::uint64_t seed = 7) {
  SamplerConfig c;
  c.iterations = iterations;
  c.burn_in = iterations / 4;
  c.thin = 2;
  c.seed = seed;
  return c;
}

std::set<NodeId> sampled_in(const SplitModel& m, std::size_t partition) {
  std::set<NodeId> out;
  for (const auto& id : m.partition_nodes[partition]) {
    if (m.graph.node(id).is_stochastic()) out.insert(id);
  }
  return out;
}

struct BetaMoments {
  double mean, sd;
};

BetaMoments beta_moments(double a, double b) {
  const double s = a + b;
  return {a / s, std::sqrt(a * b / (s * s * (s + 1)))};
}

ConflictReport report_of(const Eigen::MatrixXd& R, const std::vector<double>& z) {
  ConflictReport r;
  r.R = R;
  for (double v : z) {
    ContrastResult c;
    c.z = v;
    r.contrasts.push_back(c);
  }
  return r;
}

}  // namespace

TEST(HivData, ReaderOverridesAndRejects) {
  std::istringstream ok("name,y,n,likelihood\n# recount\ny1,40,1600,binomial\ny5,5000,,poisson\n");
  HivData d = read_hiv_data(ok);
  EXPECT_EQ(d.y1, 40);
  EXPECT_EQ(d.n1, 1600);
  EXPECT_EQ(d.y5, 5000);
  EXPECT_EQ(d.y2, 113);

  std::istringstream header("id,y,n,likelihood\n");
  EXPECT_THROW(read_hiv_data(header), ParseError);
  std::istringstream wrong_lik("name,y,n,likelihood\ny4,836,,binomial\n");
  EXPECT_THROW(read_hiv_data(wrong_lik), ParseError);
  std::istringstream unknown("name,y,n,likelihood\ny9,1,2,binomial\n");
  EXPECT_THROW(read_hiv_data(unknown), ParseError);
  std::istringstream fraction("name,y,n,likelihood\ny1,3.5,10,binomial\n");
  EXPECT_THROW(read_hiv_data(fraction), ParseError);
  std::istringstream over("name,y,n,likelihood\ny1,30,10,binomial\n");
  EXPECT_THROW(read_hiv_data(over), PreconditionError);
  EXPECT_THROW(load_hiv_data("/nonexistent/hiv.csv"), ParseError);
}

TEST(HivGraph, ConstraintViolationHasZeroDensity) {
  ModelGraph g = build_hiv_graph();
  std::map<NodeId, double> v{{"rho", 0.5}, {"pi", 0.5}, {"kappa", 0.5}, {"D_L", 836.0}, {"D_U", 5034.0}};
  EXPECT_EQ(log_joint_density(g, v), -std::numeric_limits<double>::infinity());
  v["rho"] = 0.0095;
  v["pi"] = 0.08;
  v["kappa"] = 0.4;
  EXPECT_TRUE(std::isfinite(log_joint_density(g, v)));
  HivData bad;
  bad.y3 = 3000;
  EXPECT_THROW(build_hiv_graph(bad), PreconditionError);
}

TEST(HivGraph, PriorOnlyRhoIsUniform) {
  ModelGraph full = build_hiv_graph();
  ModelGraph prior;
  for (const auto& n : full.nodes()) {
    if (n.role != NodeRole::Observed) prior.add_node(n);
  }
  for (const auto& b : full.blocks()) prior.add_block(b);
  auto s = sample(prior, quick(40000, 3));
  EXPECT_NEAR(s.mean("rho"), 0.5, 4.0 * mc_standard_error(s, "rho"));
  EXPECT_NEAR(s.sd("rho"), std::sqrt(1.0 / 12.0), 0.01);
}

TEST(HivGraph, ConstraintHoldsInEveryDraw) {
  ModelGraph g = build_hiv_graph();
  auto check = [](const PosteriorSamples& s, const NodeId& lo, const NodeId& d, const NodeId& hi) {
    const auto a = s.column(lo), b = s.column(d), c = s.column(hi);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < a.size(); ++i) bad += !(a[i] <= b[i] && b[i] <= c[i]);
    EXPECT_EQ(bad, 0u) << d;
  };
  check(sample(g, quick(20000)), "D_L", "D", "D_U");
  auto sat = saturated_split(g);
  auto s = sample(sat.graph, quick(20000));
  check(s, "D_L@prior", "D@prior", "D_U@prior");
  check(s, "D_L@y45", "D@y45", "D_U@y45");
}

TEST(Saturated, IdentifiabilityGuard) {
  auto sat = saturated_split(build_hiv_graph());
  ASSERT_EQ(sat.spec.partitions.size(), 5u);
  EXPECT_EQ(sat.m, 12u);
  EXPECT_EQ(sat.contrast_pairs().size(), 6u);
  const std::map<std::string, std::set<NodeId>> expected{
      {"y1", {"rho@y1"}},
      {"y2", {"pi_kappa@y2"}},
      {"y3", {"pi_1mkappa@y3"}},
      {"y45", {"D_L@y45", "D_U@y45", "D@y45"}}};
  for (std::size_t q = 0; q < sat.spec.partitions.size(); ++q) {
    const auto& name = sat.spec.partitions[q].name;
    if (name == "prior") {
      EXPECT_EQ(sampled_in(sat, q), (std::set<NodeId>{"rho@prior", "pi@prior", "kappa@prior", "D_L@prior",
                                                      "D_U@prior"}));
      continue;
    }
    EXPECT_EQ(sampled_in(sat, q), expected.at(name)) << name;
  }
  for (const char* absent : {"pi@y2", "kappa@y2", "pi@y3", "kappa@y3", "rho@y45", "pi@y45"}) {
    EXPECT_FALSE(sat.graph.contains(absent)) << absent;
  }
  EXPECT_EQ(sat.spec.separators[0].transform, Transform::Logit);
  EXPECT_EQ(sat.spec.separators[5].transform, Transform::Log);
}

// Jeffreys Beta(1/2, 1/2) copies with a single binomial datum each.
TEST(Saturated, LikelihoodPartitionsAreConjugate) {
  const HivData d;
  auto sat = saturated_split(build_hiv_graph(d));
  auto s = sample(sat.graph, quick(40000, 11));
  const std::map<NodeId, BetaMoments> closed{
      {"rho@y1", beta_moments(d.y1 + 0.5, d.n1 - d.y1 + 0.5)},
      {"pi_kappa@y2", beta_moments(d.y2 + 0.5, d.n2 - d.y2 + 0.5)},
      {"pi_1mkappa@y3", beta_moments(d.y3 + 0.5, d.n3 - d.y3 + 0.5)}};
  EXPECT_NEAR(closed.at("rho@y1").mean, 0.0231, 1e-4);
  for (const auto& [id, bm] : closed) {
    EXPECT_NEAR(s.mean(id), bm.mean, 4.0 * mc_standard_error(s, id)) << id;
    EXPECT_NEAR(s.sd(id), bm.sd, 0.05 * bm.sd) << id;
  }
  // Poisson counts with the x^(-1/2) prior give Gamma(y + 1/2, 1).
  EXPECT_NEAR(s.mean("D_L@y45"), d.y4 + 0.5, 4.0 * mc_standard_error(s, "D_L@y45"));
  EXPECT_NEAR(s.sd("D_U@y45"), std::sqrt(d.y5 + 0.5), 0.05 * std::sqrt(d.y5 + 0.5));
}

TEST(LeaveOut, SplitNodeSets) {
  ModelGraph g = build_hiv_graph();
  const std::vector<std::vector<NodeId>> one{{"rho"}, {"pi_kappa"}, {"pi_1mkappa"}, {"D_L"}, {"D_U"}};
  const std::vector<std::vector<NodeId>> two{{"rho", "pi_kappa"},
                                             {"rho", "pi_1mkappa"},
                                             {"pi_kappa", "pi_1mkappa", "pi", "kappa"},
                                             {"rho", "D_L"},
                                             {"rho", "D_U"},
                                             {"pi_kappa", "D_L"},
                                             {"pi_kappa", "D_U"},
                                             {"pi_1mkappa", "D_L"},
                                             {"pi_1mkappa", "D_U"},
                                             {"D_L", "D_U", "D"}};
  auto l1 = leave_n_out_splits(g, 1);
  auto l2 = leave_n_out_splits(g, 2);
  ASSERT_EQ(l1.size(), one.size());
  ASSERT_EQ(l2.size(), two.size());
  std::size_t contrasts1 = 0, contrasts2 = 0;
  for (std::size_t i = 0; i < l1.size(); ++i) {
    EXPECT_EQ(l1[i].spec.split_nodes, one[i]) << l1[i].spec.name;
    contrasts1 += l1[i].model.contrast_pairs().size();
  }
  for (std::size_t i = 0; i < l2.size(); ++i) {
    EXPECT_EQ(l2[i].spec.split_nodes, two[i]) << l2[i].spec.name;
    contrasts2 += l2[i].model.contrast_pairs().size();
  }
  EXPECT_EQ(l1[1].spec.name, "L1-B");
  EXPECT_EQ(l2[9].spec.name, "L2-J");
  EXPECT_EQ(contrasts2, 23u);
  EXPECT_EQ(contrasts1 + contrasts2, 28u);

  const auto& j = l2[9].model.graph;
  EXPECT_TRUE(j.node("D@1").is_stochastic());
  EXPECT_EQ(j.node("D@2").role, NodeRole::Deterministic);
  const auto& c = l2[2].model.graph;
  EXPECT_EQ(c.node("pi_kappa@1").role, NodeRole::Deterministic);
  EXPECT_EQ(c.node("pi@1").role, NodeRole::StochasticFounder);
  EXPECT_THROW(leave_n_out_splits(g, 3), PreconditionError);
}

TEST(AcrossModels, WithinAndSingleModel) {
  Eigen::MatrixXd R(2, 2);
  R << 1.0, 0.4, 0.4, 1.0;
  auto rep = report_of(R, {1.2, -2.1});
  rep.contrasts[0].p_adjusted = 0.31;
  rep.contrasts[1].p_adjusted = 0.05;
  auto w = adjust_across_models({rep}, AdjustScope::Within);
  EXPECT_EQ(w[0], (std::vector<double>{0.31, 0.05}));
  auto pooled = adjust_across_models({rep}, AdjustScope::PerFamily);
  for (std::size_t k = 0; k < 2; ++k) {
    const double oracle = 1.0 - mvn_rectangle(R, std::abs(rep.contrasts[k].z)).probability;
    EXPECT_NEAR(pooled[0][k], oracle, 1e-12);
  }
}

TEST(AcrossModels, PooledMatchesBlockDiagonal) {
  Eigen::MatrixXd A(2, 2), B(1, 1);
  A << 1.0, -0.3, -0.3, 1.0;
  B << 1.0;
  auto ra = report_of(A, {0.7, 2.4});
  auto rb = report_of(B, {1.9});
  auto out = adjust_across_models({ra, rb}, AdjustScope::All);
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(3, 3);
  full.topLeftCorner(2, 2) = A;
  full(2, 2) = 1.0;
  MvnOptions fine;
  fine.n_points = std::size_t{1} << 17;
  EXPECT_NEAR(out[0][1], 1.0 - mvn_rectangle(full, 2.4, fine).probability, 2e-3);
  EXPECT_NEAR(out[1][0], 1.0 - mvn_rectangle(full, 1.9, fine).probability, 2e-3);
  EXPECT_GE(out[0][1] + 1e-12, 1.0 - mvn_rectangle(A, 2.4).probability);

  auto zero = adjust_across_models({report_of(A, {0.0, 0.0}), report_of(B, {0.0})}, AdjustScope::All);
  for (const auto& row : zero) {
    for (double p : row) EXPECT_NEAR(p, 1.0, 1e-12);
  }
}

TEST(AcrossModels, DimensionMismatch) {
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(adjust_across_models({report_of(R, {1.0, 2.0})}, AdjustScope::Within), DimensionMismatch);
}
