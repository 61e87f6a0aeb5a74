#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/inference.hpp"
#include "nodesplit/nma.hpp"

using namespace nodesplit;

namespace {

double log_normal_pdf(double x, double m, double s) {
  const double z = (x - m) / s;
  return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double log_binom(double y, double n, double p) {
  return std::lgamma(n + 1) - std::lgamma(y + 1) - std::lgamma(n - y + 1) + y * std::log(p) +
         (n - y) * std::log1p(-p);
}

double ilogit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SamplerConfig quick(std::size_t iterations = 20000, std::uint64_t seed = 3) {
  SamplerConfig c;
  c.iterations = iterations;
  c.burn_in = iterations / 4;
  c.thin = 2;
  c.seed = seed;
  return c;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::set<std::string> numbered(std::initializer_list<std::pair<int, int>> ranges) {
  std::set<std::string> out;
  for (auto [a, b] : ranges) {
    for (int i = a; i <= b; ++i) out.insert(std::to_string(i));
  }
  return out;
}

const std::vector<Edge> kStar{{"A", "B"}, {"A", "C"}, {"A", "D"}};
const std::vector<Edge> kAltTree{{"A", "B"}, {"A", "C"}, {"B", "D"}};

}  // namespace

TEST(SmokingData, ShapeOfNetwork) {
  auto arms = smoking_data();
  EXPECT_EQ(arms.size(), 50u);
  auto studies = studies_of(arms);
  ASSERT_EQ(studies.size(), 24u);
  std::vector<std::string> multi;
  for (const auto& s : studies) {
    if (s.multi_arm()) multi.push_back(s.id);
  }
  EXPECT_EQ(multi, (std::vector<std::string>{"18", "21"}));
  EXPECT_EQ(treatments_of(arms), (std::vector<std::string>{"A", "B", "C", "D"}));
  EXPECT_NO_THROW(check_trial_arms(arms));
}

TEST(TrialTable, ReadsAndRejects) {
  std::istringstream ok("# comment\nstudy,design,treatment,events,total\n1,AB,A,3,10\n1,AB,B,5,12\n");
  auto arms = read_trial_arms(ok);
  ASSERT_EQ(arms.size(), 2u);
  EXPECT_EQ(arms[1].treatment, "B");
  EXPECT_EQ(arms[1].total, 12);

  std::istringstream missing("study,design,treatment,events\n1,AB,A,3\n");
  EXPECT_THROW(read_trial_arms(missing), ParseError);
  std::istringstream bad("study,design,treatment,events,total\n1,AB,A,x,10\n1,AB,B,1,10\n");
  EXPECT_THROW(read_trial_arms(bad), ParseError);
  std::istringstream over("study,design,treatment,events,total\n1,AB,A,11,10\n1,AB,B,1,10\n");
  EXPECT_THROW(read_trial_arms(over), PreconditionError);
  std::istringstream single("study,design,treatment,events,total\n1,A,A,1,10\n");
  EXPECT_THROW(read_trial_arms(single), PreconditionError);
  std::istringstream twice("study,design,treatment,events,total\n1,AB,A,1,10\n1,AB,A,2,10\n");
  EXPECT_THROW(read_trial_arms(twice), PreconditionError);
}

TEST(NmaGraph, DisconnectedAndBadTree) {
  std::vector<TrialArm> arms{{"1", "AB", "A", 1, 10}, {"1", "AB", "B", 2, 10},
                             {"2", "CD", "C", 1, 10}, {"2", "CD", "D", 2, 10}};
  EXPECT_THROW(build_nma_graph(arms, NmaSpec{}), DisconnectedNetwork);
  NmaSpec spec;
  spec.reference = "Z";
  EXPECT_THROW(build_nma_graph(smoking_data(), spec), DisconnectedNetwork);
  NmaSpec cyc;
  cyc.basic_tree = {{"A", "B"}, {"B", "C"}, {"A", "C"}};
  EXPECT_THROW(build_nma_graph(smoking_data(), cyc), PreconditionError);
}

// Reference log density coded directly from the model definition, with the
// random effects of each study evaluated as one multivariate normal.
TEST(NmaGraph, RandomEffectsDensityMatchesReference) {
  auto arms = smoking_data();
  ModelGraph g = build_nma_graph(arms, NmaSpec{});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    std::map<NodeId, double> v;
    std::map<std::string, double> d{{"A", 0.0}};
    for (const char* t : {"B", "C", "D"}) {
      d[t] = u(rng);
      v[eta_id("A", t)] = d[t];
    }
    const double sigma = 0.3 + std::abs(u(rng));
    v["sigma"] = sigma;
    double ref = 0.0;
    for (const char* t : {"B", "C", "D"}) ref += log_normal_pdf(d[t], 0.0, 10.0);
    ref += std::log(1.0 / 5.0);
    for (const auto& s : studies_of(arms)) {
      const double alpha = -2.0 + u(rng);
      v[alpha_id(s.id)] = alpha;
      ref += log_normal_pdf(alpha, 0.0, 10.0);
      const auto& t = s.treatments;
      const auto k = static_cast<Eigen::Index>(t.size() - 1);
      Eigen::VectorXd beta(k);
      std::map<std::string, double> delta{{t[0], 0.0}};
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto& tj = t[static_cast<std::size_t>(j + 1)];
        beta[j] = 0.5 * u(rng);
        delta[tj] = d[tj] - d[t[0]] + beta[j];
        v[delta_id(s.id, tj)] = delta[tj];
      }
      Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(k, k, sigma * sigma / 2.0);
      cov.diagonal().setConstant(sigma * sigma);
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      const Eigen::VectorXd w = llt.matrixL().solve(beta);
      ref += -0.5 * w.squaredNorm() - llt.matrixL().toDenseMatrix().diagonal().array().log().sum() -
             0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
      for (const auto& a : arms) {
        if (a.study != s.id) continue;
        ref += log_binom(static_cast<double>(a.events), static_cast<double>(a.total),
                         ilogit(alpha + delta[a.treatment]));
      }
    }
    EXPECT_NEAR(log_joint_density(g, v), ref, 1e-8 * std::abs(ref));
  }
}

TEST(NmaGraph, ConsistencyHoldsInEveryDraw) {
  for (const auto& tree : {kStar, kAltTree}) {
    NmaSpec spec;
    spec.basic_tree = tree;
    auto s = sample(build_nma_graph(smoking_data(), spec), quick(4000));
    const auto ts = treatments_of(smoking_data());
    for (std::size_t c = 0; c < s.chains(); ++c) {
      for (std::size_t d = 0; d < s.draws_per_chain(); d += 97) {
        for (const auto& j : ts) {
          for (const auto& k : ts) {
            for (const auto& l : ts) {
              if (!(j < k && k < l)) continue;
              const double jk = s.value(c, d, s.column_index(eta_id(j, k)));
              const double kl = s.value(c, d, s.column_index(eta_id(k, l)));
              const double jl = s.value(c, d, s.column_index(eta_id(j, l)));
              EXPECT_NEAR(jk + kl, jl, 1e-12);
            }
          }
        }
      }
    }
  }
}

// Prior draws of one three-arm study: the study effects share covariance
// sigma^2 / 2 against a variance of sigma^2.
TEST(NmaGraph, RandomEffectCovarianceRatioIsHalf) {
  std::vector<TrialArm> arms{{"1", "ABC", "A", 1, 10}, {"1", "ABC", "B", 2, 10}, {"1", "ABC", "C", 3, 10}};
  ModelGraph full = build_nma_graph(arms, NmaSpec{});
  ModelGraph prior;
  for (const auto& n : full.nodes()) {
    if (n.role != NodeRole::Observed) prior.add_node(n);
  }
  for (const auto& b : full.blocks()) prior.add_block(b);
  auto cfg = quick(60000, 5);
  auto s = sample(prior, cfg);
  auto bb = s.column(delta_id("1", "B")), bc = s.column(delta_id("1", "C"));
  auto eb = s.column(eta_id("A", "B")), ec = s.column(eta_id("A", "C"));
  double sbb = 0, scc = 0, sbc = 0;
  const double n = static_cast<double>(bb.size());
  for (std::size_t i = 0; i < bb.size(); ++i) {
    const double x = bb[i] - eb[i], y = bc[i] - ec[i];
    sbb += x * x;
    scc += y * y;
    sbc += x * y;
  }
  EXPECT_NEAR(sbc / std::sqrt(sbb * scc), 0.5, 0.05);
  EXPECT_NEAR(sbb / n / (scc / n), 1.0, 0.1);
}

// Two studies comparing A and B under common effects; the oracle integrates
// the study baselines out numerically on a grid.
TEST(NmaGraph, PairwiseCommonEffectMatchesQuadrature) {
  std::vector<TrialArm> arms{{"1", "AB", "A", 10, 100}, {"1", "AB", "B", 20, 100},
                             {"2", "AB", "A", 15, 120}, {"2", "AB", "B", 25, 110}};
  std::vector<double> grid, logpost;
  for (double eta = -2.0; eta <= 3.0; eta += 0.002) {
    double lp = log_normal_pdf(eta, 0.0, 10.0);
    for (int s = 0; s < 2; ++s) {
      const auto& a = arms[static_cast<std::size_t>(2 * s)];
      const auto& b = arms[static_cast<std::size_t>(2 * s + 1)];
      std::vector<double> terms;
      for (double al = -8.0; al <= 3.0; al += 0.004) {
        terms.push_back(log_normal_pdf(al, 0.0, 10.0) +
                        log_binom(static_cast<double>(a.events), static_cast<double>(a.total), ilogit(al)) +
                        log_binom(static_cast<double>(b.events), static_cast<double>(b.total), ilogit(al + eta)));
      }
      const double mx = *std::max_element(terms.begin(), terms.end());
      double acc = 0.0;
      for (double t : terms) acc += std::exp(t - mx);
      lp += mx + std::log(acc);
    }
    grid.push_back(eta);
    logpost.push_back(lp);
  }
  const double mx = *std::max_element(logpost.begin(), logpost.end());
  double z = 0, m1 = 0, m2 = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = std::exp(logpost[i] - mx);
    z += w;
    m1 += w * grid[i];
    m2 += w * grid[i] * grid[i];
  }
  const double mean = m1 / z, sd = std::sqrt(m2 / z - mean * mean);

  NmaSpec spec;
  spec.effect = EffectModel::Common;
  ModelGraph g = build_nma_graph(arms, spec);
  auto s = sample(g, quick(40000, 9));
  EXPECT_NEAR(s.mean("eta_A_B"), mean, 4.0 * mc_standard_error(s, "eta_A_B"));
  EXPECT_NEAR(s.sd("eta_A_B"), sd, 0.05 * sd);
}

TEST(Schemes, EnumerationForBothTrees) {
  auto arms = smoking_data();
  auto star = enumerate_schemes(arms, kStar);
  ASSERT_EQ(star.size(), 3u);
  EXPECT_EQ(star[0].multi_arm, MultiArmPlacement::InST);
  EXPECT_EQ(star[1].multi_arm, MultiArmPlacement::InDE);
  EXPECT_EQ(star[2].kind, SchemeKind::SequentialTrees);
  std::vector<std::vector<Edge>> further{{{"B", "C"}, {"B", "D"}}, {{"C", "D"}}};
  EXPECT_EQ(star[2].further_trees, further);

  auto alt = enumerate_schemes(arms, kAltTree);
  ASSERT_GE(alt.size(), 2u);
  auto e = split_nma(arms, NmaSpec{}, alt[0]);
  std::vector<Edge> compared{{"A", "D"}, {"B", "C"}, {"C", "D"}};
  EXPECT_EQ(e.compared_edges, compared);

  std::vector<TrialArm> pair{{"1", "AB", "A", 1, 10}, {"1", "AB", "B", 2, 10}};
  auto deg = enumerate_schemes(pair, {{"A", "B"}});
  ASSERT_EQ(deg.size(), 1u);
  EXPECT_EQ(deg[0].name.rfind("degenerate", 0), 0u);
}

TEST(Schemes, StudyPlacement) {
  auto arms = smoking_data();
  auto star = enumerate_schemes(arms, kStar);
  auto b = split_nma(arms, NmaSpec{}, star[0]);
  ASSERT_EQ(b.partition_studies.size(), 2u);
  EXPECT_EQ(as_set(b.partition_studies[0]), numbered({{1, 19}, {21, 21}}));
  EXPECT_EQ(as_set(b.partition_studies[1]), numbered({{20, 20}, {22, 24}}));
  auto c = split_nma(arms, NmaSpec{}, star[1]);
  EXPECT_EQ(as_set(c.partition_studies[0]), numbered({{1, 17}, {19, 19}}));
  EXPECT_EQ(as_set(c.partition_studies[1]), numbered({{18, 18}, {20, 24}}));
  auto d = split_nma(arms, NmaSpec{}, star[2]);
  ASSERT_EQ(d.partition_studies.size(), 4u);
  EXPECT_EQ(as_set(d.partition_studies[1]), numbered({{20, 20}, {22, 22}}));
  EXPECT_EQ(as_set(d.partition_studies[2]), numbered({{23, 24}}));
  EXPECT_EQ(as_set(d.partition_studies[3]), numbered({{18, 18}, {21, 21}}));

  auto pairs = d.model.contrast_pairs();
  ASSERT_EQ(pairs.size(), 9u);
  std::vector<std::string> labels;
  for (const auto& p : pairs) labels.push_back(d.model.contrast_label(p));
  EXPECT_EQ(labels[0], "eta_B_C:1-2");
  EXPECT_EQ(labels[2], "eta_B_C:1-4");
  EXPECT_EQ(labels[5], "eta_B_D:1-4");
}

TEST(Schemes, MultiArmStudiesNeverSplit) {
  auto arms = smoking_data();
  std::vector<PartitionScheme> all = enumerate_schemes(arms, kStar);
  for (auto& s : enumerate_schemes(arms, kAltTree)) all.push_back(s);
  for (const auto& scheme : all) {
    auto ns = split_nma(arms, NmaSpec{}, scheme);
    std::map<std::string, std::set<std::string>> where;
    for (const auto& part : ns.spec.partitions) {
      for (const auto& y : part.data) {
        const auto study = y.substr(2, y.rfind('_') - 2);
        where[study].insert(part.name);
      }
    }
    EXPECT_EQ(where.size(), 24u);
    for (const auto& [study, parts] : where) EXPECT_EQ(parts.size(), 1u) << scheme.name << " " << study;
  }
  PartitionScheme custom;
  custom.kind = SchemeKind::Custom;
  custom.spanning_tree = kStar;
  custom.custom_partitions = {{"1", "2"}, {"2"}};
  EXPECT_THROW(split_nma(arms, NmaSpec{}, custom), PreconditionError);
}

TEST(Schemes, SeparateVariancesAddSigmaContrast) {
  auto scheme = enumerate_schemes(smoking_data(), kStar)[1];
  scheme.share_variance = false;
  auto ns = split_nma(smoking_data(), NmaSpec{}, scheme);
  EXPECT_TRUE(ns.model.graph.contains("sigma@1"));
  EXPECT_TRUE(ns.model.graph.contains("sigma@2"));
  EXPECT_EQ(ns.model.contrast_pairs().size(), 4u);
  scheme.share_variance = true;
  auto shared = split_nma(smoking_data(), NmaSpec{}, scheme);
  EXPECT_TRUE(shared.model.graph.contains("sigma"));
  EXPECT_EQ(shared.model.contrast_pairs().size(), 3u);
}

TEST(SingleSplit, DirectStudiesAndErrors) {
  auto arms = smoking_data();
  auto bc = single_node_split(arms, NmaSpec{}, {"B", "C"});
  EXPECT_EQ(as_set(bc.partition_studies[0]), numbered({{20, 21}}));
  ASSERT_EQ(bc.model.contrast_pairs().size(), 1u);
  EXPECT_EQ(bc.model.contrast_label(bc.model.contrast_pairs()[0]), "eta_B_C:dir-ind");
  EXPECT_EQ(bc.model.graph.node("eta_B_C@dir").role, NodeRole::StochasticFounder);

  auto ab = single_node_split(arms, NmaSpec{}, {"A", "B"});
  EXPECT_EQ(as_set(ab.partition_studies[0]), numbered({{1, 3}}));

  std::vector<TrialArm> chain{{"1", "AB", "A", 3, 10}, {"1", "AB", "B", 4, 10},
                              {"2", "BC", "B", 3, 10}, {"2", "BC", "C", 5, 10}};
  EXPECT_THROW(single_node_split(chain, NmaSpec{}, {"A", "C"}), NoDirectEvidence);
}

TEST(SingleSplit, OneContrastHasNoMultiplicity) {
  auto ns = single_node_split(smoking_data(), NmaSpec{}, {"B", "C"});
  auto s = sample(ns.model.graph, quick(20000, 4));
  auto r = maxT_adjust(build_contrasts(ns.model, s));
  ASSERT_EQ(r.contrasts.size(), 1u);
  EXPECT_NEAR(r.contrasts[0].p_adjusted, r.contrasts[0].p_unadjusted, 2e-3);
}

// Partition 1 holds the same studies in the DE-multi-arm and sequential
// schemes, so its AC estimate must agree.
TEST(Schemes, SameEvidenceSameEstimate) {
  auto arms = smoking_data();
  auto star = enumerate_schemes(arms, kStar);
  auto c = split_nma(arms, NmaSpec{}, star[1]);
  auto d = split_nma(arms, NmaSpec{}, star[2]);
  ASSERT_EQ(c.partition_studies[0], d.partition_studies[0]);
  auto sc = sample(c.model.graph, quick(40000, 21));
  auto sd = sample(d.model.graph, quick(40000, 22));
  const NodeId id = "eta_A_C@1";
  const double se = std::hypot(mc_standard_error(sc, id), mc_standard_error(sd, id));
  EXPECT_NEAR(sc.mean(id), sd.mean(id), 4.0 * se);
}
