#pragma once

#include <istream>
#include <string>
#include <vector>

#include "nodesplit/conflict.hpp"
#include "nodesplit/graph.hpp"
#include "nodesplit/split.hpp"

namespace nodesplit {

// Polish MSM HIV prevalence data.
struct HivData {
  double N = 15749944;
  long y1 = 35, n1 = 1536;  // rho
  long y2 = 113, n2 = 2840;  // pi * kappa
  long y3 = 136, n3 = 2725;  // pi * (1 - kappa)
  long y4 = 836;   // Poisson, lower bound D_L
  long y5 = 5034;  // Poisson, upper bound D_U
};

// Priors on the bounds of the number diagnosed.
struct HivPriors {
  double bound_log_mean = 0.0;
  double bound_log_sd = 10.0;
};

// Rows "name,y,n,likelihood" for y1..y5 (n blank for the Poisson counts) and
// optionally "N,<population>,,fixed". Rows not present keep their defaults.
HivData read_hiv_data(std::istream& in, HivData base = {});
HivData load_hiv_data(const std::string& path, HivData base = {});
void check_hiv_data(const HivData& d);

// Nodes: rho, pi, kappa ~ Uniform(0,1); pi_kappa = pi kappa; pi_1mkappa =
// pi (1 - kappa); D = N rho pi kappa; D_L, D_U log-normal; constraint c =
// indicator(D_L <= D <= D_U) observed through a Bernoulli datum z = 1;
// binomial y1..y3 and Poisson y4, y5.
ModelGraph build_hiv_graph(const HivData& data = {}, const HivPriors& priors = {});

// Prior partition ("prior", holding z) against likelihood partitions y1, y2,
// y3 and y45. Likelihood copies take Jeffreys priors; D in y45 is uniform
// between that partition's bounds.
SplitSpec saturated_split_spec();
SplitModel saturated_split(const ModelGraph& g);

struct LeaveOutSpec {
  std::string name;  // "L1-A", "L2-J", ...
  std::vector<NodeId> left_out;
  std::vector<NodeId> split_nodes;
};

struct LeaveOutModel {
  LeaveOutSpec spec;
  SplitSpec split_spec;
  SplitModel model;
};

// n = 1 gives models A-E, n = 2 gives A-J. Partition "1" holds the left-out
// data with Jeffreys copies of the directly informed nodes; partition "2"
// keeps the rest of the data, the constraint and the original priors. When
// both y2 and y3 are left out pi and kappa are split as well; when both
// bounds are left out D is split with a uniform prior between them.
std::vector<LeaveOutModel> leave_n_out_splits(const ModelGraph& g, int n);

enum class AdjustScope { Within, PerFamily, All };

// Max-T adjustment over the contrasts of several models. Within reproduces
// each report's own adjustment. PerFamily and All pool every contrast of the
// given reports, treating models as independent: the correlation matrix is
// block diagonal, so the joint rectangle probability is the product of the
// per-model ones. The caller decides which reports form the family. Result
// is indexed [report][contrast].
std::vector<std::vector<double>> adjust_across_models(const std::vector<ConflictReport>& reports,
                                                      AdjustScope scope,
                                                      const MvnOptions& mvn = {});

}  // namespace nodesplit
