#pragma once

#include <istream>
#include <string>
#include <utility>
#include <vector>

#include "nodesplit/graph.hpp"
#include "nodesplit/split.hpp"

namespace nodesplit {

struct TrialArm {
  std::string study;
  std::string design;
  std::string treatment;
  long events = 0;
  long total = 0;
};

// Smoking cessation network: 24 studies, treatments A-D, two three-arm trials.
std::vector<TrialArm> smoking_data();

// Delimited table with header study,design,treatment,events,total. Throws
// ParseError on malformed rows and PreconditionError on broken invariants.
std::vector<TrialArm> read_trial_arms(std::istream& in);
std::vector<TrialArm> load_trial_arms(const std::string& path);
void check_trial_arms(const std::vector<TrialArm>& arms);

// Unordered treatment pair, stored with first < second.
using Edge = std::pair<std::string, std::string>;
Edge make_edge(const std::string& a, const std::string& b);
std::string edge_name(const Edge& e);  // "AB"

enum class EffectModel { Common, Random };

struct NmaSpec {
  std::string reference = "A";
  EffectModel effect = EffectModel::Random;
  double sigma_upper = 5.0;
  double basic_prior_sd = 10.0;
  // Study baselines alpha ~ Normal(0, sd^2).
  double baseline_prior_sd = 10.0;
  // Edges carrying the Normal(0, sd^2) priors; empty means the star from the
  // reference treatment. Every other contrast is a path sum over this tree.
  std::vector<Edge> basic_tree;
};

struct StudyInfo {
  std::string id;
  // Treatments in ascending order; the first is the study baseline.
  std::vector<std::string> treatments;
  bool multi_arm() const { return treatments.size() > 2; }
};

std::vector<StudyInfo> studies_of(const std::vector<TrialArm>& arms);
std::vector<std::string> treatments_of(const std::vector<TrialArm>& arms);

// Node naming used by the builder.
NodeId eta_id(const std::string& j, const std::string& k);
NodeId alpha_id(const std::string& study);
NodeId delta_id(const std::string& study, const std::string& treatment);
NodeId events_id(const std::string& study, const std::string& treatment);

// Binomial NMA under consistency. Every treatment pair J<K has a node
// eta_J_K; tree edges are stochastic, the rest deterministic path sums.
// Throws DisconnectedNetwork when a treatment cannot be reached from the
// reference, PreconditionError on an invalid tree.
ModelGraph build_nma_graph(const std::vector<TrialArm>& arms, const NmaSpec& spec);

enum class SchemeKind { TwoWay, SequentialTrees, Custom };
enum class MultiArmPlacement { InST, InDE, OwnPartition };

struct PartitionScheme {
  SchemeKind kind = SchemeKind::TwoWay;
  std::string name;
  std::vector<Edge> spanning_tree;
  MultiArmPlacement multi_arm = MultiArmPlacement::InST;
  bool share_variance = true;
  // SequentialTrees: the trees after the first, in order.
  std::vector<std::vector<Edge>> further_trees;
  // Custom: study ids per partition.
  std::vector<std::vector<std::string>> custom_partitions;
};

// Two-way schemes with multi-arm studies in ST and in DE, then the
// sequential-tree scheme with its own multi-arm partition. A network with no
// edges outside the tree yields a single scheme flagged degenerate in its name.
std::vector<PartitionScheme> enumerate_schemes(const std::vector<TrialArm>& arms,
                                               const std::vector<Edge>& spanning_tree);

struct NmaSplit {
  ModelGraph base;
  SplitSpec spec;
  SplitModel model;
  std::vector<std::vector<std::string>> partition_studies;
  // Edges whose eta is compared across partitions.
  std::vector<Edge> compared_edges;
};

// Multi-node split at the eta of every edge outside the spanning tree.
// Partitions are named "1", "2", ... in scheme order.
NmaSplit split_nma(const std::vector<TrialArm>& arms, const NmaSpec& spec,
                   const PartitionScheme& scheme);

// Direct versus indirect split of one edge. Studies holding both J and K with
// J as their baseline form partition "dir" with their own eta_J_K; all others
// form "ind". Throws NoDirectEvidence when no study qualifies.
NmaSplit single_node_split(const std::vector<TrialArm>& arms, const NmaSpec& spec,
                           const Edge& edge);

}  // namespace nodesplit
