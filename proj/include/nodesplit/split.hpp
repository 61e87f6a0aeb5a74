#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nodesplit/graph.hpp"

namespace nodesplit {

enum class Transform { Identity, Logit, Log };

std::string_view to_string(Transform t);
std::optional<Transform> transform_from_string(std::string_view s);
// Identity for Real, logit for UnitInterval, log for Positive.
Transform default_transform(Support s);
// Throws TransformDomainError outside the domain.
double apply_transform(Transform t, double x);

// How a separator appears inside one partition. A derived copy keeps the
// original definition (renamed into the partition); a founder copy is cut
// from its parents and receives `prior` (Jeffreys on the support when unset).
struct CopyDecl {
  std::string partition;
  bool founder = false;
  std::optional<Distribution> prior;
  bool operator==(const CopyDecl&) const = default;
};

struct SeparatorDecl {
  NodeId node;
  std::optional<Transform> transform;
  // Empty means: a derived copy in every partition whose data depend on the
  // separator.
  std::vector<CopyDecl> copies;
  bool operator==(const SeparatorDecl&) const = default;
};

struct PartitionDecl {
  std::string name;
  std::vector<NodeId> data;
  bool operator==(const PartitionDecl&) const = default;
};

enum class PairPlan { AllPairs, AgainstFirst };

struct SplitSpec {
  std::vector<SeparatorDecl> separators;
  std::vector<PartitionDecl> partitions;
  std::vector<NodeId> shared_nodes;
  PairPlan pairs = PairPlan::AllPairs;
  bool operator==(const SplitSpec&) const = default;
};

// One pairwise contrast h(first copy) - h(second copy).
struct ContrastPair {
  std::size_t separator = 0;
  std::size_t first = 0;
  std::size_t second = 0;
};

struct SplitModel {
  ModelGraph graph;
  // Spec with defaults filled in: every separator has a transform and an
  // explicit copy list.
  SplitSpec spec;
  std::map<std::pair<std::size_t, std::size_t>, NodeId> separator_copies;
  std::vector<std::size_t> m_q;
  std::size_t m = 0;
  // Node ids of the split graph owned by each partition (shared nodes excluded).
  std::vector<std::vector<NodeId>> partition_nodes;
  // Human-readable remarks, e.g. copies that fell back to a flat prior.
  std::vector<std::string> notes;

  // Contrasts ordered by separator, then partition pair.
  std::vector<ContrastPair> contrast_pairs() const;
  std::string contrast_label(const ContrastPair& c) const;
};

// Name of node `id` inside partition `partition` of a split graph.
NodeId partition_node_id(const NodeId& id, const std::string& partition);

// Jeffreys prior for the support (flat on the real line).
Distribution jeffreys_prior(Support s);

SplitModel split(const ModelGraph& g, const SplitSpec& spec);

}  // namespace nodesplit
