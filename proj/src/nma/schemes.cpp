#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "nodesplit/errors.hpp"
#include "nodesplit/nma.hpp"

namespace nodesplit {

namespace {

// Union-find over treatment labels, used to grow forests edge by edge.
struct Forest {
  std::map<std::string, std::string> parent;
  std::string find(const std::string& x) {
    auto it = parent.find(x);
    if (it == parent.end() || it->second == x) return x;
    return it->second = find(it->second);
  }
  bool join(const std::string& a, const std::string& b) {
    auto ra = find(a), rb = find(b);
    if (ra == rb) return false;
    parent[ra] = rb;
    return true;
  }
};

bool contains_edge(const std::vector<Edge>& edges, const Edge& e) {
  return std::any_of(edges.begin(), edges.end(),
                     [&](const Edge& x) { return make_edge(x.first, x.second) == e; });
}

std::vector<Edge> outside_tree(const std::vector<std::string>& treatments,
                               const std::vector<Edge>& tree) {
  std::vector<Edge> out;
  for (std::size_t a = 0; a < treatments.size(); ++a) {
    for (std::size_t b = a + 1; b < treatments.size(); ++b) {
      Edge e{treatments[a], treatments[b]};
      if (!contains_edge(tree, e)) out.push_back(e);
    }
  }
  return out;
}

std::vector<std::vector<std::string>> assign_studies(const std::vector<StudyInfo>& studies,
                                                     const PartitionScheme& scheme) {
  std::vector<std::vector<std::string>> parts;
  auto put = [&](std::size_t q, const std::string& id) {
    if (parts.size() <= q) parts.resize(q + 1);
    parts[q].push_back(id);
  };
  switch (scheme.kind) {
    case SchemeKind::TwoWay:
      parts.resize(scheme.multi_arm == MultiArmPlacement::OwnPartition ? 3 : 2);
      for (const auto& s : studies) {
        if (s.multi_arm()) {
          const std::size_t q = scheme.multi_arm == MultiArmPlacement::InST   ? 0
                                : scheme.multi_arm == MultiArmPlacement::InDE ? 1
                                                                              : 2;
          put(q, s.id);
        } else {
          put(contains_edge(scheme.spanning_tree, make_edge(s.treatments[0], s.treatments[1])) ? 0 : 1,
              s.id);
        }
      }
      break;
    case SchemeKind::SequentialTrees: {
      std::vector<std::vector<Edge>> trees{scheme.spanning_tree};
      trees.insert(trees.end(), scheme.further_trees.begin(), scheme.further_trees.end());
      const bool own = scheme.multi_arm != MultiArmPlacement::InST;
      parts.resize(trees.size() + (own ? 1 : 0));
      for (const auto& s : studies) {
        if (s.multi_arm()) {
          put(own ? trees.size() : 0, s.id);
          continue;
        }
        const Edge e = make_edge(s.treatments[0], s.treatments[1]);
        auto it = std::find_if(trees.begin(), trees.end(),
                               [&](const auto& t) { return contains_edge(t, e); });
        if (it == trees.end()) {
          throw PreconditionError("study " + s.id + " compares " + edge_name(e) +
                                  ", which is in none of the scheme's trees");
        }
        put(static_cast<std::size_t>(it - trees.begin()), s.id);
      }
      break;
    }
    case SchemeKind::Custom: {
      std::set<std::string> seen;
      for (const auto& p : scheme.custom_partitions) {
        for (const auto& id : p) {
          if (!seen.insert(id).second) {
            throw PreconditionError("study " + id + " is placed in two partitions");
          }
        }
      }
      for (const auto& s : studies) {
        if (!seen.count(s.id)) throw PreconditionError("study " + s.id + " is in no partition");
      }
      if (seen.size() != studies.size()) {
        throw PreconditionError("custom partitions name a study that is not in the data");
      }
      parts = scheme.custom_partitions;
      break;
    }
  }
  parts.erase(std::remove_if(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); }),
              parts.end());
  return parts;
}

std::vector<NodeId> study_data(const StudyInfo& s) {
  std::vector<NodeId> out;
  for (const auto& t : s.treatments) out.push_back(events_id(s.id, t));
  return out;
}

}  // namespace

std::vector<PartitionScheme> enumerate_schemes(const std::vector<TrialArm>& arms,
                                               const std::vector<Edge>& spanning_tree) {
  const auto treatments = treatments_of(arms);
  const auto outside = outside_tree(treatments, spanning_tree);
  std::string tree_label;
  for (const auto& e : spanning_tree) {
    tree_label += (tree_label.empty() ? "" : ",") + edge_name(make_edge(e.first, e.second));
  }
  if (outside.empty()) {
    PartitionScheme s;
    s.name = "degenerate:" + tree_label;
    s.spanning_tree = spanning_tree;
    return {s};
  }
  PartitionScheme st;
  st.name = "st:" + tree_label;
  st.spanning_tree = spanning_tree;
  st.multi_arm = MultiArmPlacement::InST;
  PartitionScheme de = st;
  de.name = "de:" + tree_label;
  de.multi_arm = MultiArmPlacement::InDE;

  // Remaining two-arm edges, packed greedily into forests in label order.
  std::set<Edge> direct;
  for (const auto& s : studies_of(arms)) {
    if (s.multi_arm()) continue;
    Edge e = make_edge(s.treatments[0], s.treatments[1]);
    if (!contains_edge(spanning_tree, e)) direct.insert(e);
  }
  PartitionScheme seq = st;
  seq.name = "sequential:" + tree_label;
  seq.kind = SchemeKind::SequentialTrees;
  seq.multi_arm = MultiArmPlacement::OwnPartition;
  std::vector<Edge> pending(direct.begin(), direct.end());
  while (!pending.empty()) {
    Forest f;
    std::vector<Edge> tree, rest;
    for (const auto& e : pending) {
      if (f.join(e.first, e.second)) {
        tree.push_back(e);
      } else {
        rest.push_back(e);
      }
    }
    seq.further_trees.push_back(std::move(tree));
    pending = std::move(rest);
  }
  return {st, de, seq};
}

NmaSplit split_nma(const std::vector<TrialArm>& arms, const NmaSpec& spec,
                   const PartitionScheme& scheme) {
  NmaSpec base_spec = spec;
  base_spec.basic_tree = scheme.spanning_tree;
  NmaSplit out;
  out.base = build_nma_graph(arms, base_spec);
  const auto studies = studies_of(arms);
  std::map<std::string, const StudyInfo*> by_id;
  for (const auto& s : studies) by_id[s.id] = &s;
  out.partition_studies = assign_studies(studies, scheme);

  SplitSpec& ss = out.spec;
  for (std::size_t q = 0; q < out.partition_studies.size(); ++q) {
    PartitionDecl p;
    p.name = std::to_string(q + 1);
    for (const auto& id : out.partition_studies[q]) {
      for (auto& y : study_data(*by_id.at(id))) p.data.push_back(std::move(y));
    }
    ss.partitions.push_back(std::move(p));
  }
  out.compared_edges = outside_tree(treatments_of(arms), scheme.spanning_tree);
  for (const auto& e : out.compared_edges) {
    SeparatorDecl sep;
    sep.node = eta_id(e.first, e.second);
    sep.transform = Transform::Identity;
    for (const auto& p : ss.partitions) sep.copies.push_back({p.name, false, std::nullopt});
    ss.separators.push_back(std::move(sep));
  }
  if (spec.effect == EffectModel::Random) {
    if (scheme.share_variance) {
      ss.shared_nodes.push_back("sigma");
    } else {
      SeparatorDecl sep;
      sep.node = "sigma";
      sep.transform = Transform::Log;
      for (const auto& p : ss.partitions) sep.copies.push_back({p.name, false, std::nullopt});
      ss.separators.push_back(std::move(sep));
    }
  }
  ss.pairs = scheme.kind == SchemeKind::SequentialTrees ? PairPlan::AgainstFirst : PairPlan::AllPairs;
  out.model = split(out.base, ss);
  return out;
}

NmaSplit single_node_split(const std::vector<TrialArm>& arms, const NmaSpec& spec,
                           const Edge& edge0) {
  const Edge edge = make_edge(edge0.first, edge0.second);
  const auto treatments = treatments_of(arms);
  const auto studies = studies_of(arms);
  std::vector<std::string> dir, ind;
  for (const auto& s : studies) {
    const auto& t = s.treatments;
    const bool has_k = std::binary_search(t.begin(), t.end(), edge.second);
    (t[0] == edge.first && has_k ? dir : ind).push_back(s.id);
  }
  if (dir.empty()) throw NoDirectEvidence("no study compares " + edge_name(edge) + " directly");

  // Parameterise so that the split edge is functional whenever possible.
  NmaSpec base_spec = spec;
  std::string hub = spec.reference;
  if (hub == edge.first || hub == edge.second) {
    auto it = std::find_if(treatments.begin(), treatments.end(),
                           [&](const auto& t) { return t != edge.first && t != edge.second; });
    hub = it == treatments.end() ? edge.first : *it;
  }
  if (base_spec.basic_tree.empty() || contains_edge(base_spec.basic_tree, edge)) {
    base_spec.basic_tree.clear();
    for (const auto& t : treatments) {
      if (t != hub) base_spec.basic_tree.push_back(make_edge(hub, t));
    }
  }
  NmaSplit out;
  out.base = build_nma_graph(arms, base_spec);
  out.partition_studies = {dir, ind};
  std::map<std::string, const StudyInfo*> by_id;
  for (const auto& s : studies) by_id[s.id] = &s;

  SplitSpec& ss = out.spec;
  const char* names[2] = {"dir", "ind"};
  for (std::size_t q = 0; q < 2; ++q) {
    PartitionDecl p;
    p.name = names[q];
    for (const auto& id : out.partition_studies[q]) {
      for (auto& y : study_data(*by_id.at(id))) p.data.push_back(std::move(y));
    }
    ss.partitions.push_back(std::move(p));
  }
  SeparatorDecl sep;
  sep.node = eta_id(edge.first, edge.second);
  sep.transform = Transform::Identity;
  sep.copies.push_back({"dir", true,
                        Distribution::normal(Operand::value(0.0), Operand::value(spec.basic_prior_sd))});
  sep.copies.push_back({"ind", false, std::nullopt});
  ss.separators.push_back(std::move(sep));
  for (const auto& e : base_spec.basic_tree) {
    const NodeId id = eta_id(e.first, e.second);
    if (id != ss.separators[0].node) ss.shared_nodes.push_back(id);
  }
  if (spec.effect == EffectModel::Random) ss.shared_nodes.push_back("sigma");
  out.compared_edges = {edge};
  out.model = split(out.base, ss);
  return out;
}

}  // namespace nodesplit
