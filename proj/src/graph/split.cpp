#include "nodesplit/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"

namespace nodesplit {

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::Identity: return "identity";
    case Transform::Logit: return "logit";
    case Transform::Log: return "log";
  }
  return "identity";
}

std::optional<Transform> transform_from_string(std::string_view s) {
  if (s == "identity") return Transform::Identity;
  if (s == "logit") return Transform::Logit;
  if (s == "log") return Transform::Log;
  return std::nullopt;
}

Transform default_transform(Support s) {
  switch (s) {
    case Support::UnitInterval: return Transform::Logit;
    case Support::Positive: return Transform::Log;
    default: return Transform::Identity;
  }
}

double apply_transform(Transform t, double x) {
  switch (t) {
    case Transform::Identity:
      return x;
    case Transform::Logit:
      if (!(x > 0.0 && x < 1.0)) {
        throw TransformDomainError("logit undefined at " + std::to_string(x));
      }
      return dist::logit(x);
    case Transform::Log:
      if (!(x > 0.0)) throw TransformDomainError("log undefined at " + std::to_string(x));
      return std::log(x);
  }
  return x;
}

NodeId partition_node_id(const NodeId& id, const std::string& partition) {
  return id + "@" + partition;
}

Distribution jeffreys_prior(Support s) {
  switch (s) {
    case Support::UnitInterval: return Distribution::jeffreys_proportion();
    case Support::Positive: return Distribution::jeffreys_rate();
    default: return Distribution::improper_flat();
  }
}

std::vector<ContrastPair> SplitModel::contrast_pairs() const {
  std::vector<ContrastPair> out;
  for (std::size_t j = 0; j < spec.separators.size(); ++j) {
    std::vector<std::size_t> parts;
    for (std::size_t q = 0; q < spec.partitions.size(); ++q) {
      if (separator_copies.count({j, q})) parts.push_back(q);
    }
    if (spec.pairs == PairPlan::AgainstFirst) {
      for (std::size_t b = 1; b < parts.size(); ++b) out.push_back({j, parts[0], parts[b]});
    } else {
      for (std::size_t a = 0; a < parts.size(); ++a) {
        for (std::size_t b = a + 1; b < parts.size(); ++b) out.push_back({j, parts[a], parts[b]});
      }
    }
  }
  return out;
}

std::string SplitModel::contrast_label(const ContrastPair& c) const {
  return spec.separators[c.separator].node + ":" + spec.partitions[c.first].name + "-" +
         spec.partitions[c.second].name;
}

namespace {

// Ancestors of each node (inclusive), by index into g.nodes().
std::vector<std::set<std::size_t>> ancestor_sets(const ModelGraph& g,
                                                 const std::vector<std::size_t>& order) {
  std::vector<std::set<std::size_t>> anc(g.size());
  for (auto i : order) {
    anc[i].insert(i);
    for (const auto& p : g.nodes()[i].parents()) {
      const auto& pa = anc[g.index_of(p)];
      anc[i].insert(pa.begin(), pa.end());
    }
  }
  return anc;
}

SplitSpec complete_spec(const ModelGraph& g, const SplitSpec& in,
                        const std::vector<std::set<std::size_t>>& anc) {
  SplitSpec spec = in;
  for (auto& sep : spec.separators) {
    const NodeDef& def = g.node(sep.node);
    if (!sep.transform) sep.transform = default_transform(def.support);
    if (sep.copies.empty()) {
      const std::size_t si = g.index_of(sep.node);
      for (const auto& part : spec.partitions) {
        bool reached = std::any_of(part.data.begin(), part.data.end(), [&](const NodeId& y) {
          return anc[g.index_of(y)].count(si) != 0;
        });
        if (reached) sep.copies.push_back({part.name, false, std::nullopt});
      }
    }
    for (auto& copy : sep.copies) {
      if (copy.founder && !copy.prior) copy.prior = jeffreys_prior(def.support);
    }
  }
  return spec;
}

void check_spec(const ModelGraph& g, const SplitSpec& spec) {
  std::set<std::string> names;
  std::set<NodeId> used;
  for (const auto& part : spec.partitions) {
    if (part.name.empty() || !names.insert(part.name).second) {
      throw InvalidSeparator("partition names must be non-empty and unique ('" + part.name + "')");
    }
    for (const auto& y : part.data) {
      const NodeDef* n = g.find(y);
      if (!n || n->role != NodeRole::Observed) {
        throw InvalidSeparator("partition '" + part.name + "' lists '" + y +
                               "', which is not an observed node");
      }
      if (!used.insert(y).second) {
        throw InvalidSeparator("observation '" + y + "' assigned to more than one partition");
      }
    }
  }
  std::set<NodeId> seps;
  for (const auto& sep : spec.separators) {
    const NodeDef* n = g.find(sep.node);
    if (!n) throw InvalidSeparator("separator '" + sep.node + "' does not exist");
    if (n->role == NodeRole::Observed) {
      throw InvalidSeparator("separator '" + sep.node + "' is an observed node");
    }
    if (!seps.insert(sep.node).second) {
      throw InvalidSeparator("separator '" + sep.node + "' declared twice");
    }
    if (std::find(spec.shared_nodes.begin(), spec.shared_nodes.end(), sep.node) !=
        spec.shared_nodes.end()) {
      throw InvalidSeparator("separator '" + sep.node + "' is also a shared node");
    }
    std::set<std::string> seen;
    for (const auto& c : sep.copies) {
      if (!names.count(c.partition)) {
        throw InvalidSeparator("copy of '" + sep.node + "' names unknown partition '" +
                               c.partition + "'");
      }
      if (!seen.insert(c.partition).second) {
        throw InvalidSeparator("two copies of '" + sep.node + "' in partition '" + c.partition + "'");
      }
    }
  }
  for (const auto& s : spec.shared_nodes) {
    const NodeDef* n = g.find(s);
    if (!n || n->role == NodeRole::Observed) {
      throw InvalidSeparator("shared node '" + s + "' must be an unobserved node");
    }
  }
}

void check_identifiable(const ModelGraph& out) {
  auto children = out.children_lists();
  const std::size_t n = out.size();
  std::vector<int> has_data(n, -1);
  std::function<bool(std::size_t)> reaches = [&](std::size_t i) -> bool {
    if (has_data[i] >= 0) return has_data[i] == 1;
    bool r = false;
    for (auto c : children[i]) {
      if (out.nodes()[c].role == NodeRole::Observed || reaches(c)) {
        r = true;
        break;
      }
    }
    has_data[i] = r ? 1 : 0;
    return r;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const NodeDef& d = out.nodes()[i];
    if (d.is_stochastic() && !d.dist->is_proper() && !reaches(i)) {
      throw UnidentifiablePartition("node '" + d.id + "' has an improper prior and no data");
    }
  }
}

}  // namespace

SplitModel split(const ModelGraph& g, const SplitSpec& input) {
  require_valid(g);
  check_spec(g, input);
  const auto order = *g.canonical_order();
  const auto anc = ancestor_sets(g, order);
  SplitModel result;
  result.spec = complete_spec(g, input, anc);
  const SplitSpec& spec = result.spec;

  std::set<std::size_t> shared;
  for (const auto& s : spec.shared_nodes) {
    const auto& a = anc[g.index_of(s)];
    shared.insert(a.begin(), a.end());
  }
  for (const auto& sep : spec.separators) {
    if (shared.count(g.index_of(sep.node))) {
      throw InvalidSeparator("separator '" + sep.node + "' is an ancestor of a shared node");
    }
  }

  ModelGraph& out = result.graph;
  std::set<std::size_t> shared_used;
  std::vector<std::set<std::size_t>> retained(spec.partitions.size());
  std::vector<std::map<std::size_t, const CopyDecl*>> copies(spec.partitions.size());
  for (std::size_t q = 0; q < spec.partitions.size(); ++q) {
    for (std::size_t j = 0; j < spec.separators.size(); ++j) {
      for (const auto& c : spec.separators[j].copies) {
        if (c.partition == spec.partitions[q].name) {
          copies[q][g.index_of(spec.separators[j].node)] = &c;
        }
      }
    }
    std::vector<std::size_t> stack;
    for (const auto& y : spec.partitions[q].data) stack.push_back(g.index_of(y));
    for (const auto& [si, c] : copies[q]) stack.push_back(si);
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      if (shared.count(i)) {
        const auto& a = anc[i];
        shared_used.insert(a.begin(), a.end());
        continue;
      }
      if (!retained[q].insert(i).second) continue;
      std::vector<NodeId> parents;
      auto it = copies[q].find(i);
      if (it != copies[q].end() && it->second->founder) {
        for (const auto& p : it->second->prior->params) {
          if (p.is_ref()) parents.push_back(p.ref);
        }
      } else {
        parents = g.nodes()[i].parents();
      }
      for (const auto& p : parents) {
        const NodeDef* pd = g.find(p);
        if (!pd) throw InvalidSeparator("copy prior references unknown node '" + p + "'");
        stack.push_back(g.index_of(p));
      }
    }
  }

  for (auto i : order) {
    if (shared_used.count(i)) out.add_node(g.nodes()[i]);
  }

  result.partition_nodes.resize(spec.partitions.size());
  for (std::size_t q = 0; q < spec.partitions.size(); ++q) {
    const std::string& pname = spec.partitions[q].name;
    auto rename = [&](const NodeId& id) -> NodeId {
      auto idx = g.index_of(id);
      if (shared.count(idx) || g.nodes()[idx].role == NodeRole::Observed) return id;
      return partition_node_id(id, pname);
    };
    for (auto i : order) {
      if (!retained[q].count(i)) continue;
      const NodeDef& orig = g.nodes()[i];
      NodeDef def;
      def.id = rename(orig.id);
      def.support = orig.support;
      auto it = copies[q].find(i);
      if (it != copies[q].end() && it->second->founder) {
        Distribution prior = *it->second->prior;
        bool has_ref = false;
        for (auto& p : prior.params) {
          if (p.is_ref()) {
            p.ref = rename(p.ref);
            has_ref = true;
          }
        }
        def.role = has_ref ? NodeRole::StochasticInternal : NodeRole::StochasticFounder;
        if (prior.kind == DistKind::ImproperFlat) {
          result.notes.push_back("copy '" + def.id + "' uses a flat prior on the real line");
        }
        def.dist = std::move(prior);
      } else {
        def.role = orig.role;
        def.observed_value = orig.observed_value;
        if (orig.dist) {
          Distribution d = *orig.dist;
          for (auto& p : d.params) {
            if (p.is_ref()) p.ref = rename(p.ref);
          }
          def.dist = std::move(d);
        }
        if (orig.expr) def.expr = orig.expr->rename(rename);
      }
      result.partition_nodes[q].push_back(def.id);
      out.add_node(std::move(def));
    }
  }

  for (const auto& block : g.blocks()) {
    std::vector<NodeId> shared_members;
    for (const auto& id : block) {
      if (shared_used.count(g.index_of(id))) shared_members.push_back(id);
    }
    if (!shared_members.empty()) out.add_block(shared_members);
    for (std::size_t q = 0; q < spec.partitions.size(); ++q) {
      std::vector<NodeId> members;
      for (const auto& id : block) {
        auto idx = g.index_of(id);
        if (retained[q].count(idx) && !shared.count(idx)) {
          members.push_back(partition_node_id(id, spec.partitions[q].name));
        }
      }
      if (!members.empty()) out.add_block(std::move(members));
    }
  }

  for (std::size_t j = 0; j < spec.separators.size(); ++j) {
    for (std::size_t q = 0; q < spec.partitions.size(); ++q) {
      if (copies[q].count(g.index_of(spec.separators[j].node))) {
        result.separator_copies[{j, q}] =
            partition_node_id(spec.separators[j].node, spec.partitions[q].name);
      }
    }
  }
  result.m_q.assign(spec.partitions.size(), 0);
  for (const auto& [key, id] : result.separator_copies) ++result.m_q[key.second];
  result.m = result.separator_copies.size();

  auto diags = validate_graph(out);
  if (!diags.empty()) {
    throw InvalidGraph("split produced an invalid graph: " + diags.front().message);
  }
  check_identifiable(out);
  return result;
}

}  // namespace nodesplit
