#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "nodesplit/errors.hpp"
#include "nodesplit/nma.hpp"

namespace nodesplit {

Edge make_edge(const std::string& a, const std::string& b) {
  return a < b ? Edge{a, b} : Edge{b, a};
}

std::string edge_name(const Edge& e) { return e.first + e.second; }

NodeId eta_id(const std::string& j, const std::string& k) {
  auto e = make_edge(j, k);
  return "eta_" + e.first + "_" + e.second;
}
NodeId alpha_id(const std::string& study) { return "alpha_" + study; }
NodeId delta_id(const std::string& study, const std::string& t) {
  return "delta_" + study + "_" + t;
}
NodeId events_id(const std::string& study, const std::string& t) {
  return "r_" + study + "_" + t;
}

std::vector<StudyInfo> studies_of(const std::vector<TrialArm>& arms) {
  std::vector<StudyInfo> out;
  std::map<std::string, std::size_t> at;
  for (const auto& a : arms) {
    auto [it, fresh] = at.emplace(a.study, out.size());
    if (fresh) out.push_back({a.study, {}});
    out[it->second].treatments.push_back(a.treatment);
  }
  for (auto& s : out) std::sort(s.treatments.begin(), s.treatments.end());
  return out;
}

std::vector<std::string> treatments_of(const std::vector<TrialArm>& arms) {
  std::set<std::string> t;
  for (const auto& a : arms) t.insert(a.treatment);
  return {t.begin(), t.end()};
}

namespace {

using Adjacency = std::map<std::string, std::vector<std::string>>;

// Treatments reachable from `start` over the given adjacency.
std::set<std::string> reachable(const Adjacency& adj, const std::string& start) {
  std::set<std::string> seen{start};
  std::queue<std::string> q;
  q.push(start);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    auto it = adj.find(u);
    if (it == adj.end()) continue;
    for (const auto& v : it->second) {
      if (seen.insert(v).second) q.push(v);
    }
  }
  return seen;
}

// Signed sum of tree edges along the path j -> k.
Expr path_expr(const Adjacency& tree, const std::string& j, const std::string& k) {
  std::map<std::string, std::string> prev;
  std::queue<std::string> q;
  q.push(j);
  prev[j] = j;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    if (u == k) break;
    for (const auto& v : tree.at(u)) {
      if (prev.emplace(v, u).second) q.push(v);
    }
  }
  std::vector<std::pair<std::string, std::string>> steps;
  for (std::string v = k; v != j; v = prev.at(v)) steps.emplace_back(prev.at(v), v);
  std::reverse(steps.begin(), steps.end());
  std::optional<Expr> sum;
  for (const auto& [from, to] : steps) {
    Expr term = Expr::node(eta_id(from, to));
    if (from < to) {
      sum = sum ? *sum + term : term;
    } else {
      sum = sum ? *sum - term : -term;
    }
  }
  return *sum;
}

}  // namespace

ModelGraph build_nma_graph(const std::vector<TrialArm>& arms, const NmaSpec& spec) {
  check_trial_arms(arms);
  const auto treatments = treatments_of(arms);
  const auto studies = studies_of(arms);
  if (!std::binary_search(treatments.begin(), treatments.end(), spec.reference)) {
    throw DisconnectedNetwork("reference treatment '" + spec.reference + "' has no arms");
  }
  Adjacency network;
  for (const auto& s : studies) {
    for (const auto& a : s.treatments) {
      for (const auto& b : s.treatments) {
        if (a != b) network[a].push_back(b);
      }
    }
  }
  const auto reach = reachable(network, spec.reference);
  for (const auto& t : treatments) {
    if (!reach.count(t)) {
      throw DisconnectedNetwork("treatment '" + t + "' is not connected to '" + spec.reference + "'");
    }
  }

  std::vector<Edge> tree = spec.basic_tree;
  if (tree.empty()) {
    for (const auto& t : treatments) {
      if (t != spec.reference) tree.push_back(make_edge(spec.reference, t));
    }
  }
  std::set<Edge> tree_set;
  Adjacency tree_adj;
  for (const auto& e0 : tree) {
    const Edge e = make_edge(e0.first, e0.second);
    if (!std::binary_search(treatments.begin(), treatments.end(), e.first) ||
        !std::binary_search(treatments.begin(), treatments.end(), e.second) || e.first == e.second) {
      throw PreconditionError("tree edge " + edge_name(e) + " is not a pair of network treatments");
    }
    if (!tree_set.insert(e).second) throw PreconditionError("tree edge " + edge_name(e) + " repeated");
    tree_adj[e.first].push_back(e.second);
    tree_adj[e.second].push_back(e.first);
  }
  if (tree_set.size() + 1 != treatments.size() ||
      reachable(tree_adj, spec.reference).size() != treatments.size()) {
    throw PreconditionError("basic edges do not form a spanning tree of the treatments");
  }

  ModelGraph g;
  const Operand prior_sd = Operand::value(spec.basic_prior_sd);
  std::vector<NodeId> basics;
  for (const auto& e : tree_set) {
    basics.push_back(eta_id(e.first, e.second));
    g.add_stochastic(basics.back(), Distribution::normal(Operand::value(0.0), prior_sd));
  }
  for (std::size_t a = 0; a < treatments.size(); ++a) {
    for (std::size_t b = a + 1; b < treatments.size(); ++b) {
      if (tree_set.count({treatments[a], treatments[b]})) continue;
      g.add_deterministic(eta_id(treatments[a], treatments[b]),
                          path_expr(tree_adj, treatments[a], treatments[b]));
    }
  }
  if (basics.size() > 1) g.add_block(basics);

  const bool random = spec.effect == EffectModel::Random;
  if (random) {
    g.add_stochastic("sigma", Distribution::uniform(Operand::value(0.0),
                                                    Operand::value(spec.sigma_upper)));
    std::set<std::size_t> sizes;
    for (const auto& s : studies) {
      if (s.multi_arm()) sizes.insert(s.treatments.size());
    }
    for (auto k : sizes) {
      for (std::size_t arm = 3; arm <= k; ++arm) {
        const NodeId id = "sigma_arm" + std::to_string(arm);
        if (g.contains(id)) continue;
        const double f = std::sqrt(static_cast<double>(arm) / (2.0 * static_cast<double>(arm - 1)));
        g.add_deterministic(id, Expr::node("sigma") * Expr::constant(f), Support::Positive);
      }
    }
  }

  std::map<std::pair<std::string, std::string>, const TrialArm*> arm_of;
  for (const auto& a : arms) arm_of[{a.study, a.treatment}] = &a;

  for (const auto& s : studies) {
    const auto& t = s.treatments;
    const NodeId alpha = alpha_id(s.id);
    g.add_stochastic(alpha, Distribution::normal(Operand::value(0.0),
                                                 Operand::value(spec.baseline_prior_sd)));
    std::vector<NodeId> block{alpha};
    for (std::size_t k = 0; k < t.size(); ++k) {
      const NodeId p = "p_" + s.id + "_" + t[k];
      if (k == 0) {
        g.add_deterministic(p, Expr::unary(Expr::Op::InvLogit, Expr::node(alpha)), Support::UnitInterval);
      } else if (!random) {
        g.add_deterministic(p,
                            Expr::unary(Expr::Op::InvLogit,
                                        Expr::node(alpha) + Expr::node(eta_id(t[0], t[k]))),
                            Support::UnitInterval);
      } else {
        const NodeId d = delta_id(s.id, t[k]);
        Operand mean = Operand::node(eta_id(t[0], t[k]));
        Operand sd = Operand::node("sigma");
        if (k >= 2) {
          // Conditional mean and sd of arm k given the earlier arms when the
          // study effects share covariance sigma^2 / 2.
          Expr dev = Expr::node(delta_id(s.id, t[1])) - Expr::node(eta_id(t[0], t[1]));
          for (std::size_t j = 2; j < k; ++j) {
            dev = dev + (Expr::node(delta_id(s.id, t[j])) - Expr::node(eta_id(t[0], t[j])));
          }
          const NodeId md = "md_" + s.id + "_" + t[k];
          g.add_deterministic(md, Expr::node(eta_id(t[0], t[k])) +
                                      dev / Expr::constant(static_cast<double>(k)));
          mean = Operand::node(md);
          sd = Operand::node("sigma_arm" + std::to_string(k + 1));
        }
        g.add_stochastic(d, Distribution::normal(mean, sd));
        block.push_back(d);
        g.add_deterministic(p, Expr::unary(Expr::Op::InvLogit, Expr::node(alpha) + Expr::node(d)),
                            Support::UnitInterval);
      }
      const TrialArm& arm = *arm_of.at({s.id, t[k]});
      g.add_observed(events_id(s.id, t[k]),
                     Distribution::binomial(Operand::value(static_cast<double>(arm.total)),
                                            Operand::node(p)),
                     static_cast<double>(arm.events));
    }
    if (block.size() > 1) g.add_block(block);
  }
  require_valid(g);
  return g;
}

}  // namespace nodesplit
