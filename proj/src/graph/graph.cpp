#include "nodesplit/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"

namespace nodesplit {

std::string_view to_string(Support s) {
  switch (s) {
    case Support::Real: return "real";
    case Support::Positive: return "positive";
    case Support::UnitInterval: return "unit";
    case Support::NonNegativeInteger: return "count";
  }
  return "real";
}

std::optional<Support> support_from_string(std::string_view s) {
  if (s == "real") return Support::Real;
  if (s == "positive") return Support::Positive;
  if (s == "unit") return Support::UnitInterval;
  if (s == "count") return Support::NonNegativeInteger;
  return std::nullopt;
}

namespace {
constexpr std::pair<DistKind, std::string_view> kDistNames[] = {
    {DistKind::Binomial, "Binomial"},
    {DistKind::Poisson, "Poisson"},
    {DistKind::Normal, "Normal"},
    {DistKind::Uniform, "Uniform"},
    {DistKind::Beta, "Beta"},
    {DistKind::LogNormal, "LogNormal"},
    {DistKind::Bernoulli, "Bernoulli"},
    {DistKind::JeffreysProportion, "JeffreysProportion"},
    {DistKind::JeffreysRate, "JeffreysRate"},
    {DistKind::ImproperFlat, "ImproperFlat"},
};
}  // namespace

std::string_view to_string(DistKind k) {
  for (const auto& [kind, name] : kDistNames) {
    if (kind == k) return name;
  }
  return "?";
}

std::optional<DistKind> dist_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kDistNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(NodeRole r) {
  switch (r) {
    case NodeRole::StochasticFounder: return "founder";
    case NodeRole::StochasticInternal: return "internal";
    case NodeRole::Deterministic: return "deterministic";
    case NodeRole::Observed: return "observed";
  }
  return "?";
}

std::size_t param_count(DistKind k) {
  switch (k) {
    case DistKind::Binomial:
    case DistKind::Normal:
    case DistKind::Uniform:
    case DistKind::Beta:
    case DistKind::LogNormal:
      return 2;
    case DistKind::Poisson:
    case DistKind::Bernoulli:
      return 1;
    case DistKind::JeffreysProportion:
    case DistKind::JeffreysRate:
    case DistKind::ImproperFlat:
      return 0;
  }
  return 0;
}

bool support_contains(Support outer, Support inner) {
  if (outer == inner) return true;
  if (outer == Support::NonNegativeInteger || inner == Support::NonNegativeInteger) {
    return false;
  }
  auto rank = [](Support s) {
    switch (s) {
      case Support::UnitInterval: return 0;
      case Support::Positive: return 1;
      default: return 2;
    }
  };
  return rank(outer) >= rank(inner);
}

// --- Expr ------------------------------------------------------------------

Expr Expr::constant(double v) {
  Expr e;
  e.op = Op::Const;
  e.value = v;
  return e;
}

Expr Expr::node(NodeId id) {
  Expr e;
  e.op = Op::Ref;
  e.ref = std::move(id);
  return e;
}

Expr Expr::unary(Op op, Expr a) {
  Expr e;
  e.op = op;
  e.args.push_back(std::move(a));
  return e;
}

Expr Expr::binary(Op op, Expr a, Expr b) {
  Expr e;
  e.op = op;
  e.args.push_back(std::move(a));
  e.args.push_back(std::move(b));
  return e;
}

Expr Expr::indicator(Expr lower, Expr x, Expr upper) {
  Expr e;
  e.op = Op::Indicator;
  e.args = {std::move(lower), std::move(x), std::move(upper)};
  return e;
}

void Expr::collect_refs(std::vector<NodeId>& out) const {
  if (op == Op::Ref) {
    if (std::find(out.begin(), out.end(), ref) == out.end()) out.push_back(ref);
    return;
  }
  for (const auto& a : args) a.collect_refs(out);
}

Expr Expr::rename(const std::function<NodeId(const NodeId&)>& f) const {
  Expr e = *this;
  if (op == Op::Ref) {
    e.ref = f(ref);
    return e;
  }
  for (auto& a : e.args) a = a.rename(f);
  return e;
}

Expr operator+(Expr a, Expr b) { return Expr::binary(Expr::Op::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(Expr::Op::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(Expr::Op::Mul, std::move(a), std::move(b)); }
Expr operator/(Expr a, Expr b) { return Expr::binary(Expr::Op::Div, std::move(a), std::move(b)); }
Expr operator-(Expr a) { return Expr::unary(Expr::Op::Neg, std::move(a)); }

// --- NodeDef / ModelGraph ---------------------------------------------------

std::vector<NodeId> NodeDef::parents() const {
  std::vector<NodeId> out;
  if (dist) {
    for (const auto& p : dist->params) {
      if (p.is_ref() && std::find(out.begin(), out.end(), p.ref) == out.end()) {
        out.push_back(p.ref);
      }
    }
  }
  if (expr) expr->collect_refs(out);
  return out;
}

ModelGraph& ModelGraph::add_node(NodeDef def) {
  index_.emplace(def.id, nodes_.size());
  nodes_.push_back(std::move(def));
  return *this;
}

ModelGraph& ModelGraph::add_stochastic(NodeId id, Distribution dist,
                                       std::optional<Support> support) {
  NodeDef def;
  def.id = std::move(id);
  bool founder = std::none_of(dist.params.begin(), dist.params.end(),
                              [](const Operand& o) { return o.is_ref(); });
  def.role = founder ? NodeRole::StochasticFounder : NodeRole::StochasticInternal;
  def.support = support ? *support : natural_support(dist, *this);
  def.dist = std::move(dist);
  return add_node(std::move(def));
}

ModelGraph& ModelGraph::add_deterministic(NodeId id, Expr expr, std::optional<Support> support) {
  NodeDef def;
  def.id = std::move(id);
  def.role = NodeRole::Deterministic;
  def.expr = std::move(expr);
  def.support = support.value_or(Support::Real);
  return add_node(std::move(def));
}

ModelGraph& ModelGraph::add_observed(NodeId id, Distribution dist, double value) {
  NodeDef def;
  def.id = std::move(id);
  def.role = NodeRole::Observed;
  switch (dist.kind) {
    case DistKind::Binomial:
    case DistKind::Poisson:
    case DistKind::Bernoulli:
      def.support = Support::NonNegativeInteger;
      break;
    default:
      def.support = natural_support(dist, *this);
  }
  def.dist = std::move(dist);
  def.observed_value = value;
  return add_node(std::move(def));
}

ModelGraph& ModelGraph::add_block(std::vector<NodeId> members) {
  blocks_.push_back(std::move(members));
  return *this;
}

const NodeDef* ModelGraph::find(const NodeId& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const NodeDef& ModelGraph::node(const NodeId& id) const {
  const NodeDef* n = find(id);
  if (!n) throw MissingValue("unknown node '" + id + "'");
  return *n;
}

std::size_t ModelGraph::index_of(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw MissingValue("unknown node '" + id + "'");
  return it->second;
}

std::vector<std::vector<std::size_t>> ModelGraph::children_lists() const {
  std::vector<std::vector<std::size_t>> children(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& p : nodes_[i].parents()) {
      auto it = index_.find(p);
      if (it != index_.end()) children[it->second].push_back(i);
    }
  }
  return children;
}

std::optional<std::vector<std::size_t>> ModelGraph::canonical_order() const {
  const std::size_t n = nodes_.size();
  std::vector<std::size_t> indegree(n, 0);
  auto children = children_lists();
  for (std::size_t i = 0; i < n; ++i) {
    for (auto c : children[i]) ++indegree[c];
  }
  auto cmp = [this](std::size_t a, std::size_t b) { return nodes_[a].id > nodes_[b].id; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    auto i = ready.top();
    ready.pop();
    order.push_back(i);
    for (auto c : children[i]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

Support natural_support(const Distribution& dist, const ModelGraph& g) {
  switch (dist.kind) {
    case DistKind::Beta:
    case DistKind::JeffreysProportion:
      return Support::UnitInterval;
    case DistKind::LogNormal:
    case DistKind::JeffreysRate:
      return Support::Positive;
    case DistKind::Binomial:
    case DistKind::Poisson:
    case DistKind::Bernoulli:
      return Support::NonNegativeInteger;
    case DistKind::Uniform: {
      if (dist.params.size() != 2) return Support::Real;
      auto lower_nonneg = [&](const Operand& o) {
        if (!o.is_ref()) return o.constant >= 0.0;
        const NodeDef* p = g.find(o.ref);
        return p && (p->support == Support::Positive || p->support == Support::UnitInterval);
      };
      const auto& lo = dist.params[0];
      const auto& hi = dist.params[1];
      if (!lo.is_ref() && !hi.is_ref() && lo.constant >= 0.0 && hi.constant <= 1.0) {
        return Support::UnitInterval;
      }
      if (lower_nonneg(lo)) return Support::Positive;
      return Support::Real;
    }
    case DistKind::Normal:
    case DistKind::ImproperFlat:
      return Support::Real;
  }
  return Support::Real;
}

std::string_view to_string(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::EmptyId: return "empty id";
    case Diagnostic::Kind::DuplicateNode: return "duplicate node";
    case Diagnostic::Kind::UnresolvedReference: return "unresolved reference";
    case Diagnostic::Kind::CycleDetected: return "cycle detected";
    case Diagnostic::Kind::BadArity: return "bad arity";
    case Diagnostic::Kind::MissingDefinition: return "missing definition";
    case Diagnostic::Kind::SupportMismatch: return "support mismatch";
    case Diagnostic::Kind::InvalidObservation: return "invalid observation";
    case Diagnostic::Kind::InvalidBlock: return "invalid block";
  }
  return "?";
}

namespace {

bool is_count(double v) { return v >= 0.0 && std::floor(v) == v && std::isfinite(v); }

void check_observation(const NodeDef& n, std::vector<Diagnostic>& out) {
  const auto& d = *n.dist;
  const double y = n.observed_value;
  auto bad = [&](const std::string& why) {
    out.push_back({Diagnostic::Kind::InvalidObservation, n.id, why});
  };
  switch (d.kind) {
    case DistKind::Binomial:
      if (!is_count(y)) {
        bad("binomial observation must be a non-negative integer");
      } else if (!d.params[0].is_ref() && y > d.params[0].constant) {
        bad("binomial observation exceeds the number of trials");
      }
      break;
    case DistKind::Poisson:
      if (!is_count(y)) bad("poisson observation must be a non-negative integer");
      break;
    case DistKind::Bernoulli:
      if (y != 0.0 && y != 1.0) bad("bernoulli observation must be 0 or 1");
      break;
    case DistKind::JeffreysProportion:
    case DistKind::JeffreysRate:
    case DistKind::ImproperFlat:
      bad("observed nodes need a proper likelihood");
      break;
    default:
      if (!std::isfinite(y)) bad("observation must be finite");
  }
}

}  // namespace

std::vector<Diagnostic> validate_graph(const ModelGraph& g) {
  std::vector<Diagnostic> out;
  std::set<NodeId> seen;
  for (const auto& n : g.nodes()) {
    if (n.id.empty()) {
      out.push_back({Diagnostic::Kind::EmptyId, n.id, "node with empty id"});
    } else if (!seen.insert(n.id).second) {
      out.push_back({Diagnostic::Kind::DuplicateNode, n.id, "node '" + n.id + "' declared twice"});
    }
  }

  for (const auto& n : g.nodes()) {
    if (n.role == NodeRole::Deterministic) {
      if (!n.expr) {
        out.push_back({Diagnostic::Kind::MissingDefinition, n.id, "deterministic node without expression"});
      }
    } else if (!n.dist) {
      out.push_back({Diagnostic::Kind::MissingDefinition, n.id, "stochastic node without distribution"});
    } else if (n.dist->params.size() != param_count(n.dist->kind)) {
      out.push_back({Diagnostic::Kind::BadArity, n.id,
                     std::string(to_string(n.dist->kind)) + " expects " +
                         std::to_string(param_count(n.dist->kind)) + " parameters"});
    }
    for (const auto& p : n.parents()) {
      const NodeDef* parent = g.find(p);
      if (!parent) {
        out.push_back({Diagnostic::Kind::UnresolvedReference, n.id,
                       "node '" + n.id + "' references undefined node '" + p + "'"});
      }
    }
    if (n.role == NodeRole::StochasticFounder && n.dist) {
      for (const auto& p : n.dist->params) {
        if (p.is_ref()) {
          out.push_back({Diagnostic::Kind::MissingDefinition, n.id,
                         "founder node '" + n.id + "' has parent '" + p.ref + "'"});
        }
      }
    }
    if (n.is_stochastic() && n.dist && n.dist->params.size() == param_count(n.dist->kind)) {
      Support nat = natural_support(*n.dist, g);
      if (nat == Support::NonNegativeInteger) {
        out.push_back({Diagnostic::Kind::SupportMismatch, n.id,
                       "discrete distributions are only supported on observed nodes"});
      } else if (!support_contains(n.support, nat)) {
        out.push_back({Diagnostic::Kind::SupportMismatch, n.id,
                       "declared support '" + std::string(to_string(n.support)) +
                           "' does not cover the support of " +
                           std::string(to_string(n.dist->kind))});
      }
    }
    if (n.role == NodeRole::Observed && n.dist &&
        n.dist->params.size() == param_count(n.dist->kind)) {
      check_observation(n, out);
    }
  }

  if (!g.canonical_order()) {
    // Report one node on a cycle: the smallest id among nodes left unsorted.
    const auto children = g.children_lists();
    std::vector<std::size_t> indegree(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (auto c : children[i]) ++indegree[c];
    }
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (indegree[i] == 0) stack.push_back(i);
    }
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      for (auto c : children[i]) {
        if (--indegree[c] == 0) stack.push_back(c);
      }
    }
    std::vector<NodeId> stuck;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (indegree[i] > 0) stuck.push_back(g.nodes()[i].id);
    }
    std::sort(stuck.begin(), stuck.end());
    std::string members;
    for (const auto& s : stuck) members += (members.empty() ? "" : ", ") + s;
    out.push_back({Diagnostic::Kind::CycleDetected, stuck.empty() ? NodeId{} : stuck.front(),
                   "cycle detected among {" + members + "}"});
  }

  std::set<NodeId> in_block;
  for (const auto& block : g.blocks()) {
    for (const auto& id : block) {
      const NodeDef* n = g.find(id);
      if (!n || !n->is_stochastic()) {
        out.push_back({Diagnostic::Kind::InvalidBlock, id,
                       "block member '" + id + "' is not a stochastic node"});
      } else if (!in_block.insert(id).second) {
        out.push_back({Diagnostic::Kind::InvalidBlock, id,
                       "node '" + id + "' appears in more than one block"});
      }
    }
  }
  return out;
}

void require_valid(const ModelGraph& g) {
  auto diags = validate_graph(g);
  if (diags.empty()) return;
  std::ostringstream msg;
  msg << "invalid model graph:";
  for (const auto& d : diags) msg << "\n  " << to_string(d.kind) << ": " << d.message;
  throw InvalidGraph(msg.str());
}

double log_joint_density(const ModelGraph& g, const std::map<NodeId, double>& values) {
  CompiledGraph cg(g);
  std::vector<double> v = cg.blank_values();
  for (std::size_t i = 0; i < cg.size(); ++i) {
    if (!g.nodes()[i].is_stochastic()) continue;
    auto it = values.find(g.nodes()[i].id);
    if (it == values.end()) {
      throw MissingValue("no value assigned to stochastic node '" + g.nodes()[i].id + "'");
    }
    v[i] = it->second;
  }
  cg.propagate(v);
  double total = 0.0;
  for (auto i : cg.order()) {
    if (cg.role(i) == NodeRole::Deterministic) continue;
    total += cg.log_density(i, v);
    if (total == -std::numeric_limits<double>::infinity()) break;
  }
  return total;
}

}  // namespace nodesplit
