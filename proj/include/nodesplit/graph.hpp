#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nodesplit {

using NodeId = std::string;

enum class Support { Real, Positive, UnitInterval, NonNegativeInteger };

enum class NodeRole { StochasticFounder, StochasticInternal, Deterministic, Observed };

enum class DistKind {
  Binomial,
  Poisson,
  Normal,
  Uniform,
  Beta,
  LogNormal,
  Bernoulli,
  JeffreysProportion,
  JeffreysRate,
  ImproperFlat,
};

std::string_view to_string(Support s);
std::optional<Support> support_from_string(std::string_view s);
std::string_view to_string(DistKind k);
std::optional<DistKind> dist_kind_from_string(std::string_view s);
std::string_view to_string(NodeRole r);

// Number of parameters each distribution takes, in declaration order:
// Binomial(trials, prob), Poisson(rate), Normal(mean, sd), Uniform(lower, upper),
// Beta(a, b), LogNormal(mu, sigma), Bernoulli(prob); the Jeffreys and flat
// priors take none.
std::size_t param_count(DistKind k);

// Support subset ordering: UnitInterval < Positive < Real. NonNegativeInteger
// is only comparable with itself.
bool support_contains(Support outer, Support inner);

// A distribution parameter: either a literal or a reference to another node.
struct Operand {
  double constant = 0.0;
  NodeId ref;

  static Operand value(double v) { return Operand{v, {}}; }
  static Operand node(NodeId id) { return Operand{0.0, std::move(id)}; }
  bool is_ref() const { return !ref.empty(); }
  bool operator==(const Operand&) const = default;
};

struct Distribution {
  DistKind kind = DistKind::ImproperFlat;
  std::vector<Operand> params;

  bool is_proper() const {
    return kind != DistKind::JeffreysRate && kind != DistKind::ImproperFlat;
  }
  bool operator==(const Distribution&) const = default;

  static Distribution binomial(Operand trials, Operand prob) {
    return {DistKind::Binomial, {std::move(trials), std::move(prob)}};
  }
  static Distribution poisson(Operand rate) { return {DistKind::Poisson, {std::move(rate)}}; }
  static Distribution normal(Operand mean, Operand sd) {
    return {DistKind::Normal, {std::move(mean), std::move(sd)}};
  }
  static Distribution uniform(Operand lower, Operand upper) {
    return {DistKind::Uniform, {std::move(lower), std::move(upper)}};
  }
  static Distribution beta(Operand a, Operand b) {
    return {DistKind::Beta, {std::move(a), std::move(b)}};
  }
  static Distribution lognormal(Operand mu, Operand sigma) {
    return {DistKind::LogNormal, {std::move(mu), std::move(sigma)}};
  }
  static Distribution bernoulli(Operand prob) { return {DistKind::Bernoulli, {std::move(prob)}}; }
  static Distribution jeffreys_proportion() { return {DistKind::JeffreysProportion, {}}; }
  static Distribution jeffreys_rate() { return {DistKind::JeffreysRate, {}}; }
  static Distribution improper_flat() { return {DistKind::ImproperFlat, {}}; }
};

// Deterministic expression over parent nodes. The grammar is closed:
// + - * / unary minus, log, logit, ilogit, exp, indicator(lo, x, hi), literals
// and node references.
struct Expr {
  enum class Op { Const, Ref, Add, Sub, Mul, Div, Neg, Log, Logit, InvLogit, Exp, Indicator };

  Op op = Op::Const;
  double value = 0.0;
  NodeId ref;
  std::vector<Expr> args;

  static Expr constant(double v);
  static Expr node(NodeId id);
  static Expr unary(Op op, Expr a);
  static Expr binary(Op op, Expr a, Expr b);
  static Expr indicator(Expr lower, Expr x, Expr upper);

  void collect_refs(std::vector<NodeId>& out) const;
  Expr rename(const std::function<NodeId(const NodeId&)>& f) const;
  bool operator==(const Expr&) const = default;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);

struct NodeDef {
  NodeId id;
  NodeRole role = NodeRole::StochasticFounder;
  std::optional<Distribution> dist;
  std::optional<Expr> expr;
  double observed_value = 0.0;
  Support support = Support::Real;

  std::vector<NodeId> parents() const;
  bool is_stochastic() const {
    return role == NodeRole::StochasticFounder || role == NodeRole::StochasticInternal;
  }
};

// A DAG of stochastic, deterministic and observed nodes. Built incrementally
// through the add_* methods and treated as an immutable value afterwards;
// structural problems are reported by validate_graph rather than thrown here.
class ModelGraph {
 public:
  ModelGraph& add_stochastic(NodeId id, Distribution dist,
                             std::optional<Support> support = std::nullopt);
  ModelGraph& add_deterministic(NodeId id, Expr expr,
                                std::optional<Support> support = std::nullopt);
  ModelGraph& add_observed(NodeId id, Distribution dist, double value);
  // Raw insertion used by the parser and the split transform.
  ModelGraph& add_node(NodeDef def);
  // Nodes the sampler should update jointly.
  ModelGraph& add_block(std::vector<NodeId> members);

  const std::vector<NodeDef>& nodes() const { return nodes_; }
  const std::vector<std::vector<NodeId>>& blocks() const { return blocks_; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(const NodeId& id) const { return index_.count(id) != 0; }
  const NodeDef* find(const NodeId& id) const;
  const NodeDef& node(const NodeId& id) const;
  std::size_t index_of(const NodeId& id) const;

  // Kahn's algorithm with lexicographic tie-breaking; nullopt when cyclic.
  // Returned indices refer to nodes().
  std::optional<std::vector<std::size_t>> canonical_order() const;

  // Nodes (indices) whose definitions reference node i.
  std::vector<std::vector<std::size_t>> children_lists() const;

 private:
  std::vector<NodeDef> nodes_;
  std::unordered_map<NodeId, std::size_t> index_;
  std::vector<std::vector<NodeId>> blocks_;
};

// Natural support of a distribution, given the graph for resolving the
// supports of referenced parents (Uniform bounds).
Support natural_support(const Distribution& dist, const ModelGraph& g);

struct Diagnostic {
  enum class Kind {
    EmptyId,
    DuplicateNode,
    UnresolvedReference,
    CycleDetected,
    BadArity,
    MissingDefinition,
    SupportMismatch,
    InvalidObservation,
    InvalidBlock,
  };
  Kind kind;
  NodeId node;
  std::string message;
};

std::string_view to_string(Diagnostic::Kind k);

std::vector<Diagnostic> validate_graph(const ModelGraph& g);

// Throws InvalidGraph listing every diagnostic when g is not well formed.
void require_valid(const ModelGraph& g);

// Sum of log p(node | parents) over stochastic and observed nodes. Values
// must be given for every non-observed stochastic node; deterministic nodes
// are recomputed from their parents. Returns -inf when any density or
// indicator constraint is violated.
double log_joint_density(const ModelGraph& g, const std::map<NodeId, double>& values);

}  // namespace nodesplit
