#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nodesplit/graph.hpp"

namespace nodesplit {

// Flat, index-based form of a validated ModelGraph used for repeated density
// evaluation. Deterministic expressions are compiled to a small stack
// program; values live in a caller-owned array indexed like nodes().
class CompiledGraph {
 public:
  explicit CompiledGraph(const ModelGraph& g);

  const ModelGraph& graph() const { return *graph_; }
  std::size_t size() const { return roles_.size(); }
  NodeRole role(std::size_t i) const { return roles_[i]; }
  Support support(std::size_t i) const { return supports_[i]; }
  DistKind dist_kind(std::size_t i) const { return nodes_[i].kind; }
  const std::vector<std::size_t>& order() const { return order_; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }
  std::size_t param_size(std::size_t i) const { return nodes_[i].params.size(); }

  // Array with observed values filled in and NaN everywhere else.
  std::vector<double> blank_values() const;

  double param(std::size_t i, std::size_t k, std::span<const double> values) const;
  double eval_deterministic(std::size_t i, std::span<const double> values) const;
  // Recomputes every deterministic node in topological order.
  void propagate(std::span<double> values) const;

  // log p(values[i] | parents) for a stochastic or observed node.
  double log_density(std::size_t i, std::span<const double> values) const;
  // Log-likelihood of an observed node under its saturated parameters
  // (Binomial p = y/n, Poisson rate = y, Normal mean = y, Bernoulli p = y);
  // zero for other kinds.
  double saturated_log_density(std::size_t i, std::span<const double> values) const;

 private:
  struct Instr {
    enum class Code : std::uint8_t {
      Const, Load, Add, Sub, Mul, Div, Neg, Log, Logit, InvLogit, Exp, Indicator
    };
    Code code;
    std::size_t index = 0;
    double value = 0.0;
  };
  struct ParamRef {
    bool is_ref = false;
    std::size_t index = 0;
    double value = 0.0;
  };
  struct Node {
    DistKind kind = DistKind::ImproperFlat;
    std::vector<ParamRef> params;
    std::vector<Instr> code;
    double log_const = 0.0;
    bool has_log_const = false;
  };

  void compile_expr(const Expr& e, std::vector<Instr>& code) const;

  const ModelGraph* graph_;
  std::vector<NodeRole> roles_;
  std::vector<Support> supports_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> children_;
};

namespace dist {

// Log density of x under the given kind and parameters; a and b are the first
// and second parameters (unused ones ignored). Returns -inf outside the support.
double log_density(DistKind kind, double x, double a, double b);

double logit(double p);
double inv_logit(double x);

}  // namespace dist

}  // namespace nodesplit
