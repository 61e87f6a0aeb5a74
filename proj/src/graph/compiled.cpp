#include "nodesplit/compiled.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "nodesplit/errors.hpp"

namespace nodesplit {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_binomial_coef(double n, double y) {
  return std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
}
}  // namespace

namespace dist {

double logit(double p) { return std::log(p) - std::log1p(-p); }

double inv_logit(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log_density(DistKind kind, double x, double a, double b) {
  if (std::isnan(x)) return kNegInf;
  switch (kind) {
    case DistKind::Normal: {
      if (!(b > 0)) return kNegInf;
      double z = (x - a) / b;
      return -0.5 * z * z - std::log(b) - kHalfLog2Pi;
    }
    case DistKind::Uniform:
      if (!(b > a) || x < a || x > b) return kNegInf;
      return -std::log(b - a);
    case DistKind::Beta:
      if (!(a > 0 && b > 0) || x <= 0 || x >= 1) return kNegInf;
      return (a - 1) * std::log(x) + (b - 1) * std::log1p(-x) + std::lgamma(a + b) -
             std::lgamma(a) - std::lgamma(b);
    case DistKind::LogNormal: {
      if (!(b > 0) || x <= 0) return kNegInf;
      double lx = std::log(x);
      double z = (lx - a) / b;
      return -0.5 * z * z - std::log(b) - kHalfLog2Pi - lx;
    }
    case DistKind::JeffreysProportion:
      if (x <= 0 || x >= 1) return kNegInf;
      return -0.5 * std::log(x) - 0.5 * std::log1p(-x) - std::log(std::numbers::pi);
    case DistKind::JeffreysRate:
      if (x <= 0) return kNegInf;
      return -0.5 * std::log(x);
    case DistKind::ImproperFlat:
      return 0.0;
    case DistKind::Binomial: {
      const double n = a, p = b;
      if (x < 0 || x > n || !(p >= 0 && p <= 1)) return kNegInf;
      double lc = log_binomial_coef(n, x);
      if (p == 0) return x == 0 ? 0.0 : kNegInf;
      if (p == 1) return x == n ? 0.0 : kNegInf;
      return lc + x * std::log(p) + (n - x) * std::log1p(-p);
    }
    case DistKind::Poisson: {
      const double lam = a;
      if (x < 0 || !(lam >= 0)) return kNegInf;
      if (lam == 0) return x == 0 ? 0.0 : kNegInf;
      return x * std::log(lam) - lam - std::lgamma(x + 1.0);
    }
    case DistKind::Bernoulli: {
      const double p = a;
      if (!(p >= 0 && p <= 1)) return kNegInf;
      if (x == 1) return p > 0 ? std::log(p) : kNegInf;
      if (x == 0) return p < 1 ? std::log1p(-p) : kNegInf;
      return kNegInf;
    }
  }
  return kNegInf;
}

}  // namespace dist

CompiledGraph::CompiledGraph(const ModelGraph& g) : graph_(&g) {
  require_valid(g);
  const std::size_t n = g.size();
  roles_.resize(n);
  supports_.resize(n);
  nodes_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeDef& def = g.nodes()[i];
    roles_[i] = def.role;
    supports_[i] = def.support;
    Node& node = nodes_[i];
    if (def.dist) {
      node.kind = def.dist->kind;
      for (const auto& p : def.dist->params) {
        ParamRef r;
        r.is_ref = p.is_ref();
        r.value = p.constant;
        if (r.is_ref) r.index = g.index_of(p.ref);
        node.params.push_back(r);
      }
    }
    if (def.expr) compile_expr(*def.expr, node.code);
    if (def.role == NodeRole::Observed && node.kind == DistKind::Binomial &&
        !node.params[0].is_ref) {
      node.log_const = log_binomial_coef(node.params[0].value, def.observed_value);
      node.has_log_const = true;
    } else if (def.role == NodeRole::Observed && node.kind == DistKind::Poisson) {
      node.log_const = -std::lgamma(def.observed_value + 1.0);
      node.has_log_const = true;
    }
  }
  order_ = *g.canonical_order();
  children_ = g.children_lists();
}

void CompiledGraph::compile_expr(const Expr& e, std::vector<Instr>& code) const {
  using Op = Expr::Op;
  using C = Instr::Code;
  switch (e.op) {
    case Op::Const:
      code.push_back({C::Const, 0, e.value});
      return;
    case Op::Ref:
      code.push_back({C::Load, graph_->index_of(e.ref), 0.0});
      return;
    default:
      break;
  }
  for (const auto& a : e.args) compile_expr(a, code);
  C c = C::Const;
  switch (e.op) {
    case Op::Add: c = C::Add; break;
    case Op::Sub: c = C::Sub; break;
    case Op::Mul: c = C::Mul; break;
    case Op::Div: c = C::Div; break;
    case Op::Neg: c = C::Neg; break;
    case Op::Log: c = C::Log; break;
    case Op::Logit: c = C::Logit; break;
    case Op::InvLogit: c = C::InvLogit; break;
    case Op::Exp: c = C::Exp; break;
    case Op::Indicator: c = C::Indicator; break;
    default: break;
  }
  code.push_back({c, 0, 0.0});
}

std::vector<double> CompiledGraph::blank_values() const {
  std::vector<double> v(size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < size(); ++i) {
    if (roles_[i] == NodeRole::Observed) v[i] = graph_->nodes()[i].observed_value;
  }
  return v;
}

double CompiledGraph::param(std::size_t i, std::size_t k, std::span<const double> values) const {
  const ParamRef& p = nodes_[i].params[k];
  return p.is_ref ? values[p.index] : p.value;
}

double CompiledGraph::eval_deterministic(std::size_t i, std::span<const double> values) const {
  using C = Instr::Code;
  double stack[64];
  std::size_t sp = 0;
  for (const Instr& ins : nodes_[i].code) {
    switch (ins.code) {
      case C::Const: stack[sp++] = ins.value; break;
      case C::Load: stack[sp++] = values[ins.index]; break;
      case C::Add: --sp; stack[sp - 1] += stack[sp]; break;
      case C::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
      case C::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
      case C::Div: --sp; stack[sp - 1] /= stack[sp]; break;
      case C::Neg: stack[sp - 1] = -stack[sp - 1]; break;
      case C::Log: stack[sp - 1] = std::log(stack[sp - 1]); break;
      case C::Logit: stack[sp - 1] = dist::logit(stack[sp - 1]); break;
      case C::InvLogit: stack[sp - 1] = dist::inv_logit(stack[sp - 1]); break;
      case C::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
      case C::Indicator: {
        double hi = stack[--sp];
        double x = stack[--sp];
        double lo = stack[sp - 1];
        stack[sp - 1] = (lo <= x && x <= hi) ? 1.0 : 0.0;
        break;
      }
    }
    if (sp >= 64) throw InvalidGraph("expression too deep in node '" + graph_->nodes()[i].id + "'");
  }
  return sp ? stack[0] : std::numeric_limits<double>::quiet_NaN();
}

void CompiledGraph::propagate(std::span<double> values) const {
  for (auto i : order_) {
    if (roles_[i] == NodeRole::Deterministic) values[i] = eval_deterministic(i, values);
  }
}

double CompiledGraph::log_density(std::size_t i, std::span<const double> values) const {
  const Node& node = nodes_[i];
  const double x = values[i];
  double a = node.params.size() > 0 ? param(i, 0, values) : 0.0;
  double b = node.params.size() > 1 ? param(i, 1, values) : 0.0;
  if (node.has_log_const) {
    if (node.kind == DistKind::Binomial) {
      const double p = b;
      if (!(p >= 0 && p <= 1)) return kNegInf;
      if (p == 0) return x == 0 ? 0.0 : kNegInf;
      if (p == 1) return x == a ? 0.0 : kNegInf;
      return node.log_const + x * std::log(p) + (a - x) * std::log1p(-p);
    }
    const double lam = a;
    if (!(lam >= 0)) return kNegInf;
    if (lam == 0) return x == 0 ? 0.0 : kNegInf;
    return node.log_const + x * std::log(lam) - lam;
  }
  return dist::log_density(node.kind, x, a, b);
}

double CompiledGraph::saturated_log_density(std::size_t i, std::span<const double> values) const {
  const Node& node = nodes_[i];
  const double y = values[i];
  switch (node.kind) {
    case DistKind::Binomial: {
      double n = param(i, 0, values);
      if (n <= 0) return 0.0;
      return dist::log_density(DistKind::Binomial, y, n, y / n);
    }
    case DistKind::Poisson:
      return dist::log_density(DistKind::Poisson, y, y, 0.0);
    case DistKind::Normal:
      return dist::log_density(DistKind::Normal, y, y, param(i, 1, values));
    case DistKind::Bernoulli:
      return 0.0;
    default:
      return 0.0;
  }
}

}  // namespace nodesplit
