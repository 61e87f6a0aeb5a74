#include <algorithm>
#include <cmath>

#include "nodesplit/app.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/rng.hpp"
#include "nodesplit/split.hpp"

namespace nodesplit {

std::pair<double, double> ks_uniform(std::vector<double> x) {
  if (x.empty()) throw PreconditionError("KS test needs at least one value");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = std::clamp(x[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
  }
  // Kolmogorov tail with the small-sample scaling of Stephens.
  const double t = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  if (t < 0.2) return {d, 1.0};
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return {d, std::clamp(sum, 0.0, 1.0)};
}

NullSimulationReport simulate_null(const NullSimulationOptions& opt) {
  if (opt.replicates < 100) throw PreconditionError("simulate-null needs at least 100 replicates");
  if (!(opt.prior_sd > 0.0)) throw PreconditionError("prior sd must be positive");
  opt.sampler.validate();

  const double tau2 = opt.prior_sd * opt.prior_sd;
  const double w = tau2 / (1.0 + tau2);
  // sd of the contrast posterior mean under the prior predictive
  const double contrast_sd = std::sqrt(1.0 + w);

  SplitSpec spec;
  spec.partitions = {{"a", {"y_a"}}, {"b", {"y_b"}}};
  SeparatorDecl sep;
  sep.node = "theta";
  sep.copies = {{"a", true, Distribution::improper_flat()}, {"b", false, std::nullopt}};
  spec.separators.push_back(sep);

  Rng rng(derive_seed(opt.seed, {purpose::kSimulation}));
  std::normal_distribution<double> normal;
  NullSimulationReport out;
  for (std::size_t r = 0; r < opt.replicates; ++r) {
    const double theta = opt.prior_sd * normal(rng);
    const double ya = theta + normal(rng);
    const double yb = theta + normal(rng) + opt.shift_sd * contrast_sd;
    ModelGraph g;
    g.add_stochastic("theta", Distribution::normal(Operand::value(0.0), Operand::value(opt.prior_sd)));
    g.add_observed("y_a", Distribution::normal(Operand::node("theta"), Operand::value(1.0)), ya);
    g.add_observed("y_b", Distribution::normal(Operand::node("theta"), Operand::value(1.0)), yb);
    const SplitModel m = split(g, spec);
    SamplerConfig sc = opt.sampler;
    sc.seed = derive_seed(opt.seed, {r});
    const auto s = sample(m.graph, sc);
    const ContrastSet c = build_contrasts(m, s);
    const Eigen::VectorXd col = c.delta_draws.col(0);
    out.pvalues.push_back(single_conflict_pvalue({col.data(), static_cast<std::size_t>(col.size())}, opt.method));
  }
  std::tie(out.ks_statistic, out.ks_pvalue) = ks_uniform(out.pvalues);
  out.fraction_below_05 =
      static_cast<double>(std::count_if(out.pvalues.begin(), out.pvalues.end(), [](double p) { return p < 0.05; })) /
      static_cast<double>(out.pvalues.size());
  return out;
}

}  // namespace nodesplit
