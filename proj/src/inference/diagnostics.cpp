#include <cmath>
#include <numeric>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/inference.hpp"
#include "nodesplit/model_io.hpp"

namespace nodesplit {

DevianceSummary deviance_summary(const ModelGraph& g, const PosteriorSamples& s) {
  CompiledGraph cg(g);
  std::vector<std::size_t> observed;
  for (auto i : cg.order()) {
    if (cg.role(i) == NodeRole::Observed) observed.push_back(i);
  }
  std::vector<std::size_t> col_node(s.columns().size());
  for (std::size_t k = 0; k < s.columns().size(); ++k) col_node[k] = g.index_of(s.columns()[k]);

  std::vector<double> v = cg.blank_values();
  std::vector<double> sums(observed.size(), 0.0);
  std::vector<double> means(s.columns().size(), 0.0);
  for (std::size_t c = 0; c < s.chains(); ++c) {
    for (std::size_t d = 0; d < s.draws_per_chain(); ++d) {
      auto row = s.row(c, d);
      for (std::size_t k = 0; k < row.size(); ++k) {
        v[col_node[k]] = row[k];
        means[k] += row[k];
      }
      for (std::size_t o = 0; o < observed.size(); ++o) {
        auto i = observed[o];
        sums[o] += -2.0 * (cg.log_density(i, v) - cg.saturated_log_density(i, v));
      }
    }
  }
  const double n = static_cast<double>(s.total_draws());
  for (std::size_t k = 0; k < means.size(); ++k) v[col_node[k]] = means[k] / n;

  DevianceSummary out;
  for (std::size_t o = 0; o < observed.size(); ++o) {
    auto i = observed[o];
    DatumDeviance dd;
    dd.id = g.nodes()[i].id;
    dd.mean_deviance = sums[o] / n;
    dd.plugin_deviance = -2.0 * (cg.log_density(i, v) - cg.saturated_log_density(i, v));
    dd.p_D = dd.mean_deviance - dd.plugin_deviance;
    dd.dic = dd.mean_deviance + dd.p_D;
    out.mean_deviance += dd.mean_deviance;
    out.plugin_deviance += dd.plugin_deviance;
    out.per_datum.push_back(std::move(dd));
  }
  out.p_D = out.mean_deviance - out.plugin_deviance;
  out.dic = out.mean_deviance + out.p_D;
  return out;
}

double mc_standard_error(std::span<const double> draws, std::size_t chains) {
  if (chains == 0 || draws.size() < chains) return 0.0;
  const std::size_t per_chain = draws.size() / chains;
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(per_chain)));
  const std::size_t batches_per_chain = per_chain / batch;
  std::vector<double> batch_means;
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t b = 0; b < batches_per_chain; ++b) {
      const double* start = draws.data() + c * per_chain + b * batch;
      batch_means.push_back(std::accumulate(start, start + batch, 0.0) / static_cast<double>(batch));
    }
  }
  const std::size_t k = batch_means.size();
  if (k < 2) return 0.0;
  const double m = std::accumulate(batch_means.begin(), batch_means.end(), 0.0) / static_cast<double>(k);
  double ss = 0.0;
  for (double b : batch_means) ss += (b - m) * (b - m);
  const double var_batch = ss / static_cast<double>(k - 1);
  return std::sqrt(var_batch / static_cast<double>(k));
}

double mc_standard_error(const PosteriorSamples& s, const NodeId& node) {
  auto col = s.column(node);
  return mc_standard_error(col, s.chains());
}

double split_rhat(std::span<const double> draws, std::size_t chains) {
  if (chains == 0) return 1.0;
  const std::size_t per_chain = draws.size() / chains;
  const std::size_t half = per_chain / 2;
  if (half < 2) return 1.0;
  std::vector<double> means, vars;
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t h = 0; h < 2; ++h) {
      const double* start = draws.data() + c * per_chain + h * half;
      const double m = std::accumulate(start, start + half, 0.0) / static_cast<double>(half);
      double ss = 0.0;
      for (std::size_t i = 0; i < half; ++i) ss += (start[i] - m) * (start[i] - m);
      means.push_back(m);
      vars.push_back(ss / static_cast<double>(half - 1));
    }
  }
  const double n = static_cast<double>(half);
  const double mm = static_cast<double>(means.size());
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / mm;
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  b *= n / (mm - 1.0);
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / mm;
  if (w <= 0.0) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

void write_samples_csv(std::ostream& out, const PosteriorSamples& s) {
  out << "chain";
  for (const auto& c : s.columns()) out << ',' << c;
  out << '\n';
  for (std::size_t c = 0; c < s.chains(); ++c) {
    for (std::size_t d = 0; d < s.draws_per_chain(); ++d) {
      out << c;
      for (double x : s.row(c, d)) out << ',' << format_number(x);
      out << '\n';
    }
  }
}

void write_deviance_report(std::ostream& out, const DevianceSummary& d) {
  out << "mean_deviance = " << format_number(d.mean_deviance) << '\n';
  out << "plugin_deviance = " << format_number(d.plugin_deviance) << '\n';
  out << "p_D = " << format_number(d.p_D) << '\n';
  out << "dic = " << format_number(d.dic) << '\n';
  for (const auto& x : d.per_datum) {
    out << x.id << ".mean_deviance = " << format_number(x.mean_deviance) << '\n';
    out << x.id << ".plugin_deviance = " << format_number(x.plugin_deviance) << '\n';
    out << x.id << ".p_D = " << format_number(x.p_D) << '\n';
    out << x.id << ".dic = " << format_number(x.dic) << '\n';
  }
}

}  // namespace nodesplit
