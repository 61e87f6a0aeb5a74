#include <cmath>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/model_io.hpp"

namespace nodesplit {

namespace {

void shape(const Eigen::VectorXd& x, double& g1, double& g2) {
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  g1 = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  g2 = m2 > 0 ? m4 / (m2 * m2) - 3.0 : 0.0;
}

}  // namespace

ConflictReport maxT_adjust(const ContrastSet& c, const ConflictOptions& opt) {
  ConflictReport r;
  r.method = opt.method;
  Eigen::VectorXd z;
  standardise(c.delta_mean, c.S_Delta, z, r.R);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    if (std::isnan(z[k])) throw DegenerateDistribution("contrast z-score is not a number");
  }
  r.chi2 = global_chi2(c.delta_mean, c.S_Delta, opt.pinv_tol);
  double zmax = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    ContrastResult cr;
    cr.label = c.labels[ku];
    cr.mean = c.delta_mean[k];
    cr.sd = std::sqrt(c.S_Delta(k, k));
    cr.z = z[k];
    cr.p_unadjusted = std::erfc(std::abs(z[k]) / std::sqrt(2.0));
    MvnResult mvn = mvn_rectangle(r.R, std::abs(z[k]), opt.mvn);
    r.repaired = r.repaired || mvn.repaired;
    cr.p_adjusted = std::clamp(1.0 - mvn.probability, 0.0, 1.0);
    cr.diffuse = ku < c.diffuse.size() && c.diffuse[ku];
    if (c.delta_draws.rows() > 0) {
      Eigen::VectorXd col = c.delta_draws.col(k);
      cr.p_conflict = single_conflict_pvalue(std::span<const double>(col.data(), col.size()), opt.method);
      shape(col, cr.skewness, cr.excess_kurtosis);
      cr.non_normal = std::abs(cr.skewness) > 0.5 || std::abs(cr.excess_kurtosis) > 1.0;
    } else {
      cr.p_conflict = cr.p_unadjusted;
    }
    zmax = std::max(zmax, std::abs(z[k]));
    r.contrasts.push_back(std::move(cr));
  }
  r.maxT_global = z.size() ? std::clamp(1.0 - mvn_rectangle(r.R, zmax, opt.mvn).probability, 0.0, 1.0)
                           : 1.0;
  return r;
}

void write_conflict_csv(std::ostream& out, const ConflictReport& r) {
  out << "label,mean,sd,z,p_unadjusted,p_adjusted,p_conflict,skewness,excess_kurtosis,flags\n";
  for (const auto& c : r.contrasts) {
    std::string flags;
    if (c.non_normal) flags += "non-normal";
    if (c.diffuse) flags += std::string(flags.empty() ? "" : ";") + "diffuse";
    out << c.label << ',' << format_number(c.mean) << ',' << format_number(c.sd) << ','
        << format_number(c.z) << ',' << format_number(c.p_unadjusted) << ','
        << format_number(c.p_adjusted) << ',' << format_number(c.p_conflict) << ','
        << format_number(c.skewness) << ',' << format_number(c.excess_kurtosis) << ',' << flags
        << '\n';
  }
  out << "# global\n";
  out << "chi2_statistic," << format_number(r.chi2.statistic) << '\n';
  out << "chi2_df," << r.chi2.df << '\n';
  out << "chi2_pvalue," << format_number(r.chi2.pvalue) << '\n';
  out << "maxT_global_pvalue," << format_number(r.maxT_global) << '\n';
  out << "conflict_method," << to_string(r.method) << '\n';
  out << "correlation_repaired," << (r.repaired ? "yes" : "no") << '\n';
}

}  // namespace nodesplit
