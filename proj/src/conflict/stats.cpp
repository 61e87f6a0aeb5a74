#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"

namespace nodesplit {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double chi2_upper_tail(double x, double df) {
  if (df <= 0.0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& A, double tol) {
  if (A.rows() != A.cols()) throw DimensionMismatch("pseudo-inverse needs a square matrix");
  PseudoInverse out;
  out.inverse = Eigen::MatrixXd::Zero(A.rows(), A.cols());
  if (A.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const double cutoff = tol * lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (std::abs(lambda[k]) > cutoff && lambda[k] != 0.0) {
      const Eigen::VectorXd v = es.eigenvectors().col(k);
      out.inverse += (v * v.transpose()) / lambda[k];
      ++out.rank;
    }
  }
  return out;
}

void standardise(const Eigen::VectorXd& mean, const Eigen::MatrixXd& S, Eigen::VectorXd& z,
                 Eigen::MatrixXd& R) {
  if (S.rows() != mean.size() || S.cols() != mean.size()) {
    throw DimensionMismatch("covariance does not match the contrast vector");
  }
  Eigen::VectorXd sd = S.diagonal().cwiseSqrt();
  for (Eigen::Index k = 0; k < sd.size(); ++k) {
    if (!(sd[k] > 0.0) || !std::isfinite(mean[k])) {
      throw DegenerateDistribution("contrast " + std::to_string(k) + " has zero variance");
    }
  }
  z = mean.cwiseQuotient(sd);
  R = sd.cwiseInverse().asDiagonal() * S * sd.cwiseInverse().asDiagonal();
  R = 0.5 * (R + R.transpose());
  R.diagonal().setOnes();
}

Chi2Result global_chi2(const Eigen::VectorXd& mean, const Eigen::MatrixXd& S, double pinv_tol) {
  Eigen::VectorXd z;
  Eigen::MatrixXd R;
  standardise(mean, S, z, R);
  PseudoInverse pi = pseudo_inverse(R, pinv_tol);
  Chi2Result out;
  out.statistic = std::max(0.0, z.dot(pi.inverse * z));
  out.df = pi.rank;
  out.pvalue = chi2_upper_tail(out.statistic, static_cast<double>(out.df));
  return out;
}

Chi2Result global_chi2(const ContrastSet& c, double pinv_tol) {
  return global_chi2(c.delta_mean, c.S_Delta, pinv_tol);
}

}  // namespace nodesplit
