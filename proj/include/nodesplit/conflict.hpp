#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nodesplit/inference.hpp"
#include "nodesplit/split.hpp"

namespace nodesplit {

// One entry of the stacked, transformed separator vector.
struct PhiEntry {
  std::size_t separator = 0;
  std::size_t partition = 0;
  Transform transform = Transform::Identity;
  NodeId node;
};

struct ContrastSet {
  std::vector<PhiEntry> phi_H;
  // m x p; column k holds +1 for the first copy and -1 for the second.
  Eigen::MatrixXd C_Delta;
  // kept draws x p
  Eigen::MatrixXd delta_draws;
  Eigen::VectorXd delta_mean;
  Eigen::MatrixXd S_Delta;
  std::vector<std::string> labels;
  // A copy in the contrast has posterior sd above the diffuseness threshold.
  std::vector<bool> diffuse;

  std::size_t size() const { return labels.size(); }
};

ContrastSet build_contrasts(const SplitModel& split, const PosteriorSamples& samples,
                            double diffuse_threshold = 5.0);

// Contrast set straight from a draws matrix (one column per contrast).
ContrastSet contrasts_from_draws(Eigen::MatrixXd draws, std::vector<std::string> labels);

// Delta-method cross-check: separator copies in different partitions are
// treated as independent, so S_Delta = C' V C with V block diagonal.
// delta_draws is left empty.
ContrastSet analytic_contrasts(const SplitModel& split, const PosteriorSamples& samples);

enum class PValueMethod { Kde, Normal, Tail };

std::string_view to_string(PValueMethod m);
std::optional<PValueMethod> pvalue_method_from_string(std::string_view s);

// Two-sided conflict p-value for a single contrast. The kde method returns the
// posterior mass of draws whose estimated density lies below the density at
// zero; the normal method returns 2(1 - Phi(|mean| / sd)); the tail method
// returns 2 min(P(delta <= 0), P(delta >= 0)) from the draws.
double single_conflict_pvalue(std::span<const double> draws, PValueMethod method);

struct DensityCurve {
  std::vector<double> x;
  std::vector<double> density;
  double bandwidth = 0.0;
};

// Silverman rule: 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> draws);
DensityCurve kde_curve(std::span<const double> draws, std::size_t points = 512);

struct PseudoInverse {
  Eigen::MatrixXd inverse;
  Eigen::Index rank = 0;
};

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& A, double tol = 1e-8);

struct Chi2Result {
  double statistic = 0.0;
  Eigen::Index df = 0;
  double pvalue = 1.0;
};

Chi2Result global_chi2(const ContrastSet& c, double pinv_tol = 1e-8);
Chi2Result global_chi2(const Eigen::VectorXd& mean, const Eigen::MatrixXd& S, double pinv_tol = 1e-8);

// Upper tail of the chi-squared distribution.
double chi2_upper_tail(double x, double df);
double normal_cdf(double x);
double normal_quantile(double p);

struct MvnOptions {
  std::size_t n_points = std::size_t{1} << 15;
  std::size_t shifts = 12;
  std::uint64_t seed = 20240101;
};

struct MvnResult {
  double probability = 0.0;
  double error = 0.0;
  // R was not positive semi-definite and had its spectrum clipped.
  bool repaired = false;
};

// P(|Z_k| <= z for all k), Z ~ N(0, R).
MvnResult mvn_rectangle(const Eigen::MatrixXd& R, double z, const MvnOptions& opt = {});

struct ConflictOptions {
  PValueMethod method = PValueMethod::Kde;
  MvnOptions mvn;
  double pinv_tol = 1e-8;
};

struct ContrastResult {
  std::string label;
  double mean = 0.0;
  double sd = 0.0;
  double z = 0.0;
  double p_unadjusted = 1.0;
  double p_adjusted = 1.0;
  // Density-ordering (or normal) tail area of the contrast posterior.
  double p_conflict = 1.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool non_normal = false;
  bool diffuse = false;
};

struct ConflictReport {
  std::vector<ContrastResult> contrasts;
  Chi2Result chi2;
  double maxT_global = 1.0;
  Eigen::MatrixXd R;
  bool repaired = false;
  PValueMethod method = PValueMethod::Kde;
};

// Correlation matrix and z-scores of a contrast set; throws
// DegenerateDistribution on zero variances.
void standardise(const Eigen::VectorXd& mean, const Eigen::MatrixXd& S, Eigen::VectorXd& z,
                 Eigen::MatrixXd& R);

ConflictReport maxT_adjust(const ContrastSet& c, const ConflictOptions& opt = {});

// Table with one row per contrast followed by a "# global" block.
void write_conflict_csv(std::ostream& out, const ConflictReport& r);

}  // namespace nodesplit
