#include <cmath>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"

namespace nodesplit {

namespace {

std::vector<PhiEntry> stack_phi(const SplitModel& split) {
  std::vector<PhiEntry> phi;
  for (std::size_t q = 0; q < split.spec.partitions.size(); ++q) {
    for (std::size_t j = 0; j < split.spec.separators.size(); ++j) {
      auto it = split.separator_copies.find({j, q});
      if (it == split.separator_copies.end()) continue;
      phi.push_back({j, q, *split.spec.separators[j].transform, it->second});
    }
  }
  return phi;
}

std::size_t phi_position(const std::vector<PhiEntry>& phi, std::size_t j, std::size_t q) {
  for (std::size_t k = 0; k < phi.size(); ++k) {
    if (phi[k].separator == j && phi[k].partition == q) return k;
  }
  throw MissingValue("separator copy not found");
}

void fill_layout(const SplitModel& split, ContrastSet& c) {
  c.phi_H = stack_phi(split);
  const auto pairs = split.contrast_pairs();
  c.C_Delta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c.phi_H.size()),
                                    static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto a = phi_position(c.phi_H, pairs[k].separator, pairs[k].first);
    const auto b = phi_position(c.phi_H, pairs[k].separator, pairs[k].second);
    c.C_Delta(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) = 1.0;
    c.C_Delta(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = -1.0;
    c.labels.push_back(split.contrast_label(pairs[k]));
  }
}

Eigen::MatrixXd transformed_phi(const std::vector<PhiEntry>& phi, const PosteriorSamples& s) {
  const auto n = static_cast<Eigen::Index>(s.total_draws());
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(phi.size()));
  for (std::size_t k = 0; k < phi.size(); ++k) {
    auto col = s.column(phi[k].node);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, static_cast<Eigen::Index>(k)) = apply_transform(phi[k].transform, col[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd centred = x.rowwise() - mean.transpose();
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  return (centred.transpose() * centred) / denom;
}

}  // namespace

ContrastSet build_contrasts(const SplitModel& split, const PosteriorSamples& samples,
                            double diffuse_threshold) {
  ContrastSet c;
  fill_layout(split, c);
  Eigen::MatrixXd phi = transformed_phi(c.phi_H, samples);
  c.delta_draws = phi * c.C_Delta;
  c.delta_mean = c.delta_draws.colwise().mean();
  c.S_Delta = sample_covariance(c.delta_draws, c.delta_mean);
  Eigen::VectorXd phi_mean = phi.colwise().mean();
  Eigen::VectorXd phi_sd = sample_covariance(phi, phi_mean).diagonal().cwiseSqrt();
  for (Eigen::Index k = 0; k < c.C_Delta.cols(); ++k) {
    bool diffuse = false;
    for (Eigen::Index r = 0; r < c.C_Delta.rows(); ++r) {
      if (c.C_Delta(r, k) != 0.0 && phi_sd[r] > diffuse_threshold) diffuse = true;
    }
    c.diffuse.push_back(diffuse);
  }
  return c;
}

ContrastSet contrasts_from_draws(Eigen::MatrixXd draws, std::vector<std::string> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != draws.cols()) {
    throw DimensionMismatch("one label per contrast column is required");
  }
  ContrastSet c;
  c.delta_draws = std::move(draws);
  c.delta_mean = c.delta_draws.colwise().mean();
  c.S_Delta = sample_covariance(c.delta_draws, c.delta_mean);
  c.labels = std::move(labels);
  c.diffuse.assign(c.labels.size(), false);
  return c;
}

ContrastSet analytic_contrasts(const SplitModel& split, const PosteriorSamples& samples) {
  ContrastSet c;
  fill_layout(split, c);
  Eigen::MatrixXd phi = transformed_phi(c.phi_H, samples);
  Eigen::VectorXd mean = phi.colwise().mean();
  Eigen::MatrixXd V = sample_covariance(phi, mean);
  for (std::size_t a = 0; a < c.phi_H.size(); ++a) {
    for (std::size_t b = 0; b < c.phi_H.size(); ++b) {
      if (c.phi_H[a].partition != c.phi_H[b].partition) {
        V(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = 0.0;
      }
    }
  }
  c.delta_mean = c.C_Delta.transpose() * mean;
  c.S_Delta = c.C_Delta.transpose() * V * c.C_Delta;
  c.diffuse.assign(c.labels.size(), false);
  return c;
}

}  // namespace nodesplit
