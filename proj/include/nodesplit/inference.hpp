#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nodesplit/graph.hpp"

namespace nodesplit {

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t iterations = 60000;
  std::size_t burn_in = 20000;
  std::size_t thin = 4;
  std::uint64_t seed = 1;
  std::size_t adapt_window = 50;
  double target_accept = 0.44;
  // Acceptance target for multivariate block updates.
  double target_accept_block = 0.234;
  // Worker threads for chains; 0 picks the hardware concurrency.
  std::size_t threads = 0;

  // Throws PreconditionError when the settings are inconsistent.
  void validate() const;
  std::size_t kept_per_chain() const { return (iterations - burn_in) / thin; }
};

// Draws for every unobserved node (stochastic and deterministic), stored
// chain-major: value(c, d, k) is column k of kept draw d in chain c.
class PosteriorSamples {
 public:
  PosteriorSamples() = default;
  PosteriorSamples(std::vector<NodeId> columns, std::size_t chains, std::size_t draws);

  const std::vector<NodeId>& columns() const { return columns_; }
  std::size_t chains() const { return chains_; }
  std::size_t draws_per_chain() const { return draws_; }
  std::size_t total_draws() const { return chains_ * draws_; }
  bool has(const NodeId& id) const { return index_.count(id) != 0; }
  std::size_t column_index(const NodeId& id) const;

  double value(std::size_t chain, std::size_t draw, std::size_t col) const {
    return data_[(chain * draws_ + draw) * columns_.size() + col];
  }
  double& value(std::size_t chain, std::size_t draw, std::size_t col) {
    return data_[(chain * draws_ + draw) * columns_.size() + col];
  }
  // Row of all columns for one draw.
  std::span<const double> row(std::size_t chain, std::size_t draw) const {
    return {data_.data() + (chain * draws_ + draw) * columns_.size(), columns_.size()};
  }

  // All draws of a node, chains concatenated.
  std::vector<double> column(const NodeId& id) const;
  double mean(const NodeId& id) const;
  double sd(const NodeId& id) const;

  // Residual deviance of each kept draw, same layout as the draws.
  std::vector<double>& deviance() { return deviance_; }
  const std::vector<double>& deviance() const { return deviance_; }

  // Split-chain potential scale reduction per stochastic column.
  std::map<NodeId, double> rhat;
  // Mean acceptance rate after burn-in, keyed by the first node of each unit.
  std::map<NodeId, double> acceptance;
  // Advisory messages such as non-convergence.
  std::vector<std::string> warnings;

 private:
  std::vector<NodeId> columns_;
  std::map<NodeId, std::size_t> index_;
  std::size_t chains_ = 0;
  std::size_t draws_ = 0;
  std::vector<double> data_;
  std::vector<double> deviance_;
};

// Adaptive Metropolis-within-Gibbs. Each block of g (and each remaining
// stochastic node) is updated by a random walk on the unconstrained scale.
PosteriorSamples sample(const ModelGraph& g, const SamplerConfig& cfg);

struct DatumDeviance {
  NodeId id;
  double mean_deviance = 0.0;
  double plugin_deviance = 0.0;
  double p_D = 0.0;
  double dic = 0.0;
};

struct DevianceSummary {
  double mean_deviance = 0.0;
  double plugin_deviance = 0.0;
  double p_D = 0.0;
  double dic = 0.0;
  std::vector<DatumDeviance> per_datum;
};

// Saturated (residual) deviance: D_i = -2 [log L_i - log L_i(saturated)].
DevianceSummary deviance_summary(const ModelGraph& g, const PosteriorSamples& s);

// Batch-means Monte Carlo standard error of the posterior mean.
double mc_standard_error(const PosteriorSamples& s, const NodeId& node);
// Same for a raw series made of `chains` equal-length chains laid end to end.
double mc_standard_error(std::span<const double> draws, std::size_t chains = 1);

// Split-chain potential scale reduction factor.
double split_rhat(std::span<const double> draws, std::size_t chains);

// Columnar text export: header "chain,<nodes...>", one row per kept draw.
void write_samples_csv(std::ostream& out, const PosteriorSamples& s);
void write_deviance_report(std::ostream& out, const DevianceSummary& d);

}  // namespace nodesplit
