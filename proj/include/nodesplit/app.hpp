#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "nodesplit/conflict.hpp"
#include "nodesplit/inference.hpp"

namespace nodesplit {

enum class Command { Fit, SplitFit, Nma, Hiv, SimulateNull };

std::string_view to_string(Command c);
std::optional<Command> command_from_string(std::string_view s);

struct OutputFormats {
  bool table = true;  // csv and text reports
  bool json = true;
  bool plot = true;  // density curves of each contrast
};

// Comma-separated subset of {table, json, plot}.
OutputFormats parse_formats(std::string_view s);

struct RunConfig {
  Command command = Command::Fit;
  std::string builtin;
  std::string model_path;
  std::string data_path;
  SamplerConfig sampler;
  std::filesystem::path out_dir = "nodesplit-out";
  OutputFormats formats;
  std::size_t mvn_points = std::size_t{1} << 15;
  double pinv_tol = 1e-8;
  // Unset: tail area for the HIV analyses, KDE elsewhere.
  std::optional<PValueMethod> pvalue_method;
  // simulate-null
  std::size_t replicates = 500;
  double shift_sd = 0.0;
};

const std::vector<std::string>& builtin_names();

// Stable text form of everything that affects numeric output.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

nlohmann::json manifest_json(const RunConfig& cfg, const std::vector<std::string>& files);
// Inverse of manifest_json for the fields that drive a run; out_dir is kept
// from `base`.
RunConfig config_from_manifest(const nlohmann::json& manifest, RunConfig base = {});

struct NullSimulationOptions {
  std::size_t replicates = 500;
  // Shift of the second partition's datum, in sd units of the contrast.
  double shift_sd = 0.0;
  double prior_sd = 2.0;
  std::uint64_t seed = 1;
  PValueMethod method = PValueMethod::Kde;
  SamplerConfig sampler{2, 6000, 1000, 1, 1};
};

struct NullSimulationReport {
  std::vector<double> pvalues;
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  double fraction_below_05 = 0.0;
};

// Replicates a two-partition normal model: theta ~ N(0, prior_sd^2), one
// N(theta, 1) datum per partition, the first partition's copy under a flat
// prior. Each replicate is split and sampled, and its conflict p-value is
// collected. Throws PreconditionError below 100 replicates.
NullSimulationReport simulate_null(const NullSimulationOptions& opt);

// Kolmogorov-Smirnov distance to Uniform(0, 1) and its asymptotic p-value.
std::pair<double, double> ks_uniform(std::vector<double> x);

struct FitOutput {
  std::string name;
  PosteriorSamples samples;
  DevianceSummary deviance;
  std::optional<ConflictReport> conflict;
  std::vector<DensityCurve> densities;
};

struct LeaveOutRow {
  std::string model;
  std::string left_out;
  std::string node;
  double mean = 0.0;
  double sd = 0.0;
  double z = 0.0;
  double p_u = 1.0;       // configured conflict method
  double p_normal = 1.0;  // 2(1 - Phi(|z|))
  double p_aw = 1.0;      // within model
  double p_al = 1.0;      // within the leave-n-out family
  double p_aa = 1.0;      // across leave-1-out and leave-2-out
};

struct RunResult {
  std::vector<FitOutput> fits;
  std::vector<LeaveOutRow> leave_out;
  std::optional<NullSimulationReport> null_report;
  std::vector<std::string> warnings;
};

// Runs the analysis without touching the filesystem (except to read inputs).
RunResult execute(const RunConfig& cfg);

// Writes every artifact plus manifest.json; returns the relative paths.
std::vector<std::string> write_outputs(const RunConfig& cfg, const RunResult& result);

// execute + write_outputs with errors mapped to exit codes: 0 success,
// 2 invalid input or configuration, 3 sampler failure.
int run(const RunConfig& cfg, std::ostream& log, std::ostream& err);

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitSampler = 3;

}  // namespace nodesplit
