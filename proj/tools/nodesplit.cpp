#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "nodesplit/app.hpp"
#include "nodesplit/errors.hpp"

namespace {

struct Flags {
  std::string builtin;
  std::string model;
  std::string data;
  std::uint64_t seed = 1;
  std::size_t chains = 4;
  std::size_t iters = 60000;
  std::size_t burnin = 20000;
  std::size_t thin = 4;
  std::string out = "nodesplit-out";
  std::string format = "table,json,plot";
  std::size_t mvn_points = std::size_t{1} << 15;
  double pinv_tol = 1e-8;
  std::string pvalue_method;
  std::size_t threads = 0;
  std::string manifest;
  std::size_t replicates = 500;
  double shift = 0.0;
};

void add_common(CLI::App* cmd, Flags& f, bool model_flags) {
  if (model_flags) {
    cmd->add_option("--builtin", f.builtin, "Builtin analysis");
    cmd->add_option("--model", f.model, "Model file");
    cmd->add_option("--data", f.data, "Replacement data table for a builtin");
  }
  cmd->add_option("--seed", f.seed, "Root seed");
  cmd->add_option("--chains", f.chains, "Number of chains");
  cmd->add_option("--iters", f.iters, "Iterations per chain, burn-in included");
  cmd->add_option("--burnin", f.burnin, "Burn-in iterations");
  cmd->add_option("--thin", f.thin, "Thinning interval");
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--format", f.format, "Comma-separated subset of table,json,plot");
  cmd->add_option("--mvn-points", f.mvn_points, "Lattice points per shift for MVN integration");
  cmd->add_option("--pinv-tol", f.pinv_tol, "Relative tolerance of the pseudo-inverse");
  cmd->add_option("--pvalue-method", f.pvalue_method, "Conflict p-value: kde, normal or tail");
  cmd->add_option("--from-manifest", f.manifest, "Rerun the configuration recorded in a manifest");
}

nodesplit::RunConfig to_config(nodesplit::Command command, const Flags& f) {
  nodesplit::RunConfig cfg;
  cfg.out_dir = f.out;
  if (!f.manifest.empty()) {
    std::ifstream in(f.manifest);
    if (!in) throw nodesplit::ParseError("cannot open '" + f.manifest + "'");
    nlohmann::json m;
    try {
      in >> m;
    } catch (const nlohmann::json::exception& e) {
      throw nodesplit::ParseError(std::string("malformed manifest: ") + e.what());
    }
    cfg = nodesplit::config_from_manifest(m, cfg);
    cfg.sampler.threads = f.threads;
    return cfg;
  }
  cfg.command = command;
  cfg.builtin = f.builtin;
  cfg.model_path = f.model;
  cfg.data_path = f.data;
  cfg.sampler.seed = f.seed;
  cfg.sampler.chains = f.chains;
  cfg.sampler.iterations = f.iters;
  cfg.sampler.burn_in = f.burnin;
  cfg.sampler.thin = f.thin;
  cfg.sampler.threads = f.threads;
  cfg.formats = nodesplit::parse_formats(f.format);
  cfg.mvn_points = f.mvn_points;
  cfg.pinv_tol = f.pinv_tol;
  if (!f.pvalue_method.empty()) {
    cfg.pvalue_method = nodesplit::pvalue_method_from_string(f.pvalue_method);
    if (!cfg.pvalue_method) throw nodesplit::PreconditionError("unknown p-value method '" + f.pvalue_method + "'");
  }
  cfg.replicates = f.replicates;
  cfg.shift_sd = f.shift;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Node-splitting conflict diagnostics for Bayesian evidence synthesis"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::pair<nodesplit::Command, std::string>> commands{
      {"fit", {nodesplit::Command::Fit, "Fit a model without splitting"}},
      {"split-fit", {nodesplit::Command::SplitFit, "Fit a node-split model and test for conflict"}},
      {"nma", {nodesplit::Command::Nma, "Smoking cessation network analyses"}},
      {"hiv", {nodesplit::Command::Hiv, "HIV prevalence analyses"}},
      {"simulate-null", {nodesplit::Command::SimulateNull, "Check uniformity of conflict p-values"}}};
  std::map<CLI::App*, nodesplit::Command> by_app;
  for (const auto& [name, entry] : commands) {
    auto* cmd = app.add_subcommand(name, entry.second);
    const bool simulate = entry.first == nodesplit::Command::SimulateNull;
    add_common(cmd, flags, !simulate);
    if (simulate) {
      cmd->add_option("--replicates", flags.replicates, "Number of simulated data sets");
      cmd->add_option("--shift", flags.shift, "Injected shift in contrast sd units");
    }
    by_app[cmd] = entry.first;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return nodesplit::kExitInvalid;
  }

  nodesplit::RunConfig cfg;
  try {
    cfg = to_config(by_app.at(app.get_subcommands().front()), flags);
  } catch (const nodesplit::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nodesplit::kExitInvalid;
  }
  return nodesplit::run(cfg, std::cout, std::cerr);
}
