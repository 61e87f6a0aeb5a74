#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nodesplit/app.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/model_io.hpp"
#include "nodesplit/nma.hpp"
#include "nodesplit/rng.hpp"
#include "nodesplit/synthesis.hpp"

namespace nodesplit {

namespace {

const std::map<Command, std::string_view> kCommandNames{{Command::Fit, "fit"},
                                                        {Command::SplitFit, "split-fit"},
                                                        {Command::Nma, "nma"},
                                                        {Command::Hiv, "hiv"},
                                                        {Command::SimulateNull, "simulate-null"}};

bool is_hiv(const std::string& builtin) { return builtin.rfind("hiv-", 0) == 0; }
bool is_smoking(const std::string& builtin) { return builtin.rfind("smoking-", 0) == 0; }
bool splits(const std::string& builtin) {
  return builtin.rfind("smoking-scheme-", 0) == 0 || builtin == "hiv-saturated" || builtin == "hiv-leave1" ||
         builtin == "hiv-leave2";
}

void check_command(const RunConfig& cfg) {
  if (cfg.command == Command::SimulateNull) {
    if (!cfg.builtin.empty() || !cfg.model_path.empty()) {
      throw PreconditionError("simulate-null takes no model");
    }
    return;
  }
  if (cfg.builtin.empty() == cfg.model_path.empty()) {
    throw PreconditionError("give exactly one of --builtin and --model");
  }
  if (!cfg.model_path.empty()) {
    if (cfg.command == Command::Nma || cfg.command == Command::Hiv) {
      throw PreconditionError(std::string(to_string(cfg.command)) + " runs builtin analyses only");
    }
    if (!cfg.data_path.empty()) throw PreconditionError("--data applies to builtin analyses only");
    return;
  }
  const auto& names = builtin_names();
  if (std::find(names.begin(), names.end(), cfg.builtin) == names.end()) {
    throw PreconditionError("unknown builtin '" + cfg.builtin + "'");
  }
  bool ok = true;
  switch (cfg.command) {
    case Command::Fit: ok = !splits(cfg.builtin); break;
    case Command::SplitFit: ok = splits(cfg.builtin); break;
    case Command::Nma: ok = is_smoking(cfg.builtin); break;
    case Command::Hiv: ok = is_hiv(cfg.builtin); break;
    case Command::SimulateNull: break;
  }
  if (!ok) {
    throw PreconditionError("builtin '" + cfg.builtin + "' cannot be run by " + std::string(to_string(cfg.command)));
  }
}

PValueMethod method_for(const RunConfig& cfg) {
  if (cfg.pvalue_method) return *cfg.pvalue_method;
  return is_hiv(cfg.builtin) ? PValueMethod::Tail : PValueMethod::Kde;
}

Transform natural_transform(const ModelGraph& g, const NodeId& id) {
  const auto* n = g.find(id);
  return n ? default_transform(n->support) : Transform::Identity;
}

FitOutput fit(const std::string& name, const ModelGraph& g, const SplitModel* split_model, const RunConfig& cfg,
              std::vector<std::string>& warnings) {
  FitOutput out;
  out.name = name;
  out.samples = sample(g, cfg.sampler);
  out.deviance = deviance_summary(g, out.samples);
  const std::string prefix = name.empty() ? "" : name + ": ";
  for (const auto& w : out.samples.warnings) warnings.push_back(prefix + w);
  for (const auto& n : g.nodes()) {
    if (!n.is_stochastic()) continue;
    const Transform t = natural_transform(g, n.id);
    auto col = out.samples.column(n.id);
    for (auto& v : col) v = apply_transform(t, v);
    const double se = mc_standard_error(col, out.samples.chains());
    if (se > 0.01) {
      std::ostringstream msg;
      msg << prefix << "MCSE " << format_number(se) << " for '" << n.id << "' on the " << to_string(t)
          << " scale exceeds 0.01";
      warnings.push_back(msg.str());
    }
  }
  if (split_model) {
    ConflictOptions opt;
    opt.method = method_for(cfg);
    opt.mvn.n_points = cfg.mvn_points;
    opt.pinv_tol = cfg.pinv_tol;
    const ContrastSet c = build_contrasts(*split_model, out.samples);
    out.conflict = maxT_adjust(c, opt);
    for (Eigen::Index k = 0; k < c.delta_draws.cols(); ++k) {
      const Eigen::VectorXd col = c.delta_draws.col(k);
      out.densities.push_back(kde_curve({col.data(), static_cast<std::size_t>(col.size())}));
    }
  }
  return out;
}

std::vector<TrialArm> smoking_arms(const RunConfig& cfg) {
  return cfg.data_path.empty() ? smoking_data() : load_trial_arms(cfg.data_path);
}

HivData hiv_data(const RunConfig& cfg) {
  return cfg.data_path.empty() ? HivData{} : load_hiv_data(cfg.data_path);
}

PartitionScheme smoking_scheme(char letter, const std::vector<TrialArm>& arms) {
  const std::vector<Edge> star{{"A", "B"}, {"A", "C"}, {"A", "D"}};
  const std::vector<Edge> alt{{"A", "B"}, {"A", "C"}, {"B", "D"}};
  const bool first_tree = letter <= 'd';
  const auto schemes = enumerate_schemes(arms, first_tree ? star : alt);
  const std::size_t idx = first_tree ? static_cast<std::size_t>(letter - 'b') : static_cast<std::size_t>(letter - 'e');
  if (idx >= schemes.size()) {
    throw PreconditionError(std::string("network has no scheme (") + letter + ")");
  }
  return schemes[idx];
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : sep) + x;
  return s;
}

void run_leave_out(const RunConfig& cfg, RunResult& result) {
  const ModelGraph g = build_hiv_graph(hiv_data(cfg));
  const int family = cfg.builtin == "hiv-leave1" ? 1 : 2;
  std::vector<LeaveOutModel> models = leave_n_out_splits(g, 1);
  for (auto& m : leave_n_out_splits(g, 2)) models.push_back(std::move(m));
  std::vector<FitOutput> fits;
  std::vector<ConflictReport> reports;
  for (const auto& m : models) {
    fits.push_back(fit(m.spec.name, m.model.graph, &m.model, cfg, result.warnings));
    reports.push_back(*fits.back().conflict);
  }
  MvnOptions mvn;
  mvn.n_points = cfg.mvn_points;
  const std::size_t n1 = 5;
  const std::size_t first = family == 1 ? 0 : n1;
  const std::size_t last = family == 1 ? n1 : models.size();
  const std::vector<ConflictReport> fam(reports.begin() + static_cast<std::ptrdiff_t>(first),
                                        reports.begin() + static_cast<std::ptrdiff_t>(last));
  const auto al = adjust_across_models(fam, AdjustScope::PerFamily, mvn);
  const auto aa = adjust_across_models(reports, AdjustScope::All, mvn);
  for (std::size_t i = first; i < last; ++i) {
    const auto& rep = reports[i];
    for (std::size_t k = 0; k < rep.contrasts.size(); ++k) {
      const auto& c = rep.contrasts[k];
      LeaveOutRow row;
      row.model = models[i].spec.name;
      row.left_out = join(models[i].spec.left_out, "+");
      row.node = models[i].spec.split_nodes[k];
      row.mean = c.mean;
      row.sd = c.sd;
      row.z = c.z;
      row.p_u = c.p_conflict;
      row.p_normal = c.p_unadjusted;
      row.p_aw = c.p_adjusted;
      row.p_al = al[i - first][k];
      row.p_aa = aa[i][k];
      result.leave_out.push_back(row);
    }
    result.fits.push_back(std::move(fits[i]));
  }
}

}  // namespace

std::string_view to_string(Command c) { return kCommandNames.at(c); }

std::optional<Command> command_from_string(std::string_view s) {
  for (const auto& [c, name] : kCommandNames) {
    if (name == s) return c;
  }
  return std::nullopt;
}

OutputFormats parse_formats(std::string_view s) {
  OutputFormats f{false, false, false};
  std::string item;
  std::istringstream in{std::string(s)};
  while (std::getline(in, item, ',')) {
    if (item == "table") {
      f.table = true;
    } else if (item == "json") {
      f.json = true;
    } else if (item == "plot") {
      f.plot = true;
    } else {
      throw PreconditionError("unknown output format '" + item + "'");
    }
  }
  return f;
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{
      "smoking-common",   "smoking-random",   "smoking-scheme-b", "smoking-scheme-c", "smoking-scheme-d",
      "smoking-scheme-e", "smoking-scheme-f", "hiv-original",     "hiv-saturated",    "hiv-leave1",
      "hiv-leave2"};
  return names;
}

RunResult execute(const RunConfig& cfg) {
  check_command(cfg);
  cfg.sampler.validate();
  RunResult result;
  if (cfg.command == Command::SimulateNull) {
    NullSimulationOptions opt;
    opt.replicates = cfg.replicates;
    opt.shift_sd = cfg.shift_sd;
    opt.seed = cfg.sampler.seed;
    opt.method = cfg.pvalue_method.value_or(PValueMethod::Kde);
    result.null_report = simulate_null(opt);
    return result;
  }
  if (!cfg.model_path.empty()) {
    const ModelFile mf = load_model(cfg.model_path);
    if (cfg.command == Command::SplitFit) {
      if (!mf.split) throw PreconditionError("model file has no [split] section");
      const SplitModel m = split(mf.graph, *mf.split);
      result.fits.push_back(fit("", m.graph, &m, cfg, result.warnings));
    } else {
      result.fits.push_back(fit("", mf.graph, nullptr, cfg, result.warnings));
    }
    return result;
  }

  const std::string& b = cfg.builtin;
  if (b == "smoking-common" || b == "smoking-random") {
    NmaSpec spec;
    spec.effect = b == "smoking-common" ? EffectModel::Common : EffectModel::Random;
    const ModelGraph g = build_nma_graph(smoking_arms(cfg), spec);
    result.fits.push_back(fit("", g, nullptr, cfg, result.warnings));
  } else if (b.rfind("smoking-scheme-", 0) == 0) {
    const auto arms = smoking_arms(cfg);
    const NmaSplit ns = split_nma(arms, NmaSpec{}, smoking_scheme(b.back(), arms));
    result.fits.push_back(fit("", ns.model.graph, &ns.model, cfg, result.warnings));
  } else if (b == "hiv-original") {
    result.fits.push_back(fit("", build_hiv_graph(hiv_data(cfg)), nullptr, cfg, result.warnings));
  } else if (b == "hiv-saturated") {
    const SplitModel m = saturated_split(build_hiv_graph(hiv_data(cfg)));
    result.fits.push_back(fit("", m.graph, &m, cfg, result.warnings));
  } else {
    run_leave_out(cfg, result);
  }
  return result;
}

std::string canonical_config(const RunConfig& cfg) {
  std::ostringstream s;
  auto file_digest = [](const std::string& path) -> std::string {
    if (path.empty()) return "";
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::to_string(fnv1a(buf.str()));
  };
  const SamplerConfig& sc = cfg.sampler;
  s << "command=" << to_string(cfg.command) << '\n'
    << "builtin=" << cfg.builtin << '\n'
    << "model=" << cfg.model_path << '\n'
    << "model_digest=" << file_digest(cfg.model_path) << '\n'
    << "data=" << cfg.data_path << '\n'
    << "data_digest=" << file_digest(cfg.data_path) << '\n'
    << "seed=" << sc.seed << '\n'
    << "chains=" << sc.chains << '\n'
    << "iterations=" << sc.iterations << '\n'
    << "burn_in=" << sc.burn_in << '\n'
    << "thin=" << sc.thin << '\n'
    << "adapt_window=" << sc.adapt_window << '\n'
    << "target_accept=" << format_number(sc.target_accept) << '\n'
    << "target_accept_block=" << format_number(sc.target_accept_block) << '\n'
    << "mvn_points=" << cfg.mvn_points << '\n'
    << "pinv_tol=" << format_number(cfg.pinv_tol) << '\n'
    << "pvalue_method=" << (cfg.pvalue_method ? to_string(*cfg.pvalue_method) : "default") << '\n'
    << "replicates=" << cfg.replicates << '\n'
    << "shift_sd=" << format_number(cfg.shift_sd) << '\n';
  return s.str();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(canonical_config(cfg)); }

int run(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  RunResult result;
  try {
    result = execute(cfg);
  } catch (const InitialisationFailure& e) {
    err << "sampler error: " << e.what() << '\n';
    return kExitSampler;
  } catch (const DegenerateDistribution& e) {
    err << "sampler error: " << e.what() << '\n';
    return kExitSampler;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "sampler error: " << e.what() << '\n';
    return kExitSampler;
  }
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  try {
    const auto files = write_outputs(cfg, result);
    log << "wrote " << files.size() << " files to " << cfg.out_dir.string() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  for (const auto& f : result.fits) {
    if (!f.conflict) continue;
    log << (f.name.empty() ? "" : f.name + " ") << "chi2 p " << format_number(f.conflict->chi2.pvalue)
        << ", max-T p " << format_number(f.conflict->maxT_global) << ", DIC " << format_number(f.deviance.dic)
        << '\n';
  }
  if (result.null_report) {
    log << "KS statistic " << format_number(result.null_report->ks_statistic) << ", p "
        << format_number(result.null_report->ks_pvalue) << '\n';
  }
  return kExitOk;
}

}  // namespace nodesplit
