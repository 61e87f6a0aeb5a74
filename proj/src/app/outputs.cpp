#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nodesplit/app.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/model_io.hpp"

#ifndef NODESPLIT_VERSION
#define NODESPLIT_VERSION "0.0.0"
#endif

namespace nodesplit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kIndependence = "models treated as independent (block-diagonal correlation across models)";

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SummaryRow {
  std::string node;
  double mean, sd, mcse, q025, q50, q975;
  std::optional<double> rhat;
};

std::vector<SummaryRow> summarise(const PosteriorSamples& s) {
  std::vector<SummaryRow> rows;
  for (const auto& id : s.columns()) {
    const auto col = s.column(id);
    SummaryRow r{id, s.mean(id), s.sd(id), mc_standard_error(col, s.chains()), quantile(col, 0.025),
                 quantile(col, 0.5), quantile(col, 0.975), std::nullopt};
    if (auto it = s.rhat.find(id); it != s.rhat.end()) r.rhat = it->second;
    rows.push_back(r);
  }
  return rows;
}

std::string safe_name(const std::string& label) {
  std::string out = label;
  for (auto& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return out;
}

// Files are written whole to a temporary name and then renamed.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path root) : root_(std::move(root)) {}

  void write(const fs::path& rel, const std::string& content) {
    const fs::path target = root_ / rel;
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw PreconditionError("cannot write '" + target.string() + "'");
      out << content;
    }
    fs::rename(tmp, target);
    files_.push_back(rel.generic_string());
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

std::string summary_csv(const PosteriorSamples& s) {
  std::ostringstream out;
  out << "node,mean,sd,mcse,q2.5,q50,q97.5,rhat\n";
  for (const auto& r : summarise(s)) {
    out << r.node << ',' << format_number(r.mean) << ',' << format_number(r.sd) << ',' << format_number(r.mcse)
        << ',' << format_number(r.q025) << ',' << format_number(r.q50) << ',' << format_number(r.q975) << ','
        << (r.rhat ? format_number(*r.rhat) : "") << '\n';
  }
  return out.str();
}

json summary_json(const PosteriorSamples& s) {
  json rows = json::array();
  for (const auto& r : summarise(s)) {
    json j{{"node", r.node}, {"mean", r.mean}, {"sd", r.sd}, {"mcse", r.mcse},
           {"q2.5", r.q025}, {"q50", r.q50},   {"q97.5", r.q975}};
    j["rhat"] = r.rhat ? json(*r.rhat) : json(nullptr);
    rows.push_back(j);
  }
  return {{"chains", s.chains()}, {"draws_per_chain", s.draws_per_chain()}, {"nodes", rows}};
}

json deviance_json(const DevianceSummary& d) {
  json per = json::array();
  for (const auto& x : d.per_datum) {
    per.push_back({{"datum", x.id},
                   {"mean_deviance", x.mean_deviance},
                   {"plugin_deviance", x.plugin_deviance},
                   {"p_D", x.p_D},
                   {"dic", x.dic}});
  }
  return {{"mean_deviance", d.mean_deviance},
          {"plugin_deviance", d.plugin_deviance},
          {"p_D", d.p_D},
          {"dic", d.dic},
          {"per_datum", per}};
}

json conflict_json(const ConflictReport& r) {
  json rows = json::array();
  for (const auto& c : r.contrasts) {
    rows.push_back({{"label", c.label},
                    {"mean", c.mean},
                    {"sd", c.sd},
                    {"z", c.z},
                    {"p_unadjusted", c.p_unadjusted},
                    {"p_adjusted", c.p_adjusted},
                    {"p_conflict", c.p_conflict},
                    {"skewness", c.skewness},
                    {"excess_kurtosis", c.excess_kurtosis},
                    {"non_normal", c.non_normal},
                    {"diffuse", c.diffuse}});
  }
  return {{"contrasts", rows},
          {"global",
           {{"chi2_statistic", r.chi2.statistic},
            {"chi2_df", r.chi2.df},
            {"chi2_pvalue", r.chi2.pvalue},
            {"maxT_global_pvalue", r.maxT_global},
            {"conflict_method", std::string(to_string(r.method))},
            {"correlation_repaired", r.repaired}}}};
}

std::string density_csv(const ContrastResult& c, const DensityCurve& d) {
  std::ostringstream out;
  out << "# contrast " << c.label << " p_conflict " << format_number(c.p_conflict) << " p_unadjusted "
      << format_number(c.p_unadjusted) << " p_adjusted " << format_number(c.p_adjusted) << " bandwidth "
      << format_number(d.bandwidth) << '\n';
  out << "x,density\n";
  for (std::size_t i = 0; i < d.x.size(); ++i) out << format_number(d.x[i]) << ',' << format_number(d.density[i]) << '\n';
  return out.str();
}

void write_fit(ArtifactWriter& w, const RunConfig& cfg, const FitOutput& f, const fs::path& dir) {
  if (cfg.formats.table) {
    w.write(dir / "posterior.csv", summary_csv(f.samples));
    std::ostringstream dev;
    write_deviance_report(dev, f.deviance);
    w.write(dir / "deviance.txt", dev.str());
    if (f.conflict) {
      std::ostringstream c;
      write_conflict_csv(c, *f.conflict);
      w.write(dir / "conflict.csv", c.str());
    }
  }
  if (cfg.formats.json) {
    w.write(dir / "posterior.json", summary_json(f.samples).dump(2) + "\n");
    w.write(dir / "deviance.json", deviance_json(f.deviance).dump(2) + "\n");
    if (f.conflict) w.write(dir / "conflict.json", conflict_json(*f.conflict).dump(2) + "\n");
  }
  if (cfg.formats.plot && f.conflict) {
    for (std::size_t k = 0; k < f.densities.size(); ++k) {
      const auto& c = f.conflict->contrasts[k];
      w.write(dir / "densities" / (safe_name(c.label) + ".csv"), density_csv(c, f.densities[k]));
    }
  }
}

void write_leave_out(ArtifactWriter& w, const RunConfig& cfg, const std::vector<LeaveOutRow>& rows) {
  if (cfg.formats.table) {
    std::ostringstream out;
    out << "# " << kIndependence << '\n';
    out << "model,left_out,node,mean,sd,z,p_u,p_normal,p_aw,p_al,p_aa\n";
    for (const auto& r : rows) {
      out << r.model << ',' << r.left_out << ',' << r.node << ',' << format_number(r.mean) << ','
          << format_number(r.sd) << ',' << format_number(r.z) << ',' << format_number(r.p_u) << ','
          << format_number(r.p_normal) << ',' << format_number(r.p_aw) << ',' << format_number(r.p_al) << ','
          << format_number(r.p_aa) << '\n';
    }
    w.write("leave_out.csv", out.str());
  }
  if (cfg.formats.json) {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"model", r.model},
                     {"left_out", r.left_out},
                     {"node", r.node},
                     {"mean", r.mean},
                     {"sd", r.sd},
                     {"z", r.z},
                     {"p_u", r.p_u},
                     {"p_normal", r.p_normal},
                     {"p_aw", r.p_aw},
                     {"p_al", r.p_al},
                     {"p_aa", r.p_aa}});
    }
    w.write("leave_out.json", json{{"assumption", kIndependence}, {"rows", arr}}.dump(2) + "\n");
  }
}

void write_null(ArtifactWriter& w, const RunConfig& cfg, const NullSimulationReport& r) {
  if (cfg.formats.table) {
    std::ostringstream out;
    out << "# ks_statistic " << format_number(r.ks_statistic) << " ks_pvalue " << format_number(r.ks_pvalue)
        << " fraction_below_0.05 " << format_number(r.fraction_below_05) << '\n';
    out << "replicate,pvalue\n";
    for (std::size_t i = 0; i < r.pvalues.size(); ++i) out << i << ',' << format_number(r.pvalues[i]) << '\n';
    w.write("null_pvalues.csv", out.str());
  }
  if (cfg.formats.json) {
    w.write("null_report.json", json{{"replicates", r.pvalues.size()},
                                     {"ks_statistic", r.ks_statistic},
                                     {"ks_pvalue", r.ks_pvalue},
                                     {"fraction_below_0.05", r.fraction_below_05}}
                                        .dump(2) +
                                    "\n");
  }
}

}  // namespace

json manifest_json(const RunConfig& cfg, const std::vector<std::string>& files) {
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg);
  const SamplerConfig& s = cfg.sampler;
  json j{{"tool", "nodesplit"},
         {"version", NODESPLIT_VERSION},
         {"command", std::string(to_string(cfg.command))},
         {"builtin", cfg.builtin},
         {"model", cfg.model_path},
         {"data", cfg.data_path},
         {"seed", s.seed},
         {"chains", s.chains},
         {"iterations", s.iterations},
         {"burn_in", s.burn_in},
         {"thin", s.thin},
         {"adapt_window", s.adapt_window},
         {"target_accept", s.target_accept},
         {"target_accept_block", s.target_accept_block},
         {"mvn_points", cfg.mvn_points},
         {"pinv_tol", cfg.pinv_tol},
         {"pvalue_method", cfg.pvalue_method ? std::string(to_string(*cfg.pvalue_method)) : "default"},
         {"replicates", cfg.replicates},
         {"shift_sd", cfg.shift_sd},
         {"config_hash", hash.str()},
         {"files", files}};
  return j;
}

RunConfig config_from_manifest(const json& m, RunConfig base) {
  try {
    const auto cmd = command_from_string(m.at("command").get<std::string>());
    if (!cmd) throw PreconditionError("manifest names an unknown command");
    base.command = *cmd;
    base.builtin = m.at("builtin").get<std::string>();
    base.model_path = m.at("model").get<std::string>();
    base.data_path = m.at("data").get<std::string>();
    SamplerConfig& s = base.sampler;
    s.seed = m.at("seed").get<std::uint64_t>();
    s.chains = m.at("chains").get<std::size_t>();
    s.iterations = m.at("iterations").get<std::size_t>();
    s.burn_in = m.at("burn_in").get<std::size_t>();
    s.thin = m.at("thin").get<std::size_t>();
    s.adapt_window = m.at("adapt_window").get<std::size_t>();
    s.target_accept = m.at("target_accept").get<double>();
    s.target_accept_block = m.at("target_accept_block").get<double>();
    base.mvn_points = m.at("mvn_points").get<std::size_t>();
    base.pinv_tol = m.at("pinv_tol").get<double>();
    const auto method = m.at("pvalue_method").get<std::string>();
    base.pvalue_method = method == "default" ? std::nullopt : pvalue_method_from_string(method);
    if (method != "default" && !base.pvalue_method) throw PreconditionError("manifest names an unknown p-value method");
    base.replicates = m.at("replicates").get<std::size_t>();
    base.shift_sd = m.at("shift_sd").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  return base;
}

std::vector<std::string> write_outputs(const RunConfig& cfg, const RunResult& result) {
  ArtifactWriter w(cfg.out_dir);
  const bool nested = result.fits.size() > 1;
  for (const auto& f : result.fits) write_fit(w, cfg, f, nested ? fs::path(f.name) : fs::path());
  if (!result.leave_out.empty()) write_leave_out(w, cfg, result.leave_out);
  if (result.null_report) write_null(w, cfg, *result.null_report);
  auto files = w.files();
  w.write("manifest.json", manifest_json(cfg, files).dump(2) + "\n");
  return w.files();
}

}  // namespace nodesplit
