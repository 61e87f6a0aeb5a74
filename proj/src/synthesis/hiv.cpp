#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nodesplit/errors.hpp"
#include "nodesplit/synthesis.hpp"

namespace nodesplit {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

double parse_value(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ParseError("line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

long as_count(double v, std::size_t line) {
  if (v != std::floor(v)) throw ParseError("line " + std::to_string(line) + ": count is not an integer");
  return static_cast<long>(v);
}

Operand ref(const char* id) { return Operand::node(id); }
Operand num(double v) { return Operand::value(v); }

}  // namespace

void check_hiv_data(const HivData& d) {
  if (!(d.N > 0)) throw PreconditionError("population size must be positive");
  const std::pair<long, long> bin[] = {{d.y1, d.n1}, {d.y2, d.n2}, {d.y3, d.n3}};
  for (const auto& [y, n] : bin) {
    if (y < 0 || n <= 0 || y > n) throw PreconditionError("binomial datum needs 0 <= y <= n, n > 0");
  }
  if (d.y4 < 0 || d.y5 < 0) throw PreconditionError("Poisson counts must be nonnegative");
}

HivData read_hiv_data(std::istream& in, HivData d) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(trim(field));
    while (f.size() < 4) f.emplace_back();
    if (!header) {
      if (f[0] != "name" || f[1] != "y" || f[2] != "n" || f[3] != "likelihood") {
        throw ParseError("expected header name,y,n,likelihood");
      }
      header = true;
      continue;
    }
    const std::string& name = f[0];
    const std::string& lik = f[3];
    const double y = parse_value(f[1], lineno);
    auto need = [&](const char* want) {
      if (lik != want) {
        throw ParseError("line " + std::to_string(lineno) + ": " + name + " must use likelihood '" +
                         want + "'");
      }
    };
    if (name == "N") {
      need("fixed");
      d.N = y;
    } else if (name == "y1" || name == "y2" || name == "y3") {
      need("binomial");
      if (f[2].empty()) throw ParseError("line " + std::to_string(lineno) + ": binomial row needs n");
      const long yy = as_count(y, lineno);
      const long nn = as_count(parse_value(f[2], lineno), lineno);
      if (name == "y1") {
        d.y1 = yy;
        d.n1 = nn;
      } else if (name == "y2") {
        d.y2 = yy;
        d.n2 = nn;
      } else {
        d.y3 = yy;
        d.n3 = nn;
      }
    } else if (name == "y4" || name == "y5") {
      need("poisson");
      (name == "y4" ? d.y4 : d.y5) = as_count(y, lineno);
    } else {
      throw ParseError("line " + std::to_string(lineno) + ": unknown datum '" + name + "'");
    }
  }
  if (!header) throw ParseError("HIV data table is empty");
  check_hiv_data(d);
  return d;
}

HivData load_hiv_data(const std::string& path, HivData base) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_hiv_data(in, base);
}

ModelGraph build_hiv_graph(const HivData& d, const HivPriors& priors) {
  check_hiv_data(d);
  ModelGraph g;
  for (const char* p : {"rho", "pi", "kappa"}) g.add_stochastic(p, Distribution::uniform(num(0), num(1)));
  g.add_deterministic("pi_kappa", Expr::node("pi") * Expr::node("kappa"), Support::UnitInterval);
  g.add_deterministic("pi_1mkappa", Expr::node("pi") * (Expr::constant(1) - Expr::node("kappa")),
                      Support::UnitInterval);
  g.add_deterministic("D", Expr::constant(d.N) * Expr::node("rho") * Expr::node("pi_kappa"),
                      Support::Positive);
  const auto bound = Distribution::lognormal(num(priors.bound_log_mean), num(priors.bound_log_sd));
  g.add_stochastic("D_L", bound);
  g.add_stochastic("D_U", bound);
  g.add_deterministic("c", Expr::indicator(Expr::node("D_L"), Expr::node("D"), Expr::node("D_U")),
                      Support::UnitInterval);
  g.add_observed("z", Distribution::bernoulli(ref("c")), 1);
  g.add_observed("y1", Distribution::binomial(num(static_cast<double>(d.n1)), ref("rho")),
                 static_cast<double>(d.y1));
  g.add_observed("y2", Distribution::binomial(num(static_cast<double>(d.n2)), ref("pi_kappa")),
                 static_cast<double>(d.y2));
  g.add_observed("y3", Distribution::binomial(num(static_cast<double>(d.n3)), ref("pi_1mkappa")),
                 static_cast<double>(d.y3));
  g.add_observed("y4", Distribution::poisson(ref("D_L")), static_cast<double>(d.y4));
  g.add_observed("y5", Distribution::poisson(ref("D_U")), static_cast<double>(d.y5));
  g.add_block({"rho", "pi", "kappa"});
  require_valid(g);
  return g;
}

SplitSpec saturated_split_spec() {
  SplitSpec s;
  s.partitions = {{"prior", {"z"}}, {"y1", {"y1"}}, {"y2", {"y2"}}, {"y3", {"y3"}}, {"y45", {"y4", "y5"}}};
  auto sep = [&](const char* node, const char* part, std::optional<Distribution> prior = std::nullopt) {
    SeparatorDecl d;
    d.node = node;
    d.copies = {{"prior", false, std::nullopt}, {part, true, std::move(prior)}};
    s.separators.push_back(std::move(d));
  };
  sep("rho", "y1");
  sep("pi_kappa", "y2");
  sep("pi_1mkappa", "y3");
  sep("D_L", "y45");
  sep("D_U", "y45");
  sep("D", "y45", Distribution::uniform(ref("D_L"), ref("D_U")));
  return s;
}

SplitModel saturated_split(const ModelGraph& g) { return split(g, saturated_split_spec()); }

std::vector<LeaveOutModel> leave_n_out_splits(const ModelGraph& g, int n) {
  if (n != 1 && n != 2) throw PreconditionError("leave-n-out needs n = 1 or n = 2");
  const std::map<std::string, NodeId> direct{{"y1", "rho"},
                                             {"y2", "pi_kappa"},
                                             {"y3", "pi_1mkappa"},
                                             {"y4", "D_L"},
                                             {"y5", "D_U"}};
  std::vector<std::vector<std::string>> sets;
  if (n == 1) {
    sets = {{"y1"}, {"y2"}, {"y3"}, {"y4"}, {"y5"}};
  } else {
    sets = {{"y1", "y2"}, {"y1", "y3"}, {"y2", "y3"}, {"y1", "y4"}, {"y1", "y5"},
            {"y2", "y4"}, {"y2", "y5"}, {"y3", "y4"}, {"y3", "y5"}, {"y4", "y5"}};
  }
  std::vector<LeaveOutModel> out;
  for (std::size_t m = 0; m < sets.size(); ++m) {
    LeaveOutModel lm;
    lm.spec.name = "L" + std::to_string(n) + "-" + std::string(1, static_cast<char>('A' + m));
    lm.spec.left_out = sets[m];
    SplitSpec& s = lm.split_spec;
    PartitionDecl left{"1", sets[m]};
    PartitionDecl rest{"2", {"z"}};
    for (const char* y : {"y1", "y2", "y3", "y4", "y5"}) {
      if (std::find(sets[m].begin(), sets[m].end(), y) == sets[m].end()) rest.data.push_back(y);
    }
    s.partitions = {left, rest};
    auto has = [&](const char* y) {
      return std::find(sets[m].begin(), sets[m].end(), y) != sets[m].end();
    };
    // y2 and y3 together identify pi and kappa, so those become the founders
    // of partition 1 and the two prevalences stay derived there.
    const bool both_prevalences = has("y2") && has("y3");
    const bool both_bounds = has("y4") && has("y5");
    auto add = [&](const NodeId& node, bool founder, std::optional<Distribution> prior = std::nullopt) {
      SeparatorDecl d;
      d.node = node;
      d.copies = {{"1", founder, std::move(prior)}, {"2", false, std::nullopt}};
      s.separators.push_back(std::move(d));
      lm.spec.split_nodes.push_back(node);
    };
    for (const auto& y : sets[m]) {
      const NodeId& node = direct.at(y);
      add(node, !(both_prevalences && (y == "y2" || y == "y3")));
    }
    if (both_prevalences) {
      add("pi", true);
      add("kappa", true);
    }
    if (both_bounds) add("D", true, Distribution::uniform(ref("D_L"), ref("D_U")));
    lm.model = split(g, s);
    out.push_back(std::move(lm));
  }
  return out;
}

std::vector<std::vector<double>> adjust_across_models(const std::vector<ConflictReport>& reports,
                                                      AdjustScope scope, const MvnOptions& mvn) {
  std::vector<std::vector<double>> out(reports.size());
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    const auto m = static_cast<Eigen::Index>(rep.contrasts.size());
    if (rep.R.rows() != m || rep.R.cols() != m) {
      throw DimensionMismatch("report " + std::to_string(r) + " has a correlation matrix of the wrong size");
    }
  }
  if (scope == AdjustScope::Within) {
    for (std::size_t r = 0; r < reports.size(); ++r) {
      for (const auto& c : reports[r].contrasts) out[r].push_back(c.p_adjusted);
    }
    return out;
  }
  for (std::size_t r = 0; r < reports.size(); ++r) {
    for (const auto& c : reports[r].contrasts) {
      const double z = std::abs(c.z);
      double inside = 1.0;
      for (const auto& other : reports) {
        if (other.contrasts.empty()) continue;
        inside *= mvn_rectangle(other.R, z, mvn).probability;
      }
      out[r].push_back(std::clamp(1.0 - inside, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace nodesplit
