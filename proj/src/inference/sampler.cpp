#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "nodesplit/compiled.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/inference.hpp"
#include "nodesplit/rng.hpp"

namespace nodesplit {

void SamplerConfig::validate() const {
  if (chains < 1) throw PreconditionError("sampler needs at least one chain");
  if (thin < 1) throw PreconditionError("thin must be at least 1");
  if (burn_in >= iterations) throw PreconditionError("burn-in must be shorter than the run");
  if (kept_per_chain() < 1) throw PreconditionError("no draws would be kept");
  if (adapt_window < 1) throw PreconditionError("adapt_window must be positive");
  if (!(target_accept > 0 && target_accept < 1) ||
      !(target_accept_block > 0 && target_accept_block < 1)) {
    throw PreconditionError("acceptance targets must lie in (0, 1)");
  }
}

PosteriorSamples::PosteriorSamples(std::vector<NodeId> columns, std::size_t chains,
                                   std::size_t draws)
    : columns_(std::move(columns)), chains_(chains), draws_(draws) {
  for (std::size_t k = 0; k < columns_.size(); ++k) index_[columns_[k]] = k;
  data_.assign(chains_ * draws_ * columns_.size(), 0.0);
  deviance_.assign(chains_ * draws_, 0.0);
}

std::size_t PosteriorSamples::column_index(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw MissingValue("no samples for node '" + id + "'");
  return it->second;
}

std::vector<double> PosteriorSamples::column(const NodeId& id) const {
  const std::size_t k = column_index(id);
  std::vector<double> out;
  out.reserve(total_draws());
  for (std::size_t c = 0; c < chains_; ++c) {
    for (std::size_t d = 0; d < draws_; ++d) out.push_back(value(c, d, k));
  }
  return out;
}

double PosteriorSamples::mean(const NodeId& id) const {
  auto v = column(id);
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double PosteriorSamples::sd(const NodeId& id) const {
  auto v = column(id);
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Scale { Identity, Logit, Log };

Scale scale_for(Support s) {
  switch (s) {
    case Support::UnitInterval: return Scale::Logit;
    case Support::Positive: return Scale::Log;
    default: return Scale::Identity;
  }
}

double to_unconstrained(Scale s, double x) {
  switch (s) {
    case Scale::Logit: return dist::logit(x);
    case Scale::Log: return std::log(x);
    default: return x;
  }
}

double from_unconstrained(Scale s, double u) {
  switch (s) {
    case Scale::Logit: return dist::inv_logit(u);
    case Scale::Log: return std::exp(u);
    default: return u;
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log |dx/du|
double log_jacobian(Scale s, double u) {
  switch (s) {
    case Scale::Logit: return -softplus(u) - softplus(-u);
    case Scale::Log: return u;
    default: return 0.0;
  }
}

bool inside(Scale s, double x) {
  if (!std::isfinite(x)) return false;
  switch (s) {
    case Scale::Logit: return x > 0.0 && x < 1.0;
    case Scale::Log: return x > 0.0;
    default: return true;
  }
}

struct Unit {
  std::vector<std::size_t> members;
  std::vector<Scale> scales;
  std::vector<std::size_t> det;
  std::vector<std::size_t> terms;
  bool block = false;
  NodeId name;
  std::uint64_t key = 0;
};

std::vector<Unit> build_units(const CompiledGraph& cg) {
  const ModelGraph& g = cg.graph();
  std::vector<std::size_t> pos(cg.size());
  for (std::size_t k = 0; k < cg.order().size(); ++k) pos[cg.order()[k]] = k;
  auto by_pos = [&](std::size_t a, std::size_t b) { return pos[a] < pos[b]; };

  std::vector<std::vector<std::size_t>> groups;
  std::vector<bool> grouped(cg.size(), false);
  for (const auto& block : g.blocks()) {
    std::vector<std::size_t> members;
    for (const auto& id : block) {
      auto i = g.index_of(id);
      members.push_back(i);
      grouped[i] = true;
    }
    std::sort(members.begin(), members.end(), by_pos);
    groups.push_back(std::move(members));
  }
  for (auto i : cg.order()) {
    const auto role = cg.role(i);
    if ((role == NodeRole::StochasticFounder || role == NodeRole::StochasticInternal) &&
        !grouped[i]) {
      groups.push_back({i});
    }
  }
  std::sort(groups.begin(), groups.end(),
            [&](const auto& a, const auto& b) { return pos[a.front()] < pos[b.front()]; });

  std::vector<Unit> units;
  for (auto& members : groups) {
    Unit u;
    u.members = members;
    u.block = members.size() > 1;
    u.name = g.nodes()[members.front()].id;
    u.key = fnv1a(u.name);
    for (auto m : members) u.scales.push_back(scale_for(cg.support(m)));
    std::set<std::size_t> det;
    std::vector<std::size_t> stack(members.begin(), members.end());
    std::set<std::size_t> terms(members.begin(), members.end());
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      for (auto c : cg.children(i)) {
        if (cg.role(c) == NodeRole::Deterministic) {
          if (det.insert(c).second) stack.push_back(c);
        } else {
          terms.insert(c);
        }
      }
    }
    u.det.assign(det.begin(), det.end());
    std::sort(u.det.begin(), u.det.end(), by_pos);
    u.terms.assign(terms.begin(), terms.end());
    std::sort(u.terms.begin(), u.terms.end(), by_pos);
    units.push_back(std::move(u));
  }
  return units;
}

struct UnitState {
  Eigen::MatrixXd chol;
  double log_lambda = 0.0;
  bool cov_ready = false;
  std::size_t n = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;
  std::size_t window_tries = 0;
  std::size_t window_accepts = 0;
  std::size_t batch = 0;
  std::size_t post_tries = 0;
  std::size_t post_accepts = 0;
  Rng rng;
};

// With `narrow` set, normal and lognormal spreads are capped at 1 so that
// very diffuse priors still give starting points the likelihood can handle.
double draw_prior(const CompiledGraph& cg, std::size_t i, const std::vector<double>& v, Rng& rng,
                  bool narrow) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const DistKind kind = cg.dist_kind(i);
  const double a = cg.param_size(i) > 0 ? cg.param(i, 0, v) : 0.0;
  double b = cg.param_size(i) > 1 ? cg.param(i, 1, v) : 0.0;
  if (narrow && (kind == DistKind::Normal || kind == DistKind::LogNormal)) b = std::min(b, 1.0);
  auto beta = [&](double p, double q) {
    std::gamma_distribution<double> ga(p, 1.0), gb(q, 1.0);
    double x = ga(rng), y = gb(rng);
    return x / (x + y);
  };
  switch (kind) {
    case DistKind::Normal: return a + b * normal(rng);
    case DistKind::Uniform: return a + (b - a) * unif(rng);
    case DistKind::Beta: return beta(a, b);
    case DistKind::LogNormal: return std::exp(a + b * normal(rng));
    case DistKind::JeffreysProportion: return beta(0.5, 0.5);
    default: return from_unconstrained(scale_for(cg.support(i)), normal(rng));
  }
}

class ChainRunner {
 public:
  ChainRunner(const CompiledGraph& cg, const std::vector<Unit>& units, const SamplerConfig& cfg,
              std::size_t chain, const std::vector<std::size_t>& stored, PosteriorSamples& out)
      : cg_(cg), units_(units), cfg_(cfg), chain_(chain), stored_(stored), out_(out) {}

  void run() {
    initialise();
    states_.resize(units_.size());
    for (std::size_t k = 0; k < units_.size(); ++k) {
      const std::size_t d = units_[k].members.size();
      auto& st = states_[k];
      st.chol = Eigen::MatrixXd::Identity(d, d) * (d > 1 ? 0.1 : 0.5);
      st.mean = Eigen::VectorXd::Zero(d);
      st.m2 = Eigen::MatrixXd::Zero(d, d);
      st.rng.seed(derive_seed(cfg_.seed, {chain_, units_[k].key, purpose::kProposal}));
    }
    const std::size_t reset_at = cfg_.burn_in / 4;
    std::size_t kept = 0;
    for (std::size_t it = 0; it < cfg_.iterations; ++it) {
      const bool adapting = it < cfg_.burn_in;
      for (std::size_t k = 0; k < units_.size(); ++k) {
        bool acc = step(units_[k], states_[k]);
        auto& st = states_[k];
        if (adapting) {
          ++st.window_tries;
          if (acc) ++st.window_accepts;
          if (it >= reset_at) accumulate(units_[k], st);
          if ((it + 1) % cfg_.adapt_window == 0) adapt(units_[k], st);
        } else {
          ++st.post_tries;
          if (acc) ++st.post_accepts;
        }
      }
      if (!adapting && (it - cfg_.burn_in + 1) % cfg_.thin == 0) {
        for (std::size_t c = 0; c < stored_.size(); ++c) out_.value(chain_, kept, c) = v_[stored_[c]];
        double dev = 0.0;
        for (auto i : observed_) dev += -2.0 * (lp_[i] - cg_.saturated_log_density(i, v_));
        out_.deviance()[chain_ * out_.draws_per_chain() + kept] = dev;
        ++kept;
      }
    }
  }

  double acceptance(std::size_t k) const {
    const auto& st = states_[k];
    return st.post_tries ? static_cast<double>(st.post_accepts) / static_cast<double>(st.post_tries)
                         : 0.0;
  }

 private:
  void initialise() {
    Rng rng(derive_seed(cfg_.seed, {chain_, 0, purpose::kInit}));
    lp_.assign(cg_.size(), 0.0);
    for (auto i : cg_.order()) {
      if (cg_.role(i) == NodeRole::Observed) observed_.push_back(i);
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
      v_ = cg_.blank_values();
      bool ok = true;
      for (auto i : cg_.order()) {
        const auto role = cg_.role(i);
        if (role == NodeRole::Deterministic) {
          v_[i] = cg_.eval_deterministic(i, v_);
        } else if (role != NodeRole::Observed) {
          v_[i] = draw_prior(cg_, i, v_, rng, attempt >= 100);
          if (!inside(scale_for(cg_.support(i)), v_[i])) ok = false;
        }
      }
      if (!ok) continue;
      double total = 0.0;
      for (auto i : cg_.order()) {
        if (cg_.role(i) == NodeRole::Deterministic) continue;
        lp_[i] = cg_.log_density(i, v_);
        total += lp_[i];
      }
      if (std::isfinite(total)) return;
    }
    throw InitialisationFailure("no valid initial point found in 1000 attempts (chain " +
                                std::to_string(chain_) + ")");
  }

  bool step(const Unit& unit, UnitState& st) {
    const std::size_t d = unit.members.size();
    thread_local std::vector<double> u_old, z, saved, new_lp;
    u_old.resize(d);
    z.resize(d);
    double jac_old = 0.0, jac_new = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      u_old[k] = to_unconstrained(unit.scales[k], v_[unit.members[k]]);
      jac_old += log_jacobian(unit.scales[k], u_old[k]);
      z[k] = normal_(st.rng);
    }
    const double lambda = std::exp(st.log_lambda);
    saved.clear();
    for (auto m : unit.members) saved.push_back(v_[m]);
    for (auto i : unit.det) saved.push_back(v_[i]);

    bool valid = true;
    for (std::size_t k = 0; k < d; ++k) {
      double step = 0.0;
      for (std::size_t l = 0; l <= k; ++l) step += st.chol(k, l) * z[l];
      const double u_new = u_old[k] + lambda * step;
      const double x = from_unconstrained(unit.scales[k], u_new);
      if (!inside(unit.scales[k], x)) valid = false;
      jac_new += log_jacobian(unit.scales[k], u_new);
      v_[unit.members[k]] = x;
    }
    bool accept = false;
    if (valid) {
      for (auto i : unit.det) v_[i] = cg_.eval_deterministic(i, v_);
      double delta = jac_new - jac_old;
      new_lp.resize(unit.terms.size());
      for (std::size_t t = 0; t < unit.terms.size(); ++t) {
        new_lp[t] = cg_.log_density(unit.terms[t], v_);
        delta += new_lp[t] - lp_[unit.terms[t]];
        if (new_lp[t] == kNegInf) {
          delta = kNegInf;
          break;
        }
      }
      if (delta > 0.0 || std::log(uniform_(st.rng)) < delta) accept = !std::isnan(delta);
    }
    if (accept) {
      for (std::size_t t = 0; t < unit.terms.size(); ++t) lp_[unit.terms[t]] = new_lp[t];
    } else {
      std::size_t s = 0;
      for (auto m : unit.members) v_[m] = saved[s++];
      for (auto i : unit.det) v_[i] = saved[s++];
    }
    return accept;
  }

  void accumulate(const Unit& unit, UnitState& st) {
    const std::size_t d = unit.members.size();
    Eigen::VectorXd u(d);
    for (std::size_t k = 0; k < d; ++k) u[k] = to_unconstrained(unit.scales[k], v_[unit.members[k]]);
    ++st.n;
    Eigen::VectorXd delta = u - st.mean;
    st.mean += delta / static_cast<double>(st.n);
    st.m2 += delta * (u - st.mean).transpose();
  }

  void adapt(const Unit& unit, UnitState& st) {
    const std::size_t d = unit.members.size();
    ++st.batch;
    const double rate =
        static_cast<double>(st.window_accepts) / static_cast<double>(st.window_tries);
    const double target = unit.block ? cfg_.target_accept_block : cfg_.target_accept;
    st.log_lambda += (rate - target) / std::sqrt(static_cast<double>(st.batch));
    st.log_lambda = std::clamp(st.log_lambda, -30.0, 10.0);
    st.window_accepts = 0;
    st.window_tries = 0;
    if (st.n >= std::max<std::size_t>(2 * cfg_.adapt_window, 10 * d)) {
      Eigen::MatrixXd cov = st.m2 / static_cast<double>(st.n - 1);
      const double ridge = 1e-10 * cov.trace() / static_cast<double>(d) + 1e-300;
      cov.diagonal().array() += ridge;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success && cov.trace() > 0.0) {
        st.chol = llt.matrixL();
        st.chol *= 2.38 / std::sqrt(static_cast<double>(d));
        if (!st.cov_ready) {
          st.cov_ready = true;
          st.log_lambda = 0.0;
        }
      }
    }
  }

  const CompiledGraph& cg_;
  const std::vector<Unit>& units_;
  const SamplerConfig& cfg_;
  std::size_t chain_;
  const std::vector<std::size_t>& stored_;
  PosteriorSamples& out_;
  std::vector<double> v_;
  std::vector<double> lp_;
  std::vector<std::size_t> observed_;
  std::vector<UnitState> states_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

}  // namespace

PosteriorSamples sample(const ModelGraph& g, const SamplerConfig& cfg) {
  cfg.validate();
  CompiledGraph cg(g);
  const auto units = build_units(cg);

  std::vector<std::size_t> stored;
  std::vector<NodeId> names;
  for (auto i : cg.order()) {
    if (cg.role(i) != NodeRole::Observed) {
      stored.push_back(i);
      names.push_back(g.nodes()[i].id);
    }
  }
  PosteriorSamples out(names, cfg.chains, cfg.kept_per_chain());

  std::vector<ChainRunner> runners;
  runners.reserve(cfg.chains);
  for (std::size_t c = 0; c < cfg.chains; ++c) runners.emplace_back(cg, units, cfg, c, stored, out);

  std::size_t threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);
  auto run_one = [&](std::size_t c) {
    try {
      runners[c].run();
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (threads == 1) {
    for (std::size_t c = 0; c < cfg.chains; ++c) run_one(c);
  } else {
    for (std::size_t start = 0; start < cfg.chains; start += threads) {
      std::vector<std::thread> pool;
      for (std::size_t c = start; c < std::min(cfg.chains, start + threads); ++c) {
        pool.emplace_back(run_one, c);
      }
      for (auto& t : pool) t.join();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (std::size_t k = 0; k < units.size(); ++k) {
    double acc = 0.0;
    for (const auto& r : runners) acc += r.acceptance(k);
    out.acceptance[units[k].name] = acc / static_cast<double>(cfg.chains);
  }
  for (std::size_t c = 0; c < stored.size(); ++c) {
    const auto role = cg.role(stored[c]);
    if (role == NodeRole::Deterministic) continue;
    auto col = out.column(names[c]);
    double r = split_rhat(col, cfg.chains);
    out.rhat[names[c]] = r;
    if (r > 1.05) {
      out.warnings.push_back("potential scale reduction " + std::to_string(r) + " for '" +
                             names[c] + "' exceeds 1.05");
    }
  }
  return out;
}

}  // namespace nodesplit
