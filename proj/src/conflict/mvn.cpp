#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numeric>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"
#include "nodesplit/rng.hpp"

namespace nodesplit {

namespace {

// Wichura's AS241 (PPND16), accurate to about 1e-16.
double fast_quantile(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  if (r <= 0) return q < 0 ? -38.5 : 38.5;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

double phi_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

std::vector<std::vector<Eigen::Index>> components(const Eigen::MatrixXd& R) {
  const Eigen::Index m = R.rows();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Eigen::Index i) {
    while (parent[static_cast<std::size_t>(i)] != i) i = parent[static_cast<std::size_t>(i)];
    return i;
  };
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      if (std::abs(R(i, j)) > 1e-14) parent[static_cast<std::size_t>(find(j))] = find(i);
    }
  }
  std::vector<std::vector<Eigen::Index>> out;
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(m), -1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto r = find(i);
    if (slot[static_cast<std::size_t>(r)] < 0) {
      slot[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(out.size());
      out.emplace_back();
    }
    out[static_cast<std::size_t>(slot[static_cast<std::size_t>(r)])].push_back(i);
  }
  return out;
}

// Clips a slightly indefinite correlation matrix back to the PSD cone.
Eigen::MatrixXd repair(const Eigen::MatrixXd& R, bool& repaired) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  const double max_ev = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() >= -1e-10 * max_ev) return R;
  repaired = true;
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd fixed = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  Eigen::VectorXd d = fixed.diagonal();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    if (!(d[k] > 1e-12)) throw NotPsd("correlation matrix cannot be repaired");
  }
  Eigen::VectorXd s = d.cwiseSqrt().cwiseInverse();
  fixed = s.asDiagonal() * fixed * s.asDiagonal();
  fixed.diagonal().setOnes();
  return fixed;
}

struct Sov {
  Eigen::MatrixXd L;
  std::vector<bool> singular;
  double z = 0.0;
};

// Pivoted Cholesky with Genz-Bretz variable prioritisation: at each step the
// remaining variable with the smallest conditional interval probability goes
// next. Pivots below tolerance mark variables fixed by earlier ones.
Sov prepare(Eigen::MatrixXd C, double z) {
  const Eigen::Index m = C.rows();
  Sov s;
  s.L = Eigen::MatrixXd::Zero(m, m);
  s.singular.assign(static_cast<std::size_t>(m), false);
  s.z = z;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  constexpr double kEps = 1e-10;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::Index best = i;
    double best_p = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = i; k < m; ++k) {
      double sk = 0.0, vk = C(k, k);
      for (Eigen::Index j = 0; j < i; ++j) {
        sk += s.L(k, j) * y[j];
        vk -= s.L(k, j) * s.L(k, j);
      }
      double p;
      if (vk > kEps) {
        const double sd = std::sqrt(vk);
        p = normal_cdf((z - sk) / sd) - normal_cdf((-z - sk) / sd);
      } else {
        p = (std::abs(sk) <= z) ? 1.0 : 0.0;
      }
      if (p < best_p) {
        best_p = p;
        best = k;
      }
    }
    if (best != i) {
      C.row(i).swap(C.row(best));
      C.col(i).swap(C.col(best));
      s.L.row(i).swap(s.L.row(best));
    }
    double si = 0.0, vi = C(i, i);
    for (Eigen::Index j = 0; j < i; ++j) {
      si += s.L(i, j) * y[j];
      vi -= s.L(i, j) * s.L(i, j);
    }
    if (vi > kEps) {
      const double lii = std::sqrt(vi);
      s.L(i, i) = lii;
      for (Eigen::Index k = i + 1; k < m; ++k) {
        double acc = C(k, i);
        for (Eigen::Index j = 0; j < i; ++j) acc -= s.L(k, j) * s.L(i, j);
        s.L(k, i) = acc / lii;
      }
      const double lo = (-z - si) / lii, hi = (z - si) / lii;
      const double mass = normal_cdf(hi) - normal_cdf(lo);
      y[i] = mass > 1e-300 ? (phi_pdf(lo) - phi_pdf(hi)) / mass : 0.0;
    } else {
      s.singular[static_cast<std::size_t>(i)] = true;
      y[i] = 0.0;
    }
  }
  return s;
}

double integrand(const Sov& s, const double* w, double* y) {
  const Eigen::Index m = s.L.rows();
  double f = 1.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double si = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) si += s.L(i, j) * y[j];
    if (s.singular[static_cast<std::size_t>(i)]) {
      if (std::abs(si) > s.z + 1e-12) return 0.0;
      y[i] = 0.0;
      continue;
    }
    const double lii = s.L(i, i);
    const double d = normal_cdf((-s.z - si) / lii);
    const double e = normal_cdf((s.z - si) / lii);
    f *= e - d;
    if (f <= 0.0) return 0.0;
    if (i + 1 < m) {
      double u = d + w[i] * (e - d);
      u = std::clamp(u, 1e-300, 1.0 - 1e-16);
      y[i] = fast_quantile(u);
    }
  }
  return f;
}

std::vector<double> richtmyer(std::size_t dims) {
  std::vector<double> q;
  for (std::uint64_t p = 2; q.size() < dims; ++p) {
    bool prime = true;
    for (std::uint64_t d = 2; d * d <= p; ++d) {
      if (p % d == 0) {
        prime = false;
        break;
      }
    }
    if (prime) {
      const double r = std::sqrt(static_cast<double>(p));
      q.push_back(r - std::floor(r));
    }
  }
  return q;
}

struct Estimate {
  double value = 1.0;
  double variance = 0.0;
};

Estimate integrate_component(const Eigen::MatrixXd& R, double z, const MvnOptions& opt) {
  const Eigen::Index m = R.rows();
  if (m == 1) return {2.0 * normal_cdf(z) - 1.0, 0.0};
  const Sov sov = prepare(R, z);
  const auto dims = static_cast<std::size_t>(m - 1);
  const auto q = richtmyer(dims);
  Rng rng(derive_seed(opt.seed, {static_cast<std::uint64_t>(m), purpose::kLattice}));
  std::uniform_real_distribution<double> unif;
  std::vector<double> w(dims), shift(dims), y(static_cast<std::size_t>(m));
  const std::size_t shifts = std::max<std::size_t>(opt.shifts, 2);
  std::vector<double> means;
  for (std::size_t r = 0; r < shifts; ++r) {
    for (auto& s : shift) s = unif(rng);
    double sum = 0.0;
    for (std::size_t j = 1; j <= opt.n_points; ++j) {
      for (std::size_t k = 0; k < dims; ++k) {
        double x = static_cast<double>(j) * q[k] + shift[k];
        x -= std::floor(x);
        w[k] = 1.0 - std::abs(2.0 * x - 1.0);
      }
      sum += integrand(sov, w.data(), y.data());
    }
    means.push_back(sum / static_cast<double>(opt.n_points));
  }
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(shifts);
  double ss = 0.0;
  for (double v : means) ss += (v - mean) * (v - mean);
  return {mean, ss / static_cast<double>(shifts - 1) / static_cast<double>(shifts)};
}

}  // namespace

MvnResult mvn_rectangle(const Eigen::MatrixXd& R, double z, const MvnOptions& opt) {
  if (R.rows() != R.cols()) throw DimensionMismatch("correlation matrix must be square");
  if (!R.allFinite()) throw NotPsd("correlation matrix has non-finite entries");
  if (std::isnan(z) || z < 0.0) throw PreconditionError("integration limit must be non-negative");
  MvnResult out;
  if (R.rows() == 0) {
    out.probability = 1.0;
    return out;
  }
  if (z == 0.0) return out;
  if (std::isinf(z)) {
    out.probability = 1.0;
    return out;
  }
  Eigen::MatrixXd sym = 0.5 * (R + R.transpose());
  double prob = 1.0, var = 0.0;
  for (const auto& comp : components(sym)) {
    const auto k = static_cast<Eigen::Index>(comp.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        sub(a, b) = sym(comp[static_cast<std::size_t>(a)], comp[static_cast<std::size_t>(b)]);
      }
    }
    if (k > 1) sub = repair(sub, out.repaired);
    Estimate e = integrate_component(sub, z, opt);
    // Var(XY) for independent estimates.
    var = var * e.value * e.value + e.variance * prob * prob + var * e.variance;
    prob *= e.value;
  }
  out.probability = std::clamp(prob, 0.0, 1.0);
  out.error = 3.0 * std::sqrt(var);
  return out;
}

}  // namespace nodesplit
