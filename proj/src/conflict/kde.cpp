#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nodesplit/conflict.hpp"
#include "nodesplit/errors.hpp"

namespace nodesplit {

std::string_view to_string(PValueMethod m) {
  switch (m) {
    case PValueMethod::Kde: return "kde";
    case PValueMethod::Normal: return "normal";
    case PValueMethod::Tail: return "tail";
  }
  return "kde";
}

std::optional<PValueMethod> pvalue_method_from_string(std::string_view s) {
  if (s == "kde") return PValueMethod::Kde;
  if (s == "normal") return PValueMethod::Normal;
  if (s == "tail") return PValueMethod::Tail;
  return std::nullopt;
}

namespace {

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

Moments moments(std::span<const double> x) {
  Moments m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  return m;
}

double quantile_sorted(const std::vector<double>& s, double p) {
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

// Gaussian KDE evaluated on a regular grid through linear binning.
struct BinnedKde {
  double lo = 0.0;
  double step = 0.0;
  std::vector<double> density;

  double at(double x) const {
    const double pos = (x - lo) / step;
    if (pos < 0.0 || pos > static_cast<double>(density.size() - 1)) return 0.0;
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= density.size()) return density.back();
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * density[i] + f * density[i + 1];
  }
};

BinnedKde binned_kde(std::span<const double> x, double h, double extra_point) {
  auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  double lo = std::min(*mn, extra_point) - 4.0 * h;
  double hi = std::max(*mx, extra_point) + 4.0 * h;
  const double range = hi - lo;
  const auto grid = static_cast<std::size_t>(
      std::clamp(std::ceil(range / (h / 8.0)), 4096.0, 262144.0));
  BinnedKde k;
  k.lo = lo;
  k.step = range / static_cast<double>(grid - 1);
  std::vector<double> counts(grid, 0.0);
  for (double v : x) {
    const double pos = (v - lo) / k.step;
    const auto i = std::min(static_cast<std::size_t>(pos), grid - 2);
    const double f = pos - static_cast<double>(i);
    counts[i] += 1.0 - f;
    counts[i + 1] += f;
  }
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(5.0 * h / k.step));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::ptrdiff_t d = -half; d <= half; ++d) {
    const double u = static_cast<double>(d) * k.step / h;
    kernel[static_cast<std::size_t>(d + half)] = norm * std::exp(-0.5 * u * u);
  }
  k.density.assign(grid, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(grid);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0.0) continue;
    const double c = counts[static_cast<std::size_t>(i)];
    const std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t b = std::min<std::ptrdiff_t>(n - 1, i + half);
    for (std::ptrdiff_t j = a; j <= b; ++j) {
      k.density[static_cast<std::size_t>(j)] += c * kernel[static_cast<std::size_t>(j - i + half)];
    }
  }
  return k;
}

}  // namespace

double silverman_bandwidth(std::span<const double> draws) {
  if (draws.size() < 2) throw DegenerateDistribution("bandwidth needs at least two draws");
  std::vector<double> s(draws.begin(), draws.end());
  std::sort(s.begin(), s.end());
  const double sd = moments(draws).sd;
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw DegenerateDistribution("draws have zero spread");
  return 0.9 * spread * std::pow(static_cast<double>(draws.size()), -0.2);
}

double single_conflict_pvalue(std::span<const double> draws, PValueMethod method) {
  if (draws.size() < 1000) throw PreconditionError("conflict p-value needs at least 1000 draws");
  const Moments m = moments(draws);
  if (!(m.sd > 0.0)) throw DegenerateDistribution("contrast draws have zero variance");
  if (method == PValueMethod::Normal) return std::erfc(std::abs(m.mean) / m.sd / std::sqrt(2.0));
  if (method == PValueMethod::Tail) {
    std::size_t neg = 0, pos = 0;
    for (double v : draws) {
      neg += v <= 0.0;
      pos += v >= 0.0;
    }
    return std::min(1.0, 2.0 * static_cast<double>(std::min(neg, pos)) / static_cast<double>(draws.size()));
  }
  const double h = silverman_bandwidth(draws);
  const BinnedKde k = binned_kde(draws, h, 0.0);
  const double at_zero = k.at(0.0);
  std::size_t below = 0;
  for (double v : draws) {
    if (k.at(v) < at_zero) ++below;
  }
  return static_cast<double>(below) / static_cast<double>(draws.size());
}

DensityCurve kde_curve(std::span<const double> draws, std::size_t points) {
  DensityCurve c;
  c.bandwidth = silverman_bandwidth(draws);
  const BinnedKde k = binned_kde(draws, c.bandwidth, draws[0]);
  auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
  const double lo = *mn - 3.0 * c.bandwidth;
  const double hi = *mx + 3.0 * c.bandwidth;
  for (std::size_t i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    c.x.push_back(x);
    c.density.push_back(k.at(x));
  }
  return c;
}

}  // namespace nodesplit
