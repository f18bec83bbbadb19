#include "exo/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "exo/errors.hpp"

namespace exo {

double rmse_pct(std::span<const double> desired, std::span<const double> actual, double peak) {
  if (desired.empty() || desired.size() != actual.size())
    throw MetricError("rmse needs equal-length non-empty series");
  if (!(peak > 0.0)) throw MetricError("rmse peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < desired.size(); ++i) {
    const double e = desired[i] - actual[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(desired.size())) / peak;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3)
    throw MetricError("pearson needs equal-length series of at least 3 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw MetricError("correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

int convergence_stride(std::span<const GaussianParams> history, const ShapeTargets& targets,
                       double tol) {
  if (history.empty()) throw MetricError("empty parameter history");
  const GaussianParams& h0 = history.front();
  const double g_mu = std::abs(h0.mu - targets.mu);
  const double g_s1 = std::abs(h0.sigma1 - targets.sigma1);
  const double g_s2 = std::abs(h0.sigma2 - targets.sigma2);
  const auto within = [&](const GaussianParams& p) {
    return std::abs(p.mu - targets.mu) <= tol * g_mu + 1e-12 &&
           std::abs(p.sigma1 - targets.sigma1) <= tol * g_s1 + 1e-12 &&
           std::abs(p.sigma2 - targets.sigma2) <= tol * g_s2 + 1e-12;
  };
  int first = kNeverConverged;
  for (std::size_t i = history.size(); i-- > 0;) {
    if (!within(history[i])) break;
    first = static_cast<int>(i);
  }
  return first;
}

std::vector<double> resample_uniform(std::span<const double> x, std::span<const double> y,
                                     std::size_t n) {
  if (x.size() != y.size() || x.size() < 2) throw MetricError("resampling needs >= 2 points");
  if (n < 2) throw MetricError("resampling grid needs >= 2 points");
  for (std::size_t i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) throw MetricError("resampling axis must increase");
  std::vector<double> out(n);
  const double x0 = x.front(), x1 = x.back();
  std::size_t j = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = i + 1 == n ? x1 : x0 + (x1 - x0) * static_cast<double>(i) / (n - 1);
    while (j + 1 < x.size() && x[j] < xi) ++j;
    const double w = (xi - x[j - 1]) / (x[j] - x[j - 1]);
    out[i] = y[j - 1] + w * (y[j] - y[j - 1]);
  }
  return out;
}

double stance_correlation(std::span<const double> x, std::span<const double> mechanical,
                          std::span<const double> biological, std::size_t grid) {
  if (mechanical.size() != x.size() || biological.size() != x.size())
    throw MetricError("stance series must share the sampling grid");
  std::vector<double> m = resample_uniform(x, mechanical, grid);
  std::vector<double> b = resample_uniform(x, biological, grid);
  const auto normalize = [](std::vector<double>& v) {
    const double top = *std::max_element(v.begin(), v.end());
    if (!(top > 0.0)) throw MetricError("stance curve has no positive maximum");
    for (double& e : v) e /= top;
  };
  normalize(m);
  normalize(b);
  return pearson(m, b);
}

MeanSd mean_sd(std::span<const double> xs) {
  MeanSd r;
  r.n = xs.size();
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - r.mean) * (x - r.mean);
  r.sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return r;
}

}  // namespace exo
