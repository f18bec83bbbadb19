#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "exo/profile.hpp"

namespace exo {

double rmse_pct(std::span<const double> desired, std::span<const double> actual, double peak);

double pearson(std::span<const double> x, std::span<const double> y);

inline constexpr int kNeverConverged = -1;

// First index from which μ, σ1 and σ2 all stay within tol·|history[0] - target|
// of their targets. history[i] is the estimate after i updates.
int convergence_stride(std::span<const GaussianParams> history, const ShapeTargets& targets,
                       double tol);

inline constexpr std::size_t kStanceGridPoints = 101;

// Linear resampling of (x, y) onto n uniform points over [x.front(), x.back()].
std::vector<double> resample_uniform(std::span<const double> x, std::span<const double> y,
                                     std::size_t n);

// Pearson correlation of the two stance curves after each is divided by its
// own maximum. Both curves share the progression axis `x`.
double stance_correlation(std::span<const double> x, std::span<const double> mechanical,
                          std::span<const double> biological,
                          std::size_t grid = kStanceGridPoints);

struct MeanSd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};

// Sample standard deviation; sd is 0 for a single value.
MeanSd mean_sd(std::span<const double> xs);

}  // namespace exo
