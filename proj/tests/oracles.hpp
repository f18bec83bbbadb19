#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "exo/tendon.hpp"

namespace exo::testing {

// Loading/unloading loops between f_lo and f_hi. The unloading branch sits
// `hysteresis` newtons below the loading branch at mid-deflection.
inline std::vector<ForceDeflection> calibration_loops(double k, int cycles, double f_lo,
                                                      double f_hi, double hysteresis,
                                                      double noise_sd, std::uint64_t seed,
                                                      int points_per_branch = 60) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  const double x_lo = f_lo / k, x_hi = f_hi / k;
  std::vector<ForceDeflection> out;
  for (int c = 0; c < cycles; ++c) {
    for (int branch = 0; branch < 2; ++branch) {
      for (int i = 0; i < points_per_branch; ++i) {
        const double u = static_cast<double>(i) / points_per_branch;
        const double s = branch == 0 ? u : 1.0 - u;
        const double x = x_lo + (x_hi - x_lo) * s;
        const double loop = 0.5 * hysteresis * std::sin(std::numbers::pi * s);
        double f = k * x + (branch == 0 ? loop : -loop);
        if (noise_sd > 0.0) f += noise_sd * noise(rng);
        out.push_back({f, x});
      }
    }
  }
  return out;
}

// Deflection of the tendon model under each force at a fixed ankle angle.
inline std::vector<ForceDeflection> model_deflections(const TendonModel& m, double theta_df,
                                                      const std::vector<double>& forces,
                                                      double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double rest = tendon_length(m, theta_df, 0.0);
  std::vector<ForceDeflection> out;
  for (double f : forces) {
    const double x = rest - tendon_length(m, theta_df, f);
    out.push_back({noise_sd > 0.0 ? f + noise_sd * noise(rng) : f, x});
  }
  return out;
}

}  // namespace exo::testing
