#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace exo {

inline constexpr double kDegToRad = 0.017453292519943295;

inline double rad(double deg) { return deg * kDegToRad; }

// Coupled human-suit cable path. Lengths in mm, stiffness in N/mm.
struct TendonModel {
  double lever_arm_r = 100.0;
  double k_all = 12.5;
  double baseline_c = 300.0;
  double delta_l1 = 0.0;

  bool valid() const;
  void validate() const;
};

// r·θ_DF − F/k + (C − ΔL1), θ_DF in deg.
double tendon_length(const TendonModel& m, double theta_df, double force);

struct MigrationEstimate {
  double delta_l1 = 0.0;
  double raw = 0.0;
  bool inconsistent = false;
};

inline constexpr double kMigrationTolerance = 0.5;

// Shortfall of the measured length against the model prediction without
// migration. Small negative values clamp to zero; beyond the tolerance the
// estimate is flagged inconsistent and the model's value is kept.
MigrationEstimate estimate_migration(const TendonModel& m, double l_meas, double theta_df,
                                     double f_meas);
// Same, storing the result in `m`.
MigrationEstimate update_migration(TendonModel& m, double l_meas, double theta_df, double f_meas);

struct ForceDeflection {
  double force = 0.0;
  double deflection = 0.0;
};

struct StiffnessFit {
  double k_all = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

struct FitRequirements {
  std::size_t min_samples = 10;
  double min_force_span = 50.0;
};

// Ordinary least squares force = k·deflection + b.
StiffnessFit identify_stiffness(std::span<const ForceDeflection> samples,
                                const FitRequirements& req = {});

// Calibration file with header `force_n,deflection_mm`.
std::vector<ForceDeflection> read_force_deflection_csv(std::istream& in);
std::vector<ForceDeflection> read_force_deflection_csv(const std::string& path);

}  // namespace exo
