#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "exo/gait_signals.hpp"

namespace exo {

// Dual-Gaussian assistance profile over shank angle. Angles in deg, force in N.
struct GaussianParams {
  double amp = 0.0;
  double mu = 15.0;
  double sigma1 = 10.0;
  double sigma2 = 5.0;
  double theta_fc = -25.0;
  double theta_fo = 35.0;

  bool valid() const;
  // Throws ParameterError when !valid().
  void validate() const;

  bool operator==(const GaussianParams&) const = default;
};

// Starting point of the estimator. Support bounds sit four standard
// deviations either side of the peak.
GaussianParams initial_params(double amp);

// A·exp(-(θ-μ)²/2σ²) with σ1 on the rising side and σ2 on the falling side;
// zero outside (θ_FC, θ_FO).
double eval_force(const GaussianParams& p, double theta);
// dF/dt along a shank trajectory passing θ at rate θ̇ (deg/s). N/s.
double eval_force_rate(const GaussianParams& p, double theta, double theta_rate);

struct RawStrideFeatures {
  double theta_fc = 0.0;
  double theta_mdf = 0.0;
  double theta_fo = 0.0;
};

inline constexpr std::size_t kMinStanceSamples = 10;

// Shank angle at the first buffered sample, at the first maximum of the DF
// buffer, and at the last sample. Empty when the window is too short.
std::optional<RawStrideFeatures> extract_raw(const StanceWindow& w,
                                             std::size_t min_samples = kMinStanceSamples);
std::optional<RawStrideFeatures> extract_raw(std::span<const double> theta_sk,
                                             std::span<const double> theta_df,
                                             std::size_t min_samples = kMinStanceSamples);

struct ShapeTargets {
  double mu = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

ShapeTargets shape_targets(const RawStrideFeatures& raw);

struct UpdateGuard {
  double max_dmu = 10.0;
  double max_dsigma = 5.0;
  double sigma_min = 1.0;
  double sigma_max = 30.0;
};

enum class UpdateOutcome { Accepted, BadOrdering, OutOfBounds, NonFinite };

const char* to_string(UpdateOutcome o);

struct UpdateResult {
  GaussianParams params;
  UpdateOutcome outcome = UpdateOutcome::Accepted;
};

// One relaxation step of (μ, σ1, σ2) towards the stride targets. On rejection
// the returned params equal `current`.
UpdateResult propose_update(const GaussianParams& current, const RawStrideFeatures& raw,
                            double gain = 0.3, const UpdateGuard& guard = {});

class ParamEstimator {
 public:
  explicit ParamEstimator(GaussianParams initial, double gain = 0.3, UpdateGuard guard = {});

  UpdateOutcome update(const RawStrideFeatures& raw);

  const GaussianParams& current() const { return current_; }
  double gain() const { return gain_; }
  int accepted() const { return accepted_; }
  int rejected() const { return rejected_; }

 private:
  GaussianParams current_;
  double gain_;
  UpdateGuard guard_;
  int accepted_ = 0;
  int rejected_ = 0;
};

// Shank angle of one recorded stance against elapsed fraction of the stride.
struct StanceMap {
  std::vector<double> pct_gc;
  std::vector<double> theta_sk;

  bool empty() const { return pct_gc.empty(); }
};

// pct = (t - t_contact) / period. Timestamps must be increasing.
StanceMap make_stance_map(std::span<const double> t_ms, std::span<const double> theta_sk,
                          double t_contact_ms, double period_s);

// Time-progressed comparator: evaluates the same profile at the shank angle the
// recorded stance showed at this fraction of the stride. Zero without history
// or beyond the recorded stance.
double eval_time_profile(const GaussianParams& p, double pct_gc, const StanceMap& prev);

}  // namespace exo
