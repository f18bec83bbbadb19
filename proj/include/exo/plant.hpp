#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "exo/controller.hpp"
#include "exo/gait_signals.hpp"
#include "exo/tendon.hpp"

namespace exo {

enum class Activity { LW, LR, RA, RD };

const char* to_string(Activity a);
Activity parse_activity(const std::string& s);

// Closed-form stride kinematics over gait phase φ ∈ [0, 1), φ = 0 at contact.
//
// Shank: smoothstep sweep sk_start → sk_end over stance and back over swing.
// Foot pitch in stance: over the first `rocker_fraction` of stance the heel
// rocker cancels `rocker_gain` of the shank sweep, then keeps falling at the
// rate it reached; a power-law plunge puts the ankle DF crest exactly at
// `df_peak_phase` of stance. Foot pitch stays concave, so its rate falls
// monotonically to the minimum at foot-off. Swing foot pitch is
// a cubic Hermite back to `ft_peak` with zero slope at contact.
struct GaitTemplate {
  Activity activity = Activity::LW;
  double period_s = 1.13;
  double stance_ratio = 0.674;
  double sk_start = -12.0;
  double sk_end = 20.0;
  double df_peak_phase = 0.7;  // fraction of stance
  double plunge_exponent = 8.0;
  double ft_peak = 20.0;
  double rocker_fraction = 0.15;
  double rocker_gain = 1.0;
  double belt_speed_mps = 1.33;

  void validate() const;
  double plunge_coeff() const;
  double df_peak_value() const;
};

GaitTemplate default_template(Activity a);

// Segment angles and their derivatives with respect to phase (deg per cycle).
struct PhaseKinematics {
  double theta_ft = 0.0;
  double theta_sk = 0.0;
  double d_ft = 0.0;
  double d_sk = 0.0;
};

PhaseKinematics eval_template(const GaitTemplate& tmpl, double phase);

// Calibrated kinematics at `phase` when the phase advances at speed_scale/period.
KinematicSample gen_frame(const GaitTemplate& tmpl, double phase, double speed_scale,
                          double t_ms = 0.0);

// Normalized plantarflexion torque over stance; crest of 1 at the DF peak.
double biological_torque(const GaitTemplate& tmpl, double phase);

enum class PerturbationKind { Forward, Backward };

const char* to_string(PerturbationKind k);

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::Forward;
  double onset_pct_gc = 0.15;
  double magnitude = 0.8;
  double ramp_time = 0.1;  // s, each of the up and down ramps
  std::vector<int> affected_cycles;

  void validate() const;
  // Speed multiplier `t` seconds after onset.
  double scale_at(double t) const;
};

// Slow belt-speed trapezoid: ramp by delta_fraction at accel, hold, ramp back.
struct SpeedRamp {
  int start_stride = 15;
  double delta_fraction = -0.5;
  double base_speed_mps = 0.0;  // 0 takes the gait's belt speed
  double accel_mps2 = 0.5;
  double hold_s = 6.0;

  void validate() const;
  double ramp_time() const;
  double duration() const;
  double scale_at(double t) const;
};

double phase_advance(double phase, double dt, const GaitTemplate& tmpl, double speed_scale);

struct PlantConfig {
  TendonModel truth;
  double motor_tau_s = 0.010;
  double v_max = 250.0;
  double force_noise_sd = 0.2;
  double mig_max = 4.0;
  double mig_strides = 3.0;
  double loaded_force = 20.0;
  double imu_ft_offset = 3.0;
  double imu_sk_offset = -2.0;
  double initial_slack = 10.0;  // mm of cable beyond the taut standing length

  void validate() const;
};

struct PlantState {
  double l_cable = 0.0;
  double motor_v = 0.0;
  double motor_pos = 0.0;
  double force = 0.0;
  double migration = 0.0;
  int stride_index = -1;
  int loaded_strides = 0;
};

struct PlantReading {
  double f_truth = 0.0;
  double f_meas = 0.0;
  double l_cable = 0.0;
  double motor_pos = 0.0;
  double motor_rate = 0.0;
};

double migration_after(const PlantConfig& cfg, int loaded_strides);

// Cable force for the current cable length and ankle angle; never negative.
double cable_force(const PlantConfig& cfg, const PlantState& s, double theta_df);

// One motor step: lagged, saturated velocity integrated into cable length.
void step_motor(PlantState& s, const VelocityCommand& cmd, const PlantConfig& cfg, double dt);

// Simulated wearer on a treadmill plus the cable drive.
class Plant {
 public:
  Plant(GaitTemplate tmpl, PlantConfig cfg, std::uint64_t seed);

  void set_perturbations(std::vector<PerturbationSpec> specs);
  void set_speed_ramp(std::optional<SpeedRamp> ramp);

  void start_walking(double phase0);
  bool walking() const { return walking_; }

  // Truth kinematics; zero posture while standing.
  KinematicSample kinematics() const;
  // Uncalibrated sensor frame at the current time.
  RawImuFrame imu_frame() const;
  // Force from the current cable and posture, with measurement noise.
  PlantReading sense();
  // Applies one command and advances gait by dt.
  void step(const VelocityCommand& cmd, double dt);

  // Overrides the next force reading, for fault injection.
  void inject_force_spike(double force) { spike_ = force; }

  double t_ms() const { return t_ms_; }
  double phase() const { return phase_; }
  double belt_scale() const { return scale_; }
  bool perturbation_active() const { return active_pert_ >= 0; }
  bool stride_perturbed(int stride) const;
  const PlantState& state() const { return state_; }
  const GaitTemplate& gait() const { return tmpl_; }
  const PlantConfig& config() const { return cfg_; }

 private:
  double current_scale(double t_s) const;

  GaitTemplate tmpl_;
  PlantConfig cfg_;
  PlantState state_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
  std::vector<PerturbationSpec> perts_;
  std::optional<SpeedRamp> ramp_;
  bool walking_ = false;
  double t_ms_ = 0.0;
  double phase_ = 0.0;
  double scale_ = 1.0;
  int active_pert_ = -1;
  double pert_onset_s_ = 0.0;
  bool pert_fired_ = false;
  double ramp_start_s_ = -1.0;
  bool stride_loaded_ = false;
  std::optional<double> spike_;
};

}  // namespace exo
