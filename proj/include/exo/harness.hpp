#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "exo/controller.hpp"
#include "exo/gait_signals.hpp"
#include "exo/metrics.hpp"
#include "exo/plant.hpp"
#include "exo/profile.hpp"
#include "exo/tendon.hpp"

namespace exo {

enum class Scenario { Steady, Perturb, SpeedRamp };

const char* to_string(Scenario s);
Scenario parse_scenario(const std::string& s);

struct FaultInjection {
  std::optional<double> force_spike_n;
  double force_spike_t_ms = 0.0;  // measured from walking start
  std::vector<double> imu_drop_ms;  // walking-relative times of dropped frames
};

struct ScenarioConfig {
  Activity activity = Activity::LW;
  Scenario scenario = Scenario::Steady;
  int n_strides = 60;
  std::uint64_t seed = 1;
  double amp_fraction = 0.15;
  double body_weight_n = 726.0;

  ControllerConfig controller;
  TendonModel tendon;  // the controller's model; the plant has its own truth
  PlantConfig plant;
  std::optional<GaitTemplate> gait;
  DetectorConfig detector;
  std::size_t window_capacity = StanceWindow::kDefaultCapacity;

  double update_gain = 0.3;
  UpdateGuard guard;
  double initial_mu = 15.0;
  double initial_sigma1 = 10.0;
  double initial_sigma2 = 5.0;

  PerturbationSpec perturbation;  // template for the generated protocol
  int perturbation_count = 4;
  int perturbation_first_stride = 15;
  std::vector<int> perturbation_strides;  // explicit choice; empty = derive from seed
  std::vector<PerturbationKind> perturbation_kinds;

  SpeedRamp speed_ramp;

  double standing_s = 2.0;
  double calibration_s = 0.5;
  double dt_s = 0.001;
  int imu_decimation = 10;
  bool extrapolate_imu = true;
  double post_abort_ms = 500.0;

  int aggregate_strides = 10;
  double convergence_tol = 0.05;
  double swing_tolerance = 1.0;

  FaultInjection fault;
  std::string out_dir;

  double amplitude() const { return amp_fraction * body_weight_n; }
  GaitTemplate gait_template() const;
  SpeedRamp resolved_speed_ramp() const;
  void validate() const;
};

// Applies the fields present in `j` on top of `cfg`.
void apply_config_json(ScenarioConfig& cfg, const nlohmann::json& j);
ScenarioConfig load_config_file(const std::string& path, ScenarioConfig base = {});

struct PerturbationPlan {
  std::vector<int> strides;
  std::vector<PerturbationKind> kinds;
};

// Four strides (by default) at or after the first eligible stride and at least
// two before the end, never adjacent, half forward and half backward.
PerturbationPlan plan_perturbations(const ScenarioConfig& cfg);

struct StrideMetrics {
  int stride = 0;
  double t_fc_ms = 0.0;
  double t_fo_ms = 0.0;
  double period_s = 0.0;
  double stance_ratio = 0.0;
  bool assisted = false;
  double rmse_pct = 0.0;  // NaN when not assisted
  double pearson_shank = 0.0;
  double pearson_time = 0.0;
  double f_des_peak = 0.0;
  double f_meas_peak = 0.0;
  double swing_max_force = 0.0;  // NaN when the swing was not regulated
  bool perturbed = false;
  std::optional<PerturbationKind> perturbation;
  GaussianParams params;  // active during this stride's stance
  std::optional<RawStrideFeatures> raw;
  std::optional<UpdateOutcome> update;
  GaussianParams estimate;  // estimator state after this stride
};

struct AggregateMetrics {
  MeanSd rmse_pct;
  MeanSd pearson_shank;
  MeanSd pearson_time;
  MeanSd swing_max_force;
  MeanSd stance_ratio;
  std::vector<int> strides_used;
  int convergence_stride = kNeverConverged;
  int swing_convergence_stride = kNeverConverged;
  int first_swing_stride = kNeverConverged;
};

struct RunWarnings {
  int window_overflows = 0;
  int estimation_skipped = 0;
  int updates_rejected = 0;
  int imu_frames_filled = 0;
  ControllerWarnings controller;
};

struct MetricsReport {
  std::string activity;
  std::string scenario;
  int n_strides = 0;
  std::uint64_t seed = 0;
  double amplitude_n = 0.0;
  bool completed = false;
  bool aborted = false;
  double abort_t_ms = 0.0;
  int abort_tick = -1;
  std::string abort_reason;
  std::string failure;
  std::vector<StrideMetrics> strides;
  std::vector<GaussianParams> param_history;  // [0] initial, [i] after i updates
  ShapeTargets final_targets;
  AggregateMetrics aggregate;
  RunWarnings warnings;
};

// One 1 kHz tick of the closed loop, as written to timeseries.csv.
struct TickRecord {
  double t_ms = 0.0;
  int stride = -1;
  Mode mode = Mode::Pretighten;
  double theta_sk = 0.0;
  double theta_ft = 0.0;
  double theta_df = 0.0;
  double f_des = 0.0;
  double f_meas = 0.0;
  double f_truth = 0.0;
  double l_cable = 0.0;
  double v_cmd = 0.0;
  double belt_scale = 1.0;
  bool perturbed = false;
};

struct RunOutput {
  MetricsReport report;
  std::vector<TickRecord> ticks;
};

// Runs the closed loop; ticks are kept only when `keep_ticks`.
RunOutput simulate(const ScenarioConfig& cfg, bool keep_ticks);

// simulate() plus timeseries.csv and summary.json in cfg.out_dir when set.
MetricsReport run_scenario(const ScenarioConfig& cfg);

nlohmann::json to_json(const MetricsReport& r);
void write_summary_json(std::ostream& out, const MetricsReport& r);
void write_timeseries_csv(std::ostream& out, const std::vector<TickRecord>& ticks);

}  // namespace exo
