#pragma once

#include <optional>
#include <vector>

#include "exo/gait_signals.hpp"
#include "exo/profile.hpp"
#include "exo/tendon.hpp"

namespace exo {

struct ControllerConfig {
  double kp = 23.0;       // 1/s
  double ki = 0.0001;     // 1/s²
  double kd = 1.8;
  double map_m = 0.0;     // N·s/mm
  double map_b = 15.7;    // N/mm per mm/s
  double swing_target_force = 3.0;
  double amp_fraction = 0.15;
  int silent_cycles = 5;
  double force_ceiling = 300.0;
  double position_min = -80.0;
  double position_max = 80.0;

  double pretighten_force = 5.0;
  double pretighten_speed = 20.0;
  double release_slack = 50.0;   // mm beyond the taut standing length
  double integral_limit = 50.0;  // mm·s
  double v_envelope = 250.0;     // mm/s
  double migration_force = 5.0;  // force that marks cable tightening in stance

  void validate() const;
};

enum class Mode { Pretighten, Silent, Swing, Stance, Abort };
enum class CommandSource { SwingPI, StanceFBFF, Hold, Release, Pretighten };
enum class SafetyStatus { Ok, Abort };

const char* to_string(Mode m);
const char* to_string(CommandSource s);

// Positive v retracts the cable and shortens the artificial tendon.
struct VelocityCommand {
  double v = 0.0;
  CommandSource source = CommandSource::Hold;
};

struct ControlInput {
  KinematicSample kin;
  double f_meas = 0.0;
  double motor_pos = 0.0;   // cumulative retraction, mm
  double motor_rate = 0.0;  // mm/s, positive = retracting
  bool kin_fresh = true;    // kin comes from a frame taken this tick
};

struct ControllerWarnings {
  int out_of_order_events = 0;
  int missing_params = 0;
  int invalid_params = 0;
  int migration_inconsistent = 0;
};

struct StancePeak {
  double force = 0.0;
  double theta_sk = 0.0;
};

class Controller {
 public:
  Controller(ControllerConfig cfg, TendonModel model, GaussianParams initial);

  // Safety first, then the law of the current mode.
  VelocityCommand tick(const ControlInput& in, double dt);
  void on_event(const GaitEvent& ev, const std::optional<GaussianParams>& new_params = {});
  SafetyStatus safety_check(double f_meas, double motor_pos);

  VelocityCommand tick_swing(double l_meas, double l_meas_rate, double dt);
  VelocityCommand tick_stance(const KinematicSample& kin, double f_meas, double dt);

  // Fixes the length reference from a pretightened standing posture and
  // starts silent walking with the cable released.
  void complete_pretighten(double f_meas, double theta_df, double motor_pos);

  // Artificial-tendon length reconstructed from the pulley position.
  double l_meas(double motor_pos) const;

  Mode mode() const { return mode_; }
  bool aborted() const { return mode_ == Mode::Abort; }
  bool pretightened() const { return referenced_; }
  int gc_count() const { return gc_count_; }
  double integral() const { return integral_; }
  double f_swing_max() const { return f_swing_max_; }
  double last_swing_force_max() const { return last_swing_force_max_; }
  // Swing length relative to the migrated rest length C - ΔL1.
  // Held for a whole cycle; only foot-off moves it.
  double l_swing() const { return l_swing_; }
  double l_release() const;
  double last_f_des() const { return last_f_des_; }
  const GaussianParams& active_params() const { return params_; }
  const TendonModel& tendon() const { return model_; }
  const ControllerConfig& config() const { return cfg_; }
  const ControllerWarnings& warnings() const { return warnings_; }
  const std::vector<StancePeak>& stance_peak_log() const { return peaks_; }

 private:
  VelocityCommand clamp(VelocityCommand c) const;
  VelocityCommand track_length(double target, double l, double l_rate, double dt,
                               CommandSource src);

  ControllerConfig cfg_;
  TendonModel model_;
  GaussianParams params_;
  Mode mode_ = Mode::Pretighten;
  GaitPhase walk_phase_ = GaitPhase::Swing;
  EventKind expected_ = EventKind::FootContact;
  bool referenced_ = false;
  double l_ref_ = 0.0;
  double pos_ref_ = 0.0;
  int gc_count_ = 0;
  double integral_ = 0.0;
  double v_fb_ = 0.0;
  double last_v_ff_ = 0.0;
  bool have_v_ff_ = false;
  double l_swing_ = 0.0;
  double swing_delta_l1_ = 0.0;
  double f_swing_max_ = 0.0;
  double last_swing_force_max_ = 0.0;
  double swing_df_max_ = 0.0;
  bool swing_df_seen_ = false;
  double last_swing_df_max_ = 0.0;
  bool migration_done_ = true;
  double last_f_des_ = 0.0;
  StancePeak current_peak_;
  ControllerWarnings warnings_;
  std::vector<StancePeak> peaks_;
};

}  // namespace exo
