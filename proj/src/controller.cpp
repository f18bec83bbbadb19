#include "exo/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "exo/errors.hpp"

namespace exo {

void ControllerConfig::validate() const {
  const bool ok = kp >= 0.0 && ki >= 0.0 && kd >= 0.0 && map_m >= 0.0 && map_b > 0.0 &&
                  swing_target_force >= 0.0 && amp_fraction > 0.0 && amp_fraction < 1.0 &&
                  silent_cycles >= 0 && force_ceiling > 0.0 && position_min < position_max &&
                  pretighten_force > 0.0 && pretighten_speed > 0.0 && release_slack >= 0.0 &&
                  integral_limit >= 0.0 &&
                  v_envelope > 0.0 && migration_force > 0.0;
  if (!ok) throw ConfigError("invalid controller configuration");
}

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Pretighten: return "pretighten";
    case Mode::Silent: return "silent";
    case Mode::Swing: return "swing";
    case Mode::Stance: return "stance";
    case Mode::Abort: return "abort";
  }
  return "?";
}

const char* to_string(CommandSource s) {
  switch (s) {
    case CommandSource::SwingPI: return "swing_pi";
    case CommandSource::StanceFBFF: return "stance_fbff";
    case CommandSource::Hold: return "hold";
    case CommandSource::Release: return "release";
    case CommandSource::Pretighten: return "pretighten";
  }
  return "?";
}

Controller::Controller(ControllerConfig cfg, TendonModel model, GaussianParams initial)
    : cfg_(cfg), model_(model), params_(initial) {
  cfg_.validate();
  model_.validate();
  params_.validate();
}

double Controller::l_meas(double motor_pos) const { return l_ref_ - (motor_pos - pos_ref_); }

double Controller::l_release() const {
  return model_.baseline_c - model_.delta_l1 + cfg_.release_slack;
}

VelocityCommand Controller::clamp(VelocityCommand c) const {
  c.v = std::clamp(c.v, -cfg_.v_envelope, cfg_.v_envelope);
  return c;
}

SafetyStatus Controller::safety_check(double f_meas, double motor_pos) {
  if (mode_ == Mode::Abort) return SafetyStatus::Abort;
  const double pos = motor_pos - pos_ref_;
  if (!(f_meas <= cfg_.force_ceiling) || pos < cfg_.position_min || pos > cfg_.position_max) {
    mode_ = Mode::Abort;
    return SafetyStatus::Abort;
  }
  return SafetyStatus::Ok;
}

void Controller::complete_pretighten(double f_meas, double theta_df, double motor_pos) {
  if (mode_ != Mode::Pretighten) throw std::logic_error("pretighten already completed");
  l_ref_ = tendon_length(model_, theta_df, std::max(0.0, f_meas));
  pos_ref_ = motor_pos;
  referenced_ = true;
  mode_ = Mode::Silent;
}

VelocityCommand Controller::track_length(double target, double l, double l_rate, double dt,
                                         CommandSource src) {
  const double e = target - l;
  integral_ = std::clamp(integral_ + e * dt, -cfg_.integral_limit, cfg_.integral_limit);
  const double v_len = cfg_.kp * e + cfg_.ki * integral_ - cfg_.kd * l_rate;
  return clamp({-v_len, src});
}

VelocityCommand Controller::tick(const ControlInput& in, double dt) {
  if (!(dt > 0.0)) throw ParameterError("control period must be positive");
  const double l = l_meas(in.motor_pos);
  const double l_rate = -in.motor_rate;

  // A latched abort stops the motor where it is.
  if (safety_check(in.f_meas, in.motor_pos) == SafetyStatus::Abort)
    return {0.0, CommandSource::Hold};

  switch (mode_) {
    case Mode::Pretighten:
      if (in.f_meas >= cfg_.pretighten_force) {
        complete_pretighten(in.f_meas, in.kin.theta_df, in.motor_pos);
        return {0.0, CommandSource::Hold};
      }
      return clamp({cfg_.pretighten_speed, CommandSource::Pretighten});

    case Mode::Silent:
      if (walk_phase_ == GaitPhase::Swing) {
        swing_df_max_ = swing_df_seen_ ? std::max(swing_df_max_, in.kin.theta_df) : in.kin.theta_df;
        swing_df_seen_ = true;
      }
      return track_length(l_release(), l, l_rate, dt, CommandSource::Release);

    case Mode::Swing:
      f_swing_max_ = std::max(f_swing_max_, in.f_meas);
      return tick_swing(l, l_rate, dt);

    case Mode::Stance:
      // Wait for a measured frame so the ankle angle is not extrapolated.
      if (!migration_done_ && in.kin_fresh && in.f_meas >= cfg_.migration_force) {
        const MigrationEstimate e = update_migration(model_, l, in.kin.theta_df, in.f_meas);
        if (e.inconsistent) ++warnings_.migration_inconsistent;
        migration_done_ = true;
      }
      return tick_stance(in.kin, in.f_meas, dt);

    case Mode::Abort:
      break;
  }
  return {0.0, CommandSource::Hold};
}

VelocityCommand Controller::tick_swing(double l_meas, double l_meas_rate, double dt) {
  if (mode_ != Mode::Swing) throw std::logic_error("swing law called outside swing");
  return track_length(l_swing(), l_meas, l_meas_rate, dt, CommandSource::SwingPI);
}

VelocityCommand Controller::tick_stance(const KinematicSample& kin, double f_meas, double dt) {
  if (mode_ != Mode::Stance) throw std::logic_error("stance law called outside stance");
  if (!params_.valid()) {
    ++warnings_.missing_params;
    last_f_des_ = 0.0;
    return {0.0, CommandSource::Hold};
  }
  const double f_des = eval_force(params_, kin.theta_sk);
  last_f_des_ = f_des;
  if (f_meas > current_peak_.force) current_peak_ = {f_meas, kin.theta_sk};

  const double err = f_des - f_meas;
  if (cfg_.map_m == 0.0) {
    v_fb_ = err / cfg_.map_b;
  } else {
    const double a = cfg_.map_m / dt;
    v_fb_ = (a * v_fb_ + err) / (a + cfg_.map_b);
  }
  const double v_ff = model_.lever_arm_r * rad(kin.theta_df_rate) -
                      eval_force_rate(params_, kin.theta_sk, kin.theta_sk_rate) / model_.k_all;
  // The command holds for the whole tick, so aim at the rate half a tick ahead.
  const double v_ff_mid = have_v_ff_ ? v_ff + 0.5 * (v_ff - last_v_ff_) : v_ff;
  last_v_ff_ = v_ff;
  have_v_ff_ = true;
  return clamp({v_fb_ - v_ff_mid, CommandSource::StanceFBFF});
}

void Controller::on_event(const GaitEvent& ev, const std::optional<GaussianParams>& new_params) {
  if (mode_ == Mode::Abort || mode_ == Mode::Pretighten) return;
  if (ev.kind != expected_) {
    ++warnings_.out_of_order_events;
    return;
  }

  if (ev.kind == EventKind::FootContact) {
    expected_ = EventKind::FootOff;
    if (new_params) {
      if (new_params->valid())
        params_ = *new_params;
      else
        ++warnings_.invalid_params;
    }
    integral_ = 0.0;
    if (walk_phase_ == GaitPhase::Swing && swing_df_seen_) last_swing_df_max_ = swing_df_max_;
    walk_phase_ = GaitPhase::Stance;
    if (mode_ == Mode::Swing) {
      last_swing_force_max_ = f_swing_max_;
      mode_ = Mode::Stance;
      migration_done_ = false;
      current_peak_ = {};
      v_fb_ = 0.0;
      have_v_ff_ = false;
    }
    ++gc_count_;
    return;
  }

  expected_ = EventKind::FootContact;
  walk_phase_ = GaitPhase::Swing;
  swing_df_seen_ = false;
  if (mode_ == Mode::Stance) {
    peaks_.push_back(current_peak_);
    // Slack taken up by migration since the last foot-off comes off the target too.
    l_swing_ += (f_swing_max_ - cfg_.swing_target_force) / model_.k_all -
                (model_.delta_l1 - swing_delta_l1_);
    swing_delta_l1_ = model_.delta_l1;
    f_swing_max_ = 0.0;
    mode_ = Mode::Swing;
  } else if (mode_ == Mode::Silent && gc_count_ >= cfg_.silent_cycles) {
    l_swing_ = model_.baseline_c - model_.delta_l1 + model_.lever_arm_r * rad(last_swing_df_max_) -
               cfg_.swing_target_force / model_.k_all;
    swing_delta_l1_ = model_.delta_l1;
    f_swing_max_ = 0.0;
    integral_ = 0.0;
    mode_ = Mode::Swing;
  }
}

}  // namespace exo
