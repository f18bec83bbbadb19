#include "exo/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "exo/errors.hpp"

namespace exo {

namespace {

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }
double smoothstep_d(double x) { return 6.0 * x * (1.0 - x); }

}  // namespace

const char* to_string(Activity a) {
  switch (a) {
    case Activity::LW: return "lw";
    case Activity::LR: return "lr";
    case Activity::RA: return "ra";
    case Activity::RD: return "rd";
  }
  return "?";
}

Activity parse_activity(const std::string& s) {
  if (s == "lw" || s == "LW") return Activity::LW;
  if (s == "lr" || s == "LR") return Activity::LR;
  if (s == "ra" || s == "RA") return Activity::RA;
  if (s == "rd" || s == "RD") return Activity::RD;
  throw ConfigError("unknown activity: " + s);
}

void GaitTemplate::validate() const {
  const bool ok = period_s > 0.0 && stance_ratio > 0.0 && stance_ratio < 1.0 &&
                  sk_start < sk_end && df_peak_phase > 0.0 && df_peak_phase < 1.0 &&
                  plunge_exponent > 1.0 && rocker_fraction > 0.0 && rocker_fraction <= 0.5 &&
                  rocker_fraction < df_peak_phase && rocker_gain >= 0.0 && rocker_gain <= 1.0 &&
                  belt_speed_mps > 0.0 &&
                  std::isfinite(ft_peak) && plunge_coeff() > 0.0;
  if (!ok) throw ParameterError("invalid gait template");
}

double GaitTemplate::plunge_coeff() const {
  const double p = df_peak_phase;
  const double span = sk_end - sk_start;
  return span * (smoothstep_d(p) - rocker_gain * smoothstep_d(rocker_fraction)) /
         (plunge_exponent * std::pow(p, plunge_exponent - 1.0));
}

double GaitTemplate::df_peak_value() const {
  const PhaseKinematics k = eval_template(*this, df_peak_phase * stance_ratio);
  return k.theta_sk + k.theta_ft;
}

GaitTemplate default_template(Activity a) {
  GaitTemplate t;
  t.activity = a;
  switch (a) {
    case Activity::LW:
      t.period_s = 1.13;
      t.stance_ratio = 0.674;
      t.sk_start = -12.0;
      t.sk_end = 20.0;
      t.df_peak_phase = 0.7;
      t.plunge_exponent = 8.0;
      t.ft_peak = 20.0;
      break;
    case Activity::LR:
      t.period_s = 0.72;
      t.stance_ratio = 0.514;
      t.sk_start = -15.0;
      t.sk_end = 25.0;
      t.df_peak_phase = 0.6;
      t.plunge_exponent = 4.0;
      t.ft_peak = 20.0;
      t.belt_speed_mps = 2.2;
      break;
    case Activity::RA:
      t.period_s = 1.13;
      t.stance_ratio = 0.683;
      t.sk_start = -12.0;
      t.sk_end = 18.0;
      t.df_peak_phase = 0.72;
      t.plunge_exponent = 8.0;
      t.ft_peak = 25.0;
      break;
    case Activity::RD:
      t.period_s = 1.03;
      t.stance_ratio = 0.691;
      t.sk_start = -8.0;
      t.sk_end = 24.0;
      t.df_peak_phase = 0.7;
      t.plunge_exponent = 6.0;
      t.ft_peak = 15.0;
      break;
  }
  return t;
}

PhaseKinematics eval_template(const GaitTemplate& t, double phase) {
  const double s = t.stance_ratio;
  const double span = t.sk_end - t.sk_start;
  const double a = t.plunge_coeff();
  const double k = t.plunge_exponent;
  PhaseKinematics out;
  if (phase < s) {
    const double u = std::max(0.0, phase) / s;
    out.theta_sk = t.sk_start + span * smoothstep(u);
    out.d_sk = span * smoothstep_d(u) / s;
    const double r = std::min(u, t.rocker_fraction);
    const double rocker_slope = span * t.rocker_gain * smoothstep_d(r);
    const double rocker = span * t.rocker_gain * smoothstep(r) + rocker_slope * (u - r);
    out.theta_ft = t.ft_peak - rocker - a * std::pow(u, k);
    out.d_ft = (-rocker_slope - a * k * std::pow(u, k - 1.0)) / s;
    return out;
  }
  const double v = std::min(1.0, (phase - s) / (1.0 - s));
  out.theta_sk = t.sk_end - span * smoothstep(v);
  out.d_sk = -span * smoothstep_d(v) / (1.0 - s);

  const double ur = t.rocker_fraction;
  const double end_slope = span * t.rocker_gain * smoothstep_d(ur);
  const double p0 = t.ft_peak - span * t.rocker_gain * smoothstep(ur) - end_slope * (1.0 - ur) - a;
  const double p1 = t.ft_peak;
  const double m0 = -(end_slope + a * k) * (1.0 - s) / s;
  const double v2 = v * v, v3 = v2 * v;
  out.theta_ft = (2 * v3 - 3 * v2 + 1) * p0 + (v3 - 2 * v2 + v) * m0 + (-2 * v3 + 3 * v2) * p1;
  const double dv = (6 * v2 - 6 * v) * p0 + (3 * v2 - 4 * v + 1) * m0 + (-6 * v2 + 6 * v) * p1;
  out.d_ft = dv / (1.0 - s);
  return out;
}

KinematicSample gen_frame(const GaitTemplate& tmpl, double phase, double speed_scale,
                          double t_ms) {
  const PhaseKinematics k = eval_template(tmpl, phase);
  const double rate = speed_scale / tmpl.period_s;
  return make_sample({t_ms, k.theta_ft, k.theta_sk, k.d_ft * rate, k.d_sk * rate});
}

double biological_torque(const GaitTemplate& tmpl, double phase) {
  if (phase <= 0.0 || phase >= tmpl.stance_ratio) return 0.0;
  const double u = phase / tmpl.stance_ratio;
  const double p = tmpl.df_peak_phase;
  constexpr double half_pi = std::numbers::pi / 2.0;
  if (u <= p) return std::pow(std::sin(half_pi * u / p), 8);
  return std::pow(std::cos(half_pi * (u - p) / (1.0 - p)), 4);
}

const char* to_string(PerturbationKind k) {
  return k == PerturbationKind::Forward ? "forward" : "backward";
}

void PerturbationSpec::validate() const {
  if (!(onset_pct_gc >= 0.0 && onset_pct_gc < 1.0) || !(magnitude >= 0.0) || !(ramp_time > 0.0))
    throw ConfigError("invalid perturbation spec");
  std::vector<int> c = affected_cycles;
  std::sort(c.begin(), c.end());
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i] - c[i - 1] < 2) throw ConfigError("perturbed strides must not be consecutive");
}

double PerturbationSpec::scale_at(double t) const {
  if (t <= 0.0 || t >= 2.0 * ramp_time) return 1.0;
  const double tri = t < ramp_time ? t / ramp_time : (2.0 * ramp_time - t) / ramp_time;
  const double sign = kind == PerturbationKind::Forward ? 1.0 : -1.0;
  return 1.0 + sign * magnitude * tri;
}

void SpeedRamp::validate() const {
  if (start_stride < 0 || !(delta_fraction > -1.0) || !(base_speed_mps > 0.0) ||
      !(accel_mps2 > 0.0) || !(hold_s >= 0.0))
    throw ConfigError("invalid speed ramp");
}

double SpeedRamp::ramp_time() const {
  return std::abs(delta_fraction) * base_speed_mps / accel_mps2;
}

double SpeedRamp::duration() const { return 2.0 * ramp_time() + hold_s; }

double SpeedRamp::scale_at(double t) const {
  const double tr = ramp_time();
  if (t <= 0.0 || t >= duration()) return 1.0;
  if (tr <= 0.0) return 1.0 + delta_fraction;
  double w = 1.0;
  if (t < tr)
    w = t / tr;
  else if (t > tr + hold_s)
    w = (duration() - t) / tr;
  return 1.0 + delta_fraction * w;
}

double phase_advance(double phase, double dt, const GaitTemplate& tmpl, double speed_scale) {
  if (!(dt > 0.0)) throw ParameterError("time step must be positive");
  return phase + dt * speed_scale / tmpl.period_s;
}

void PlantConfig::validate() const {
  truth.validate();
  if (!(motor_tau_s >= 0.0) || !(v_max > 0.0) || !(force_noise_sd >= 0.0) ||
      !(mig_max >= 0.0) || !(mig_strides > 0.0) || !(initial_slack >= 0.0))
    throw ConfigError("invalid plant configuration");
}

double migration_after(const PlantConfig& cfg, int loaded_strides) {
  return cfg.mig_max * (1.0 - std::exp(-static_cast<double>(loaded_strides) / cfg.mig_strides));
}

double cable_force(const PlantConfig& cfg, const PlantState& s, double theta_df) {
  const TendonModel& m = cfg.truth;
  const double taut = m.lever_arm_r * rad(theta_df) + m.baseline_c - s.migration;
  return std::max(0.0, m.k_all * (taut - s.l_cable));
}

void step_motor(PlantState& s, const VelocityCommand& cmd, const PlantConfig& cfg, double dt) {
  const double target = std::clamp(cmd.v, -cfg.v_max, cfg.v_max);
  const double alpha = cfg.motor_tau_s > 0.0 ? 1.0 - std::exp(-dt / cfg.motor_tau_s) : 1.0;
  s.motor_v += alpha * (target - s.motor_v);
  s.l_cable -= s.motor_v * dt;
  s.motor_pos += s.motor_v * dt;
}

Plant::Plant(GaitTemplate tmpl, PlantConfig cfg, std::uint64_t seed)
    : tmpl_(tmpl), cfg_(cfg), rng_(seed) {
  tmpl_.validate();
  cfg_.validate();
  state_.l_cable = cfg_.truth.baseline_c + cfg_.initial_slack;
}

void Plant::set_perturbations(std::vector<PerturbationSpec> specs) {
  for (const auto& p : specs) p.validate();
  perts_ = std::move(specs);
}

void Plant::set_speed_ramp(std::optional<SpeedRamp> ramp) {
  if (ramp) ramp->validate();
  ramp_ = ramp;
}

void Plant::start_walking(double phase0) {
  walking_ = true;
  phase_ = phase0 - std::floor(phase0);
  scale_ = current_scale(t_ms_ / 1000.0);
}

bool Plant::stride_perturbed(int stride) const {
  for (const auto& p : perts_)
    if (std::find(p.affected_cycles.begin(), p.affected_cycles.end(), stride) !=
        p.affected_cycles.end())
      return true;
  return false;
}

double Plant::current_scale(double t_s) const {
  double s = 1.0;
  if (active_pert_ >= 0) s *= perts_[static_cast<std::size_t>(active_pert_)].scale_at(t_s - pert_onset_s_);
  if (ramp_ && ramp_start_s_ >= 0.0) s *= ramp_->scale_at(t_s - ramp_start_s_);
  return s;
}

KinematicSample Plant::kinematics() const {
  if (!walking_) return make_sample({t_ms_, 0.0, 0.0, 0.0, 0.0});
  return gen_frame(tmpl_, phase_, scale_, t_ms_);
}

RawImuFrame Plant::imu_frame() const {
  const KinematicSample k = kinematics();
  return {k.t_ms, k.theta_ft + cfg_.imu_ft_offset, k.theta_sk + cfg_.imu_sk_offset,
          k.theta_ft_rate, k.theta_sk_rate};
}

PlantReading Plant::sense() {
  const KinematicSample k = kinematics();
  state_.force = cable_force(cfg_, state_, k.theta_df);
  if (walking_ && state_.force > cfg_.loaded_force) stride_loaded_ = true;
  PlantReading r;
  r.f_truth = state_.force;
  const double n = noise_(rng_);
  r.f_meas = spike_ ? *spike_ : state_.force + cfg_.force_noise_sd * n;
  spike_.reset();
  r.l_cable = state_.l_cable;
  r.motor_pos = state_.motor_pos;
  r.motor_rate = state_.motor_v;
  return r;
}

void Plant::step(const VelocityCommand& cmd, double dt) {
  step_motor(state_, cmd, cfg_, dt);
  const double t_s = t_ms_ / 1000.0;
  t_ms_ = std::round((t_ms_ + dt * 1000.0) * 1e6) / 1e6;
  if (!walking_) return;

  if (active_pert_ < 0 && !pert_fired_) {
    for (std::size_t i = 0; i < perts_.size(); ++i) {
      const auto& p = perts_[i];
      const bool hit = std::find(p.affected_cycles.begin(), p.affected_cycles.end(),
                                 state_.stride_index) != p.affected_cycles.end();
      if (hit && phase_ >= p.onset_pct_gc) {
        active_pert_ = static_cast<int>(i);
        pert_onset_s_ = t_s;
        pert_fired_ = true;
        break;
      }
    }
  }

  phase_ = phase_advance(phase_, dt, tmpl_, current_scale(t_s + 0.5 * dt));
  const double t_next = t_ms_ / 1000.0;
  if (active_pert_ >= 0 &&
      t_next - pert_onset_s_ >= 2.0 * perts_[static_cast<std::size_t>(active_pert_)].ramp_time)
    active_pert_ = -1;

  while (phase_ >= 1.0) {
    phase_ -= 1.0;
    ++state_.stride_index;
    if (stride_loaded_) {
      ++state_.loaded_strides;
      state_.migration = migration_after(cfg_, state_.loaded_strides);
    }
    stride_loaded_ = false;
    pert_fired_ = false;
    if (ramp_ && ramp_start_s_ < 0.0 && state_.stride_index == ramp_->start_stride)
      ramp_start_s_ = t_next;
  }
  if (phase_ < 0.0) phase_ = 0.0;
  scale_ = current_scale(t_next);
}

}  // namespace exo
