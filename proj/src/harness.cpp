#include "exo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>

#include "exo/errors.hpp"

namespace exo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Steady: return "steady";
    case Scenario::Perturb: return "perturb";
    case Scenario::SpeedRamp: return "speed-ramp";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  if (s == "steady") return Scenario::Steady;
  if (s == "perturb") return Scenario::Perturb;
  if (s == "speed-ramp" || s == "speed_ramp") return Scenario::SpeedRamp;
  throw ConfigError("unknown scenario: " + s);
}

GaitTemplate ScenarioConfig::gait_template() const {
  GaitTemplate t = gait ? *gait : default_template(activity);
  t.activity = activity;
  return t;
}

SpeedRamp ScenarioConfig::resolved_speed_ramp() const {
  SpeedRamp r = speed_ramp;
  if (r.base_speed_mps == 0.0) r.base_speed_mps = gait_template().belt_speed_mps;
  return r;
}

void ScenarioConfig::validate() const {
  if (n_strides <= 0) throw ConfigError("n_strides must be positive");
  if (!(amp_fraction > 0.0 && amp_fraction < 1.0)) throw ConfigError("amp_fraction out of range");
  if (!(body_weight_n > 0.0)) throw ConfigError("body weight must be positive");
  if (!(dt_s > 0.0) || imu_decimation < 1) throw ConfigError("invalid tick configuration");
  if (!(standing_s > calibration_s) || !(calibration_s > 0.0))
    throw ConfigError("standing period must exceed calibration period");
  if (!(update_gain > 0.0 && update_gain <= 1.0)) throw ConfigError("update gain out of range");
  if (aggregate_strides < 1) throw ConfigError("aggregate_strides must be positive");
  controller.validate();
  tendon.validate();
  plant.validate();
  gait_template().validate();
  GaussianParams p{amplitude(), initial_mu, initial_sigma1, initial_sigma2,
                   initial_mu - 4.0 * initial_sigma1, initial_mu + 4.0 * initial_sigma2};
  p.validate();
  if (scenario == Scenario::SpeedRamp) {
    resolved_speed_ramp().validate();
    if (speed_ramp.start_stride >= n_strides)
      throw ConfigError("speed ramp starts after the last stride");
  }
  if (scenario == Scenario::Perturb) plan_perturbations(*this);
}

void apply_config_json(ScenarioConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    if (j.contains("activity")) c.activity = parse_activity(j.at("activity").get<std::string>());
    if (j.contains("scenario")) c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    take(j, "n_strides", c.n_strides);
    take(j, "seed", c.seed);
    take(j, "amp_fraction", c.amp_fraction);
    take(j, "body_weight_n", c.body_weight_n);
    take(j, "standing_s", c.standing_s);
    take(j, "extrapolate_imu", c.extrapolate_imu);
    take(j, "aggregate_strides", c.aggregate_strides);
    take(j, "convergence_tol", c.convergence_tol);
    take(j, "window_capacity", c.window_capacity);
    take(j, "out_dir", c.out_dir);

    if (j.contains("controller")) {
      const auto& k = j.at("controller");
      auto& cc = c.controller;
      take(k, "kp", cc.kp);
      take(k, "ki", cc.ki);
      take(k, "kd", cc.kd);
      take(k, "map_m", cc.map_m);
      take(k, "map_b", cc.map_b);
      take(k, "swing_target_force", cc.swing_target_force);
      take(k, "silent_cycles", cc.silent_cycles);
      take(k, "force_ceiling", cc.force_ceiling);
      if (k.contains("position_limits")) {
        const auto& lim = k.at("position_limits");
        cc.position_min = lim.at(0).get<double>();
        cc.position_max = lim.at(1).get<double>();
      }
      take(k, "pretighten_force", cc.pretighten_force);
      take(k, "release_slack", cc.release_slack);
      take(k, "integral_limit", cc.integral_limit);
      take(k, "v_envelope", cc.v_envelope);
    }
    if (j.contains("tendon")) {
      const auto& k = j.at("tendon");
      take(k, "lever_arm_r", c.tendon.lever_arm_r);
      take(k, "k_all", c.tendon.k_all);
      take(k, "baseline_c", c.tendon.baseline_c);
    }
    if (j.contains("plant")) {
      const auto& k = j.at("plant");
      take(k, "lever_arm_r", c.plant.truth.lever_arm_r);
      take(k, "k_all", c.plant.truth.k_all);
      take(k, "baseline_c", c.plant.truth.baseline_c);
      take(k, "motor_tau_s", c.plant.motor_tau_s);
      take(k, "v_max", c.plant.v_max);
      take(k, "force_noise_sd", c.plant.force_noise_sd);
      take(k, "mig_max", c.plant.mig_max);
      take(k, "imu_ft_offset", c.plant.imu_ft_offset);
      take(k, "imu_sk_offset", c.plant.imu_sk_offset);
    }
    if (j.contains("gait")) {
      const auto& k = j.at("gait");
      GaitTemplate t = c.gait_template();
      take(k, "period_s", t.period_s);
      take(k, "stance_ratio", t.stance_ratio);
      if (k.contains("theta_sk_span")) {
        t.sk_start = k.at("theta_sk_span").at(0).get<double>();
        t.sk_end = k.at("theta_sk_span").at(1).get<double>();
      }
      take(k, "df_peak_phase", t.df_peak_phase);
      take(k, "plunge_exponent", t.plunge_exponent);
      take(k, "ft_peak", t.ft_peak);
      take(k, "rocker_fraction", t.rocker_fraction);
      take(k, "rocker_gain", t.rocker_gain);
      take(k, "belt_speed_mps", t.belt_speed_mps);
      c.gait = t;
    }
    if (j.contains("detector")) {
      const auto& k = j.at("detector");
      take(k, "angle_hysteresis_deg", c.detector.angle_hysteresis_deg);
      take(k, "rate_hysteresis_dps", c.detector.rate_hysteresis_dps);
      take(k, "refractory_ms", c.detector.refractory_ms);
    }
    if (j.contains("estimator")) {
      const auto& k = j.at("estimator");
      take(k, "gain", c.update_gain);
      take(k, "mu", c.initial_mu);
      take(k, "sigma1", c.initial_sigma1);
      take(k, "sigma2", c.initial_sigma2);
      take(k, "max_dmu", c.guard.max_dmu);
      take(k, "max_dsigma", c.guard.max_dsigma);
      take(k, "sigma_min", c.guard.sigma_min);
      take(k, "sigma_max", c.guard.sigma_max);
    }
    if (j.contains("perturbation")) {
      const auto& k = j.at("perturbation");
      take(k, "onset_pct_gc", c.perturbation.onset_pct_gc);
      take(k, "magnitude", c.perturbation.magnitude);
      take(k, "ramp_time", c.perturbation.ramp_time);
      take(k, "count", c.perturbation_count);
      take(k, "first_stride", c.perturbation_first_stride);
      take(k, "strides", c.perturbation_strides);
      if (k.contains("kinds")) {
        c.perturbation_kinds.clear();
        for (const auto& s : k.at("kinds")) {
          const auto name = s.get<std::string>();
          if (name == "forward")
            c.perturbation_kinds.push_back(PerturbationKind::Forward);
          else if (name == "backward")
            c.perturbation_kinds.push_back(PerturbationKind::Backward);
          else
            throw ConfigError("unknown perturbation kind: " + name);
        }
      }
    }
    if (j.contains("speed_ramp")) {
      const auto& k = j.at("speed_ramp");
      take(k, "start_stride", c.speed_ramp.start_stride);
      take(k, "delta_fraction", c.speed_ramp.delta_fraction);
      take(k, "base_speed_mps", c.speed_ramp.base_speed_mps);
      take(k, "accel_mps2", c.speed_ramp.accel_mps2);
      take(k, "hold_s", c.speed_ramp.hold_s);
    }
    if (j.contains("fault")) {
      const auto& k = j.at("fault");
      if (k.contains("force_spike_n")) c.fault.force_spike_n = k.at("force_spike_n").get<double>();
      take(k, "force_spike_t_ms", c.fault.force_spike_t_ms);
      take(k, "imu_drop_ms", c.fault.imu_drop_ms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

ScenarioConfig load_config_file(const std::string& path, ScenarioConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  apply_config_json(base, j);
  return base;
}

PerturbationPlan plan_perturbations(const ScenarioConfig& cfg) {
  PerturbationPlan plan;
  const int count = cfg.perturbation_count;
  if (count < 0) throw ConfigError("perturbation count must be >= 0");

  if (!cfg.perturbation_strides.empty()) {
    plan.strides = cfg.perturbation_strides;
  } else {
    const int lo = cfg.perturbation_first_stride;
    const int hi = cfg.n_strides - 2;
    std::vector<int> candidates;
    for (int s = lo; s <= hi; ++s) candidates.push_back(s);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (int s : candidates) {
      if (static_cast<int>(plan.strides.size()) == count) break;
      const bool adjacent = std::any_of(plan.strides.begin(), plan.strides.end(),
                                        [s](int p) { return std::abs(p - s) < 2; });
      if (!adjacent) plan.strides.push_back(s);
    }
    if (static_cast<int>(plan.strides.size()) < count)
      throw ConfigError("too few strides for the perturbation protocol");
    std::sort(plan.strides.begin(), plan.strides.end());
  }

  for (std::size_t i = 0; i < plan.strides.size(); ++i) {
    const int s = plan.strides[i];
    if (s < 0 || s >= cfg.n_strides) throw ConfigError("perturbed stride out of range");
    for (std::size_t k = 0; k < i; ++k)
      if (std::abs(plan.strides[k] - s) < 2)
        throw ConfigError("perturbed strides must not be consecutive");
  }

  if (!cfg.perturbation_kinds.empty()) {
    if (cfg.perturbation_kinds.size() != plan.strides.size())
      throw ConfigError("perturbation kinds and strides differ in count");
    plan.kinds = cfg.perturbation_kinds;
  } else {
    for (std::size_t i = 0; i < plan.strides.size(); ++i)
      plan.kinds.push_back(i < plan.strides.size() / 2 ? PerturbationKind::Forward
                                                        : PerturbationKind::Backward);
    std::mt19937_64 rng(cfg.seed ^ 0x3c6ef372fe94f82bULL);
    std::shuffle(plan.kinds.begin(), plan.kinds.end(), rng);
  }
  return plan;
}

namespace {

struct TickSample {
  double t_ms;
  double theta_sk;
  double bio;
  double f_des;
  double f_meas;
  Mode mode;
};

struct OpenStride {
  StrideMetrics m;
  bool has_fo = false;
  std::vector<TickSample> ticks;
  // Swing ticks between the true contact and its detection.
  std::vector<TickSample> swing_tail;
  std::vector<double> stance_t;
  std::vector<double> stance_sk;
};

struct ComparatorMap {
  StanceMap map;
  double period_s = 0.0;
  bool valid = false;
};

class Runner {
 public:
  Runner(const ScenarioConfig& cfg, bool keep_ticks)
      : cfg_(cfg),
        keep_ticks_(keep_ticks),
        tmpl_(cfg.gait_template()),
        amp_(cfg.amplitude()),
        plant_(tmpl_, cfg.plant, cfg.seed),
        controller_(cfg.controller, cfg.tendon, initial()),
        estimator_(initial(), cfg.update_gain, cfg.guard),
        detector_(cfg.detector),
        window_(cfg.window_capacity) {
    if (cfg.scenario == Scenario::Perturb) {
      plan_ = plan_perturbations(cfg);
      std::vector<PerturbationSpec> specs;
      for (std::size_t i = 0; i < plan_.strides.size(); ++i) {
        PerturbationSpec p = cfg.perturbation;
        p.kind = plan_.kinds[i];
        p.affected_cycles = {plan_.strides[i]};
        specs.push_back(p);
      }
      plant_.set_perturbations(std::move(specs));
    }
    if (cfg.scenario == Scenario::SpeedRamp) plant_.set_speed_ramp(cfg.resolved_speed_ramp());
    out_.report.param_history.push_back(estimator_.current());
  }

  RunOutput run();

 private:
  GaussianParams initial() const {
    GaussianParams p;
    p.amp = cfg_.amplitude();
    p.mu = cfg_.initial_mu;
    p.sigma1 = cfg_.initial_sigma1;
    p.sigma2 = cfg_.initial_sigma2;
    p.theta_fc = p.mu - 4.0 * p.sigma1;
    p.theta_fo = p.mu + 4.0 * p.sigma2;
    return p;
  }

  KinematicSample control_view(double t_ms) const;
  void on_imu(const KinematicSample& s);
  void on_contact(const GaitEvent& ev);
  void on_foot_off(const GaitEvent& ev);
  void finalize(OpenStride& st, double t_next_fc);
  void summarize();

  const ScenarioConfig& cfg_;
  bool keep_ticks_;
  GaitTemplate tmpl_;
  double amp_;
  Plant plant_;
  Controller controller_;
  ParamEstimator estimator_;
  EventDetector detector_;
  StanceWindow window_;
  StreamConditioner conditioner_;
  ImuCalibration calibration_;
  PerturbationPlan plan_;

  std::optional<KinematicSample> latest_;
  std::deque<KinematicSample> history_;
  std::optional<OpenStride> open_;
  ComparatorMap comparator_;
  bool estimate_pending_ = false;
  bool done_ = false;
  RunOutput out_;
};

KinematicSample Runner::control_view(double t_ms) const {
  if (!latest_) return make_sample({t_ms, 0.0, 0.0, 0.0, 0.0});
  if (!cfg_.extrapolate_imu) return *latest_;
  const double h = (t_ms - latest_->t_ms) / 1000.0;
  return make_sample({t_ms, latest_->theta_ft + latest_->theta_ft_rate * h,
                      latest_->theta_sk + latest_->theta_sk_rate * h, latest_->theta_ft_rate,
                      latest_->theta_sk_rate});
}

void Runner::on_imu(const KinematicSample& s) {
  history_.push_back(s);
  while (history_.size() > 64) history_.pop_front();
  window_.push(s, detector_.phase());
  const auto ev = detector_.update(s);
  if (!ev) return;
  if (ev->kind == EventKind::FootContact)
    on_contact(*ev);
  else
    on_foot_off(*ev);
}

void Runner::on_contact(const GaitEvent& ev) {
  std::vector<TickSample> carried;
  if (open_) {
    auto& old = open_->ticks;
    auto it = std::find_if(old.begin(), old.end(),
                           [&](const TickSample& k) { return k.t_ms >= ev.t_ms; });
    carried.assign(it, old.end());
    old.erase(it, old.end());
    for (const auto& k : carried)
      if (k.mode == Mode::Swing) open_->swing_tail.push_back(k);
    finalize(*open_, ev.t_ms);
    open_.reset();
  }

  std::optional<GaussianParams> handoff;
  if (estimate_pending_) handoff = estimator_.current();
  estimate_pending_ = false;
  controller_.on_event(ev, handoff);

  if (ev.gc_index >= cfg_.n_strides) {
    done_ = true;
    out_.report.completed = true;
    return;
  }

  for (const auto& s : history_)
    if (s.t_ms >= ev.t_ms) window_.push(s, GaitPhase::Stance);

  OpenStride st;
  st.m.stride = ev.gc_index;
  st.m.t_fc_ms = ev.t_ms;
  st.m.params = controller_.active_params();
  st.m.assisted = controller_.mode() == Mode::Stance;
  st.m.perturbed = plant_.stride_perturbed(ev.gc_index);
  for (std::size_t i = 0; i < plan_.strides.size(); ++i)
    if (plan_.strides[i] == ev.gc_index) st.m.perturbation = plan_.kinds[i];
  st.ticks = std::move(carried);
  open_ = std::move(st);
}

void Runner::on_foot_off(const GaitEvent& ev) {
  window_.truncate_after(ev.t_ms);
  out_.report.warnings.window_overflows += window_.overflow_count();
  const auto raw = extract_raw(window_);
  std::optional<UpdateOutcome> outcome;
  if (raw) {
    outcome = estimator_.update(*raw);
    if (*outcome != UpdateOutcome::Accepted) ++out_.report.warnings.updates_rejected;
    estimate_pending_ = true;
    out_.report.param_history.push_back(estimator_.current());
  } else {
    ++out_.report.warnings.estimation_skipped;
  }
  if (open_) {
    open_->has_fo = true;
    open_->m.t_fo_ms = ev.t_ms;
    open_->m.raw = raw;
    open_->m.update = outcome;
    open_->m.estimate = estimator_.current();
    open_->stance_t.assign(window_.t_ms().begin(), window_.t_ms().end());
    open_->stance_sk.assign(window_.theta_sk().begin(), window_.theta_sk().end());
  }
  window_.clear();
  controller_.on_event(ev);
}


void Runner::finalize(OpenStride& st, double t_next_fc) {
  StrideMetrics& m = st.m;
  m.period_s = (t_next_fc - m.t_fc_ms) / 1000.0;
  m.stance_ratio = st.has_fo ? (m.t_fo_ms - m.t_fc_ms) / (t_next_fc - m.t_fc_ms) : kNaN;
  if (!st.has_fo) m.estimate = estimator_.current();

  std::vector<double> des, act;
  double swing_max = -std::numeric_limits<double>::infinity();
  bool swung = false;
  const auto in_swing = [&](const TickSample& k) {
    if (k.mode != Mode::Swing || !st.has_fo || k.t_ms < m.t_fo_ms) return;
    swing_max = std::max(swing_max, k.f_meas);
    swung = true;
  };
  for (const auto& k : st.swing_tail) in_swing(k);
  for (const auto& k : st.ticks) {
    if (k.mode == Mode::Stance) {
      des.push_back(k.f_des);
      act.push_back(k.f_meas);
      m.f_des_peak = std::max(m.f_des_peak, k.f_des);
      m.f_meas_peak = std::max(m.f_meas_peak, k.f_meas);
    } else {
      in_swing(k);
    }
  }
  m.rmse_pct = m.assisted && !des.empty() ? rmse_pct(des, act, amp_) : kNaN;
  m.swing_max_force = swung ? swing_max : kNaN;

  m.pearson_shank = kNaN;
  m.pearson_time = kNaN;
  if (st.has_fo) {
    std::vector<double> x, mech, bio, timed;
    const double prev_period = comparator_.period_s;
    for (const auto& k : st.ticks) {
      if (k.t_ms < m.t_fc_ms || k.t_ms > m.t_fo_ms) continue;
      x.push_back(k.t_ms);
      mech.push_back(eval_force(m.params, k.theta_sk));
      bio.push_back(k.bio);
      if (comparator_.valid) {
        const double pct = (k.t_ms - m.t_fc_ms) / (1000.0 * prev_period);
        timed.push_back(eval_time_profile(m.params, pct, comparator_.map));
      }
    }
    if (x.size() >= 3) {
      try {
        m.pearson_shank = stance_correlation(x, mech, bio);
      } catch (const MetricError&) {
      }
      if (comparator_.valid) {
        try {
          m.pearson_time = stance_correlation(x, timed, bio);
        } catch (const MetricError&) {
        }
      }
    }
    if (!m.perturbed && st.stance_t.size() >= 2) {
      comparator_.map = make_stance_map(st.stance_t, st.stance_sk, m.t_fc_ms, m.period_s);
      comparator_.period_s = m.period_s;
      comparator_.valid = true;
    }
  }
  out_.report.strides.push_back(m);
}

RunOutput Runner::run() {
  const double dt = cfg_.dt_s;
  const double standing_ms = cfg_.standing_s * 1000.0;
  const double calib_ms = cfg_.calibration_s * 1000.0;
  const double walk_limit_ms =
      3.0 * (cfg_.n_strides + 3) * tmpl_.period_s * 1000.0 + 30000.0;

  std::vector<RawImuFrame> standing_frames;
  bool calibrated = false;
  double walk_start_ms = -1.0;
  bool spiked = false;
  std::size_t next_drop = 0;
  std::vector<double> drops = cfg_.fault.imu_drop_ms;
  std::sort(drops.begin(), drops.end());
  auto& rep = out_.report;

  for (long tick = 0;; ++tick) {
    const double t = plant_.t_ms();
    const bool walking = plant_.walking();

    if (walking && cfg_.fault.force_spike_n && !spiked &&
        t - walk_start_ms >= cfg_.fault.force_spike_t_ms) {
      plant_.inject_force_spike(*cfg_.fault.force_spike_n);
      spiked = true;
    }
    const KinematicSample truth = plant_.kinematics();
    const PlantReading rd = plant_.sense();

    if (tick % cfg_.imu_decimation == 0) {
      bool dropped = false;
      if (walking) {
        while (next_drop < drops.size() && drops[next_drop] < t - walk_start_ms - 0.5) ++next_drop;
        if (next_drop < drops.size() && std::abs(drops[next_drop] - (t - walk_start_ms)) <= 0.5) {
          dropped = true;
          ++next_drop;
        }
      }
      if (!dropped) {
        const RawImuFrame raw = plant_.imu_frame();
        for (const RawImuFrame& f : conditioner_.accept(raw)) {
          if (!calibrated) {
            standing_frames.push_back(f);
            latest_ = make_sample(f);
            continue;
          }
          const KinematicSample s = make_sample(calibration_.apply(f));
          latest_ = s;
          if (walking && !done_) on_imu(s);
        }
      }
    }
    if (!calibrated && t >= calib_ms) {
      calibration_ = ImuCalibration::from_standing(standing_frames);
      calibrated = true;
      if (latest_) latest_ = make_sample(calibration_.apply(standing_frames.back()));
    }

    VelocityCommand cmd{0.0, CommandSource::Hold};
    if (calibrated) {
      ControlInput in;
      in.kin = control_view(t);
      in.kin_fresh = latest_ && latest_->t_ms == t;
      in.f_meas = rd.f_meas;
      in.motor_pos = rd.motor_pos;
      in.motor_rate = rd.motor_rate;
      const bool was_aborted = controller_.aborted();
      cmd = controller_.tick(in, dt);
      if (!was_aborted && controller_.aborted()) {
        rep.aborted = true;
        rep.abort_t_ms = t;
        rep.abort_tick = static_cast<int>(tick);
        rep.abort_reason = rd.f_meas > cfg_.controller.force_ceiling ? "force_ceiling"
                                                                     : "position_limit";
      }
    }

    const bool perturbed_now = plant_.perturbation_active();
    if (open_) {
      TickSample k;
      k.t_ms = t;
      k.theta_sk = truth.theta_sk;
      k.bio = biological_torque(tmpl_, plant_.phase());
      k.f_des = controller_.mode() == Mode::Stance ? controller_.last_f_des() : 0.0;
      k.f_meas = rd.f_meas;
      k.mode = controller_.mode();
      open_->ticks.push_back(k);
    }
    if (keep_ticks_) {
      TickRecord r;
      r.t_ms = t;
      r.stride = open_ ? open_->m.stride : detector_.gc_index();
      r.mode = controller_.mode();
      r.theta_sk = truth.theta_sk;
      r.theta_ft = truth.theta_ft;
      r.theta_df = truth.theta_df;
      r.f_des = controller_.mode() == Mode::Stance ? controller_.last_f_des() : 0.0;
      r.f_meas = rd.f_meas;
      r.f_truth = rd.f_truth;
      r.l_cable = rd.l_cable;
      r.v_cmd = cmd.v;
      r.belt_scale = plant_.belt_scale();
      r.perturbed = perturbed_now;
      out_.ticks.push_back(r);
    }

    if (done_) break;
    if (rep.aborted && t - rep.abort_t_ms >= cfg_.post_abort_ms) break;
    if (walking && t - walk_start_ms > walk_limit_ms) {
      rep.failure = "stride limit not reached in time";
      break;
    }
    if (!walking && t > standing_ms + 10000.0) {
      rep.failure = "startup did not complete";
      break;
    }

    plant_.step(cmd, dt);

    if (!walking && calibrated && plant_.t_ms() >= standing_ms &&
        controller_.mode() == Mode::Silent &&
        controller_.l_meas(plant_.state().motor_pos) >=
            controller_.l_release() - 1.0) {
      walk_start_ms = plant_.t_ms();
      plant_.start_walking(tmpl_.stance_ratio + 0.6 * (1.0 - tmpl_.stance_ratio));
    }
  }

  rep.warnings.imu_frames_filled = conditioner_.filled_count();
  rep.warnings.controller = controller_.warnings();
  summarize();
  return std::move(out_);
}

void Runner::summarize() {
  auto& rep = out_.report;
  rep.activity = to_string(cfg_.activity);
  rep.scenario = to_string(cfg_.scenario);
  rep.n_strides = cfg_.n_strides;
  rep.seed = cfg_.seed;
  rep.amplitude_n = amp_;
  auto& agg = rep.aggregate;

  const StrideMetrics* last_raw = nullptr;
  for (const auto& s : rep.strides)
    if (s.raw && s.update == UpdateOutcome::Accepted) last_raw = &s;
  if (last_raw) {
    rep.final_targets = shape_targets(*last_raw->raw);
    agg.convergence_stride = convergence_stride(rep.param_history, rep.final_targets,
                                                cfg_.convergence_tol);
  }

  const double target = cfg_.controller.swing_target_force;
  for (const auto& s : rep.strides) {
    if (std::isnan(s.swing_max_force)) continue;
    if (agg.first_swing_stride == kNeverConverged) agg.first_swing_stride = s.stride;
  }
  for (auto it = rep.strides.rbegin(); it != rep.strides.rend(); ++it) {
    if (std::isnan(it->swing_max_force)) continue;
    if (std::abs(it->swing_max_force - target) > cfg_.swing_tolerance) break;
    agg.swing_convergence_stride = it->stride;
  }

  std::vector<const StrideMetrics*> pool;
  for (const auto& s : rep.strides) {
    if (!s.assisted || s.perturbed || std::isnan(s.rmse_pct)) continue;
    if (agg.convergence_stride != kNeverConverged && s.stride < agg.convergence_stride) continue;
    pool.push_back(&s);
  }
  const std::size_t keep = std::min<std::size_t>(pool.size(), cfg_.aggregate_strides);
  pool.erase(pool.begin(), pool.end() - static_cast<std::ptrdiff_t>(keep));

  std::vector<double> rmse, rs, rt, sw, sr;
  for (const auto* s : pool) {
    agg.strides_used.push_back(s->stride);
    rmse.push_back(s->rmse_pct);
    if (!std::isnan(s->pearson_shank)) rs.push_back(s->pearson_shank);
    if (!std::isnan(s->pearson_time)) rt.push_back(s->pearson_time);
    if (!std::isnan(s->swing_max_force)) sw.push_back(s->swing_max_force);
    if (!std::isnan(s->stance_ratio)) sr.push_back(s->stance_ratio);
  }
  agg.rmse_pct = mean_sd(rmse);
  agg.pearson_shank = mean_sd(rs);
  agg.pearson_time = mean_sd(rt);
  agg.swing_max_force = mean_sd(sw);
  agg.stance_ratio = mean_sd(sr);
}

}  // namespace

RunOutput simulate(const ScenarioConfig& cfg, bool keep_ticks) {
  cfg.validate();
  Runner r(cfg, keep_ticks);
  return r.run();
}

MetricsReport run_scenario(const ScenarioConfig& cfg) {
  const bool write = !cfg.out_dir.empty();
  RunOutput out = simulate(cfg, write);
  if (write) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    std::ofstream ts(dir / "timeseries.csv");
    if (!ts) throw ConfigError("cannot write timeseries.csv in " + cfg.out_dir);
    write_timeseries_csv(ts, out.ticks);
    std::ofstream js(dir / "summary.json");
    if (!js) throw ConfigError("cannot write summary.json in " + cfg.out_dir);
    write_summary_json(js, out.report);
  }
  return out.report;
}

namespace {

nlohmann::json params_json(const GaussianParams& p) {
  return {{"amp", p.amp},       {"mu", p.mu},           {"sigma1", p.sigma1},
          {"sigma2", p.sigma2}, {"theta_fc", p.theta_fc}, {"theta_fo", p.theta_fo}};
}

nlohmann::json mean_sd_json(const MeanSd& m) {
  return {{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}};
}

nlohmann::json stride_or_null(int s) {
  return s == kNeverConverged ? nlohmann::json(nullptr) : nlohmann::json(s);
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  using nlohmann::json;
  json strides = json::array();
  for (const auto& s : r.strides) {
    json e = {{"stride", s.stride},
              {"t_fc_ms", s.t_fc_ms},
              {"t_fo_ms", s.t_fo_ms},
              {"period_s", s.period_s},
              {"stance_ratio", s.stance_ratio},
              {"assisted", s.assisted},
              {"rmse_pct", s.rmse_pct},
              {"pearson_shank", s.pearson_shank},
              {"pearson_time", s.pearson_time},
              {"f_des_peak_n", s.f_des_peak},
              {"f_meas_peak_n", s.f_meas_peak},
              {"swing_max_force_n", s.swing_max_force},
              {"perturbed", s.perturbed},
              {"perturbation", s.perturbation ? json(to_string(*s.perturbation)) : json(nullptr)},
              {"params", params_json(s.params)},
              {"estimate", params_json(s.estimate)}};
    if (s.raw)
      e["raw"] = {{"theta_fc", s.raw->theta_fc},
                  {"theta_mdf", s.raw->theta_mdf},
                  {"theta_fo", s.raw->theta_fo}};
    else
      e["raw"] = nullptr;
    e["update"] = s.update ? json(to_string(*s.update)) : json(nullptr);
    strides.push_back(std::move(e));
  }

  const auto& a = r.aggregate;
  json agg = {{"rmse_pct", mean_sd_json(a.rmse_pct)},
              {"pearson_shank", mean_sd_json(a.pearson_shank)},
              {"pearson_time", mean_sd_json(a.pearson_time)},
              {"swing_max_force_n", mean_sd_json(a.swing_max_force)},
              {"stance_ratio", mean_sd_json(a.stance_ratio)},
              {"strides_used", a.strides_used},
              {"convergence_stride", stride_or_null(a.convergence_stride)},
              {"swing_convergence_stride", stride_or_null(a.swing_convergence_stride)},
              {"first_swing_stride", stride_or_null(a.first_swing_stride)}};

  const auto& w = r.warnings;
  json warnings = {{"window_overflows", w.window_overflows},
                   {"estimation_skipped", w.estimation_skipped},
                   {"updates_rejected", w.updates_rejected},
                   {"imu_frames_filled", w.imu_frames_filled},
                   {"out_of_order_events", w.controller.out_of_order_events},
                   {"missing_params", w.controller.missing_params},
                   {"invalid_params", w.controller.invalid_params},
                   {"migration_inconsistent", w.controller.migration_inconsistent}};

  return {{"activity", r.activity},
          {"scenario", r.scenario},
          {"n_strides", r.n_strides},
          {"seed", r.seed},
          {"amplitude_n", r.amplitude_n},
          {"completed", r.completed},
          {"aborted", r.aborted},
          {"abort_t_ms", r.aborted ? json(r.abort_t_ms) : json(nullptr)},
          {"abort_reason", r.aborted ? json(r.abort_reason) : json(nullptr)},
          {"failure", r.failure.empty() ? json(nullptr) : json(r.failure)},
          {"targets",
           {{"mu", r.final_targets.mu},
            {"sigma1", r.final_targets.sigma1},
            {"sigma2", r.final_targets.sigma2}}},
          {"aggregate", agg},
          {"warnings", warnings},
          {"strides", strides}};
}

void write_summary_json(std::ostream& out, const MetricsReport& r) {
  out << to_json(r).dump(2) << '\n';
}

void write_timeseries_csv(std::ostream& out, const std::vector<TickRecord>& ticks) {
  out << "t_ms,stride,mode,theta_sk_deg,theta_ft_deg,theta_df_deg,f_des_n,f_meas_n,f_truth_n,"
         "l_cable_mm,v_cmd_mm_s,belt_scale,perturbed\n";
  out.precision(10);
  for (const auto& r : ticks)
    out << r.t_ms << ',' << r.stride << ',' << to_string(r.mode) << ',' << r.theta_sk << ','
        << r.theta_ft << ',' << r.theta_df << ',' << r.f_des << ',' << r.f_meas << ','
        << r.f_truth << ',' << r.l_cable << ',' << r.v_cmd << ',' << r.belt_scale << ','
        << (r.perturbed ? 1 : 0) << '\n';
}

}  // namespace exo
