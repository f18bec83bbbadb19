#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "exo/controller.hpp"
#include "exo/errors.hpp"
#include "exo/plant.hpp"

using namespace exo;

namespace {

constexpr double kDt = 0.001;

GaitEvent contact(double t) { return {EventKind::FootContact, t, 0}; }
GaitEvent foot_off(double t) { return {EventKind::FootOff, t, 0}; }

Controller referenced(ControllerConfig cfg = {}) {
  Controller c(cfg, TendonModel{}, initial_params(108.9));
  c.complete_pretighten(5.0, 0.0, 0.0);
  return c;
}

// Walks a referenced controller through its silent strides into Swing.
void walk_to_swing(Controller& c) {
  double t = 0.0;
  for (int i = 0; i < c.config().silent_cycles + 1 && c.mode() != Mode::Swing; ++i) {
    c.on_event(contact(t += 100));
    c.on_event(foot_off(t += 600));
  }
  REQUIRE(c.mode() == Mode::Swing);
}

ControlInput input(double f, double motor_pos = 0.0) {
  ControlInput in;
  in.f_meas = f;
  in.motor_pos = motor_pos;
  return in;
}

}  // namespace

TEST_CASE("configuration validation") {
  ControllerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.map_b = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.position_min = 90.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pretighten retracts until the threshold force") {
  Controller c({}, TendonModel{}, initial_params(100.0));
  const VelocityCommand v = c.tick(input(1.0), kDt);
  CHECK(v.v == 20.0);
  CHECK(v.source == CommandSource::Pretighten);
  CHECK(c.mode() == Mode::Pretighten);
  const VelocityCommand h = c.tick(input(5.2, 3.0), kDt);
  CHECK(h.v == 0.0);
  CHECK(c.mode() == Mode::Silent);
  CHECK(c.pretightened());
  CHECK(c.l_meas(3.0) == doctest::Approx(300.0 - 5.2 / 12.5));
  CHECK(c.l_meas(4.0) == doctest::Approx(c.l_meas(3.0) - 1.0));
  CHECK_THROWS_AS(c.complete_pretighten(5.0, 0.0, 0.0), std::logic_error);
}

TEST_CASE("safety ceiling latches abort") {
  Controller c = referenced();
  CHECK(c.safety_check(100.0, 0.0) == SafetyStatus::Ok);
  CHECK(c.safety_check(300.0, 0.0) == SafetyStatus::Ok);
  CHECK(c.safety_check(301.0, 0.0) == SafetyStatus::Abort);
  CHECK(c.aborted());
  CHECK(c.safety_check(0.0, 0.0) == SafetyStatus::Abort);
  for (int i = 0; i < 100; ++i) {
    const VelocityCommand v = c.tick(input(0.0, 5.0 * i), kDt);
    CHECK(v.v == 0.0);
  }
  c.on_event(contact(0.0));
  CHECK(c.mode() == Mode::Abort);
}

TEST_CASE("position limits abort") {
  Controller c = referenced();
  CHECK(c.safety_check(0.0, 79.0) == SafetyStatus::Ok);
  CHECK(c.safety_check(0.0, 81.0) == SafetyStatus::Abort);
  Controller d = referenced();
  CHECK(d.safety_check(0.0, -81.0) == SafetyStatus::Abort);
  Controller e = referenced();
  CHECK(e.tick(input(std::nan("")), kDt).v == 0.0);
  CHECK(e.aborted());
}

TEST_CASE("silent strides never command stance force") {
  Controller c = referenced();
  double t = 0.0;
  for (int i = 0; i < c.config().silent_cycles; ++i) {
    c.on_event(contact(t += 100));
    CHECK(c.mode() == Mode::Silent);
    const VelocityCommand v = c.tick(input(0.0), kDt);
    CHECK(v.source == CommandSource::Release);
    CHECK(c.last_f_des() == 0.0);
    if (i + 1 < c.config().silent_cycles) {
      c.on_event(foot_off(t += 600));
      CHECK(c.mode() == Mode::Silent);
    }
  }
  c.on_event(foot_off(t += 600));
  CHECK(c.mode() == Mode::Swing);
  c.on_event(contact(t += 400));
  CHECK(c.mode() == Mode::Stance);
}

TEST_CASE("out-of-order events are counted and ignored") {
  Controller c = referenced();
  c.on_event(foot_off(10.0));
  CHECK(c.warnings().out_of_order_events == 1);
  CHECK(c.gc_count() == 0);
  c.on_event(contact(20.0));
  c.on_event(contact(30.0));
  CHECK(c.warnings().out_of_order_events == 2);
  CHECK(c.gc_count() == 1);
}

TEST_CASE("integral resets at every contact") {
  ControllerConfig cfg;
  cfg.ki = 1.0;
  Controller c = referenced(cfg);
  walk_to_swing(c);
  for (int i = 0; i < 200; ++i) c.tick(input(0.0, 30.0), kDt);
  CHECK(c.integral() != 0.0);
  c.on_event(contact(1e5));
  CHECK(c.integral() == 0.0);
}

TEST_CASE("swing length follows the force recurrence") {
  Controller c = referenced();
  walk_to_swing(c);
  const double start = c.l_swing();
  c.on_event(contact(1e4));
  c.on_event(foot_off(1e4 + 700));
  CHECK(c.l_swing() == doctest::Approx(start + (0.0 - 3.0) / 12.5));

  const double before = c.l_swing();
  c.tick(input(7.0), kDt);
  c.tick(input(5.0), kDt);
  c.on_event(contact(2e4));
  CHECK(c.last_swing_force_max() == 7.0);
  c.on_event(foot_off(2e4 + 700));
  CHECK(c.l_swing() == doctest::Approx(before + (7.0 - 3.0) / 12.5));
}

TEST_CASE("migration is estimated on a measured frame only") {
  Controller c = referenced();
  walk_to_swing(c);
  c.on_event(contact(1e4));
  REQUIRE(c.mode() == Mode::Stance);
  const double before = c.tendon().delta_l1;
  ControlInput in = input(10.0);
  in.kin.theta_df = 10.0;
  in.kin_fresh = false;
  for (int i = 0; i < 9; ++i) c.tick(in, kDt);
  CHECK(c.tendon().delta_l1 == before);
  in.kin_fresh = true;
  c.tick(in, kDt);
  CHECK(c.tendon().delta_l1 != before);
  CHECK(c.warnings().migration_inconsistent == 0);
}

TEST_CASE("swing PI drives toward the swing length") {
  Controller c = referenced();
  walk_to_swing(c);
  // Cable longer than the target: retract.
  const VelocityCommand v = c.tick_swing(c.l_swing() + 2.0, 0.0, kDt);
  CHECK(v.source == CommandSource::SwingPI);
  CHECK(v.v > 0.0);
  CHECK(v.v == doctest::Approx(23.0 * 2.0 + 0.0001 * 2.0 * kDt).epsilon(1e-12));
  CHECK(c.tick_swing(c.l_swing() - 1.0, 0.0, kDt).v < 0.0);
  CHECK(c.tick_swing(c.l_swing(), -10.0, kDt).v == doctest::Approx(-18.0).epsilon(1e-6));
  CHECK(c.tick_swing(c.l_swing() + 1e3, 0.0, kDt).v == 250.0);
}

TEST_CASE("stance law combines feedback and feedforward") {
  Controller c = referenced();
  walk_to_swing(c);
  c.on_event(contact(1e5));
  REQUIRE(c.mode() == Mode::Stance);
  const GaussianParams& p = c.active_params();
  KinematicSample k;
  k.theta_sk = 5.0;
  k.theta_sk_rate = 80.0;
  k.theta_df_rate = 40.0;
  const double f_des = eval_force(p, 5.0);
  const VelocityCommand v = c.tick_stance(k, f_des - 15.7, kDt);
  const double v_ff = 100.0 * rad(40.0) - eval_force_rate(p, 5.0, 80.0) / 12.5;
  CHECK(v.source == CommandSource::StanceFBFF);
  CHECK(v.v == doctest::Approx(1.0 - v_ff).epsilon(1e-12));
  CHECK(c.last_f_des() == f_des);
  CHECK_THROWS_AS(c.tick_swing(300.0, 0.0, kDt), std::logic_error);
}

TEST_CASE("mode laws are never mixed and swing length holds between foot-offs") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> action(0, 9);
  std::uniform_real_distribution<double> f(0.0, 60.0);
  for (int trial = 0; trial < 50; ++trial) {
    Controller c = referenced();
    double t = 0.0;
    for (int i = 0; i < 5000; ++i) {
      const int a = action(rng);
      const double ls = c.l_swing();
      if (a == 0) c.on_event(contact(t));
      if (a == 1) c.on_event(foot_off(t));
      t += 1.0;
      ControlInput in = input(f(rng));
      in.kin.theta_sk = f(rng) - 30.0;
      const Mode m = c.mode();
      const VelocityCommand v = c.tick(in, kDt);
      // Only foot-off moves the swing length.
      if (a != 1) CHECK(c.l_swing() == ls);
      if (m == Mode::Swing) CHECK(v.source == CommandSource::SwingPI);
      if (m == Mode::Stance) CHECK(v.source == CommandSource::StanceFBFF);
      if (m == Mode::Silent) CHECK(v.source == CommandSource::Release);
      if (m != Mode::Stance) CHECK(v.source != CommandSource::StanceFBFF);
      if (m == Mode::Swing) CHECK_THROWS_AS(c.tick_stance(in.kin, 0.0, kDt), std::logic_error);
      if (m == Mode::Stance) CHECK_THROWS_AS(c.tick_swing(300.0, 0.0, kDt), std::logic_error);
    }
  }
}

TEST_CASE("retracting a taut cable never lowers force") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PlantConfig cfg;
  cfg.motor_tau_s = 0.0;
  for (int i = 0; i < 2000; ++i) {
    PlantState s;
    const double df = -20.0 + 40.0 * u(rng);
    const double taut = cfg.truth.lever_arm_r * rad(df) + cfg.truth.baseline_c;
    s.l_cable = taut - 10.0 * u(rng);
    const double before = cable_force(cfg, s, df);
    step_motor(s, {250.0 * u(rng), CommandSource::StanceFBFF}, cfg, kDt);
    CHECK(cable_force(cfg, s, df) >= before);
  }
}

TEST_CASE("feedforward tracks on an ideal plant") {
  // No lag, no saturation, exact force, plant stiffness equal to the model's.
  PlantConfig pc;
  pc.motor_tau_s = 0.0;
  pc.v_max = 1e9;
  ControllerConfig cc;
  cc.v_envelope = 1e9;
  const GaitTemplate tmpl = default_template(Activity::LW);

  Controller c(cc, pc.truth, initial_params(108.9));
  c.complete_pretighten(5.0, 0.0, 0.0);
  walk_to_swing(c);
  c.on_event(contact(1e5));
  REQUIRE(c.mode() == Mode::Stance);

  // The cable starts at the desired force, so no pretension transient remains.
  PlantState s;
  const KinematicSample k0 = gen_frame(tmpl, 0.0, 1.0);
  s.l_cable = pc.truth.lever_arm_r * rad(k0.theta_df) + pc.truth.baseline_c -
              eval_force(c.active_params(), k0.theta_sk) / pc.truth.k_all;
  const int n = static_cast<int>(tmpl.stance_ratio * tmpl.period_s / kDt);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const double phase = i * kDt / tmpl.period_s;
    const KinematicSample k = gen_frame(tmpl, phase, 1.0);
    const double f = cable_force(pc, s, k.theta_df);
    const VelocityCommand v = c.tick_stance(k, f, kDt);
    if (i > 0) worst = std::max(worst, std::abs(c.last_f_des() - f));
    step_motor(s, v, pc, kDt);
  }
  CHECK(worst < 0.5);
}
