// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "exo/harness.hpp"
#include "exo/metrics.hpp"
#include "exo/profile.hpp"
#include "exo/tendon.hpp"
#include "oracles.hpp"

using namespace exo;

namespace {

constexpr Activity kAll[] = {Activity::LW, Activity::LR, Activity::RA, Activity::RD};

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MetricsReport run(Activity a, Scenario s) {
  ScenarioConfig c;
  c.activity = a;
  c.scenario = s;
  return simulate(c, false).report;
}

std::map<Activity, MetricsReport> steady_runs;
std::map<Activity, double> steady_seconds;

// Steady runs are shared by several criteria; each criterion that relies on
// one is charged its wall time.
const std::map<Activity, MetricsReport>& steady() {
  if (steady_runs.empty()) {
    for (Activity a : kAll) {
      const auto t0 = std::chrono::steady_clock::now();
      steady_runs[a] = run(a, Scenario::Steady);
      steady_seconds[a] = seconds_since(t0);
    }
  }
  return steady_runs;
}

GaussianParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(1.0, 300.0), mu(-10.0, 30.0), sig(1.0, 30.0);
  GaussianParams p;
  p.amp = amp(rng);
  p.mu = mu(rng);
  p.sigma1 = sig(rng);
  p.sigma2 = sig(rng);
  p.theta_fc = p.mu - 4.0 * p.sigma1;
  p.theta_fo = p.mu + 4.0 * p.sigma2;
  return p;
}

// True when double rounding in the residuals cannot move their ratio by 1e-10.
bool ratio_resolvable(double before, const GaussianParams& p, const ShapeTargets& t) {
  const double scale = std::max({std::abs(p.mu), std::abs(p.sigma1), std::abs(p.sigma2),
                                 std::abs(t.mu), std::abs(t.sigma1), std::abs(t.sigma2)});
  return before * 1e-10 >= 16.0 * std::numeric_limits<double>::epsilon() * scale;
}

double residual(const GaussianParams& p, const ShapeTargets& t) {
  return std::sqrt((p.mu - t.mu) * (p.mu - t.mu) + (p.sigma1 - t.sigma1) * (p.sigma1 - t.sigma1) +
                   (p.sigma2 - t.sigma2) * (p.sigma2 - t.sigma2));
}

Outcome equation_oracles() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_peak = 0.0, worst_2s = 0.0, worst_rate = 0.0;
  int rate_points = 0;
  for (int i = 0; i < 2000; ++i) {
    const GaussianParams p = random_params(rng);
    worst_peak = std::max(worst_peak, std::abs(eval_force(p, p.mu) - p.amp));
    const double e2 = p.amp * std::exp(-2.0);
    worst_2s = std::max(worst_2s, std::abs(eval_force(p, p.mu - 2.0 * p.sigma1) - e2) / e2);
    worst_2s = std::max(worst_2s, std::abs(eval_force(p, p.mu + 2.0 * p.sigma2) - e2) / e2);

    const double a = p.theta_fc + (p.theta_fo - p.theta_fc) * u(rng);
    const double b = 5.0 + 20.0 * u(rng), w = 2.0 + 6.0 * u(rng), t = u(rng);
    const auto theta = [&](double tt) { return a + b * std::sin(w * tt); };
    const double th = theta(t), h = 1e-6;
    if (std::abs(th - p.mu) < 1e-3 || th <= p.theta_fc + 1e-3 || th >= p.theta_fo - 1e-3) continue;
    const double fd = (eval_force(p, theta(t + h)) - eval_force(p, theta(t - h))) / (2.0 * h);
    const double an = eval_force_rate(p, th, b * w * std::cos(w * t));
    worst_rate = std::max(worst_rate, std::abs(an - fd) / std::max(1.0, std::abs(an)));
    ++rate_points;
  }
  o.require(worst_peak == 0.0, "F(mu) != A");
  o.require(worst_2s <= 1e-12, "F(mu +/- 2 sigma) off by " + fmt("%.2e", worst_2s));
  o.require(worst_rate < 1e-6, "rate vs finite difference " + fmt("%.2e", worst_rate));
  o.require(rate_points > 1000, "too few rate points");
  o.detail = o.pass ? "max rate rel err " + fmt("%.2e", worst_rate) : o.detail;
  return o;
}

Outcome estimator_convergence() {
  Outcome o;
  // Stationary features: the residual must contract by exactly 0.7 per stride.
  ParamEstimator est(initial_params(108.9));
  const RawStrideFeatures raw{-20.0, 8.0, 24.0};
  const ShapeTargets target = shape_targets(raw);
  std::vector<GaussianParams> hist{est.current()};
  double worst_ratio = 0.0;
  for (int n = 0; n < 25; ++n) {
    const double before = residual(est.current(), target);
    if (est.update(raw) != UpdateOutcome::Accepted) {
      o.require(false, "stationary update rejected");
      break;
    }
    hist.push_back(est.current());
    if (ratio_resolvable(before, est.current(), target))
      worst_ratio = std::max(worst_ratio, std::abs(residual(est.current(), target) / before - 0.7));
  }
  const int stationary = convergence_stride(hist, target, 0.05);
  o.require(stationary >= 9 && stationary <= 11, "stationary convergence " + std::to_string(stationary));

  // Closed loop: every accepted update contracts toward that stride's own targets.
  const MetricsReport& r = steady().at(Activity::LW);
  GaussianParams prev = r.param_history.front();
  int checked = 0;
  for (const auto& s : r.strides) {
    if (s.update != UpdateOutcome::Accepted || !s.raw) continue;
    const ShapeTargets t = shape_targets(*s.raw);
    const double before = residual(prev, t);
    if (ratio_resolvable(before, prev, t)) {
      worst_ratio = std::max(worst_ratio, std::abs(residual(s.estimate, t) / before - 0.7));
      ++checked;
    }
    prev = s.estimate;
  }
  o.require(checked >= 10, "only " + std::to_string(checked) + " closed-loop updates checked");
  o.require(steady_seconds.at(Activity::LW) < 5.0,
            "steady run took " + fmt("%.1f s", steady_seconds.at(Activity::LW)));
  o.require(worst_ratio <= 1e-9, "residual ratio off by " + fmt("%.2e", worst_ratio));
  std::string conv;
  for (Activity a : kAll) {
    const int c = steady().at(a).aggregate.convergence_stride;
    conv += std::string(" ") + to_string(a) + "=" + std::to_string(c);
    o.require(c >= 9 && c <= 11, std::string(to_string(a)) + " convergence " + std::to_string(c));
  }
  if (o.pass)
    o.detail = "convergence" + conv + ", ratio err " + fmt("%.1e", worst_ratio) + " over " +
               std::to_string(checked) + " updates";
  return o;
}

Outcome tracking_rmse() {
  Outcome o;
  const std::map<Activity, double> bound = {
      {Activity::LW, 0.035}, {Activity::LR, 0.09}, {Activity::RA, 0.05}, {Activity::RD, 0.065}};
  std::string d;
  for (Activity a : kAll) {
    const AggregateMetrics& g = steady().at(a).aggregate;
    d += std::string(" ") + to_string(a) + "=" + fmt("%.2f%%", 100.0 * g.rmse_pct.mean);
    o.require(g.rmse_pct.n == 10, std::string(to_string(a)) + " aggregated over " +
                                      std::to_string(g.rmse_pct.n) + " strides");
    o.require(g.rmse_pct.mean <= bound.at(a), std::string(to_string(a)) + " rmse " +
                                                  fmt("%.4f", g.rmse_pct.mean));
  }
  double total = 0.0;
  for (const auto& [a, secs] : steady_seconds) total += secs;
  o.require(total < 30.0, "steady runs took " + fmt("%.1f s", total));
  if (o.pass) o.detail = "rmse" + d;
  return o;
}

Outcome swing_regulation() {
  Outcome o;
  std::string d;
  for (Activity a : kAll) {
    const AggregateMetrics& g = steady().at(a).aggregate;
    const bool ok = g.swing_convergence_stride != kNeverConverged &&
                    g.first_swing_stride != kNeverConverged &&
                    g.swing_convergence_stride - g.first_swing_stride <= 5;
    const int took = ok ? g.swing_convergence_stride - g.first_swing_stride : -1;
    d += std::string(" ") + to_string(a) + "=" + std::to_string(took);
    o.require(ok, std::string(to_string(a)) + " swing force did not settle within 5 strides");
  }
  if (o.pass) o.detail = "strides to settle" + d;
  return o;
}

Outcome perturbation_robustness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double min_rs = 1.0, min_gap = 1.0;
  for (Activity a : kAll) {
    const MetricsReport r = run(a, Scenario::Perturb);
    const std::string name = to_string(a);
    o.require(r.completed && !r.aborted, name + " run incomplete");
    int perturbed = 0, backward = 0;
    for (const auto& s : r.strides) {
      if (s.perturbed) ++perturbed;
      if (!s.assisted) continue;
      min_rs = std::min(min_rs, s.pearson_shank);
      o.require(s.pearson_shank >= 0.90,
                name + " stride " + std::to_string(s.stride) + " r_shank " + fmt("%.3f", s.pearson_shank));
      if (s.perturbation == PerturbationKind::Backward) {
        ++backward;
        const double gap = s.pearson_shank - s.pearson_time;
        min_gap = std::min(min_gap, gap);
        o.require(gap >= 0.15, name + " backward stride " + std::to_string(s.stride) + " gap " + fmt("%.3f", gap));
      }
    }
    o.require(perturbed == 4, name + " has " + std::to_string(perturbed) + " perturbed strides");
    o.require(backward == 2, name + " has " + std::to_string(backward) + " assisted backward strides");
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "perturb runs took " + fmt("%.1f s", secs));
  if (o.pass) o.detail = "min r_shank " + fmt("%.3f", min_rs) + ", min backward gap " + fmt("%.3f", min_gap);
  return o;
}

Outcome time_reversal() {
  Outcome o;
  const GaitTemplate tmpl = default_template(Activity::LW);
  const GaussianParams p = initial_params(108.9);
  // Stance shank trace with a stall and a reversal in the middle.
  std::vector<double> theta;
  for (int i = 0; i < 800; ++i) {
    const double phase = tmpl.stance_ratio * i / 800.0;
    double th = eval_template(tmpl, phase).theta_sk;
    if (i > 200 && i < 260) th -= 0.05 * (i - 200);
    theta.push_back(th);
  }
  const auto points = [&](const std::vector<double>& trace) {
    std::vector<std::pair<double, double>> pts;
    for (double th : trace) pts.emplace_back(th, eval_force(p, th));
    std::sort(pts.begin(), pts.end());
    return pts;
  };
  const std::vector<double> reversed(theta.rbegin(), theta.rend());
  o.require(points(theta) == points(reversed), "point sets differ");
  if (o.pass) o.detail = std::to_string(theta.size()) + " points identical";
  return o;
}

Outcome tendon_identification() {
  Outcome o;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> ang(-30.0, 30.0), frc(0.0, 250.0), mig(0.0, 6.0);
  double worst_trip = 0.0;
  for (int i = 0; i < 5000; ++i) {
    TendonModel m;
    m.delta_l1 = mig(rng);
    const double th = ang(rng), f = frc(rng);
    const MigrationEstimate e = estimate_migration(m, tendon_length(m, th, f), th, f);
    worst_trip = std::max(worst_trip, std::abs(e.delta_l1 - m.delta_l1));
  }
  o.require(worst_trip < 1e-9, "round trip error " + fmt("%.2e", worst_trip));

  TendonModel m;
  std::vector<double> forces;
  for (int i = 0; i < 100; ++i) forces.push_back(5.0 + 1.75 * i);
  const StiffnessFit exact = identify_stiffness(testing::model_deflections(m, 4.0, forces, 0.0, 1));
  const double exact_err = std::abs(exact.k_all - 12.5) / 12.5;
  o.require(exact_err < 1e-9, "noiseless k error " + fmt("%.2e", exact_err));
  const StiffnessFit noisy = identify_stiffness(testing::model_deflections(m, 4.0, forces, 0.5, 2));
  const double noisy_err = std::abs(noisy.k_all - 12.5) / 12.5;
  o.require(noisy_err < 0.02, "noisy k error " + fmt("%.4f", noisy_err));

  const StiffnessFit loops =
      identify_stiffness(testing::calibration_loops(12.5, 10, 5.0, 180.0, 40.0, 0.5, 3));
  const double loop_err = std::abs(loops.k_all - 12.5) / 12.5;
  o.require(loop_err < 0.02, "loop k error " + fmt("%.4f", loop_err));
  o.require(loops.r_squared > 0.9 && loops.r_squared < 1.0, "loop R2 " + fmt("%.4f", loops.r_squared));
  if (o.pass)
    o.detail = "k noisy " + fmt("%.4f", noisy.k_all) + ", loops k " + fmt("%.4f", loops.k_all) +
               " R2 " + fmt("%.4f", loops.r_squared);
  return o;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism_and_safety() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / "exo_acceptance";
  std::vector<std::string> bodies;
  for (int i = 0; i < 2; ++i) {
    ScenarioConfig c;
    c.activity = Activity::RA;
    c.n_strides = 20;
    c.seed = 42;
    c.out_dir = (dir / ("run" + std::to_string(i))).string();
    run_scenario(c);
    bodies.push_back(read_file(std::filesystem::path(c.out_dir) / "summary.json"));
  }
  o.require(!bodies[0].empty() && bodies[0] == bodies[1], "summary.json differs between runs");
  std::filesystem::remove_all(dir);

  ScenarioConfig c;
  c.n_strides = 20;
  c.fault.force_spike_n = 400.0;
  c.fault.force_spike_t_ms = 9000.0;
  const RunOutput out = simulate(c, true);
  const auto& ticks = out.ticks;
  std::size_t spike = ticks.size();
  for (std::size_t i = 0; i < ticks.size(); ++i)
    if (ticks[i].f_meas == 400.0) {
      spike = i;
      break;
    }
  o.require(spike < ticks.size(), "spike never reached the controller");
  o.require(out.report.aborted, "no abort");
  if (spike < ticks.size() && out.report.aborted) {
    const auto abort_tick = static_cast<std::size_t>(out.report.abort_tick);
    o.require(abort_tick <= spike + 1 && abort_tick >= spike, "abort " + std::to_string(abort_tick - spike) + " ticks after spike");
    bool latched = true, still = true;
    for (std::size_t i = abort_tick; i < ticks.size(); ++i) {
      latched = latched && ticks[i].mode == Mode::Abort;
      still = still && ticks[i].v_cmd == 0.0;
    }
    o.require(latched, "abort not latched");
    o.require(still, "non-zero command after abort");
    o.require(ticks.size() - abort_tick > 100, "too few ticks after abort");
  }
  if (o.pass) o.detail = "summary bytes " + std::to_string(bodies[0].size()) + ", abort on spike tick";
  return o;
}

Outcome stance_ratio() {
  Outcome o;
  const std::map<Activity, double> target = {
      {Activity::LW, 0.674}, {Activity::LR, 0.514}, {Activity::RA, 0.683}, {Activity::RD, 0.691}};
  std::string d;
  for (Activity a : kAll) {
    const double sr = steady().at(a).aggregate.stance_ratio.mean;
    d += std::string(" ") + to_string(a) + "=" + fmt("%.1f", 100.0 * sr);
    o.require(std::abs(sr - target.at(a)) <= 0.02, std::string(to_string(a)) + " stance " + fmt("%.4f", sr));
  }
  if (o.pass) o.detail = "stance %GC" + d;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> fn;
    double budget_s;
  };
  const std::vector<Criterion> criteria = {
      {"1 equation oracles", equation_oracles, 1.0},
      {"2 estimator convergence", estimator_convergence, 5.0},
      {"3 steady tracking rmse", tracking_rmse, 30.0},
      {"4 swing force regulation", swing_regulation, 1.0},
      {"5 perturbation robustness", perturbation_robustness, 60.0},
      {"6 time reversal", time_reversal, 1.0},
      {"7 tendon round trip and identification", tendon_identification, 1.0},
      {"8 determinism and safety", determinism_and_safety, 30.0},
      {"9 detected stance ratio", stance_ratio, 1.0},
  };
  try {
    steady();
  } catch (const std::exception& e) {
    std::printf("steady runs failed: %s\n", e.what());
    return 1;
  }
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = seconds_since(t0);
    if (secs > c.budget_s) o.require(false, "runtime " + fmt("%.2f s", secs));
    std::printf("%s  %-40s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
