#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "exo/errors.hpp"
#include "exo/gait_signals.hpp"
#include "exo/harness.hpp"
#include "exo/profile.hpp"
#include "exo/tendon.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& activity,
            const std::string& scenario, int strides, std::uint64_t seed, double amp, double bw,
            const std::string& out, const CLI::App& sub) {
  exo::ScenarioConfig cfg;
  // The activity is fixed first so gait overrides start from its template.
  if (sub.count("--activity")) cfg.activity = exo::parse_activity(activity);
  if (!config_path.empty()) cfg = exo::load_config_file(config_path, cfg);
  // Flags given on the command line win over the config file.
  if (sub.count("--activity")) cfg.activity = exo::parse_activity(activity);
  if (sub.count("--scenario")) cfg.scenario = exo::parse_scenario(scenario);
  if (sub.count("--strides")) cfg.n_strides = strides;
  if (sub.count("--seed")) cfg.seed = seed;
  if (sub.count("--amp")) cfg.amp_fraction = amp;
  if (sub.count("--bw-n")) cfg.body_weight_n = bw;
  if (sub.count("--out")) cfg.out_dir = out;

  const exo::MetricsReport rep = exo::run_scenario(cfg);
  const auto& a = rep.aggregate;
  std::printf("%s %s strides=%d seed=%llu A=%.1f N\n", rep.activity.c_str(),
              rep.scenario.c_str(), rep.n_strides, static_cast<unsigned long long>(rep.seed),
              rep.amplitude_n);
  std::printf("  rmse_pct      %.4f +/- %.4f (n=%zu)\n", a.rmse_pct.mean, a.rmse_pct.sd,
              a.rmse_pct.n);
  std::printf("  r_shank       %.4f +/- %.4f\n", a.pearson_shank.mean, a.pearson_shank.sd);
  std::printf("  r_time        %.4f +/- %.4f\n", a.pearson_time.mean, a.pearson_time.sd);
  std::printf("  swing max     %.3f +/- %.3f N\n", a.swing_max_force.mean, a.swing_max_force.sd);
  std::printf("  stance ratio  %.4f\n", a.stance_ratio.mean);
  std::printf("  convergence   %d\n", a.convergence_stride);
  if (rep.aborted)
    std::printf("  ABORTED at %.0f ms (%s)\n", rep.abort_t_ms, rep.abort_reason.c_str());
  if (!rep.failure.empty()) std::printf("  FAILURE: %s\n", rep.failure.c_str());
  return rep.aborted || !rep.completed ? 2 : 0;
}

int cmd_replay(const std::string& path, double calib_s) {
  auto frames = exo::read_kinematics_csv(path);
  exo::StreamConditioner cond;
  exo::EventDetector det;
  exo::StanceWindow window;
  exo::ParamEstimator est(exo::initial_params(1.0));
  exo::ImuCalibration cal;
  if (calib_s > 0.0 && !frames.empty()) {
    std::vector<exo::RawImuFrame> standing;
    for (const auto& f : frames)
      if (f.t_ms - frames.front().t_ms < calib_s * 1000.0) standing.push_back(f);
    cal = exo::ImuCalibration::from_standing(standing);
  }

  nlohmann::json events = nlohmann::json::array();
  for (const auto& raw : frames) {
    for (const auto& f : cond.accept(raw)) {
      const auto s = exo::make_sample(cal.apply(f));
      window.push(s, det.phase());
      const auto ev = det.update(s);
      if (!ev) continue;
      nlohmann::json e = {{"kind", exo::to_string(ev->kind)},
                          {"t_ms", ev->t_ms},
                          {"gc_index", ev->gc_index}};
      if (ev->kind == exo::EventKind::FootOff) {
        window.truncate_after(ev->t_ms);
        if (const auto r = exo::extract_raw(window)) {
          e["update"] = exo::to_string(est.update(*r));
          e["mu"] = est.current().mu;
          e["sigma1"] = est.current().sigma1;
          e["sigma2"] = est.current().sigma2;
        }
        window.clear();
      }
      events.push_back(std::move(e));
    }
  }
  std::cout << nlohmann::json{{"events", events}, {"filled_samples", cond.filled_count()}}.dump(2)
            << '\n';
  return 0;
}

int cmd_identify(const std::string& path) {
  const auto samples = exo::read_force_deflection_csv(path);
  const exo::StiffnessFit fit = exo::identify_stiffness(samples);
  std::printf("k_all      %.6f N/mm\nintercept  %.6f N\nr_squared  %.6f\nsamples    %zu\n",
              fit.k_all, fit.intercept, fit.r_squared, fit.n);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shank-angle exosuit controller simulator"};
  app.require_subcommand(1);

  std::string activity = "lw", scenario = "steady", out, config;
  int strides = 60;
  std::uint64_t seed = 1;
  double amp = 0.15;
  double bw = 726.0;
  auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
  run->add_option("--activity", activity, "lw|lr|ra|rd")
      ->check(CLI::IsMember({"lw", "lr", "ra", "rd"}));
  run->add_option("--scenario", scenario, "steady|perturb|speed-ramp")
      ->check(CLI::IsMember({"steady", "perturb", "speed-ramp"}));
  run->add_option("--strides", strides, "Number of strides")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "RNG seed");
  std::string amp_text = "0.15";
  run->add_option("--amp", amp_text, "Peak force as a fraction of body weight")
      ->check(CLI::IsMember({"0.15", "0.20", "0.2"}));
  run->add_option("--bw-n", bw, "Body weight (N)")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Output directory");
  run->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);

  std::string replay_path;
  double calib_s = 0.0;
  auto* replay = app.add_subcommand("replay", "Detect events and estimate params from a CSV");
  replay->add_option("file", replay_path, "Kinematics CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--calibrate-s", calib_s, "Standing period at the start of the file (s)");

  std::string identify_path;
  auto* identify = app.add_subcommand("identify", "Fit coupled stiffness from a calibration CSV");
  identify->add_option("file", identify_path, "force_n,deflection_mm CSV")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  amp = std::stod(amp_text);

  try {
    if (*run) return cmd_run(config, activity, scenario, strides, seed, amp, bw, out, *run);
    if (*replay) return cmd_replay(replay_path, calib_s);
    if (*identify) return cmd_identify(identify_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
