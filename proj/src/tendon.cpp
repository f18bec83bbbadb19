#include "exo/tendon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "exo/errors.hpp"

namespace exo {

bool TendonModel::valid() const {
  return std::isfinite(lever_arm_r) && std::isfinite(k_all) && std::isfinite(baseline_c) &&
         std::isfinite(delta_l1) && lever_arm_r > 0.0 && k_all > 0.0 && baseline_c > 0.0 &&
         delta_l1 >= 0.0;
}

void TendonModel::validate() const {
  if (!valid()) throw ParameterError("invalid tendon model");
}

double tendon_length(const TendonModel& m, double theta_df, double force) {
  m.validate();
  if (!(force >= 0.0)) throw ParameterError("cable force must be non-negative");
  return m.lever_arm_r * rad(theta_df) - force / m.k_all + (m.baseline_c - m.delta_l1);
}

MigrationEstimate estimate_migration(const TendonModel& m, double l_meas, double theta_df,
                                     double f_meas) {
  m.validate();
  MigrationEstimate e;
  e.raw = (m.baseline_c + m.lever_arm_r * rad(theta_df) - f_meas / m.k_all) - l_meas;
  if (!std::isfinite(e.raw) || e.raw < -kMigrationTolerance) {
    e.inconsistent = true;
    e.delta_l1 = m.delta_l1;
  } else {
    e.delta_l1 = std::max(0.0, e.raw);
  }
  return e;
}

MigrationEstimate update_migration(TendonModel& m, double l_meas, double theta_df, double f_meas) {
  const MigrationEstimate e = estimate_migration(m, l_meas, theta_df, f_meas);
  m.delta_l1 = e.delta_l1;
  return e;
}

StiffnessFit identify_stiffness(std::span<const ForceDeflection> samples,
                                const FitRequirements& req) {
  const std::size_t n = samples.size();
  if (n < std::max<std::size_t>(req.min_samples, 2))
    throw IdentificationError("too few samples for stiffness identification");

  double fmin = samples.front().force, fmax = fmin;
  double mx = 0.0, my = 0.0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.force) || !std::isfinite(s.deflection))
      throw IdentificationError("non-finite calibration sample");
    fmin = std::min(fmin, s.force);
    fmax = std::max(fmax, s.force);
    mx += s.deflection;
    my += s.force;
  }
  if (fmax - fmin < req.min_force_span)
    throw IdentificationError("calibration force range too narrow");
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& s : samples) {
    const double dx = s.deflection - mx;
    const double dy = s.force - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw IdentificationError("deflection has zero variance");

  StiffnessFit fit;
  fit.n = n;
  fit.k_all = sxy / sxx;
  fit.intercept = my - fit.k_all * mx;
  if (syy > 0.0) {
    double sse = 0.0;
    for (const auto& s : samples) {
      const double e = s.force - (fit.k_all * s.deflection + fit.intercept);
      sse += e * e;
    }
    fit.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  } else {
    fit.r_squared = 1.0;
  }
  return fit;
}

std::vector<ForceDeflection> read_force_deflection_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IdentificationError("empty calibration file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "force_n,deflection_mm")
    throw IdentificationError("unexpected calibration header: " + line);
  std::vector<ForceDeflection> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IdentificationError("expected 2 columns on line " + std::to_string(lineno));
    try {
      out.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    } catch (const std::exception&) {
      throw IdentificationError("bad number on line " + std::to_string(lineno));
    }
  }
  return out;
}

std::vector<ForceDeflection> read_force_deflection_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IdentificationError("cannot open " + path);
  return read_force_deflection_csv(in);
}

}  // namespace exo
