#include "exo/profile.hpp"

#include <algorithm>
#include <cmath>

#include "exo/errors.hpp"

namespace exo {

namespace {

bool finite(const GaussianParams& p) {
  return std::isfinite(p.amp) && std::isfinite(p.mu) && std::isfinite(p.sigma1) &&
         std::isfinite(p.sigma2) && std::isfinite(p.theta_fc) && std::isfinite(p.theta_fo);
}

bool inside_support(const GaussianParams& p, double theta) {
  return theta > p.theta_fc && theta < p.theta_fo;
}

}  // namespace

bool GaussianParams::valid() const {
  return finite(*this) && amp > 0.0 && sigma1 > 0.0 && sigma2 > 0.0 && theta_fc < mu &&
         mu < theta_fo;
}

void GaussianParams::validate() const {
  if (!valid()) throw ParameterError("invalid Gaussian profile parameters");
}

GaussianParams initial_params(double amp) {
  GaussianParams p;
  p.amp = amp;
  p.mu = 15.0;
  p.sigma1 = 10.0;
  p.sigma2 = 5.0;
  p.theta_fc = p.mu - 4.0 * p.sigma1;
  p.theta_fo = p.mu + 4.0 * p.sigma2;
  return p;
}

double eval_force(const GaussianParams& p, double theta) {
  p.validate();
  if (!inside_support(p, theta)) return 0.0;
  const double s = theta <= p.mu ? p.sigma1 : p.sigma2;
  const double d = theta - p.mu;
  return p.amp * std::exp(-d * d / (2.0 * s * s));
}

double eval_force_rate(const GaussianParams& p, double theta, double theta_rate) {
  p.validate();
  if (!inside_support(p, theta)) return 0.0;
  const double s = theta <= p.mu ? p.sigma1 : p.sigma2;
  const double d = theta - p.mu;
  return p.amp * std::exp(-d * d / (2.0 * s * s)) * (-d / (s * s)) * theta_rate;
}

std::optional<RawStrideFeatures> extract_raw(std::span<const double> theta_sk,
                                             std::span<const double> theta_df,
                                             std::size_t min_samples) {
  if (theta_sk.size() != theta_df.size()) throw ParameterError("window buffers differ in length");
  if (theta_sk.size() < std::max<std::size_t>(min_samples, 1)) return std::nullopt;
  // max_element returns the first of equal maxima.
  const auto peak = std::max_element(theta_df.begin(), theta_df.end());
  const auto idx = static_cast<std::size_t>(peak - theta_df.begin());
  return RawStrideFeatures{theta_sk.front(), theta_sk[idx], theta_sk.back()};
}

std::optional<RawStrideFeatures> extract_raw(const StanceWindow& w, std::size_t min_samples) {
  const std::vector<double> sk(w.theta_sk().begin(), w.theta_sk().end());
  const std::vector<double> df(w.theta_df().begin(), w.theta_df().end());
  return extract_raw(sk, df, min_samples);
}

ShapeTargets shape_targets(const RawStrideFeatures& raw) {
  return {raw.theta_mdf, (raw.theta_mdf - raw.theta_fc) / 4.0,
          (raw.theta_fo - raw.theta_mdf) / 4.0};
}

const char* to_string(UpdateOutcome o) {
  switch (o) {
    case UpdateOutcome::Accepted: return "accepted";
    case UpdateOutcome::BadOrdering: return "bad_ordering";
    case UpdateOutcome::OutOfBounds: return "out_of_bounds";
    case UpdateOutcome::NonFinite: return "non_finite";
  }
  return "?";
}

UpdateResult propose_update(const GaussianParams& current, const RawStrideFeatures& raw,
                            double gain, const UpdateGuard& guard) {
  UpdateResult r{current, UpdateOutcome::Accepted};
  if (!std::isfinite(raw.theta_fc) || !std::isfinite(raw.theta_mdf) ||
      !std::isfinite(raw.theta_fo)) {
    r.outcome = UpdateOutcome::NonFinite;
    return r;
  }
  if (!(raw.theta_fc < raw.theta_mdf && raw.theta_mdf < raw.theta_fo)) {
    r.outcome = UpdateOutcome::BadOrdering;
    return r;
  }

  const ShapeTargets t = shape_targets(raw);
  const double d_mu = t.mu - current.mu;
  const double d_s1 = t.sigma1 - current.sigma1;
  const double d_s2 = t.sigma2 - current.sigma2;

  GaussianParams next = current;
  next.mu = current.mu + gain * d_mu;
  next.sigma1 = current.sigma1 + gain * d_s1;
  next.sigma2 = current.sigma2 + gain * d_s2;
  next.theta_fc = raw.theta_fc;
  next.theta_fo = raw.theta_fo;

  const auto sigma_ok = [&](double s) { return s >= guard.sigma_min && s <= guard.sigma_max; };
  const bool ok = std::abs(d_mu) <= guard.max_dmu && std::abs(d_s1) <= guard.max_dsigma &&
                  std::abs(d_s2) <= guard.max_dsigma && sigma_ok(next.sigma1) &&
                  sigma_ok(next.sigma2) && next.valid();
  if (!ok) {
    r.outcome = UpdateOutcome::OutOfBounds;
    return r;
  }
  r.params = next;
  return r;
}

ParamEstimator::ParamEstimator(GaussianParams initial, double gain, UpdateGuard guard)
    : current_(initial), gain_(gain), guard_(guard) {
  initial.validate();
  if (!(gain > 0.0 && gain <= 1.0)) throw ParameterError("update gain must be in (0, 1]");
}

UpdateOutcome ParamEstimator::update(const RawStrideFeatures& raw) {
  const UpdateResult r = propose_update(current_, raw, gain_, guard_);
  if (r.outcome == UpdateOutcome::Accepted) {
    current_ = r.params;
    ++accepted_;
  } else {
    ++rejected_;
  }
  return r.outcome;
}

StanceMap make_stance_map(std::span<const double> t_ms, std::span<const double> theta_sk,
                          double t_contact_ms, double period_s) {
  if (t_ms.size() != theta_sk.size()) throw ParameterError("stance map series differ in length");
  if (!(period_s > 0.0)) throw ParameterError("stride period must be positive");
  StanceMap m;
  m.pct_gc.reserve(t_ms.size());
  m.theta_sk.assign(theta_sk.begin(), theta_sk.end());
  for (double t : t_ms) m.pct_gc.push_back((t - t_contact_ms) / (1000.0 * period_s));
  for (std::size_t i = 1; i < m.pct_gc.size(); ++i)
    if (!(m.pct_gc[i] > m.pct_gc[i - 1])) throw ParameterError("stance map must be increasing");
  return m;
}

double eval_time_profile(const GaussianParams& p, double pct_gc, const StanceMap& prev) {
  if (prev.empty()) return 0.0;
  const auto& x = prev.pct_gc;
  const auto& y = prev.theta_sk;
  if (pct_gc < x.front() || pct_gc > x.back()) return 0.0;
  if (x.size() == 1) return eval_force(p, y.front());
  auto hi = std::lower_bound(x.begin(), x.end(), pct_gc);
  if (hi == x.begin()) return eval_force(p, y.front());
  const auto i = static_cast<std::size_t>(hi - x.begin());
  const double w = (pct_gc - x[i - 1]) / (x[i] - x[i - 1]);
  return eval_force(p, y[i - 1] + w * (y[i] - y[i - 1]));
}

}  // namespace exo
