#include "exo/gait_signals.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "exo/errors.hpp"

namespace exo {

namespace {

bool all_finite(std::initializer_list<double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

constexpr const char* kKinematicsHeader =
    "t_ms,theta_ft_deg,theta_sk_deg,theta_ft_rate_dps,theta_sk_rate_dps";

}  // namespace

AnkleChannel derive_df(double theta_sk, double theta_ft, double theta_sk_rate,
                       double theta_ft_rate) {
  if (!all_finite({theta_sk, theta_ft, theta_sk_rate, theta_ft_rate}))
    throw SignalError("non-finite segment angle or rate");
  return {theta_sk + theta_ft, theta_sk_rate + theta_ft_rate};
}

KinematicSample make_sample(const RawImuFrame& f) {
  if (!std::isfinite(f.t_ms)) throw SignalError("non-finite timestamp");
  const AnkleChannel df = derive_df(f.theta_sk, f.theta_ft, f.theta_sk_rate, f.theta_ft_rate);
  KinematicSample s;
  s.t_ms = f.t_ms;
  s.theta_ft = f.theta_ft;
  s.theta_sk = f.theta_sk;
  s.theta_df = df.angle;
  s.theta_ft_rate = f.theta_ft_rate;
  s.theta_sk_rate = f.theta_sk_rate;
  s.theta_df_rate = df.rate;
  return s;
}

ImuCalibration ImuCalibration::from_standing(std::span<const RawImuFrame> frames) {
  if (frames.empty()) throw SignalError("no standing frames for calibration");
  double ft = 0.0, sk = 0.0;
  for (const auto& f : frames) {
    if (!all_finite({f.theta_ft, f.theta_sk})) throw SignalError("non-finite standing frame");
    ft += f.theta_ft;
    sk += f.theta_sk;
  }
  const double n = static_cast<double>(frames.size());
  return {ft / n, sk / n};
}

RawImuFrame ImuCalibration::apply(const RawImuFrame& raw) const {
  RawImuFrame out = raw;
  out.theta_ft -= ft_offset;
  out.theta_sk -= sk_offset;
  return out;
}

StreamConditioner::StreamConditioner(double period_ms, int max_missing)
    : period_ms_(period_ms), max_missing_(max_missing) {
  if (!(period_ms > 0.0)) throw ParameterError("sample period must be positive");
  if (max_missing < 0) throw ParameterError("max_missing must be non-negative");
}

void StreamConditioner::reset() {
  last_.reset();
  before_last_.reset();
  filled_ = 0;
}

std::vector<RawImuFrame> StreamConditioner::accept(const RawImuFrame& frame) {
  if (!all_finite({frame.t_ms, frame.theta_ft, frame.theta_sk, frame.theta_ft_rate,
                   frame.theta_sk_rate}))
    throw SignalError("non-finite IMU frame");
  std::vector<RawImuFrame> out;
  if (last_) {
    const double dt = frame.t_ms - last_->t_ms;
    if (!(dt > 0.0)) throw SignalError("timestamps must strictly increase");
    const long steps = std::lround(dt / period_ms_);
    const long missing = steps - 1;
    if (missing > max_missing_)
      throw SignalLossError("IMU gap of " + std::to_string(missing) + " samples");
    for (long i = 1; i <= missing; ++i) {
      RawImuFrame f = *last_;
      f.t_ms = last_->t_ms + static_cast<double>(i) * period_ms_;
      if (before_last_) {
        // Linear extrapolation from the last two real frames.
        const double span = last_->t_ms - before_last_->t_ms;
        const double w = (f.t_ms - last_->t_ms) / span;
        f.theta_ft = last_->theta_ft + w * (last_->theta_ft - before_last_->theta_ft);
        f.theta_sk = last_->theta_sk + w * (last_->theta_sk - before_last_->theta_sk);
        f.theta_ft_rate =
            last_->theta_ft_rate + w * (last_->theta_ft_rate - before_last_->theta_ft_rate);
        f.theta_sk_rate =
            last_->theta_sk_rate + w * (last_->theta_sk_rate - before_last_->theta_sk_rate);
      }
      out.push_back(f);
      ++filled_;
    }
  }
  out.push_back(frame);
  before_last_ = last_;
  last_ = frame;
  return out;
}

const char* to_string(EventKind kind) {
  return kind == EventKind::FootContact ? "FootContact" : "FootOff";
}

const char* to_string(GaitPhase phase) {
  return phase == GaitPhase::Stance ? "Stance" : "Swing";
}

EventDetector::EventDetector(DetectorConfig cfg)
    : cfg_(cfg), refractory_until_ms_(-std::numeric_limits<double>::infinity()) {
  if (!(cfg_.angle_hysteresis_deg > 0.0) || !(cfg_.rate_hysteresis_dps > 0.0))
    throw ParameterError("hysteresis must be positive");
  if (cfg_.refractory_ms < 0.0) throw ParameterError("refractory period must be >= 0");
}

void EventDetector::reset() {
  phase_ = GaitPhase::Swing;
  gc_index_ = -1;
  refractory_until_ms_ = -std::numeric_limits<double>::infinity();
  restart_seek();
}

void EventDetector::restart_seek() {
  armed_ = false;
  tracking_ = false;
}

std::optional<GaitEvent> EventDetector::update(const KinematicSample& s) {
  if (s.t_ms < refractory_until_ms_) return std::nullopt;

  // Both seekers are written as maximum seekers; the foot-off seeker works on
  // the negated rate so that its minimum becomes a maximum.
  const bool swing = phase_ == GaitPhase::Swing;
  const double x = swing ? s.theta_ft : -s.theta_ft_rate;
  const double band = swing ? cfg_.angle_hysteresis_deg : cfg_.rate_hysteresis_dps;

  if (!tracking_) {
    tracking_ = true;
    anchor_ = x;
  }

  if (!armed_) {
    if (x < anchor_) anchor_ = x;
    if (x - anchor_ >= band) {
      armed_ = true;
      extreme_ = x;
      extreme_t_ms_ = s.t_ms;
    }
    return std::nullopt;
  }

  if (x > extreme_) {
    extreme_ = x;
    extreme_t_ms_ = s.t_ms;
    return std::nullopt;
  }
  if (extreme_ - x < band) return std::nullopt;

  GaitEvent ev;
  ev.t_ms = extreme_t_ms_;
  if (swing) {
    ev.kind = EventKind::FootContact;
    ++gc_index_;
    phase_ = GaitPhase::Stance;
  } else {
    ev.kind = EventKind::FootOff;
    phase_ = GaitPhase::Swing;
  }
  ev.gc_index = gc_index_;
  refractory_until_ms_ = s.t_ms + cfg_.refractory_ms;
  restart_seek();
  return ev;
}

StanceWindow::StanceWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ParameterError("stance window capacity must be positive");
}

void StanceWindow::push(const KinematicSample& s, GaitPhase phase) {
  if (phase != GaitPhase::Stance) return;
  if (theta_sk_.size() == capacity_) {
    theta_sk_.pop_front();
    theta_df_.pop_front();
    t_ms_.pop_front();
    ++overflows_;
  }
  theta_sk_.push_back(s.theta_sk);
  theta_df_.push_back(s.theta_df);
  t_ms_.push_back(s.t_ms);
}

void StanceWindow::truncate_after(double t_ms) {
  while (!t_ms_.empty() && t_ms_.back() > t_ms) {
    theta_sk_.pop_back();
    theta_df_.pop_back();
    t_ms_.pop_back();
  }
}

void StanceWindow::clear() {
  theta_sk_.clear();
  theta_df_.clear();
  t_ms_.clear();
  overflows_ = 0;
}

std::vector<RawImuFrame> read_kinematics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SignalError("empty kinematics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kKinematicsHeader) throw SignalError("unexpected kinematics header: " + line);

  std::vector<RawImuFrame> frames;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[5];
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n == 5) break;
      try {
        std::size_t used = 0;
        v[n] = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw SignalError("bad number on line " + std::to_string(lineno));
      }
      ++n;
    }
    if (n != 5) throw SignalError("expected 5 columns on line " + std::to_string(lineno));
    frames.push_back({v[0], v[1], v[2], v[3], v[4]});
  }
  return frames;
}

std::vector<RawImuFrame> read_kinematics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SignalError("cannot open " + path);
  return read_kinematics_csv(in);
}

void write_kinematics_csv(std::ostream& out, std::span<const RawImuFrame> frames) {
  out << kKinematicsHeader << '\n';
  out.precision(12);
  for (const auto& f : frames)
    out << f.t_ms << ',' << f.theta_ft << ',' << f.theta_sk << ',' << f.theta_ft_rate << ','
        << f.theta_sk_rate << '\n';
}

}  // namespace exo
