#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exo {

inline constexpr double kImuPeriodMs = 10.0;

// One IMU-derived frame for a single leg. Angles in deg, rates in deg/s.
//
// Foot pitch is positive when the forefoot is higher than the hindfoot; shank
// angle is zero upright and positive when the ankle is behind the knee. Both
// read zero in the calibrated standing posture, and so does the ankle
// dorsiflexion channel, which is derived from the other two (see derive_df).
struct KinematicSample {
  double t_ms = 0.0;
  double theta_ft = 0.0;
  double theta_sk = 0.0;
  double theta_df = 0.0;
  double theta_ft_rate = 0.0;
  double theta_sk_rate = 0.0;
  double theta_df_rate = 0.0;
};

// Fused segment angles as delivered by the sensor, before calibration.
struct RawImuFrame {
  double t_ms = 0.0;
  double theta_ft = 0.0;
  double theta_sk = 0.0;
  double theta_ft_rate = 0.0;
  double theta_sk_rate = 0.0;
};

struct AnkleChannel {
  double angle = 0.0;
  double rate = 0.0;
};

// Ankle dorsiflexion from shank and foot pitch. With toe-up-positive foot
// pitch and forward-positive shank inclination, raising the toes and tilting
// the shank forward both dorsiflex the ankle, so the channel is their sum.
// Throws SignalError on non-finite input.
AnkleChannel derive_df(double theta_sk, double theta_ft, double theta_sk_rate,
                       double theta_ft_rate);

KinematicSample make_sample(const RawImuFrame& frame);

// Standing offsets captured while the user stands straight. apply() removes
// them so that all channels read zero in that posture.
struct ImuCalibration {
  double ft_offset = 0.0;
  double sk_offset = 0.0;

  static ImuCalibration from_standing(std::span<const RawImuFrame> frames);
  RawImuFrame apply(const RawImuFrame& raw) const;
};

// Enforces the 100 Hz stream contract: strictly increasing timestamps, up to
// `max_missing` consecutive dropped samples filled by linear extrapolation,
// longer gaps rejected with SignalLossError.
class StreamConditioner {
 public:
  explicit StreamConditioner(double period_ms = kImuPeriodMs, int max_missing = 3);

  // Returns the synthesized frames (if any) followed by `frame` itself.
  std::vector<RawImuFrame> accept(const RawImuFrame& frame);

  int filled_count() const { return filled_; }
  void reset();

 private:
  double period_ms_;
  int max_missing_;
  int filled_ = 0;
  std::optional<RawImuFrame> last_;
  std::optional<RawImuFrame> before_last_;
};

enum class EventKind { FootContact, FootOff };
enum class GaitPhase { Swing, Stance };

struct GaitEvent {
  EventKind kind = EventKind::FootContact;
  double t_ms = 0.0;  // time of the extremum sample, not of the confirmation
  int gc_index = 0;
};

const char* to_string(EventKind kind);
const char* to_string(GaitPhase phase);

struct DetectorConfig {
  double angle_hysteresis_deg = 1.0;
  double rate_hysteresis_dps = 10.0;
  double refractory_ms = 200.0;
};

// Foot-contact / foot-off detection by hysteresis extremum seeking.
//
// In Swing the detector looks for the foot-pitch maximum (forefoot-up at heel
// strike); in Stance it looks for the foot-pitch-rate minimum (toe-off). A
// seeker arms once the signal has moved by the hysteresis towards the extremum
// it is looking for, tracks the running extremum, and confirms it on the first
// sample that departs from it by at least the hysteresis. No tracking happens
// during the refractory period that follows each emission.
class EventDetector {
 public:
  explicit EventDetector(DetectorConfig cfg = {});

  std::optional<GaitEvent> update(const KinematicSample& s);

  GaitPhase phase() const { return phase_; }
  // Stride counter; -1 until the first foot contact.
  int gc_index() const { return gc_index_; }
  const DetectorConfig& config() const { return cfg_; }
  void reset();

 private:
  void restart_seek();

  DetectorConfig cfg_;
  GaitPhase phase_ = GaitPhase::Swing;
  int gc_index_ = -1;
  double refractory_until_ms_;
  bool armed_ = false;
  bool tracking_ = false;
  double anchor_ = 0.0;  // opposite running extremum used for arming
  double extreme_ = 0.0;
  double extreme_t_ms_ = 0.0;
};

// Shank and dorsiflexion angles buffered over one stance period.
class StanceWindow {
 public:
  static constexpr std::size_t kDefaultCapacity = 250;

  explicit StanceWindow(std::size_t capacity = kDefaultCapacity);

  // Appends only while `phase` is Stance. When full, the oldest entry is
  // dropped and the overflow is counted.
  void push(const KinematicSample& s, GaitPhase phase);
  // Drops entries stamped later than t_ms.
  void truncate_after(double t_ms);
  void clear();

  std::size_t size() const { return theta_sk_.size(); }
  bool empty() const { return theta_sk_.empty(); }
  std::size_t capacity() const { return capacity_; }
  int overflow_count() const { return overflows_; }
  bool overflowed() const { return overflows_ > 0; }

  const std::deque<double>& theta_sk() const { return theta_sk_; }
  const std::deque<double>& theta_df() const { return theta_df_; }
  const std::deque<double>& t_ms() const { return t_ms_; }

 private:
  std::size_t capacity_;
  int overflows_ = 0;
  std::deque<double> theta_sk_;
  std::deque<double> theta_df_;
  std::deque<double> t_ms_;
};

// Replay file: header `t_ms,theta_ft_deg,theta_sk_deg,theta_ft_rate_dps,theta_sk_rate_dps`.
std::vector<RawImuFrame> read_kinematics_csv(std::istream& in);
std::vector<RawImuFrame> read_kinematics_csv(const std::string& path);
void write_kinematics_csv(std::ostream& out, std::span<const RawImuFrame> frames);

}  // namespace exo
