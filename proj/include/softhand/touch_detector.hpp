// Contact detection on joint-angle telemetry.
//
// Per joint the detector keeps a short moving average s and a slow baseline b.
// A candidate opens when |s - b| reaches the threshold on any joint; the
// baseline at that moment is frozen as the pre-contact level. A touch pushes
// the finger and lets go, so the candidate becomes an event only once every
// joint is back within threshold/2 of the pre-contact level, and within
// `window` samples. A deviation that stays (a commanded bend) is dropped and
// the baseline jumps to the new level.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace softhand::touch {

struct DetectorConfig {
  int window = 50;             ///< samples a candidate has to settle back
  double threshold = 6.0 * (2.0 * EIGEN_PI / 65536.0);  ///< rad
  double refractory = 0.15;    ///< s, measured from the confirmed event's onset
  double baseline_alpha = 0.02;
  int smoothing = 8;           ///< moving-average length, samples

  /// Throws std::invalid_argument on window < 4, threshold <= 0, refractory < 0,
  /// alpha outside (0, 1] or smoothing < 1.
  void validate() const;
  static DetectorConfig with_threshold_steps(double steps, int resolution_bits = 16);
};

struct Sample {
  std::uint64_t seq = 0;
  std::int64_t timestamp_us = 0;
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
};

struct Event {
  std::uint8_t finger_id = 0;
  int joint = 0;                 ///< joint with the largest deviation
  std::int64_t onset_us = 0;     ///< first sample whose deviation crossed the threshold
  double peak = 0.0;             ///< rad, >= threshold
  std::int64_t confirmed_us = 0;

  bool operator==(const Event&) const = default;
};

class Detector {
 public:
  explicit Detector(DetectorConfig config = {}, std::uint8_t finger_id = 0);

  /// Consumes one sample. Samples whose seq does not increase are ignored.
  std::vector<Event> feed(const Sample& sample);

  const DetectorConfig& config() const { return config_; }
  std::uint64_t regressions() const { return regressions_; }
  std::uint64_t rejected() const { return rejected_; }
  std::uint64_t samples() const { return samples_; }
  void reset();

 private:
  DetectorConfig config_;
  std::uint8_t finger_id_;

  std::vector<Eigen::Vector3d> ring_;
  std::size_t ring_pos_ = 0;
  Eigen::Vector3d sum_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d baseline_ = Eigen::Vector3d::Zero();
  bool primed_ = false;

  bool candidate_ = false;
  Eigen::Vector3d pre_ = Eigen::Vector3d::Zero();
  std::int64_t onset_us_ = 0;
  int age_ = 0;
  double peak_ = 0.0;
  int peak_joint_ = 0;
  std::optional<std::int64_t> quiet_until_us_;

  std::optional<std::uint64_t> last_seq_;
  std::uint64_t regressions_ = 0;
  std::uint64_t rejected_ = 0;
  std::uint64_t samples_ = 0;
};

/// Runs a fresh detector over a whole trace.
std::vector<Event> detect(const std::vector<Sample>& trace, const DetectorConfig& config, std::uint8_t finger_id = 0);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& message)
      : std::runtime_error("row " + std::to_string(row) + ": " + message), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Reads "timestamp_us,theta1,theta2,theta3" rows, or the five-column form
/// with finger_id second (all rows must name the same finger; it is stored in
/// `finger_id` when given). A header row and '#' comments are skipped; rows
/// are numbered from 1 in the file. The sample seq is the data row index.
std::vector<Sample> read_trace_csv(std::istream& in, std::optional<std::uint8_t>* finger_id = nullptr);

/// "finger_id,joint,onset_us,peak_rad,confirmed_us" plus a header row.
void write_events_csv(std::ostream& out, const std::vector<Event>& events);

}  // namespace softhand::touch
