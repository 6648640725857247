#include "softhand/touch_detector.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace softhand::touch {

void DetectorConfig::validate() const {
  if (window < 4) throw std::invalid_argument("detector window must be at least 4 samples");
  if (!(threshold > 0.0)) throw std::invalid_argument("detector threshold must be positive");
  if (!(refractory >= 0.0)) throw std::invalid_argument("detector refractory period must be >= 0");
  if (!(baseline_alpha > 0.0 && baseline_alpha <= 1.0)) throw std::invalid_argument("baseline alpha must lie in (0, 1]");
  if (smoothing < 1) throw std::invalid_argument("smoothing length must be >= 1");
}

DetectorConfig DetectorConfig::with_threshold_steps(double steps, int resolution_bits) {
  DetectorConfig c;
  c.threshold = steps * 2.0 * EIGEN_PI / std::ldexp(1.0, resolution_bits);
  return c;
}

Detector::Detector(DetectorConfig config, std::uint8_t finger_id) : config_(config), finger_id_(finger_id) {
  config_.validate();
  reset();
}

void Detector::reset() {
  ring_.assign(static_cast<std::size_t>(config_.smoothing), Eigen::Vector3d::Zero());
  ring_pos_ = 0;
  sum_.setZero();
  baseline_.setZero();
  primed_ = false;
  candidate_ = false;
  quiet_until_us_.reset();
  last_seq_.reset();
  samples_ = 0;
}

std::vector<Event> Detector::feed(const Sample& sample) {
  std::vector<Event> out;
  if (last_seq_ && sample.seq <= *last_seq_) {
    ++regressions_;
    return out;
  }
  last_seq_ = sample.seq;
  ++samples_;

  // Moving average over the last `smoothing` samples.
  sum_ += sample.q - ring_[ring_pos_];
  ring_[ring_pos_] = sample.q;
  ring_pos_ = (ring_pos_ + 1) % ring_.size();
  if (!primed_) {
    if (samples_ < ring_.size()) return out;
    primed_ = true;
    baseline_ = sum_ / double(ring_.size());
    return out;
  }
  const Eigen::Vector3d s = sum_ / double(ring_.size());

  if (candidate_) {
    ++age_;
    const Eigen::Vector3d dev = (s - pre_).cwiseAbs();
    int j = 0;
    const double m = dev.maxCoeff(&j);
    if (m > peak_) {
      peak_ = m;
      peak_joint_ = j;
    }
    if (m <= 0.5 * config_.threshold) {
      out.push_back(Event{finger_id_, peak_joint_, onset_us_, peak_, sample.timestamp_us});
      candidate_ = false;
      baseline_ = pre_;
      quiet_until_us_ = onset_us_ + std::llround(config_.refractory * 1e6);
    } else if (age_ >= config_.window) {
      ++rejected_;
      candidate_ = false;
      baseline_ = s;
    }
    return out;
  }

  const bool quiet = quiet_until_us_ && sample.timestamp_us < *quiet_until_us_;
  const Eigen::Vector3d dev = (s - baseline_).cwiseAbs();
  int j = 0;
  const double m = dev.maxCoeff(&j);
  if (!quiet && m >= config_.threshold) {
    candidate_ = true;
    pre_ = baseline_;
    onset_us_ = sample.timestamp_us;
    age_ = 0;
    peak_ = m;
    peak_joint_ = j;
    return out;
  }
  baseline_ += config_.baseline_alpha * (s - baseline_);
  return out;
}

std::vector<Event> detect(const std::vector<Sample>& trace, const DetectorConfig& config, std::uint8_t finger_id) {
  Detector d(config, finger_id);
  std::vector<Event> out;
  for (const auto& s : trace) {
    auto ev = d.feed(s);
    out.insert(out.end(), ev.begin(), ev.end());
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::vector<Sample> read_trace_csv(std::istream& in, std::optional<std::uint8_t>* finger_id) {
  std::vector<Sample> out;
  std::string line;
  std::size_t row = 0;
  std::size_t columns = 0;
  std::optional<std::uint8_t> finger;
  while (std::getline(in, line)) {
    ++row;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv(line);
    if (columns == 0 && !fields.empty() && fields[0] == "timestamp_us") {
      if (fields.size() != 4 && fields.size() != 5)
        throw CsvError(row, "header must have 4 or 5 columns, got " + std::to_string(fields.size()));
      columns = fields.size();
      continue;
    }
    if (columns == 0) columns = fields.size();
    if (columns != 4 && columns != 5) throw CsvError(row, "expected 4 or 5 fields, got " + std::to_string(fields.size()));
    if (fields.size() != columns)
      throw CsvError(row, "expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    const std::size_t first_angle = columns - 3;
    Sample s;
    s.seq = out.size();
    try {
      std::size_t used = 0;
      s.timestamp_us = std::stoll(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument("trailing characters");
      if (columns == 5) {
        const long id = std::stol(fields[1], &used);
        if (used != fields[1].size() || id < 0 || id > 255) throw std::invalid_argument("bad finger id");
        if (finger && *finger != id) throw CsvError(row, "trace mixes finger ids");
        finger = static_cast<std::uint8_t>(id);
      }
      for (int i = 0; i < 3; ++i) {
        const auto& f = fields[first_angle + i];
        s.q(i) = std::stod(f, &used);
        if (used != f.size() || !std::isfinite(s.q(i))) throw std::invalid_argument("bad angle");
      }
    } catch (const CsvError&) {
      throw;
    } catch (const std::exception&) {
      throw CsvError(row, "malformed number in '" + line + "'");
    }
    if (!out.empty() && s.timestamp_us < out.back().timestamp_us)
      throw CsvError(row, "timestamps must not decrease");
    out.push_back(s);
  }
  if (finger_id != nullptr) *finger_id = finger;
  return out;
}

void write_events_csv(std::ostream& out, const std::vector<Event>& events) {
  out << "finger_id,joint,onset_us,peak_rad,confirmed_us\n";
  char buf[160];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%d,%d,%lld,%.17g,%lld\n", int(e.finger_id), e.joint,
                  static_cast<long long>(e.onset_us), e.peak, static_cast<long long>(e.confirmed_us));
    out << buf;
  }
}

}  // namespace softhand::touch
