// One finger controller: owns a driver (simulated or hardware), talks to the
// coordinator over a Transport and emits telemetry on a fixed schedule.
//
// Lifecycle
//
//   init        HELLO sent, waiting for the coordinator to echo it back
//   registered  acknowledged; telemetry schedule anchored at the ack time
//   running     at least one telemetry frame has gone out
//   stopping    stop requested or the link could not be restored
//   stopped     terminal
//
// All work happens inside service(now_us). run() is a loop around it for
// threaded or live use; the simulation harness calls service() directly.

#pragma once

#include "softhand/clock.hpp"
#include "softhand/dynamics.hpp"
#include "softhand/log.hpp"
#include "softhand/protocol.hpp"
#include "softhand/transport.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stop_token>

namespace softhand::node {

/// The hardware boundary. A simulated finger and a real board expose the
/// same step / read_sensors contract.
class FingerDriver {
 public:
  virtual ~FingerDriver() = default;

  /// Advances by dt seconds. May throw dynamics::OverConstrainedError.
  virtual void step(double dt) = 0;
  virtual dynamics::SensorReading read_sensors() = 0;
  virtual void set_motor_targets(double flexor, double extensor, double rate_limit) = 0;
  /// Freezes both motors where they are.
  virtual void hold_motors() = 0;
  virtual const dynamics::FingerParams& params() const = 0;
  /// Aligns the driver timeline with the node clock before the first step.
  virtual void set_time(std::int64_t t_us) = 0;
};

class SimDriver final : public FingerDriver {
 public:
  SimDriver(dynamics::FingerParams params, std::uint64_t seed);

  void step(double dt) override;
  dynamics::SensorReading read_sensors() override;
  void set_motor_targets(double flexor, double extensor, double rate_limit) override;
  void hold_motors() override;
  const dynamics::FingerParams& params() const override { return params_; }
  void set_time(std::int64_t t_us) override { state_.time_us = t_us; }

  /// Presses on the fingertip with `force` (N, finger frame) for the given
  /// window. The force is mapped to joint torques at the current pose.
  void press_fingertip(const dynamics::Point& force, std::int64_t start_us, std::int64_t duration_us);

  const dynamics::FingerState& state() const { return state_; }

 private:
  dynamics::FingerParams params_;
  dynamics::FingerState state_;
  std::mt19937_64 rng_;
};

struct NodeConfig {
  std::uint8_t finger_id = 0;
  protocol::FingerKind kind = protocol::FingerKind::generic;
  std::uint64_t geometry_hash = 0;
  double pose_rate = 200.0;   ///< Hz
  double motor_rate = 20.0;   ///< Hz
  double dt = 0.002;          ///< simulation step, s
  double heartbeat_period = 1.0;
  double hello_retry = 1.0;   ///< resend HELLO while unacknowledged, s
  int max_reconnects = 5;
  double reconnect_backoff = 0.2;  ///< first retry delay, doubles per attempt, s

  /// Throws std::invalid_argument unless pose_rate >= motor_rate > 0,
  /// dt <= 1/pose_rate and every period is a whole number of microseconds.
  void validate() const;
  std::int64_t pose_period_us() const;
  std::int64_t motor_period_us() const;
  std::int64_t step_us() const;
};

enum class Lifecycle { init, registered, running, stopping, stopped };
const char* lifecycle_name(Lifecycle s);

struct NodeCounters {
  std::uint64_t pose_frames = 0;
  std::uint64_t motor_frames = 0;
  std::uint64_t heartbeats = 0;
  std::uint64_t commands_applied = 0;
  std::uint64_t stale_commands = 0;
  std::uint64_t errors_sent = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t reconnects = 0;
  std::uint64_t registrations = 0;
};

class FingerNode {
 public:
  FingerNode(NodeConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<FingerDriver> driver,
             Logger logger = null_logger());

  /// Sends HELLO and starts the simulation timeline at now_us.
  void start(std::int64_t now_us);
  /// Handles received bytes and everything scheduled up to now_us. Returns
  /// the number of frames received.
  std::size_t service(std::int64_t now_us);
  /// Earliest time at which service() has scheduled work.
  std::int64_t next_deadline_us() const;

  void request_stop();
  /// Services the node until stopped, sleeping on `clock` between deadlines
  /// and polling the transport at least every `poll_us`.
  void run(Clock& clock, std::stop_token stop, std::int64_t poll_us = 1000);

  Lifecycle lifecycle() const { return lifecycle_; }
  const NodeConfig& config() const { return config_; }
  const NodeCounters& counters() const { return counters_; }
  FingerDriver& driver() { return *driver_; }
  std::optional<std::uint32_t> last_command_seq() const { return last_command_seq_; }
  /// Latest motor targets requested by a command (flexor, extensor), rad.
  std::pair<double, double> motor_targets() const { return targets_; }

 private:
  void send(const protocol::Message& msg, std::uint32_t seq, std::int64_t now_us);
  void send_error(std::uint16_t code, const std::string& text, std::int64_t now_us);
  void send_hello(std::int64_t now_us);
  void handle_frame(const protocol::Frame& frame, std::int64_t now_us);
  void apply_command(const protocol::Frame& frame, std::int64_t now_us);
  void on_registered(std::int64_t now_us);
  void run_schedule(std::int64_t now_us);
  void handle_link_loss(std::int64_t now_us);

  NodeConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<FingerDriver> driver_;
  Logger log_;

  Lifecycle lifecycle_ = Lifecycle::init;
  bool started_ = false;
  bool link_down_ = false;
  protocol::StreamDecoder decoder_;
  std::vector<std::uint8_t> rx_;

  std::int64_t next_step_us_ = 0;
  std::int64_t registered_at_us_ = 0;
  std::int64_t next_pose_us_ = 0;
  std::int64_t next_motor_us_ = 0;
  std::int64_t next_heartbeat_us_ = 0;
  std::int64_t next_hello_us_ = 0;
  std::int64_t next_reconnect_us_ = 0;
  int reconnect_attempts_ = 0;

  std::uint32_t pose_seq_ = 0;
  std::uint32_t motor_seq_ = 0;
  std::uint32_t heartbeat_seq_ = 0;
  std::uint32_t control_seq_ = 0;
  std::optional<std::uint32_t> last_command_seq_;
  std::pair<double, double> targets_{0.0, 0.0};
  NodeCounters counters_;
};

}  // namespace softhand::node
