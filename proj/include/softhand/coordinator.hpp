// The central computer: node registry, grasp execution, touch aggregation,
// pose cache and session recording.
//
// Every public method is safe to call from any thread. service() does the
// I/O: it accepts connections, drains them, runs the grasp state machine and
// evicts silent nodes. Time comes from the Clock handed to the constructor.

#pragma once

#include "softhand/clock.hpp"
#include "softhand/hand.hpp"
#include "softhand/log.hpp"
#include "softhand/presets.hpp"
#include "softhand/protocol.hpp"
#include "softhand/session.hpp"
#include "softhand/touch_detector.hpp"
#include "softhand/transport.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace softhand::coord {

struct CoordinatorConfig {
  double liveness_timeout = 3.0;  ///< s without any frame before a node is evicted
  bool detect_touch = true;
  touch::DetectorConfig detector;
  std::size_t event_capacity = 4096;
};

/// Sequence bookkeeping for one telemetry stream of one node.
struct StreamStats {
  std::uint64_t frames = 0;
  std::uint64_t gaps = 0;        ///< discontinuities
  std::uint64_t missing = 0;     ///< seq numbers skipped in total
  std::uint64_t duplicates = 0;  ///< seq at or below the last one, dropped
  std::optional<std::uint32_t> last_seq;

  /// Returns false for a duplicate or regression.
  bool accept(std::uint32_t seq);
  bool gap_free() const { return gaps == 0 && duplicates == 0; }
};

struct NodeInfo {
  std::uint8_t finger_id = 0;
  Role role = Role::generic;
  protocol::FingerKind kind = protocol::FingerKind::generic;
  std::uint64_t geometry_hash = 0;
  std::string preset;             ///< geometry used for this finger, empty if none is known
  bool geometry_warning = false;  ///< the HELLO hash matched no shipped preset
  std::int64_t registered_us = 0;
  std::int64_t last_frame_us = 0;
  std::string peer;
  StreamStats pose;
  StreamStats motor;
  StreamStats heartbeat;
  std::uint64_t node_errors = 0;
};

struct FingerPose {
  std::uint8_t finger_id = 0;
  Role role = Role::generic;
  bool has_pose = false;
  dynamics::Angles q = dynamics::Angles::Zero();
  std::array<dynamics::Point, 4> joints{};  ///< hand frame, proximal joint to tip
  dynamics::Point tip = dynamics::Point::Zero();
  std::int64_t sample_us = 0;     ///< telemetry timestamp of q
  std::int64_t staleness_us = 0;  ///< now minus arrival of the latest pose (or registration)
  std::uint32_t pose_seq = 0;
  bool geometry_warning = false;
};

struct HandPose {
  std::int64_t time_us = 0;
  std::vector<FingerPose> fingers;
  std::string grasp;
  std::string grasp_phase;
};

struct FingerReport {
  std::uint8_t finger_id = 0;
  Role role = Role::generic;
  dynamics::Angles target = dynamics::Angles::Zero();
  dynamics::Angles measured = dynamics::Angles::Zero();
  bool measured_valid = false;
  double error_norm = 0.0;  ///< |measured - target|_2, rad
  double max_error = 0.0;   ///< largest per-joint error, rad
  bool success = false;
};

struct GraspReport {
  std::string name;
  bool success = false;
  bool timed_out = false;
  std::string failure;
  std::int64_t started_us = 0;
  std::int64_t finished_us = 0;
  double tolerance = 0.05;
  std::vector<FingerReport> fingers;
};

class GraspError : public std::runtime_error {
 public:
  enum class Kind { unknown_grasp, missing_role, busy, out_of_limits };
  GraspError(Kind kind, std::string role, const std::string& message)
      : std::runtime_error(message), kind_(kind), role_(std::move(role)) {}
  Kind kind() const { return kind_; }
  /// The missing or offending role, if any.
  const std::string& role() const { return role_; }

 private:
  Kind kind_;
  std::string role_;
};

/// Anything the coordinator wants observers (the UI bridge, logs) to see.
struct Event {
  std::uint64_t id = 0;
  std::int64_t time_us = 0;
  std::string type;  ///< registered, detached, evicted, rejected, touch, grasp_phase, grasp_report, node_error
  nlohmann::json data;
};

class Coordinator {
 public:
  Coordinator(HandConfiguration hand, PresetLibrary presets, GraspLibrary grasps, const Clock& clock,
              CoordinatorConfig config = {}, Logger logger = null_logger());
  ~Coordinator();

  void add_listener(std::shared_ptr<Listener> listener);
  void add_connection(std::shared_ptr<Transport> transport);
  /// Every frame received or sent from now on, plus coordinator events, goes
  /// to `writer`. Pass nullptr to stop.
  void record_to(session::Writer* writer);

  /// Called for each pose frame accepted into the cache, in arrival order.
  using PoseObserver = std::function<void(const protocol::Header&, const dynamics::Angles&)>;
  void set_pose_observer(PoseObserver observer);

  /// Returns the number of frames received.
  std::size_t service();
  std::int64_t next_deadline_us() const;

  std::vector<NodeInfo> registry() const;
  bool active(std::uint8_t finger_id) const;
  std::size_t connection_count() const;
  /// Drops the node's connection as if the link had gone away.
  void disconnect(std::uint8_t finger_id);

  /// Throws std::runtime_error when no node is registered.
  HandPose hand_pose() const;

  /// Dispatches a grasp. Throws GraspError when a role is missing, a target
  /// is outside the finger's limits, or another grasp is running.
  void start_grasp(const std::string& name);
  bool grasp_active() const;
  std::string grasp_phase() const;
  std::vector<GraspReport> grasp_reports() const;

  /// Throws std::invalid_argument for an unknown finger or out-of-limit pose.
  void send_joint_targets(std::uint8_t finger_id, const dynamics::Angles& q);
  void send_motor_targets(std::uint8_t finger_id, double flexor, double extensor, double rate_limit = 0.0);

  std::vector<touch::Event> touch_events() const;
  std::vector<Event> events_since(std::uint64_t after_id, std::size_t max = 256) const;
  std::uint64_t last_event_id() const;

  const HandConfiguration& hand() const { return hand_; }
  const GraspLibrary& grasps() const { return grasps_; }
  const PresetLibrary& presets() const { return presets_; }
  const Clock& clock() const { return clock_; }

 private:
  struct Connection;
  struct Node;
  struct ActiveGrasp;

  void handle_frame(Connection& c, const protocol::DecodeResult& r, std::int64_t now);
  void handle_hello(Connection& c, const protocol::Frame& f, std::int64_t now);
  void handle_pose(Node& n, const protocol::Frame& f, std::int64_t now);
  void send_to(Connection& c, std::uint8_t finger_id, const protocol::Message& m, std::uint32_t seq, std::int64_t now);
  void send_error(Connection& c, std::uint8_t finger_id, std::uint16_t code, const std::string& text, std::int64_t now);
  void send_joint_targets_locked(Node& n, const dynamics::Angles& q, std::int64_t now);
  void remove_node(std::uint8_t finger_id, const char* why, std::int64_t now);
  void emit(std::int64_t now, std::string type, nlohmann::json data);
  void record(std::int64_t now, session::Direction d, std::span<const std::uint8_t> frame);
  void advance_grasp(std::int64_t now);
  bool evaluate_grasp(std::int64_t now, bool final);
  void finish_grasp(std::int64_t now, GraspReport report);
  FingerPose pose_of(const Node& n, std::int64_t now) const;
  Connection* connection_of(const Node& n);

  HandConfiguration hand_;
  PresetLibrary presets_;
  GraspLibrary grasps_;
  const Clock& clock_;
  CoordinatorConfig config_;
  Logger log_;

  mutable std::mutex mutex_;
  std::vector<std::shared_ptr<Listener>> listeners_;
  std::vector<std::unique_ptr<Connection>> connections_;
  std::uint64_t next_connection_id_ = 0;
  std::map<std::uint8_t, std::unique_ptr<Node>> nodes_;
  session::Writer* recorder_ = nullptr;
  PoseObserver pose_observer_;

  std::unique_ptr<ActiveGrasp> grasp_;
  std::vector<GraspReport> reports_;
  std::vector<touch::Event> touches_;
  std::uint32_t touch_seq_ = 0;
  std::deque<Event> events_;
  std::uint64_t next_event_id_ = 1;
};

void to_json(nlohmann::json& j, const StreamStats& s);
void to_json(nlohmann::json& j, const NodeInfo& n);
void to_json(nlohmann::json& j, const FingerPose& f);
void to_json(nlohmann::json& j, const HandPose& p);
void to_json(nlohmann::json& j, const FingerReport& r);
void to_json(nlohmann::json& j, const GraspReport& r);
void to_json(nlohmann::json& j, const Event& e);

}  // namespace softhand::coord

namespace softhand::touch {
void to_json(nlohmann::json& j, const Event& e);
}
