// A whole simulated hand in one process: a coordinator and one SimDriver
// node per finger, wired through an in-process hub and driven by a virtual
// clock. Everything runs on the calling thread in a fixed order, so a run is
// a pure function of its inputs and seed.
//
// Manifest files describe a run:
//
//   hand = hands/human5.conf      # required
//   fingers = fingers.conf        # geometry presets, default shown
//   grasps = grasps.conf          # default shown
//   duration = 5                  # s, required
//   seed = 42
//   nodes = 5                     # start the first N fingers of the hand
//   sensor_noise_steps = 2        # encoder noise std in quantization steps
//   output = out                  # artifact directory
//
//   [scenario]
//   # time(s) action args
//   0.5 grasp tripod
//   1.0 joints index 1.2 1.0 0.6
//   1.5 motors index 1.0 -0.5
//   2.0 touch index 0 -2.5 0.1    # fx fy (N, finger frame) duration(s)
//   3.0 detach ring
//   3.5 attach ring

#pragma once

#include "softhand/clock.hpp"
#include "softhand/coordinator.hpp"
#include "softhand/finger_node.hpp"
#include "softhand/hand.hpp"
#include "softhand/log.hpp"
#include "softhand/presets.hpp"
#include "softhand/session.hpp"
#include "softhand/transport.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace softhand::sim {

struct Action {
  enum class Kind { grasp, joints, motors, touch, detach, attach };

  std::int64_t t_us = 0;
  Kind kind = Kind::grasp;
  Role role = Role::generic;
  std::string grasp;
  dynamics::Angles q = dynamics::Angles::Zero();
  double flexor = 0.0;
  double extensor = 0.0;
  dynamics::Point force = dynamics::Point::Zero();
  std::int64_t duration_us = 0;
  int line = 0;
};

const char* action_name(Action::Kind k);

struct Manifest {
  std::filesystem::path hand;
  std::filesystem::path fingers;
  std::filesystem::path grasps;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> nodes;
  std::optional<double> sensor_noise_steps;
  std::optional<std::filesystem::path> output;
  std::vector<Action> scenario;
  std::string text;  ///< the manifest as written, stored in the session header

  /// Throws config::ConfigError with the offending line. Relative paths are
  /// resolved against $SOFTHAND_CONFIG_ROOT, then `base`, then the shipped
  /// config directory.
  static Manifest parse(const std::string& text, const std::string& source, const std::filesystem::path& base);
  static Manifest load(const std::filesystem::path& path);
};

struct Options {
  node::NodeConfig node;  ///< rates and periods; id, kind and hash are filled per finger
  coord::CoordinatorConfig coordinator;
  std::optional<double> sensor_noise_steps;
  /// Pace the virtual clock against wall time (1.0 = real time, 0 = as fast as possible).
  double realtime = 0.0;
  Logger logger = null_logger();
};

class SimHand {
 public:
  SimHand(HandConfiguration hand, PresetLibrary presets, GraspLibrary grasps, std::uint64_t seed,
          Options options = {});
  ~SimHand();

  /// Starts a fresh node for the finger. A running node with that id is
  /// stopped first.
  void attach(std::uint8_t finger_id);
  void detach(std::uint8_t finger_id);

  /// Advances the virtual clock to t_us, servicing everything due on the way.
  void run_until(std::int64_t t_us);
  void run_for(std::int64_t dt_us) { run_until(clock_.now_us() + dt_us); }

  /// Queues work for the simulation thread; it runs at the next loop step at
  /// the then current virtual time. Safe from any thread.
  void post(std::function<void(SimHand&)> work);

  /// Applies a scenario action now. May throw coord::GraspError or
  /// std::invalid_argument.
  void apply(const Action& action);

  coord::Coordinator& coordinator() { return *coordinator_; }
  VirtualClock& clock() { return clock_; }
  node::FingerNode* node(std::uint8_t finger_id);
  node::SimDriver* driver(std::uint8_t finger_id);
  std::uint8_t finger_for(Role role) const;
  const HandConfiguration& hand() const { return hand_; }

 private:
  struct Slot;

  void service_all();
  void drain_posts();

  HandConfiguration hand_;
  PresetLibrary presets_;
  std::uint64_t seed_;
  Options options_;
  VirtualClock clock_;
  std::shared_ptr<InProcessHub> hub_;
  std::unique_ptr<coord::Coordinator> coordinator_;
  std::map<std::uint8_t, std::unique_ptr<Slot>> slots_;
  std::vector<std::unique_ptr<Slot>> retired_;

  std::mutex post_mutex_;
  std::vector<std::function<void(SimHand&)>> posted_;
};

struct AngleRow {
  std::int64_t timestamp_us = 0;
  dynamics::Angles q = dynamics::Angles::Zero();
};

struct RunResult {
  std::vector<coord::GraspReport> reports;
  std::vector<std::string> action_errors;  ///< "line N: message"
  std::vector<touch::Event> touches;
  std::map<std::uint8_t, std::vector<AngleRow>> angles;
  std::vector<std::filesystem::path> artifacts;

  bool grasps_ok() const;
};

/// Runs a manifest to completion and writes session.hfsr,
/// grasp_reports.json, touch_events.csv and angles_<finger>.csv into
/// `output_dir`. Hooks see the harness before the first step.
RunResult run_manifest(const Manifest& manifest, const std::filesystem::path& output_dir,
                       Logger logger = null_logger(), const std::function<void(SimHand&)>& on_start = {},
                       double realtime = 0.0);

void write_angles_csv(std::ostream& out, std::uint8_t finger_id, const std::vector<AngleRow>& rows);

}  // namespace softhand::sim
