// Text channel between the coordinator and an operator console.
//
// HTTP/1.1 carrying JSON objects. The server pushes over Server-Sent Events
// and takes commands as POSTed JSON; docs/ui_bridge.md has the schema.
//
//   GET  /api/config               hand, geometry and grasp library
//   GET  /api/snapshot             one "snapshot" message
//   GET  /api/stream?rate=30       SSE: "snapshot" at `rate` Hz, plus every
//                                  "event" in order
//   POST /api/command              {"type": "grasp" | "joint_targets" | "touch", ...}
//
// Commands run through an Executor so a simulation can apply them on its own
// thread; the HTTP reply waits for the outcome.

#pragma once

#include "softhand/coordinator.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace softhand::bridge {

/// Runs `work` on whichever thread owns the coordinator.
using Executor = std::function<void(std::function<void()> work)>;
/// Presses on a fingertip (simulation only).
using TouchHook = std::function<void(std::uint8_t finger_id, const dynamics::Point& force, double duration)>;

nlohmann::json config_message(const coord::Coordinator& c);
/// A snapshot with "fingers": [] when no node is registered.
nlohmann::json snapshot_message(const coord::Coordinator& c);
nlohmann::json event_message(const coord::Event& e);

struct CommandReply {
  int status = 200;  ///< HTTP status
  nlohmann::json body;
};

/// Validates and applies one command on the calling thread.
CommandReply execute_command(coord::Coordinator& c, const nlohmann::json& command, const TouchHook& touch = {});

struct BridgeConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  ///< 0 picks a free port
  double default_rate = 30.0;
  double max_rate = 200.0;
};

class UiBridge {
 public:
  UiBridge(coord::Coordinator& coordinator, BridgeConfig config, Executor executor = {}, TouchHook touch = {},
           Logger logger = null_logger());
  ~UiBridge();

  UiBridge(const UiBridge&) = delete;
  UiBridge& operator=(const UiBridge&) = delete;

  /// Binds and serves on a background thread. Throws if the bind fails.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  CommandReply dispatch(const nlohmann::json& command);

  coord::Coordinator& coordinator_;
  BridgeConfig config_;
  Executor executor_;
  TouchHook touch_;
  Logger log_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  std::uint16_t port_ = 0;
};

}  // namespace softhand::bridge
