#include "softhand/ui_bridge.hpp"

#include "httplib.h"

#include <chrono>
#include <future>

namespace softhand::bridge {

using nlohmann::json;

json config_message(const coord::Coordinator& c) {
  json fingers = json::array();
  for (const auto& f : c.hand().fingers) {
    const auto& g = c.presets().geometry(f.preset);
    fingers.push_back({{"finger_id", f.finger_id},
                       {"role", role_name(f.role)},
                       {"preset", f.preset},
                       {"mount", {{"x", f.mount.x}, {"y", f.mount.y}, {"yaw", f.mount.yaw}}},
                       {"lengths", {g.l0(), g.l1(), g.l2(), g.l3()}},
                       {"lower", {g.lower(0), g.lower(1), g.lower(2)}},
                       {"upper", {g.upper(0), g.upper(1), g.upper(2)}}});
  }
  json grasps = json::array();
  for (const auto& name : c.grasps().names()) {
    const auto& g = c.grasps().get(name);
    json targets = json::object();
    for (const auto& [role, q] : g.targets) targets[role_name(role)] = {q(0), q(1), q(2)};
    grasps.push_back({{"name", name},
                      {"panel", g.panel},
                      {"description", g.description},
                      {"targets", targets},
                      {"tolerance", g.tolerance},
                      {"budget", g.budget()}});
  }
  return {{"type", "config"}, {"hand", c.hand().name}, {"fingers", fingers}, {"grasps", grasps}};
}

json snapshot_message(const coord::Coordinator& c) {
  coord::HandPose pose;
  try {
    pose = c.hand_pose();
  } catch (const std::runtime_error&) {
    pose.time_us = c.clock().now_us();
    pose.grasp_phase = c.grasp_phase();
  }
  json j = pose;
  j["type"] = "snapshot";
  if (pose.grasp.empty()) j["grasp_phase"] = "idle";
  const auto reports = c.grasp_reports();
  j["last_report"] = reports.empty() ? json(nullptr) : json(reports.back());
  return j;
}

json event_message(const coord::Event& e) {
  json j = e;
  j["type"] = "event";
  j["event"] = e.type;
  return j;
}

namespace {

CommandReply fail(int status, const std::string& error, const std::string& message) {
  return {status, {{"ok", false}, {"error", error}, {"message", message}}};
}

std::uint8_t finger_arg(const json& cmd) {
  const auto& v = cmd.at("finger_id");
  if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 255)
    throw std::invalid_argument("finger_id must be an integer in 0..255");
  return static_cast<std::uint8_t>(v.get<int>());
}

}  // namespace

CommandReply execute_command(coord::Coordinator& c, const json& command, const TouchHook& touch) {
  if (!command.is_object() || !command.contains("type") || !command["type"].is_string())
    return fail(400, "bad_request", "command must be an object with a string \"type\"");
  const std::string type = command["type"];
  try {
    if (type == "grasp") {
      const std::string name = command.at("name").get<std::string>();
      c.start_grasp(name);
      return {200, {{"ok", true}, {"grasp", name}}};
    }
    if (type == "joint_targets") {
      const std::uint8_t id = finger_arg(command);
      const auto q = command.at("q").get<std::vector<double>>();
      if (q.size() != 3) throw std::invalid_argument("q needs 3 angles");
      c.send_joint_targets(id, dynamics::Angles(q[0], q[1], q[2]));
      return {200, {{"ok", true}}};
    }
    if (type == "touch") {
      if (!touch) return fail(501, "unsupported", "touch injection needs a simulated hand");
      const std::uint8_t id = finger_arg(command);
      const auto f = command.at("force").get<std::vector<double>>();
      const double duration = command.value("duration", 0.1);
      if (f.size() != 2) throw std::invalid_argument("force needs 2 components");
      if (!(duration > 0.0) || duration > 10.0) throw std::invalid_argument("duration must lie in (0, 10] s");
      touch(id, dynamics::Point(f[0], f[1]), duration);
      return {200, {{"ok", true}}};
    }
    return fail(400, "unknown_command", "unknown command type '" + type + "'");
  } catch (const coord::GraspError& e) {
    static const char* const kKinds[] = {"unknown_grasp", "missing_role", "busy", "out_of_limits"};
    CommandReply r = fail(e.kind() == coord::GraspError::Kind::busy ? 409 : 422,
                          kKinds[static_cast<int>(e.kind())], e.what());
    if (!e.role().empty()) r.body["role"] = e.role();
    return r;
  } catch (const json::exception& e) {
    return fail(400, "bad_request", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(422, "invalid_argument", e.what());
  }
}

UiBridge::UiBridge(coord::Coordinator& coordinator, BridgeConfig config, Executor executor, TouchHook touch,
                   Logger logger)
    : coordinator_(coordinator),
      config_(std::move(config)),
      executor_(std::move(executor)),
      touch_(std::move(touch)),
      log_(std::move(logger)) {}

UiBridge::~UiBridge() { stop(); }

CommandReply UiBridge::dispatch(const json& command) {
  if (!executor_) return execute_command(coordinator_, command, touch_);
  auto promise = std::make_shared<std::promise<CommandReply>>();
  auto future = promise->get_future();
  executor_([this, promise, command] { promise->set_value(execute_command(coordinator_, command, touch_)); });
  if (future.wait_for(std::chrono::seconds(5)) != std::future_status::ready)
    return fail(504, "timeout", "the coordinator did not pick up the command");
  return future.get();
}

void UiBridge::start() {
  if (running_) return;
  server_ = std::make_unique<httplib::Server>();
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                         {"Access-Control-Allow-Headers", "Content-Type"},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  s.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  s.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(config_message(coordinator_).dump(), "application/json");
  });
  s.Get("/api/snapshot", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(snapshot_message(coordinator_).dump(), "application/json");
  });
  s.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
    json command = json::parse(req.body, nullptr, false);
    CommandReply reply = command.is_discarded() ? fail(400, "bad_request", "body is not JSON") : dispatch(command);
    log_->info("event=ui_command type={} status={}", command.is_object() ? command.value("type", "?") : "?",
               reply.status);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  });
  s.Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
    double rate = config_.default_rate;
    if (req.has_param("rate")) {
      try {
        rate = std::stod(req.get_param_value("rate"));
      } catch (const std::exception&) {
        rate = -1.0;
      }
    }
    if (!(rate > 0.0) || rate > config_.max_rate) {
      res.status = 400;
      res.set_content(R"({"ok":false,"error":"bad_request","message":"rate must lie in (0, max_rate]"})",
                      "application/json");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    auto last_event = std::make_shared<std::uint64_t>(coordinator_.last_event_id());
    auto first = std::make_shared<bool>(true);
    const auto period = std::chrono::microseconds(std::llround(1e6 / rate));
    res.set_chunked_content_provider(
        "text/event-stream", [this, last_event, first, period](std::size_t, httplib::DataSink& sink) {
          if (!running_) return false;
          std::string out;
          if (*first) {
            out += "event: config\ndata: " + config_message(coordinator_).dump() + "\n\n";
            *first = false;
          }
          for (const auto& e : coordinator_.events_since(*last_event)) {
            out += "event: event\ndata: " + event_message(e).dump() + "\n\n";
            *last_event = e.id;
          }
          out += "event: snapshot\ndata: " + snapshot_message(coordinator_).dump() + "\n\n";
          if (!sink.write(out.data(), out.size())) return false;
          std::this_thread::sleep_for(period);
          return running_.load();
        });
  });

  if (config_.port == 0) {
    const int p = s.bind_to_any_port(config_.address);
    if (p <= 0) throw std::runtime_error("ui bridge: cannot bind " + config_.address);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!s.bind_to_port(config_.address, config_.port))
      throw std::runtime_error("ui bridge: cannot bind " + config_.address + ":" + std::to_string(config_.port));
    port_ = config_.port;
  }
  running_ = true;
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  log_->info("event=ui_bridge_listening address={} port={}", config_.address, port_);
}

void UiBridge::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

}  // namespace softhand::bridge
