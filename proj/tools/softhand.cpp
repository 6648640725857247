// softhand: command-line front end.
//
// Exit codes
//   0  success
//   1  runtime failure (I/O, network, unexpected error)
//   2  invalid manifest, configuration or usage
//   3  a grasp failed or could not be started
//   4  corrupt session record or trace file

#include "softhand/config.hpp"
#include "softhand/coordinator.hpp"
#include "softhand/finger_node.hpp"
#include "softhand/hand.hpp"
#include "softhand/log.hpp"
#include "softhand/presets.hpp"
#include "softhand/protocol.hpp"
#include "softhand/session.hpp"
#include "softhand/sim_hand.hpp"
#include "softhand/touch_detector.hpp"
#include "softhand/transport.hpp"
#include "softhand/ui_bridge.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace softhand;

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kGrasp = 3, kCorrupt = 4 };

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

Logger make_logger(int verbosity) {
  auto log = stderr_logger("softhand");
  log->set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);
  return log;
}

std::filesystem::path config_file(const std::string& value) {
  const std::filesystem::path p(value);
  auto resolved = config::resolve_path(p, std::filesystem::current_path());
  if (!std::filesystem::exists(resolved) && p.is_relative()) resolved = default_config_dir() / p;
  return resolved;
}

struct SimArgs {
  std::string manifest;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint16_t> ui_port;
  double realtime = 0.0;
};

int cmd_sim_hand(const SimArgs& a, Logger log) {
  sim::Manifest m = sim::Manifest::load(a.manifest);
  if (a.seed) m.seed = *a.seed;
  std::filesystem::path out = !a.output.empty() ? std::filesystem::path(a.output) : m.output.value_or("softhand-out");

  std::unique_ptr<bridge::UiBridge> ui;
  double realtime = a.realtime;
  if (a.ui_port && realtime <= 0.0) realtime = 1.0;
  auto on_start = [&](sim::SimHand& hand) {
    if (!a.ui_port) return;
    bridge::BridgeConfig cfg;
    cfg.port = *a.ui_port;
    auto executor = [&hand](std::function<void()> work) { hand.post([w = std::move(work)](sim::SimHand&) { w(); }); };
    auto touch = [&hand](std::uint8_t id, const dynamics::Point& f, double d) {
      auto* drv = hand.driver(id);
      if (drv == nullptr) throw std::invalid_argument("finger " + std::to_string(id) + " is not running");
      drv->press_fingertip(f, hand.clock().now_us(), std::llround(d * 1e6));
    };
    ui = std::make_unique<bridge::UiBridge>(hand.coordinator(), cfg, executor, touch, log);
    ui->start();
    std::fprintf(stderr, "ui bridge on http://127.0.0.1:%u/api/stream\n", unsigned(ui->port()));
  };
  const auto result = sim::run_manifest(m, out, log, on_start, realtime);
  if (ui) ui->stop();

  for (const auto& r : result.reports) {
    double worst = 0.0;
    for (const auto& f : r.fingers) worst = std::max(worst, f.max_error);
    std::printf("grasp %-20s %s  max_error=%.4f rad%s%s\n", r.name.c_str(), r.success ? "ok  " : "FAIL", worst,
                r.failure.empty() ? "" : "  ", r.failure.c_str());
  }
  for (const auto& e : result.action_errors) std::printf("action error: %s\n", e.c_str());
  std::printf("touch events: %zu\n", result.touches.size());
  for (const auto& p : result.artifacts) std::printf("wrote %s\n", p.string().c_str());
  return result.grasps_ok() ? kOk : kGrasp;
}

struct DetectArgs {
  std::string input;
  std::string output;
  double threshold_steps = 6.0;
  int window = 50;
  double refractory = 0.15;
  int smoothing = 8;
  double baseline_alpha = 0.02;
  int finger = -1;
};

int cmd_detect_touch(const DetectArgs& a) {
  touch::DetectorConfig cfg = touch::DetectorConfig::with_threshold_steps(a.threshold_steps);
  cfg.window = a.window;
  cfg.refractory = a.refractory;
  cfg.smoothing = a.smoothing;
  cfg.baseline_alpha = a.baseline_alpha;
  cfg.validate();

  std::ifstream in(a.input);
  if (!in) throw std::runtime_error("cannot open " + a.input);
  std::optional<std::uint8_t> finger;
  std::vector<touch::Sample> trace;
  try {
    trace = touch::read_trace_csv(in, &finger);
  } catch (const touch::CsvError& e) {
    std::fprintf(stderr, "error: %s: %s\n", a.input.c_str(), e.what());
    return kCorrupt;
  }
  const std::uint8_t id = a.finger >= 0 ? static_cast<std::uint8_t>(a.finger) : finger.value_or(0);
  const auto events = touch::detect(trace, cfg, id);
  if (a.output.empty() || a.output == "-") {
    touch::write_events_csv(std::cout, events);
  } else {
    std::ofstream out(a.output, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + a.output);
    touch::write_events_csv(out, events);
  }
  return kOk;
}

void print_record(std::size_t index, const session::Record& r, const protocol::Frame& f, bool hex) {
  std::printf("%6zu %12llu %-5s %s\n", index, static_cast<unsigned long long>(r.arrival_us),
              session::direction_name(r.direction), protocol::describe(f).c_str());
  if (hex) std::printf("       %s\n", protocol::to_hex(r.frame).c_str());
}

int cmd_replay(const std::string& path, double speed, bool fast) {
  session::Session s;
  try {
    s = session::read_file(path);
  } catch (const session::SessionError& e) {
    std::fprintf(stderr, "error: %s: %s\n", path.c_str(), e.what());
    return kCorrupt;
  }
  std::size_t index = 0;
  auto sink = [&](const session::Record& r, const protocol::Frame& f) {
    print_record(index++, r, f, false);
    std::fflush(stdout);
  };
  std::int64_t elapsed = 0;
  if (fast) {
    VirtualClock clock;
    elapsed = session::replay(s, speed, clock, sink);
  } else {
    WallClock clock;
    elapsed = session::replay(s, speed, clock, sink);
  }
  std::printf("replayed %zu records in %.3f s (speed %g)\n", s.records.size(), double(elapsed) * 1e-6, speed);
  return kOk;
}

int cmd_protocol_dump(const std::string& path, bool hex_input) {
  if (hex_input) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::uint8_t> bytes;
    try {
      bytes = protocol::from_hex(text);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s: %s\n", path.c_str(), e.what());
      return kCorrupt;
    }
    protocol::StreamDecoder dec;
    dec.feed(bytes);
    int status = kOk;
    auto show = [&](const protocol::DecodeResult& r) {
      if (r.ok()) {
        std::printf("%s\n", protocol::describe(*r.frame).c_str());
      } else {
        std::printf("error %s %s\n", protocol::status_name(r.status), r.detail.c_str());
        status = kCorrupt;
      }
    };
    while (auto r = dec.next()) show(*r);
    for (const auto& r : dec.finish()) show(r);
    return status;
  }
  session::Session s;
  try {
    s = session::read_file(path);
  } catch (const session::SessionError& e) {
    std::fprintf(stderr, "error: %s: %s\n", path.c_str(), e.what());
    return kCorrupt;
  }
  std::printf("session format %u protocol %u start_us %llu records %zu\n", unsigned(s.header.format_version),
              unsigned(s.header.protocol_version), static_cast<unsigned long long>(s.header.start_us),
              s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto d = protocol::decode_frame(s.records[i].frame);
    print_record(i, s.records[i], *d.frame, true);
  }
  return kOk;
}

struct CoordArgs {
  std::string listen = "0.0.0.0:7400";
  std::string hand = "hands/human5.conf";
  std::string fingers = "fingers.conf";
  std::string grasps = "grasps.conf";
  std::string record;
  std::optional<std::uint16_t> ui_port;
  std::string ui_address = "127.0.0.1";
  double duration = 0.0;
  std::vector<std::string> run_grasps;
};

int cmd_coordinator(const CoordArgs& a, Logger log) {
  const auto presets = PresetLibrary::load(config_file(a.fingers));
  auto hand = HandConfiguration::load(config_file(a.hand), presets);
  auto grasps = GraspLibrary::load(config_file(a.grasps));
  for (const auto& g : a.run_grasps)
    if (!grasps.has(g)) throw std::invalid_argument("unknown grasp '" + g + "'");
  const auto [host, port] = parse_endpoint(a.listen, "0.0.0.0");

  WallClock clock;
  coord::Coordinator c(hand, presets, std::move(grasps), clock, {}, log);
  auto listener = std::make_shared<TcpListener>(host, port);
  c.add_listener(listener);
  std::fprintf(stderr, "listening on %s:%u\n", host.c_str(), unsigned(listener->port()));

  std::ofstream record_out;
  std::unique_ptr<session::Writer> writer;
  if (!a.record.empty()) {
    record_out.open(a.record, std::ios::binary | std::ios::trunc);
    if (!record_out) throw std::runtime_error("cannot write " + a.record);
    session::Header header;
    header.start_us = static_cast<std::uint64_t>(clock.now_us());
    header.config = hand.source_text;
    writer = std::make_unique<session::Writer>(record_out, header);
    c.record_to(writer.get());
  }
  std::unique_ptr<bridge::UiBridge> ui;
  if (a.ui_port) {
    bridge::BridgeConfig cfg;
    cfg.address = a.ui_address;
    cfg.port = *a.ui_port;
    ui = std::make_unique<bridge::UiBridge>(c, cfg, bridge::Executor{}, bridge::TouchHook{}, log);
    ui->start();
    std::fprintf(stderr, "ui bridge on http://%s:%u/api/stream\n", a.ui_address.c_str(), unsigned(ui->port()));
  }

  std::size_t next_grasp = 0;
  bool grasp_failed = false;
  std::size_t reports_seen = 0;
  const std::int64_t end = a.duration > 0 ? std::llround(a.duration * 1e6) : INT64_MAX;
  while (!g_interrupted && clock.now_us() < end) {
    c.service();
    if (next_grasp < a.run_grasps.size() && !c.grasp_active()) {
      try {
        c.start_grasp(a.run_grasps[next_grasp]);
        ++next_grasp;
      } catch (const coord::GraspError& e) {
        if (e.kind() != coord::GraspError::Kind::missing_role) throw;
        // Nodes may still be connecting.
      }
    }
    const auto reports = c.grasp_reports();
    for (; reports_seen < reports.size(); ++reports_seen) {
      const auto& r = reports[reports_seen];
      std::printf("grasp %s %s\n", r.name.c_str(), r.success ? "ok" : ("FAIL " + r.failure).c_str());
      grasp_failed = grasp_failed || !r.success;
    }
    if (!a.run_grasps.empty() && next_grasp == a.run_grasps.size() && !c.grasp_active()) break;
    const std::int64_t now = clock.now_us();
    clock.sleep_until(std::min(c.next_deadline_us(), now + 1000));
  }
  if (ui) ui->stop();
  c.record_to(nullptr);
  if (next_grasp < a.run_grasps.size()) {
    std::fprintf(stderr, "error: grasp '%s' never started\n", a.run_grasps[next_grasp].c_str());
    return kGrasp;
  }
  return grasp_failed ? kGrasp : kOk;
}

struct NodeArgs {
  std::string connect = "127.0.0.1:7400";
  int finger = -1;
  std::string preset;
  std::string role = "generic";
  std::string fingers = "fingers.conf";
  std::uint64_t seed = 0;
  double duration = 0.0;
};

int cmd_node(const NodeArgs& a, Logger log) {
  const auto presets = PresetLibrary::load(config_file(a.fingers));
  const auto role = parse_role(a.role);
  if (!role) throw std::invalid_argument("unknown role '" + a.role + "'");
  std::string preset = a.preset;
  if (preset.empty()) preset = *role == Role::generic ? "index" : role_name(*role);
  if (!presets.has(preset)) throw std::invalid_argument("unknown geometry preset '" + preset + "'");
  if (a.finger < 0 || a.finger > 255) throw std::invalid_argument("--finger must lie in 0..255");
  const auto [host, port] = parse_endpoint(a.connect, "127.0.0.1");

  const auto params = presets.params_for(preset);
  node::NodeConfig cfg;
  cfg.finger_id = static_cast<std::uint8_t>(a.finger);
  cfg.kind = kind_for(*role);
  cfg.geometry_hash = geometry_hash(params.geometry);
  auto transport = std::make_shared<TcpTransport>(host, port);
  auto driver = std::make_shared<node::SimDriver>(params, a.seed);
  node::FingerNode n(cfg, transport, driver, log);

  WallClock clock;
  std::stop_source stop;
  std::thread watcher([&] {
    const std::int64_t end = a.duration > 0 ? std::llround(a.duration * 1e6) : INT64_MAX;
    while (!g_interrupted && clock.now_us() < end && !stop.stop_requested())
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    stop.request_stop();
  });
  n.run(clock, stop.get_token());
  stop.request_stop();
  watcher.join();
  const auto& k = n.counters();
  std::printf("finger %d: %llu pose, %llu motor, %llu commands, %llu reconnects\n", a.finger,
              static_cast<unsigned long long>(k.pose_frames), static_cast<unsigned long long>(k.motor_frames),
              static_cast<unsigned long long>(k.commands_applied), static_cast<unsigned long long>(k.reconnects));
  return k.registrations > 0 ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular tendon-driven hand: simulation, coordination and analysis tools"};
  app.require_subcommand(1);
  int verbosity = 0;
  std::string config_root;
  app.add_flag("-v,--verbose", verbosity, "More log output on stderr (repeat for debug)");
  app.add_option("--config-root", config_root, "Directory for relative config paths (overrides SOFTHAND_CONFIG_ROOT)");
  app.footer(
      "Relative configuration paths are looked up in $SOFTHAND_CONFIG_ROOT, the working directory, then the shipped "
      "config directory.\nExit codes: 0 ok, 1 runtime error, 2 invalid manifest/config/usage, 3 grasp failed, "
      "4 corrupt record.");

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("sim-hand", "Run a manifest on a simulated hand and write artifacts");
  sim_cmd->add_option("manifest", sim_args.manifest, "Run manifest")->required();
  sim_cmd->add_option("-o,--output", sim_args.output, "Artifact directory (default: manifest 'output' or ./softhand-out)");
  sim_cmd->add_option("--seed", sim_args.seed, "Override the manifest seed");
  sim_cmd->add_option("--ui", sim_args.ui_port, "Serve the UI bridge on this port while running");
  sim_cmd->add_option("--realtime", sim_args.realtime, "Pace against wall time (1 = real time; default as fast as possible, or 1 with --ui)")
      ->check(CLI::NonNegativeNumber);

  DetectArgs det_args;
  auto* det_cmd = app.add_subcommand("detect-touch", "Find touch events in a joint-angle trace (CSV)");
  det_cmd->add_option("trace", det_args.input, "timestamp_us[,finger_id],theta1,theta2,theta3 rows")->required();
  det_cmd->add_option("-o,--output", det_args.output, "Events CSV (default stdout)");
  det_cmd->add_option("--threshold-steps", det_args.threshold_steps, "Threshold in 16-bit encoder steps")
      ->check(CLI::PositiveNumber);
  det_cmd->add_option("--window", det_args.window, "Settle window, samples")->check(CLI::PositiveNumber);
  det_cmd->add_option("--refractory", det_args.refractory, "Dead time after an event, s")->check(CLI::NonNegativeNumber);
  det_cmd->add_option("--smoothing", det_args.smoothing, "Moving-average length, samples")->check(CLI::PositiveNumber);
  det_cmd->add_option("--baseline-alpha", det_args.baseline_alpha, "Baseline EMA weight")->check(CLI::Range(0.0, 1.0));
  det_cmd->add_option("--finger", det_args.finger, "Finger id written to the events")->check(CLI::Range(0, 255));

  std::string replay_path;
  double replay_speed = 1.0;
  bool replay_fast = false;
  auto* replay_cmd = app.add_subcommand("replay", "Play back a session record with its original timing");
  replay_cmd->add_option("session", replay_path, "Session record (.hfsr)")->required();
  replay_cmd->add_option("--speed", replay_speed, "Playback speed factor")->check(CLI::PositiveNumber);
  replay_cmd->add_flag("--no-wait", replay_fast, "Do not sleep between records");

  std::string dump_path;
  bool dump_hex = false;
  auto* dump_cmd = app.add_subcommand("protocol-dump", "Decode a session record (or a hex frame file) frame by frame");
  dump_cmd->add_option("file", dump_path, "Session record, or hex text with --hex")->required();
  dump_cmd->add_flag("--hex", dump_hex, "Input is hex text of raw frames");

  CoordArgs coord_args;
  auto* coord_cmd = app.add_subcommand("coordinator", "Run the coordinator for nodes connecting over TCP");
  coord_cmd->add_option("--listen", coord_args.listen, "host:port to accept nodes on")->capture_default_str();
  coord_cmd->add_option("--hand", coord_args.hand, "Hand configuration")->capture_default_str();
  coord_cmd->add_option("--fingers", coord_args.fingers, "Geometry presets")->capture_default_str();
  coord_cmd->add_option("--grasps", coord_args.grasps, "Grasp library")->capture_default_str();
  coord_cmd->add_option("--record", coord_args.record, "Write a session record");
  coord_cmd->add_option("--ui", coord_args.ui_port, "Serve the UI bridge on this port");
  coord_cmd->add_option("--ui-address", coord_args.ui_address, "Bind address for the UI bridge")->capture_default_str();
  coord_cmd->add_option("--duration", coord_args.duration, "Stop after this many seconds (0 = until interrupted)");
  coord_cmd->add_option("--grasp", coord_args.run_grasps, "Run these grasps in order once their fingers are up, then exit");

  NodeArgs node_args;
  auto* node_cmd = app.add_subcommand("node", "Run one simulated finger node against a coordinator");
  node_cmd->add_option("--connect", node_args.connect, "Coordinator host:port")->capture_default_str();
  node_cmd->add_option("--finger", node_args.finger, "Finger id")->required();
  node_cmd->add_option("--role", node_args.role, "thumb, index, middle, ring, little or generic")->capture_default_str();
  node_cmd->add_option("--preset", node_args.preset, "Geometry preset (default: the role's)");
  node_cmd->add_option("--fingers", node_args.fingers, "Geometry presets")->capture_default_str();
  node_cmd->add_option("--seed", node_args.seed, "Sensor noise seed");
  node_cmd->add_option("--duration", node_args.duration, "Stop after this many seconds (0 = until interrupted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (!config_root.empty()) ::setenv("SOFTHAND_CONFIG_ROOT", config_root.c_str(), 1);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  Logger log = make_logger(verbosity);

  try {
    if (*sim_cmd) return cmd_sim_hand(sim_args, log);
    if (*det_cmd) return cmd_detect_touch(det_args);
    if (*replay_cmd) return cmd_replay(replay_path, replay_speed, replay_fast);
    if (*dump_cmd) return cmd_protocol_dump(dump_path, dump_hex);
    if (*coord_cmd) return cmd_coordinator(coord_args, log);
    if (*node_cmd) return cmd_node(node_args, log);
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const coord::GraspError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kGrasp;
  } catch (const session::SessionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCorrupt;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}
