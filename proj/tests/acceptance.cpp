// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "softhand/coordinator.hpp"
#include "softhand/dynamics.hpp"
#include "softhand/finger_node.hpp"
#include "softhand/kinematics.hpp"
#include "softhand/presets.hpp"
#include "softhand/protocol.hpp"
#include "softhand/sim_hand.hpp"
#include "softhand/touch_detector.hpp"
#include "softhand/transport.hpp"
#include "support/grid_oracle.hpp"
#include "support/messages.hpp"
#include "support/oracles.hpp"
#include "support/traces.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>

using namespace softhand;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const PresetLibrary& presets() {
  static const auto lib = PresetLibrary::load(default_config_dir() / "fingers.conf");
  return lib;
}
const GraspLibrary& grasps() {
  static const auto lib = GraspLibrary::load(default_config_dir() / "grasps.conf");
  return lib;
}
HandConfiguration hand(const std::string& name) {
  return HandConfiguration::load(default_config_dir() / "hands" / (name + ".conf"), presets());
}

Outcome fk_oracle() {
  std::mt19937_64 rng(101);
  std::vector<std::pair<testing::Geometry, testing::Angles>> cases;
  for (int i = 0; i < 10000; ++i) {
    const auto g = testing::random_geometry(rng, true);
    cases.emplace_back(g, testing::random_angles(rng, g));
  }
  const auto t0 = Clock::now();
  std::vector<testing::Point> tips;
  tips.reserve(cases.size());
  for (const auto& [g, q] : cases) tips.push_back(kinematics::forward_kinematics(g, q));
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i)
    worst = std::max(worst, (tips[i] - testing::fk_matrix_product(cases[i].first, cases[i].second)).norm());
  return {worst <= 1e-9 && elapsed < 1.0, fmt("max error %.2e m, %.4f s for 1e4 samples", worst, elapsed)};
}

Outcome jacobian_fd() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto g = testing::random_geometry(rng, true);
    const auto q = testing::random_angles(rng, g);
    const auto fd = testing::central_difference_jacobian(
        [&](const testing::Angles& x) { return testing::fk_matrix_product(g, x); }, q, 1e-6);
    const auto an = kinematics::jacobian(g, q);
    worst = std::max(worst, (an - fd).norm() / std::max(an.norm(), 1e-12));
  }
  return {worst <= 1e-6, fmt("max relative error %.2e over 1e3 states", worst)};
}

Outcome equilibrium_grid() {
  std::mt19937_64 rng(103);
  const auto t0 = Clock::now();
  int ok = 0;
  double worst_margin = -1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = testing::random_equilibrium_case(rng);
    const auto eq = dynamics::equilibrium(c.geometry, dynamics::Angles::Zero(), c.tendon, c.skin, c.cables, c.torque);
    const auto grid = testing::grid_minimum(c, 50);
    if (grid.feasible_points > 0 && eq.energy <= grid.min_energy + grid.tolerance) ++ok;
    worst_margin = std::max(worst_margin, eq.energy - grid.min_energy);
  }
  const double elapsed = seconds_since(t0);
  return {ok == 20 && elapsed < 60.0,
          fmt("%d/20 sets at or below the 50^3 grid, worst E-Egrid %.2e J, %.2f s", ok, worst_margin, elapsed)};
}

Outcome flexion_monotone() {
  std::mt19937_64 rng(104);
  long violations = 0, steps = 0;
  for (int ramp = 0; ramp < 100; ++ramp) {
    const auto c = testing::random_equilibrium_case(rng);
    const double max_flex = c.tendon.flexor_arms.dot(c.geometry.upper);
    dynamics::Angles prev = c.geometry.lower;
    for (int k = 0; k <= 200; ++k) {
      const double d = max_flex * k / 200.0;
      const auto eq =
          dynamics::equilibrium(c.geometry, prev, c.tendon, c.skin, {d, -1.0}, dynamics::Torques::Zero());
      for (int i = 0; i < 3; ++i) violations += eq.q(i) < prev(i) - 1e-12;
      prev = eq.q;
      ++steps;
    }
  }
  return {violations == 0, fmt("%ld violations over 100 ramps (%ld steps)", violations, steps)};
}

Outcome quantization() {
  auto p = presets().params_for("index");
  p.sensor.noise_std = 0.0;
  auto s = dynamics::initial_state(p);
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  double worst = 0.0;
  for (int i = 0; i < 10000 / 3 + 1; ++i) {
    s.sensed = dynamics::Angles(u(rng), u(rng), u(rng));
    worst = std::max(worst, (dynamics::read_sensors(p, s, 1u).q - s.sensed).cwiseAbs().maxCoeff());
  }
  return {worst <= std::numbers::pi / 65536, fmt("max error %.3e rad (bound %.3e)", worst, std::numbers::pi / 65536)};
}

node::NodeConfig index_node() {
  node::NodeConfig cfg;
  cfg.finger_id = 1;
  cfg.kind = protocol::FingerKind::index;
  cfg.geometry_hash = geometry_hash(presets().geometry("index"));
  return cfg;
}

struct Counter {
  std::shared_ptr<Transport> link;
  protocol::StreamDecoder decoder;
  std::size_t pose = 0, motor = 0, hello = 0;
  std::optional<protocol::Message> hello_msg;

  void pump() {
    std::vector<std::uint8_t> rx;
    link->receive(rx);
    decoder.feed(rx);
    while (auto r = decoder.next()) {
      if (!r->ok()) continue;
      switch (r->frame->header.type) {
        case protocol::MsgType::pose_telemetry: ++pose; break;
        case protocol::MsgType::motor_telemetry: ++motor; break;
        case protocol::MsgType::hello: ++hello, hello_msg = r->frame->message; break;
        default: break;
      }
    }
  }
  void reset() { pose = motor = 0; }
};

Outcome rates() {
  const auto params = presets().params_for("index");
  // Virtual clock.
  VirtualClock clock;
  auto [a, b] = make_pipe();
  node::FingerNode n(index_node(), a, std::make_shared<node::SimDriver>(params, 7));
  Counter peer{b};
  n.service(0);
  peer.pump();
  b->send(protocol::encode(*peer.hello_msg, 1, 0, 0));
  n.service(0);
  for (;;) {
    const std::int64_t t = std::min<std::int64_t>(n.next_deadline_us(), 5'000'000);
    clock.set(t);
    n.service(t);
    peer.pump();
    if (t >= 5'000'000) break;
  }
  const bool virtual_ok = peer.pose == 1000 && peer.motor == 100;

  // Wall clock over TCP.
  TcpListener listener("127.0.0.1", 0);
  auto client = std::make_shared<TcpTransport>("127.0.0.1", listener.port());
  node::FingerNode live(index_node(), client, std::make_shared<node::SimDriver>(params, 8));
  std::shared_ptr<Transport> server;
  for (int i = 0; i < 200 && !server; ++i) {
    server = listener.accept();
    if (!server) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!server) return {false, "tcp accept failed"};
  Counter wire{server};
  WallClock wall;
  std::stop_source stop;
  std::thread runner([&] { live.run(wall, stop.get_token(), 500); });
  const auto give_up = Clock::now() + std::chrono::seconds(2);
  while (wire.hello == 0 && Clock::now() < give_up) {
    wire.pump();
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (wire.hello == 0) {
    stop.request_stop();
    runner.join();
    return {false, "no HELLO over tcp"};
  }
  server->send(protocol::encode(*wire.hello_msg, 1, 0, 0));
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  wire.pump();
  wire.reset();
  const auto t0 = Clock::now();
  while (seconds_since(t0) < 3.0) {
    wire.pump();
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  const double elapsed = seconds_since(t0);
  wire.pump();
  stop.request_stop();
  runner.join();
  const double pose_hz = double(wire.pose) / elapsed, motor_hz = double(wire.motor) / elapsed;
  const bool wall_ok = std::abs(pose_hz - 200.0) <= 20.0 && std::abs(motor_hz - 20.0) <= 2.0;
  return {virtual_ok && wall_ok, fmt("virtual 5 s: %zu pose / %zu motor; wall: %.1f Hz / %.2f Hz", peer.pose,
                                     peer.motor, pose_hz, motor_hz)};
}

Outcome protocol_suite() {
  using namespace protocol;
  std::mt19937_64 rng(106);
  int round_trip_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const Message m = testing::random_message(rng);
    const auto finger = static_cast<std::uint8_t>(rng());
    const auto seq = static_cast<std::uint32_t>(rng());
    const std::uint64_t ts = rng();
    const auto bytes = encode(m, finger, seq, ts);
    const auto r = decode_frame(bytes);
    round_trip_failures += !(r.ok() && r.frame->message == m && encode(r.frame->message, finger, seq, ts) == bytes);
  }

  const auto frame50 = testing::load_fixture("error");
  int undetected = 0;
  for (std::size_t bit = 0; bit < frame50.size() * 8; ++bit) {
    auto bytes = frame50;
    bytes[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    undetected += decode_frame(bytes).status != DecodeStatus::crc_mismatch;
  }

  const std::pair<const char*, Frame> golden[] = {
      {"hello", {{1, MsgType::hello, 1, 0, 0}, Hello{FingerKind::index, 0x0123456789ABCDEFull}}},
      {"pose_telemetry", {{1, MsgType::pose_telemetry, 2, 17, 1234567}, PoseTelemetry{{523599, -100, 6283185}}}},
      {"motor_telemetry", {{1, MsgType::motor_telemetry, 3, 4, 5000000}, MotorTelemetry{{2400000, -1200000}}}},
      {"set_motor_targets",
       {{1, MsgType::set_motor_targets, 0, 9, 42}, SetMotorTargets{{1000000, -500000}, 8000000}}},
      {"set_joint_targets",
       {{1, MsgType::set_joint_targets, 4, 0xFFFFFFFFu, 1ull << 40}, SetJointTargets{{900000, 750000, 500000}}}},
      {"touch_event", {{1, MsgType::touch_event, 1, 3, 2500000}, TouchEvent{1234, 0}}},
      {"heartbeat", {{1, MsgType::heartbeat, 0, 0, 0}, Heartbeat{}}},
      {"error", {{1, MsgType::error, 2, 1, 99}, Error{3, "joint target out of range"}}},
  };
  int golden_bad = 0;
  for (const auto& [name, f] : golden) {
    const auto bytes = testing::load_fixture(name);
    golden_bad += bytes.empty() || encode(f.message, f.header.finger_id, f.header.seq, f.header.timestamp_us) != bytes;
  }

  // A crash aborts the process, so finishing the loop is the check.
  long frames_found = 0;
  std::vector<std::uint8_t> buf;
  for (int i = 0; i < 1'000'000; ++i) {
    buf.resize(rng() % 192);
    for (auto& x : buf) x = static_cast<std::uint8_t>(rng());
    if (buf.size() > 2 && i % 2 == 0) buf[0] = 0x48, buf[1] = 0x46;
    StreamDecoder dec;
    dec.feed(buf);
    for (const auto& r : dec.finish()) frames_found += r.ok();
    (void)decode_frame(buf);
  }
  const bool ok = round_trip_failures == 0 && undetected == 0 && golden_bad == 0 && frame50.size() == 50;
  return {ok, fmt("round trip %d/10000 failed; %d of %zu bit flips undetected; %d/8 golden mismatches; "
                  "1e6 fuzz buffers decoded without a crash",
                  round_trip_failures, undetected, frame50.size() * 8, golden_bad)};
}

Outcome touch_detection() {
  const touch::DetectorConfig cfg;
  std::size_t pulses_total = 0, hits = 0, extra = 0, false_positives = 0, bend_events = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto pulses = testing::random_pulses(rng, cfg.threshold, 10'000'000);
    Eigen::Vector3d pose(0.9, 0.75, 0.5);
    pose *= std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto [hit, unmatched] =
        testing::score(pulses, touch::detect(testing::synth(10'000'000, pose, pulses, 2 * testing::kStep, seed), cfg));
    pulses_total += pulses.size();
    hits += hit;
    extra += unmatched;
    false_positives += touch::detect(testing::synth(10'000'000, pose, {}, 0.5 * cfg.threshold, 1000 + seed), cfg).size();
  }

  const auto params = presets().params_for("index");
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    node::SimDriver driver(params, seed);
    const dynamics::Angles target = dynamics::Angles(0.9, 0.75, 0.5) * (0.5 + 0.01 * double(seed));
    const auto [f, e] = dynamics::motor_targets_for(params, target);
    const double rate = std::max(std::abs(f), std::abs(e)) / 2.0;
    touch::Detector d(cfg);
    std::uint64_t k = 0;
    for (std::int64_t t = 0; t <= 4'000'000; t += 1000) {
      if (t == 500'000) driver.set_motor_targets(f, e, rate);
      if (t % 2000 == 0 && t > 0) driver.step(0.002);
      if (t % testing::kPeriod == 0) bend_events += d.feed(touch::Sample{k++, t, driver.read_sensors().q}).size();
    }
  }
  const bool ok = hits == pulses_total && extra == 0 && false_positives == 0 && bend_events == 0;
  return {ok, fmt("recall %zu/%zu, %zu unmatched, %zu false positives at 0.5x, %zu events over 50 bends",
                  hits, pulses_total, extra, false_positives, bend_events)};
}

Outcome grasp_suite() {
  static const char* const kNamed[] = {"large_diameter", "small_diameter", "ring",     "distal",
                                       "tip_pinch",      "tripod",         "quadpod",  "parallel_extension"};
  sim::SimHand s(hand("human5"), presets(), grasps(), 3);
  for (const auto& f : s.hand().fingers) s.attach(f.finger_id);
  s.run_until(100'000);
  int ok = 0;
  double worst = 0.0;
  for (const char* name : kNamed) {
    s.coordinator().start_grasp(name);
    s.run_for(2 * std::llround(grasps().get(name).budget() * 1e6) + 1);
    const auto reports = s.coordinator().grasp_reports();
    if (reports.empty() || reports.back().name != name) continue;
    bool all = reports.back().success;
    for (const auto& f : reports.back().fingers) {
      all = all && f.measured_valid && f.max_error <= 0.05;
      worst = std::max(worst, f.max_error);
    }
    ok += all;
  }

  sim::SimHand thumbless(hand("four_finger"), presets(), grasps(), 3);
  for (const auto& f : thumbless.hand().fingers) thumbless.attach(f.finger_id);
  thumbless.run_until(100'000);
  std::string raised = "nothing";
  try {
    thumbless.coordinator().start_grasp("tip_pinch");
  } catch (const coord::GraspError& e) {
    raised = e.kind() == coord::GraspError::Kind::missing_role ? "missing_role(" + e.role() + ")" : "other";
  }
  return {ok == 8 && raised == "missing_role(thumb)",
          fmt("%d/8 grasps within 0.05 rad (worst %.4f rad); thumbless tip_pinch raised %s", ok, worst,
              raised.c_str())};
}

Outcome modularity() {
  sim::SimHand s(hand("human5"), presets(), grasps(), 5);
  std::stringstream record;
  session::Writer writer(record, {});
  s.coordinator().record_to(&writer);
  for (const auto& f : s.hand().fingers) s.attach(f.finger_id);
  s.run_until(1'000'000);
  s.detach(s.finger_for(Role::ring));
  s.run_until(3'000'000);
  s.coordinator().record_to(nullptr);

  const auto reg = s.coordinator().registry();
  bool gap_free = reg.size() == 4;
  for (const auto& n : reg) gap_free = gap_free && n.pose.gap_free() && n.motor.gap_free() && n.heartbeat.gap_free();

  const std::string original = record.str();
  std::istringstream in(original);
  const auto session = session::read(in);
  VirtualClock clock;
  std::stringstream copy;
  session::Writer rewriter(copy, session.header);
  session::replay(session, 1.0, clock, [&](const session::Record& r, const protocol::Frame& f) {
    rewriter.append(r.arrival_us, r.direction,
                    protocol::encode(f.message, f.header.finger_id, f.header.seq, f.header.timestamp_us));
  });
  const bool identical = copy.str() == original;
  return {gap_free && identical, fmt("%zu fingers left, streams %s; replay of %zu records %s", reg.size(),
                                     gap_free ? "gap-free" : "with gaps", session.records.size(),
                                     identical ? "bit-identical" : "differs")};
}

Outcome determinism() {
  const auto manifest = sim::Manifest::load(default_config_dir() / "scenarios" / "grasp_suite.manifest");
  const fs::path root = fs::temp_directory_path() / ("softhand_acceptance_" + std::to_string(::getpid()));
  std::string bytes[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = root / std::to_string(i);
    fs::create_directories(dir);
    sim::run_manifest(manifest, dir);
    std::ifstream in(dir / "session.hfsr", std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    bytes[i] = s.str();
  }
  fs::remove_all(root);
  const bool same = !bytes[0].empty() && bytes[0] == bytes[1];
  return {same, fmt("two runs of grasp_suite: %zu and %zu bytes, %s", bytes[0].size(), bytes[1].size(),
                    same ? "identical" : "different")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"fk-oracle", fk_oracle},
      {"jacobian-fd", jacobian_fd},
      {"equilibrium-grid", equilibrium_grid},
      {"flexion-monotone", flexion_monotone},
      {"sensor-quantization", quantization},
      {"rate-conformance", rates},
      {"protocol", protocol_suite},
      {"touch-detection", touch_detection},
      {"grasp-suite", grasp_suite},
      {"modularity", modularity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-20s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
