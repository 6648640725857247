#include "doctest.h"

#include "softhand/coordinator.hpp"
#include "softhand/sim_hand.hpp"
#include "support/oracles.hpp"

#include <bit>
#include <sstream>

using namespace softhand;
using protocol::MsgType;

namespace {

struct Libraries {
  PresetLibrary presets = PresetLibrary::load(default_config_dir() / "fingers.conf");
  GraspLibrary grasps = GraspLibrary::load(default_config_dir() / "grasps.conf");
  HandConfiguration hand(const std::string& name) const {
    return HandConfiguration::load(default_config_dir() / "hands" / (name + ".conf"), presets);
  }
};

const Libraries& libs() {
  static const Libraries l;
  return l;
}

sim::SimHand make_sim(const std::string& hand = "human5", std::uint64_t seed = 1) {
  return sim::SimHand(libs().hand(hand), libs().presets, libs().grasps, seed);
}

void attach_all(sim::SimHand& s) {
  for (const auto& f : s.hand().fingers) s.attach(f.finger_id);
}

// A scripted node on a raw pipe, for protocol-level checks.
struct FakeNode {
  std::shared_ptr<Transport> link;
  protocol::StreamDecoder decoder;
  std::vector<protocol::Frame> received;
  std::uint8_t id;
  std::uint32_t pose_seq = 0;

  void send(const protocol::Message& m, std::uint32_t seq, std::int64_t t, std::optional<std::uint8_t> as = {}) {
    link->send(protocol::encode(m, as.value_or(id), seq, static_cast<std::uint64_t>(t)));
  }
  void hello(const HandConfiguration& hand, std::int64_t t) {
    const auto* e = hand.find(id);
    send(protocol::Hello{kind_for(e->role), geometry_hash(libs().presets.geometry(e->preset))}, 0, t);
  }
  void pose(const dynamics::Angles& q, std::int64_t t) {
    send(protocol::PoseTelemetry{{protocol::to_microradians(q(0)), protocol::to_microradians(q(1)),
                                  protocol::to_microradians(q(2))}},
         pose_seq++, t);
  }
  void pump() {
    std::vector<std::uint8_t> rx;
    link->receive(rx);
    decoder.feed(rx);
    while (auto r = decoder.next())
      if (r->ok()) received.push_back(*r->frame);
  }
  std::vector<std::uint16_t> errors() const {
    std::vector<std::uint16_t> out;
    for (const auto& f : received)
      if (f.header.type == MsgType::error) out.push_back(std::get<protocol::Error>(f.message).code);
    return out;
  }
};

struct Bench {
  VirtualClock clock;
  coord::Coordinator coordinator;

  explicit Bench(const std::string& hand = "human5", coord::CoordinatorConfig cfg = {})
      : coordinator(libs().hand(hand), libs().presets, libs().grasps, clock, cfg) {}

  FakeNode connect(std::uint8_t id) {
    auto [a, b] = make_pipe("fake");
    coordinator.add_connection(b);
    FakeNode n;
    n.link = a;
    n.id = id;
    return n;
  }
};

Eigen::Vector2d mount_oracle(const MountPose& m, const Eigen::Vector2d& p) {
  return {m.x + std::cos(m.yaw) * p.x() - std::sin(m.yaw) * p.y(), m.y + std::sin(m.yaw) * p.x() + std::cos(m.yaw) * p.y()};
}

// Joint positions from the homogeneous-transform chain.
std::array<Eigen::Vector2d, 4> chain_oracle(const dynamics::Geometry& g, const dynamics::Angles& q) {
  using testing::joint_transform;
  const Eigen::Matrix3d h3 = joint_transform(q(2), g.lengths(3));
  const Eigen::Matrix3d h32 = h3 * joint_transform(q(1), g.lengths(2));
  const Eigen::Matrix3d h321 = h32 * joint_transform(q(0), g.lengths(1));
  auto xy = [](const Eigen::Vector3d& v) { return Eigen::Vector2d(v(0), v(1)); };
  return {Eigen::Vector2d(g.lengths(3), 0.0), xy(h3 * Eigen::Vector3d(g.lengths(2), 0, 1)),
          xy(h32 * Eigen::Vector3d(g.lengths(1), 0, 1)), xy(h321 * Eigen::Vector3d(g.lengths(0), 0, 1))};
}

}  // namespace

TEST_CASE("coordinator: five nodes register with their roles") {
  auto s = make_sim();
  attach_all(s);
  s.run_until(100'000);
  const auto reg = s.coordinator().registry();
  REQUIRE(reg.size() == 5);
  const char* roles[] = {"thumb", "index", "middle", "ring", "little"};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(reg[i].finger_id == i);
    CHECK(std::string(role_name(reg[i].role)) == roles[i]);
    CHECK(reg[i].registered_us == 0);
    CHECK_FALSE(reg[i].geometry_warning);
    CHECK(reg[i].pose.frames == 20);
    CHECK(reg[i].pose.gap_free());
  }
  const auto events = s.coordinator().events_since(0);
  CHECK(std::count_if(events.begin(), events.end(), [](const auto& e) { return e.type == "registered"; }) == 5);
}

TEST_CASE("coordinator: detaching one of five leaves the other streams gap-free") {
  auto s = make_sim();
  std::stringstream record;
  session::Writer writer(record, {});
  s.coordinator().record_to(&writer);
  attach_all(s);
  s.run_until(1'000'000);
  s.detach(s.finger_for(Role::ring));
  s.run_until(3'000'000);
  s.coordinator().record_to(nullptr);

  const auto reg = s.coordinator().registry();
  REQUIRE(reg.size() == 4);
  for (const auto& n : reg) {
    CHECK(n.role != Role::ring);
    CHECK(n.pose.gap_free());
    CHECK(n.motor.gap_free());
    CHECK(n.heartbeat.gap_free());
    CHECK(n.pose.frames == 600);
    CHECK(n.motor.frames == 60);
  }
  CHECK_FALSE(s.coordinator().active(3));
  const auto events = s.coordinator().events_since(0);
  CHECK(std::count_if(events.begin(), events.end(), [](const auto& e) { return e.type == "detached"; }) == 1);

  // The record reads back and replays to the same bytes.
  const std::string original = record.str();
  std::istringstream in(original);
  const auto session = session::read(in);
  CHECK(session.records.size() == writer.records());
  VirtualClock clock(0);
  std::stringstream copy;
  session::Writer rewriter(copy, session.header);
  session::replay(session, 1.0, clock, [&](const session::Record& r, const protocol::Frame& f) {
    CHECK(protocol::encode(f.message, f.header.finger_id, f.header.seq, f.header.timestamp_us) == r.frame);
    rewriter.append(r.arrival_us, r.direction, r.frame);
  });
  CHECK(copy.str() == original);
}

TEST_CASE("coordinator: detaching any subset leaves the rest streaming and usable") {
  std::string text;
  for (const char* role : {"thumb", "index", "middle", "ring", "little"})
    text += std::string("[grasp.only_") + role + "]\nclose = 0.3\nhold = 0.1\n" + role + " = 0.6 0.5 0.3\n";
  const auto lib = GraspLibrary::parse(config::KeyValueFile::parse(text));
  const Role roles[] = {Role::thumb, Role::index, Role::middle, Role::ring, Role::little};
  for (unsigned mask = 1; mask < 31; ++mask) {
    CAPTURE(mask);
    sim::SimHand s(libs().hand("human5"), libs().presets, lib, mask);
    attach_all(s);
    s.run_until(300'000);
    for (int i = 0; i < 5; ++i)
      if (mask & (1u << i)) s.detach(s.finger_for(roles[i]));
    s.run_until(400'000);
    const auto reg = s.coordinator().registry();
    CHECK(reg.size() == 5u - std::popcount(mask));
    for (int i = 0; i < 5; ++i) {
      const std::string grasp = std::string("only_") + role_name(roles[i]);
      if (mask & (1u << i)) {
        CHECK_THROWS_AS(s.coordinator().start_grasp(grasp), coord::GraspError);
        continue;
      }
      s.coordinator().start_grasp(grasp);
      s.run_for(900'001);
      CHECK(s.coordinator().grasp_reports().back().success);
    }
    for (const auto& n : s.coordinator().registry()) {
      CHECK(n.pose.gap_free());
      CHECK(n.motor.gap_free());
    }
  }
}

TEST_CASE("coordinator: a hand at rest has straight fingers along their mounts") {
  sim::Options opt;
  opt.sensor_noise_steps = 0.0;
  sim::SimHand s(libs().hand("human5"), libs().presets, libs().grasps, 1, opt);
  attach_all(s);
  s.run_until(100'000);
  for (const auto& f : s.coordinator().hand_pose().fingers) {
    const auto& entry = *s.hand().find(f.finger_id);
    const double reach = libs().presets.geometry(entry.preset).lengths.sum();
    CHECK((f.tip - mount_oracle(entry.mount, Eigen::Vector2d(reach, 0.0))).norm() < 1e-12);
  }
}

TEST_CASE("coordinator: neutral from rest succeeds with zero error") {
  sim::Options opt;
  opt.sensor_noise_steps = 0.0;
  sim::SimHand s(libs().hand("human5"), libs().presets, libs().grasps, 1, opt);
  attach_all(s);
  s.run_until(100'000);
  s.coordinator().start_grasp("neutral");
  s.run_for(2'400'001);
  REQUIRE(s.coordinator().grasp_reports().size() == 1);
  const auto r = s.coordinator().grasp_reports()[0];
  CHECK(r.success);
  for (const auto& f : r.fingers) CHECK(f.max_error == 0.0);
}

TEST_CASE("coordinator: a detached finger can come back") {
  auto s = make_sim();
  attach_all(s);
  s.run_until(500'000);
  s.detach(2);
  s.run_until(600'000);
  CHECK_FALSE(s.coordinator().active(2));
  s.attach(2);
  s.run_until(1'600'000);
  REQUIRE(s.coordinator().active(2));
  for (const auto& n : s.coordinator().registry()) {
    if (n.finger_id != 2) continue;
    CHECK(n.registered_us == 600'000);
    CHECK(n.pose.frames == 200);
    CHECK(n.pose.gap_free());
  }
}

TEST_CASE("coordinator: a second node with a taken id is refused") {
  auto s = make_sim();
  attach_all(s);
  s.run_until(100'000);
  s.attach(1);  // stops the old node first: that is a legitimate handover
  s.run_until(200'000);
  CHECK(s.coordinator().active(1));

  Bench b;
  auto first = b.connect(1);
  auto second = b.connect(1);
  first.hello(b.coordinator.hand(), 0);
  second.hello(b.coordinator.hand(), 0);
  b.coordinator.service();
  first.pump();
  second.pump();
  CHECK(first.errors().empty());
  REQUIRE(first.received.size() == 1);
  CHECK(first.received[0].header.type == MsgType::hello);
  CHECK(second.errors() == std::vector<std::uint16_t>{protocol::error_code::duplicate_finger});
  CHECK(b.coordinator.registry().size() == 1);
}

TEST_CASE("coordinator: protocol misuse gets the matching error code") {
  Bench b;
  auto n = b.connect(1);
  n.pose(dynamics::Angles::Zero(), 0);  // before HELLO
  b.coordinator.service();
  n.pump();
  CHECK(n.errors() == std::vector<std::uint16_t>{protocol::error_code::not_registered});

  n.hello(b.coordinator.hand(), 0);
  n.send(protocol::PoseTelemetry{}, 0, 0, 2);                   // wrong id on a bound link
  n.send(protocol::SetJointTargets{}, 0, 0);                    // command from a node
  n.send(protocol::Error{9, "motor driver fault"}, 1, 0);       // reported upstream
  b.coordinator.service();
  n.received.clear();
  n.pump();
  CHECK(n.errors() == std::vector<std::uint16_t>{protocol::error_code::wrong_finger,
                                                  protocol::error_code::unexpected_message});
  const auto reg = b.coordinator.registry();
  REQUIRE(reg.size() == 1);
  CHECK(reg[0].node_errors == 1);
  const auto events = b.coordinator.events_since(0);
  CHECK(events.back().type == "node_error");
  CHECK(events.back().data["text"] == "motor driver fault");
}

TEST_CASE("coordinator: unknown geometry is accepted with a warning") {
  Bench b;
  auto n = b.connect(1);
  n.send(protocol::Hello{protocol::FingerKind::index, 0x1234}, 0, 0);
  b.coordinator.service();
  const auto reg = b.coordinator.registry();
  REQUIRE(reg.size() == 1);
  CHECK(reg[0].geometry_warning);
  CHECK(reg[0].preset == "index");  // the hand configuration still names it
  CHECK(b.coordinator.hand_pose().fingers[0].geometry_warning);
}

TEST_CASE("coordinator: silent nodes are evicted after 3 s") {
  Bench b;
  auto n = b.connect(1);
  n.hello(b.coordinator.hand(), 0);
  b.coordinator.service();
  REQUIRE(b.coordinator.active(1));
  CHECK(b.coordinator.next_deadline_us() == 3'000'001);
  b.clock.set(3'000'000);
  b.coordinator.service();
  CHECK(b.coordinator.active(1));
  b.clock.set(3'000'001);
  b.coordinator.service();
  CHECK_FALSE(b.coordinator.active(1));
  CHECK_FALSE(n.link->connected());
  CHECK(b.coordinator.events_since(0).back().type == "evicted");
  CHECK_THROWS_AS(b.coordinator.hand_pose(), std::runtime_error);
}

TEST_CASE("coordinator: any frame keeps a node alive") {
  Bench b;
  auto n = b.connect(1);
  n.hello(b.coordinator.hand(), 0);
  b.coordinator.service();
  for (std::int64_t t = 1'000'000; t <= 10'000'000; t += 1'000'000) {
    b.clock.set(t);
    n.send(protocol::Heartbeat{}, static_cast<std::uint32_t>(t / 1'000'000), t);
    b.coordinator.service();
  }
  CHECK(b.coordinator.active(1));
}

TEST_CASE("coordinator: hand_pose flags staleness without waiting") {
  Bench b;
  auto n = b.connect(1);
  n.hello(b.coordinator.hand(), 0);
  b.clock.set(1000);
  n.pose(dynamics::Angles(0.1, 0.2, 0.3), 1000);
  b.coordinator.service();
  b.clock.set(2'001'000);
  const auto pose = b.coordinator.hand_pose();
  REQUIRE(pose.fingers.size() == 1);
  CHECK(pose.fingers[0].has_pose);
  CHECK(pose.fingers[0].staleness_us == 2'000'000);
  CHECK(pose.fingers[0].sample_us == 1000);
  CHECK(pose.fingers[0].q(2) == doctest::Approx(0.3));
}

TEST_CASE("coordinator: hand_pose matches a recomputation from the recorded frames") {
  auto s = make_sim("human5", 8);
  std::stringstream record;
  session::Writer writer(record, {});
  s.coordinator().record_to(&writer);
  attach_all(s);
  s.run_until(200'000);
  s.coordinator().start_grasp("tripod");
  s.run_until(1'000'000);
  const auto pose = s.coordinator().hand_pose();
  s.coordinator().record_to(nullptr);

  // Latest POSE_TELEMETRY per finger, straight from the bytes.
  std::istringstream in(record.str());
  std::map<int, dynamics::Angles> latest;
  for (const auto& r : session::read(in).records) {
    if (r.direction != session::Direction::node_to_coordinator || r.frame[3] != 0x02) continue;
    const int id = r.frame[4];
    auto i32 = [&](std::size_t off) {
      std::uint32_t v = 0;
      for (int k = 3; k >= 0; --k) v = (v << 8) | r.frame[off + k];
      return static_cast<std::int32_t>(v);
    };
    latest[id] = dynamics::Angles(i32(19) * 1e-6, i32(23) * 1e-6, i32(27) * 1e-6);
  }
  REQUIRE(pose.fingers.size() == 5);
  for (const auto& f : pose.fingers) {
    const auto& entry = *s.hand().find(f.finger_id);
    REQUIRE(latest.count(f.finger_id));
    const auto q = latest.at(f.finger_id);
    CHECK((f.q - q).cwiseAbs().maxCoeff() == 0.0);
    const auto chain = chain_oracle(libs().presets.geometry(entry.preset), q);
    for (int j = 0; j < 4; ++j) CHECK((f.joints[j] - mount_oracle(entry.mount, chain[j])).norm() < 1e-12);
    CHECK((f.tip - f.joints[3]).norm() == 0.0);
  }
}

TEST_CASE("coordinator: every named grasp succeeds on the five-finger hand") {
  auto s = make_sim("human5", 21);
  attach_all(s);
  s.run_until(100'000);
  for (const auto& name : libs().grasps.names()) {
    s.coordinator().start_grasp(name);
    CHECK(s.coordinator().grasp_active());
    s.run_for(2 * std::llround(libs().grasps.get(name).budget() * 1e6) + 1);
    CHECK_FALSE(s.coordinator().grasp_active());
    const auto r = s.coordinator().grasp_reports().back();
    INFO(name);
    CHECK(r.name == name);
    CHECK(r.success);
    CHECK_FALSE(r.timed_out);
    CHECK(r.fingers.size() == libs().grasps.get(name).targets.size());
    for (const auto& f : r.fingers) {
      CHECK(f.measured_valid);
      CHECK(f.max_error <= 0.05);
      CHECK(f.max_error == doctest::Approx((f.measured - f.target).cwiseAbs().maxCoeff()));
    }
    // The verdict comes at the end of the hold phase.
    CHECK(r.finished_us - r.started_us == std::llround(libs().grasps.get(name).budget() * 1e6));
  }
  CHECK(s.coordinator().touch_events().empty());
}

TEST_CASE("coordinator: grasp preconditions") {
  SUBCASE("tip pinch without a thumb") {
    auto s = make_sim("four_finger");
    attach_all(s);
    s.run_until(100'000);
    try {
      s.coordinator().start_grasp("tip_pinch");
      FAIL("expected a missing-role error");
    } catch (const coord::GraspError& e) {
      CHECK(e.kind() == coord::GraspError::Kind::missing_role);
      CHECK(e.role() == "thumb");
    }
    CHECK_FALSE(s.coordinator().grasp_active());
    CHECK(s.coordinator().grasp_reports().empty());
  }
  SUBCASE("thumb configured but not connected") {
    auto s = make_sim();
    for (const auto& f : s.hand().fingers)
      if (f.role != Role::thumb) s.attach(f.finger_id);
    s.run_until(100'000);
    CHECK_THROWS_AS(s.coordinator().start_grasp("ring"), coord::GraspError);
  }
  SUBCASE("one grasp at a time") {
    auto s = make_sim();
    attach_all(s);
    s.run_until(100'000);
    s.coordinator().start_grasp("tripod");
    try {
      s.coordinator().start_grasp("ring");
      FAIL("expected busy");
    } catch (const coord::GraspError& e) {
      CHECK(e.kind() == coord::GraspError::Kind::busy);
    }
  }
  SUBCASE("unknown grasp") {
    auto s = make_sim();
    CHECK_THROWS_AS(s.coordinator().start_grasp("hook"), coord::GraspError);
  }
  SUBCASE("target outside the finger limits") {
    const auto lib = GraspLibrary::parse(config::KeyValueFile::parse("[grasp.over]\nclose = 1\nindex = 2 0 0\n"));
    VirtualClock clock;
    coord::Coordinator c(libs().hand("human5"), libs().presets, lib, clock);
    auto [a, b] = make_pipe();
    c.add_connection(b);
    FakeNode n{a, {}, {}, 1};
    n.hello(c.hand(), 0);
    c.service();
    try {
      c.start_grasp("over");
      FAIL("expected out_of_limits");
    } catch (const coord::GraspError& e) {
      CHECK(e.kind() == coord::GraspError::Kind::out_of_limits);
    }
  }
}

TEST_CASE("coordinator: a grasp fails when a finger drops out") {
  auto s = make_sim();
  attach_all(s);
  s.run_until(100'000);
  s.coordinator().start_grasp("tip_pinch");
  s.run_until(500'000);
  s.detach(s.finger_for(Role::thumb));
  s.run_until(600'000);
  REQUIRE(s.coordinator().grasp_reports().size() == 1);
  const auto r = s.coordinator().grasp_reports()[0];
  CHECK_FALSE(r.success);
  CHECK(r.failure.find("thumb") != std::string::npos);
}

TEST_CASE("coordinator: an unreachable target times out at twice the budget") {
  const auto lib = GraspLibrary::parse(
      config::KeyValueFile::parse("[grasp.flat_tip]\nclose = 0.5\nhold = 0.1\nindex = 1.2 0 0\n"));
  sim::SimHand s(libs().hand("human5"), libs().presets, lib, 4);
  attach_all(s);
  s.run_until(100'000);
  s.coordinator().start_grasp("flat_tip");
  s.run_until(100'000 + 1'200'000);
  REQUIRE(s.coordinator().grasp_reports().size() == 1);
  const auto r = s.coordinator().grasp_reports()[0];
  CHECK_FALSE(r.success);
  CHECK(r.timed_out);
  CHECK(r.finished_us - r.started_us == 1'200'000);
}

TEST_CASE("coordinator: touches are aggregated and recorded as events") {
  auto s = make_sim("human5", 2);
  std::stringstream record;
  session::Writer writer(record, {});
  s.coordinator().record_to(&writer);
  attach_all(s);
  s.run_until(100'000);
  s.coordinator().send_joint_targets(1, dynamics::Angles(0.6, 0.5, 0.3));
  s.run_until(1'000'000);
  s.driver(1)->press_fingertip(dynamics::Point(0, 0.3), s.clock().now_us(), 100'000);
  s.run_until(2'000'000);
  s.coordinator().record_to(nullptr);

  const auto touches = s.coordinator().touch_events();
  REQUIRE(touches.size() == 1);
  CHECK(touches[0].finger_id == 1);
  CHECK(touches[0].onset_us >= 1'000'000);
  CHECK(touches[0].onset_us <= 1'100'000);

  std::istringstream in(record.str());
  std::size_t recorded = 0;
  for (const auto& r : session::read(in).records) {
    if (r.direction != session::Direction::coordinator_event) continue;
    const auto f = *protocol::decode_frame(r.frame).frame;
    CHECK(f.header.type == MsgType::touch_event);
    CHECK(f.header.finger_id == 1);
    CHECK(f.header.timestamp_us == static_cast<std::uint64_t>(touches[0].onset_us));
    CHECK(std::get<protocol::TouchEvent>(f.message).joint == touches[0].joint);
    ++recorded;
  }
  CHECK(recorded == 1);
}

TEST_CASE("coordinator: event feed is ordered and bounded") {
  coord::CoordinatorConfig cfg;
  cfg.event_capacity = 3;
  Bench b("human5", cfg);
  std::vector<FakeNode> nodes;
  for (std::uint8_t id = 0; id < 5; ++id) {
    nodes.push_back(b.connect(id));
    nodes.back().hello(b.coordinator.hand(), 0);
  }
  b.coordinator.service();
  CHECK(b.coordinator.last_event_id() == 5);
  const auto all = b.coordinator.events_since(0);
  REQUIRE(all.size() == 3);
  CHECK(all[0].id == 3);
  CHECK(b.coordinator.events_since(4).size() == 1);
  CHECK(b.coordinator.events_since(0, 2).size() == 2);
}

TEST_CASE("session: replay timing at 1x and 10x") {
  auto s = make_sim();
  std::stringstream record;
  session::Header header;
  header.config = "test";
  session::Writer writer(record, header);
  s.coordinator().record_to(&writer);
  s.attach(1);
  s.run_until(500'000);
  s.coordinator().record_to(nullptr);
  std::istringstream in(record.str());
  const auto session = session::read(in);
  REQUIRE(session.records.size() > 100);
  CHECK(session.header.config == "test");
  const std::int64_t span =
      static_cast<std::int64_t>(session.records.back().arrival_us - session.records.front().arrival_us);
  CHECK(span == 500'000);

  for (double speed : {1.0, 10.0}) {
    VirtualClock clock(123);
    std::vector<std::int64_t> times;
    const auto elapsed = session::replay(session, speed, clock, [&](const session::Record&, const protocol::Frame&) {
      times.push_back(clock.now_us() - 123);
    });
    CHECK(elapsed == std::llround(double(span) / speed));
    REQUIRE(times.size() == session.records.size());
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(std::abs(double(times[i]) - double(session.records[i].arrival_us - session.records[0].arrival_us) / speed) <= 0.5);
  }
  WallClock wall;
  const auto elapsed = session::replay(session, 10.0, wall, [](const auto&, const auto&) {});
  CHECK(elapsed >= 50'000);
  CHECK(elapsed < 50'000 + 25'000);
}

TEST_CASE("session: empty record and corrupt frames") {
  std::stringstream empty;
  { session::Writer w(empty, {}); }
  std::istringstream in(empty.str());
  const auto s = session::read(in);
  CHECK(s.records.empty());
  VirtualClock clock;
  int calls = 0;
  CHECK(session::replay(s, 1.0, clock, [&](const auto&, const auto&) { ++calls; }) == 0);
  CHECK(calls == 0);

  std::stringstream good;
  session::Writer w(good, {});
  for (std::uint32_t i = 0; i < 10; ++i) w.append(i * 10, session::Direction::node_to_coordinator,
                                                  protocol::encode(protocol::Heartbeat{}, 1, i, i * 10));
  const std::string bytes = good.str();
  const std::size_t header = 20;
  const std::size_t record = 4 + 9 + protocol::kMinFrameSize;
  for (std::size_t k : {0u, 6u, 9u}) {
    std::string bad = bytes;
    bad[header + k * record + 4 + 9 + 10] ^= 0x40;  // inside the frame header
    std::istringstream bin(bad);
    try {
      session::read(bin);
      FAIL("corruption not detected");
    } catch (const session::SessionError& e) {
      CHECK(e.frame_index() == static_cast<long long>(k));
    }
  }
  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(session::read(truncated), session::SessionError);
  std::istringstream garbage("nope");
  try {
    session::read(garbage);
  } catch (const session::SessionError& e) {
    CHECK(e.frame_index() == -1);
  }
  CHECK_THROWS_AS(w.append(5, session::Direction::node_to_coordinator, protocol::encode(protocol::Heartbeat{}, 1, 0, 0)),
                  std::invalid_argument);
}
