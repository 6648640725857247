#include "doctest.h"

#include "softhand/sim_hand.hpp"
#include "softhand/ui_bridge.hpp"

#include "httplib.h"

#include <atomic>
#include <thread>

using namespace softhand;
using nlohmann::json;

namespace {

sim::SimHand make_sim(const std::string& hand = "human5") {
  const auto presets = PresetLibrary::load(default_config_dir() / "fingers.conf");
  return sim::SimHand(HandConfiguration::load(default_config_dir() / "hands" / (hand + ".conf"), presets), presets,
                      GraspLibrary::load(default_config_dir() / "grasps.conf"), 1);
}

void attach_all(sim::SimHand& s) {
  for (const auto& f : s.hand().fingers) s.attach(f.finger_id);
}

// Parses "event: x\ndata: {...}\n\n" blocks.
std::vector<std::pair<std::string, json>> parse_sse(const std::string& text) {
  std::vector<std::pair<std::string, json>> out;
  std::size_t pos = 0;
  for (;;) {
    const auto end = text.find("\n\n", pos);
    if (end == std::string::npos) break;
    const std::string block = text.substr(pos, end - pos);
    pos = end + 2;
    const auto nl = block.find('\n');
    REQUIRE(block.rfind("event: ", 0) == 0);
    REQUIRE(block.compare(nl + 1, 6, "data: ") == 0);
    out.emplace_back(block.substr(7, nl - 7), json::parse(block.substr(nl + 7)));
  }
  return out;
}

}  // namespace

TEST_CASE("bridge: config lists fingers and grasps") {
  auto s = make_sim();
  const auto j = bridge::config_message(s.coordinator());
  CHECK(j["type"] == "config");
  CHECK(j["hand"] == "human5");
  REQUIRE(j["fingers"].size() == 5);
  CHECK(j["fingers"][0]["role"] == "thumb");
  CHECK(j["fingers"][0]["lengths"].size() == 4);
  CHECK(j["fingers"][4]["mount"]["y"].get<double>() == doctest::Approx(0.033));
  CHECK(j["grasps"].size() == 9);
  bool found = false;
  for (const auto& g : j["grasps"])
    if (g["name"] == "tip_pinch") {
      found = true;
      CHECK(g["targets"].size() == 2);
      CHECK(g["targets"]["index"][0].get<double>() == doctest::Approx(1.08));
      CHECK(g["tolerance"].get<double>() == doctest::Approx(0.05));
    }
  CHECK(found);
}

TEST_CASE("bridge: snapshot before and after registration") {
  auto s = make_sim();
  auto j = bridge::snapshot_message(s.coordinator());
  CHECK(j["type"] == "snapshot");
  CHECK(j["fingers"].is_array());
  CHECK(j["fingers"].empty());
  CHECK(j["grasp_phase"] == "idle");
  CHECK(j["last_report"].is_null());

  attach_all(s);
  s.run_until(100'000);
  s.coordinator().start_grasp("distal");
  s.run_until(200'000);
  j = bridge::snapshot_message(s.coordinator());
  CHECK(j["fingers"].size() == 5);
  CHECK(j["grasp"] == "distal");
  CHECK(j["grasp_phase"] == "preshape");
  CHECK(j["fingers"][1]["joints"].size() == 4);
  CHECK(j["time_us"] == 200'000);
  s.run_until(2'000'000);
  j = bridge::snapshot_message(s.coordinator());
  CHECK(j["grasp_phase"] == "idle");
  CHECK(j["last_report"]["name"] == "distal");
  CHECK(j["last_report"]["success"] == true);

  const auto events = s.coordinator().events_since(0);
  const auto e = bridge::event_message(events.front());
  CHECK(e["type"] == "event");
  CHECK(e["event"] == "registered");
  CHECK(e["id"] == 1);
}

TEST_CASE("bridge: command validation") {
  auto s = make_sim("four_finger");
  attach_all(s);
  s.run_until(100'000);
  auto& c = s.coordinator();

  CHECK(bridge::execute_command(c, json::array()).status == 400);
  CHECK(bridge::execute_command(c, {{"type", 3}}).status == 400);
  CHECK(bridge::execute_command(c, {{"type", "dance"}}).status == 400);
  CHECK(bridge::execute_command(c, {{"type", "grasp"}}).status == 400);

  auto r = bridge::execute_command(c, {{"type", "grasp"}, {"name", "tip_pinch"}});
  CHECK(r.status == 422);
  CHECK(r.body["error"] == "missing_role");
  CHECK(r.body["role"] == "thumb");
  CHECK(bridge::execute_command(c, {{"type", "grasp"}, {"name", "nope"}}).body["error"] == "unknown_grasp");

  r = bridge::execute_command(c, {{"type", "joint_targets"}, {"finger_id", 1}, {"q", {0.6, 0.5, 0.3}}});
  CHECK(r.status == 200);
  CHECK(r.body["ok"] == true);
  CHECK(bridge::execute_command(c, {{"type", "joint_targets"}, {"finger_id", 0}, {"q", {0.6, 0.5, 0.3}}}).status ==
        422);
  CHECK(bridge::execute_command(c, {{"type", "joint_targets"}, {"finger_id", 1}, {"q", {9.0, 0.5, 0.3}}}).status ==
        422);
  CHECK(bridge::execute_command(c, {{"type", "joint_targets"}, {"finger_id", 1}, {"q", {0.1}}}).status == 422);
  CHECK(bridge::execute_command(c, {{"type", "joint_targets"}, {"finger_id", 300}, {"q", {0, 0, 0}}}).status ==
        422);

  CHECK(bridge::execute_command(c, {{"type", "touch"}, {"finger_id", 1}, {"force", {0, 0.3}}}).status == 501);
  std::vector<std::uint8_t> pressed;
  const bridge::TouchHook hook = [&](std::uint8_t id, const dynamics::Point&, double) { pressed.push_back(id); };
  CHECK(bridge::execute_command(c, {{"type", "touch"}, {"finger_id", 2}, {"force", {0, 0.3}}}, hook).status == 200);
  CHECK(bridge::execute_command(c, {{"type", "touch"}, {"finger_id", 2}, {"force", {0}}}, hook).status == 422);
  CHECK(pressed == std::vector<std::uint8_t>{2});
}

TEST_CASE("bridge: live HTTP and event stream") {
  auto s = make_sim();
  attach_all(s);
  s.run_until(100'000);

  // The simulation owns the coordinator; the bridge posts work to it.
  std::atomic<bool> stop{false};
  std::thread sim_thread([&] {
    while (!stop) {
      s.run_for(20'000);
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  });
  bridge::BridgeConfig cfg;
  cfg.port = 0;
  bridge::UiBridge ui(
      s.coordinator(), cfg, [&](std::function<void()> work) { s.post([w = std::move(work)](sim::SimHand&) { w(); }); },
      [&](std::uint8_t id, const dynamics::Point& f, double d) {
        s.driver(id)->press_fingertip(f, s.clock().now_us(), std::llround(d * 1e6));
      });
  ui.start();
  REQUIRE(ui.port() != 0);

  httplib::Client client("127.0.0.1", ui.port());
  client.set_read_timeout(5, 0);

  auto res = client.Get("/api/config");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(res->body)["hand"] == "human5");

  res = client.Get("/api/snapshot");
  REQUIRE(res);
  CHECK(json::parse(res->body)["fingers"].size() == 5);

  res = client.Options("/api/command");
  REQUIRE(res);
  CHECK(res->status == 204);

  res = client.Post("/api/command", R"({"type":"grasp","name":"tripod"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Post("/api/command", R"({"type":"grasp","name":"ring"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  res = client.Post("/api/command", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = client.Get("/api/stream?rate=0");
  REQUIRE(res);
  CHECK(res->status == 400);

  // Read the stream until a grasp report arrives.
  std::string body;
  bool done = false;
  res = client.Get("/api/stream?rate=100", [&](const char* data, std::size_t n) {
    body.append(data, n);
    done = body.find("\"grasp_report\"") != std::string::npos && body.size() > 0 &&
           body.compare(body.size() - 2, 2, "\n\n") == 0;
    return !done;
  });
  CHECK(done);
  ui.stop();
  stop = true;
  sim_thread.join();

  const auto messages = parse_sse(body);
  REQUIRE(messages.size() >= 3);
  CHECK(messages[0].first == "config");
  std::uint64_t last_id = 0;
  std::size_t snapshots = 0;
  bool saw_report = false;
  for (const auto& [name, data] : messages) {
    CHECK(data["type"] == name);
    if (name == "snapshot") ++snapshots;
    if (name == "event") {
      CHECK(data["id"].get<std::uint64_t>() > last_id);
      last_id = data["id"];
      if (data["event"] == "grasp_report") {
        saw_report = true;
        CHECK(data["data"]["name"] == "tripod");
        CHECK(data["data"]["success"] == true);
      }
    }
  }
  CHECK(saw_report);
  CHECK(snapshots >= 2);
}
