#include "softhand/sim_hand.hpp"

#include "softhand/config.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace softhand::sim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }

std::filesystem::path locate(const std::string& value, const std::filesystem::path& base) {
  const std::filesystem::path p(value);
  auto resolved = config::resolve_path(p, base);
  if (std::filesystem::exists(resolved)) return resolved;
  if (p.is_relative()) {
    const auto shipped = default_config_dir() / p;
    if (std::filesystem::exists(shipped)) return shipped;
  }
  return resolved;
}

double number(const config::KeyValueFile& file, int line, const std::string& word) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(word, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != word.size() || !std::isfinite(v)) file.fail(line, "'" + word + "' is not a number");
  return v;
}

}  // namespace

const char* action_name(Action::Kind k) {
  switch (k) {
    case Action::Kind::grasp: return "grasp";
    case Action::Kind::joints: return "joints";
    case Action::Kind::motors: return "motors";
    case Action::Kind::touch: return "touch";
    case Action::Kind::detach: return "detach";
    case Action::Kind::attach: return "attach";
  }
  return "?";
}

Manifest Manifest::parse(const std::string& text, const std::string& source, const std::filesystem::path& base) {
  const auto file = config::KeyValueFile::parse(text, source, {"scenario"});
  Manifest m;
  m.text = text;
  const config::Section& top = *file.section("");
  for (const auto& e : top.entries) {
    static const char* const kKnown[] = {"hand", "fingers", "grasps", "duration", "seed",
                                         "nodes", "sensor_noise_steps", "output"};
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return e.key == k; }) ==
        std::end(kKnown))
      file.fail(e.line, "unknown key '" + e.key + "'");
  }
  for (const auto& s : file.sections())
    if (!s.name.empty() && s.name != "scenario") file.fail(s.line, "unknown section [" + s.name + "]");

  auto require_file = [&](const char* key, const std::string& fallback) {
    const auto* e = top.find(key);
    const auto path = locate(e != nullptr ? e->value : fallback, base);
    if (!std::filesystem::exists(path))
      file.fail(e != nullptr ? e->line : 0, std::string(key) + " file '" + path.string() + "' not found");
    return path;
  };
  if (top.find("hand") == nullptr) file.fail(0, "missing required key 'hand'");
  m.hand = require_file("hand", "");
  m.fingers = require_file("fingers", "fingers.conf");
  m.grasps = require_file("grasps", "grasps.conf");

  if (top.find("duration") == nullptr) file.fail(0, "missing required key 'duration'");
  m.duration = file.get_double(top, "duration");
  if (!(m.duration >= 0.0) || m.duration > 86400.0) file.fail(top.find("duration")->line, "duration must lie in [0, 86400] s");
  const long long seed = file.get_int(top, "seed", 0);
  if (seed < 0) file.fail(top.find("seed")->line, "seed must be >= 0");
  m.seed = static_cast<std::uint64_t>(seed);
  if (const auto* e = top.find("nodes")) {
    const long long n = file.get_int(top, "nodes");
    if (n < 0 || n > 255) file.fail(e->line, "nodes must lie in 0..255");
    m.nodes = static_cast<int>(n);
  }
  if (const auto* e = top.find("sensor_noise_steps")) {
    m.sensor_noise_steps = file.get_double(top, "sensor_noise_steps");
    if (*m.sensor_noise_steps < 0.0) file.fail(e->line, "sensor_noise_steps must be >= 0");
  }
  if (const auto* e = top.find("output")) {
    std::filesystem::path out(e->value);
    m.output = out.is_absolute() ? out : base / out;
  }

  // The referenced configuration has to load before the scenario can name roles.
  PresetLibrary presets;
  HandConfiguration hand;
  GraspLibrary grasps;
  try {
    presets = PresetLibrary::load(m.fingers);
    hand = HandConfiguration::load(m.hand, presets);
    grasps = GraspLibrary::load(m.grasps);
  } catch (const config::ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    file.fail(top.find("hand")->line, ex.what());
  }
  if (m.nodes && *m.nodes > static_cast<int>(hand.fingers.size()))
    file.fail(top.find("nodes")->line, "nodes = " + std::to_string(*m.nodes) + " but the hand has only " +
                                           std::to_string(hand.fingers.size()) + " fingers");

  std::int64_t last = 0;
  if (const auto* scenario = file.section("scenario")) {
    for (const auto& e : scenario->entries) {
      const auto words = config::split_words(e.value);
      if (words.size() < 2) file.fail(e.line, "expected '<time> <action> ...'");
      Action a;
      a.line = e.line;
      const double t = number(file, e.line, words[0]);
      if (t < 0.0) file.fail(e.line, "negative time");
      a.t_us = to_us(t);
      if (a.t_us < last) file.fail(e.line, "scenario times must not decrease");
      last = a.t_us;

      const std::string& verb = words[1];
      auto expect = [&](std::size_t n, const char* usage) {
        if (words.size() != n) file.fail(e.line, std::string("usage: <time> ") + usage);
      };
      auto role_at = [&](std::size_t i) {
        const auto role = parse_role(words[i]);
        if (!role || *role == Role::generic) file.fail(e.line, "unknown role '" + words[i] + "'");
        if (hand.find(*role) == nullptr) file.fail(e.line, "the hand has no " + words[i] + " finger");
        return *role;
      };
      if (verb == "grasp") {
        expect(3, "grasp <name>");
        a.kind = Action::Kind::grasp;
        a.grasp = words[2];
        if (!grasps.has(a.grasp)) file.fail(e.line, "unknown grasp '" + a.grasp + "'");
      } else if (verb == "joints") {
        expect(6, "joints <role> <theta1> <theta2> <theta3>");
        a.kind = Action::Kind::joints;
        a.role = role_at(2);
        for (int i = 0; i < 3; ++i) a.q(i) = number(file, e.line, words[3 + i]);
        const auto& geom = presets.geometry(hand.find(a.role)->preset);
        if (!geom.within_limits(a.q)) file.fail(e.line, "joint targets outside the finger's limits");
      } else if (verb == "motors") {
        expect(5, "motors <role> <flexor> <extensor>");
        a.kind = Action::Kind::motors;
        a.role = role_at(2);
        a.flexor = number(file, e.line, words[3]);
        a.extensor = number(file, e.line, words[4]);
      } else if (verb == "touch") {
        expect(6, "touch <role> <fx> <fy> <duration>");
        a.kind = Action::Kind::touch;
        a.role = role_at(2);
        a.force = dynamics::Point(number(file, e.line, words[3]), number(file, e.line, words[4]));
        const double d = number(file, e.line, words[5]);
        if (!(d > 0.0)) file.fail(e.line, "touch duration must be positive");
        a.duration_us = to_us(d);
      } else if (verb == "detach" || verb == "attach") {
        expect(3, (verb + " <role>").c_str());
        a.kind = verb == "detach" ? Action::Kind::detach : Action::Kind::attach;
        a.role = role_at(2);
      } else {
        file.fail(e.line, "unknown action '" + verb + "'");
      }
      m.scenario.push_back(std::move(a));
    }
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config::ConfigError(path.string(), 0, "cannot open manifest");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string(), path.parent_path());
}

struct SimHand::Slot {
  std::uint8_t finger_id = 0;
  int generation = 0;
  std::shared_ptr<node::SimDriver> driver;
  std::unique_ptr<node::FingerNode> node;
};

SimHand::SimHand(HandConfiguration hand, PresetLibrary presets, GraspLibrary grasps, std::uint64_t seed,
                 Options options)
    : hand_(std::move(hand)),
      presets_(std::move(presets)),
      seed_(seed),
      options_(std::move(options)),
      hub_(InProcessHub::create()) {
  coordinator_ = std::make_unique<coord::Coordinator>(hand_, presets_, std::move(grasps), clock_,
                                                      options_.coordinator, options_.logger);
  coordinator_->add_listener(hub_);
}

SimHand::~SimHand() = default;

void SimHand::attach(std::uint8_t finger_id) {
  const FingerEntry* entry = hand_.find(finger_id);
  if (entry == nullptr) throw std::invalid_argument("finger " + std::to_string(finger_id) + " is not in the hand");
  int generation = 0;
  if (auto it = slots_.find(finger_id); it != slots_.end()) {
    generation = it->second->generation + 1;
    it->second->node->request_stop();
    it->second->node->service(clock_.now_us());
    retired_.push_back(std::move(it->second));
    slots_.erase(it);
  }

  auto params = presets_.params_for(entry->preset);
  if (options_.sensor_noise_steps) params.sensor.noise_std = *options_.sensor_noise_steps * params.sensor.step();

  auto slot = std::make_unique<Slot>();
  slot->finger_id = finger_id;
  slot->generation = generation;
  const std::uint64_t node_seed =
      splitmix64(seed_ ^ splitmix64((std::uint64_t{finger_id} << 32) | static_cast<std::uint32_t>(generation)));
  slot->driver = std::make_shared<node::SimDriver>(params, node_seed);

  node::NodeConfig cfg = options_.node;
  cfg.finger_id = finger_id;
  cfg.kind = kind_for(entry->role);
  cfg.geometry_hash = geometry_hash(params.geometry);
  auto transport = hub_->dial("finger-" + std::to_string(finger_id));
  if (!transport) throw std::runtime_error("in-process hub refused the connection");
  slot->node = std::make_unique<node::FingerNode>(cfg, std::move(transport), slot->driver, options_.logger);
  slot->node->start(clock_.now_us());
  slots_.emplace(finger_id, std::move(slot));
}

void SimHand::detach(std::uint8_t finger_id) {
  if (auto it = slots_.find(finger_id); it != slots_.end()) it->second->node->request_stop();
}

node::FingerNode* SimHand::node(std::uint8_t finger_id) {
  auto it = slots_.find(finger_id);
  return it == slots_.end() ? nullptr : it->second->node.get();
}

node::SimDriver* SimHand::driver(std::uint8_t finger_id) {
  auto it = slots_.find(finger_id);
  return it == slots_.end() ? nullptr : it->second->driver.get();
}

std::uint8_t SimHand::finger_for(Role role) const {
  const FingerEntry* e = hand_.find(role);
  if (e == nullptr) throw std::invalid_argument(std::string("the hand has no ") + role_name(role) + " finger");
  return e->finger_id;
}

void SimHand::post(std::function<void(SimHand&)> work) {
  std::lock_guard lock(post_mutex_);
  posted_.push_back(std::move(work));
}

void SimHand::drain_posts() {
  std::vector<std::function<void(SimHand&)>> work;
  {
    std::lock_guard lock(post_mutex_);
    work.swap(posted_);
  }
  for (auto& w : work) w(*this);
}

void SimHand::apply(const Action& a) {
  const std::uint8_t id = finger_for(a.role == Role::generic ? Role::index : a.role);
  switch (a.kind) {
    case Action::Kind::grasp:
      coordinator_->start_grasp(a.grasp);
      break;
    case Action::Kind::joints:
      coordinator_->send_joint_targets(id, a.q);
      break;
    case Action::Kind::motors:
      coordinator_->send_motor_targets(id, a.flexor, a.extensor);
      break;
    case Action::Kind::touch: {
      auto* d = driver(id);
      if (d == nullptr) throw std::invalid_argument(std::string("no ") + role_name(a.role) + " node is running");
      d->press_fingertip(a.force, clock_.now_us(), a.duration_us);
      break;
    }
    case Action::Kind::detach:
      detach(id);
      break;
    case Action::Kind::attach:
      attach(id);
      break;
  }
}

void SimHand::service_all() {
  const std::int64_t now = clock_.now_us();
  // Two passes at least, so that whatever the coordinator sent from its own
  // timers reaches the nodes at the same instant.
  std::size_t frames = 0;
  for (int pass = 0; pass < 2 || frames > 0; ++pass) {
    frames = 0;
    for (auto& [id, slot] : slots_) frames += slot->node->service(now);
    for (auto& slot : retired_) frames += slot->node->service(now);
    frames += coordinator_->service();
  }
  std::erase_if(retired_, [](const auto& s) { return s->node->lifecycle() == node::Lifecycle::stopped; });
}

void SimHand::run_until(std::int64_t t_end) {
  using Wall = std::chrono::steady_clock;
  const auto wall0 = Wall::now();
  const std::int64_t virt0 = clock_.now_us();
  auto wall_for = [&](std::int64_t t) {
    return wall0 + std::chrono::microseconds(std::llround(double(t - virt0) / options_.realtime));
  };

  drain_posts();
  service_all();
  for (;;) {
    std::int64_t t = std::min(coordinator_->next_deadline_us(), t_end);
    for (auto& [id, slot] : slots_) t = std::min(t, slot->node->next_deadline_us());
    for (auto& slot : retired_) t = std::min(t, slot->node->next_deadline_us());
    t = std::max(t, clock_.now_us());

    if (options_.realtime > 0.0) {
      bool interrupted = false;
      while (Wall::now() < wall_for(t)) {
        {
          std::lock_guard lock(post_mutex_);
          interrupted = !posted_.empty();
        }
        if (interrupted) break;
        std::this_thread::sleep_until(std::min(wall_for(t), Wall::now() + std::chrono::milliseconds(5)));
      }
      if (interrupted) {
        const auto elapsed = std::chrono::duration_cast<std::chrono::microseconds>(Wall::now() - wall0).count();
        const std::int64_t now = std::clamp<std::int64_t>(virt0 + std::llround(elapsed * options_.realtime),
                                                          clock_.now_us(), t);
        clock_.set(now);
        drain_posts();
        service_all();
        continue;
      }
    }

    clock_.set(t);
    drain_posts();
    service_all();
    if (t >= t_end) break;
  }
}

bool RunResult::grasps_ok() const {
  return action_errors.empty() &&
         std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.success; });
}

void write_angles_csv(std::ostream& out, std::uint8_t finger_id, const std::vector<AngleRow>& rows) {
  out << "timestamp_us,finger_id,theta1,theta2,theta3\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g\n", static_cast<long long>(r.timestamp_us),
                  int(finger_id), r.q(0), r.q(1), r.q(2));
    out << buf;
  }
}

RunResult run_manifest(const Manifest& manifest, const std::filesystem::path& output_dir, Logger logger,
                       const std::function<void(SimHand&)>& on_start, double realtime) {
  const auto presets = PresetLibrary::load(manifest.fingers);
  auto hand = HandConfiguration::load(manifest.hand, presets);
  auto grasps = GraspLibrary::load(manifest.grasps);

  Options options;
  options.logger = logger;
  options.sensor_noise_steps = manifest.sensor_noise_steps;
  options.realtime = realtime;

  std::filesystem::create_directories(output_dir);
  RunResult result;
  const auto session_path = output_dir / "session.hfsr";
  std::ofstream session_out(session_path, std::ios::binary | std::ios::trunc);
  if (!session_out) throw std::runtime_error("cannot write " + session_path.string());
  session::Header header;
  header.start_us = 0;
  header.config = manifest.text;
  session::Writer writer(session_out, header);

  SimHand sim(hand, presets, std::move(grasps), manifest.seed, options);
  sim.coordinator().record_to(&writer);
  sim.coordinator().set_pose_observer([&](const protocol::Header& h, const dynamics::Angles& q) {
    result.angles[h.finger_id].push_back(AngleRow{static_cast<std::int64_t>(h.timestamp_us), q});
  });

  const std::size_t count = manifest.nodes ? static_cast<std::size_t>(*manifest.nodes) : hand.fingers.size();
  for (std::size_t i = 0; i < count; ++i) {
    sim.attach(hand.fingers[i].finger_id);
    result.angles[hand.fingers[i].finger_id];
  }
  if (on_start) on_start(sim);

  const std::int64_t end = to_us(manifest.duration);
  for (const auto& a : manifest.scenario) {
    if (a.t_us > end) break;
    sim.run_until(a.t_us);
    try {
      sim.apply(a);
      logger->info("event=action line={} action={} t_us={}", a.line, action_name(a.kind), a.t_us);
    } catch (const std::exception& ex) {
      logger->error("event=action_failed line={} action={} t_us={} what=\"{}\"", a.line, action_name(a.kind), a.t_us,
                    ex.what());
      result.action_errors.push_back("line " + std::to_string(a.line) + ": " + ex.what());
    }
  }
  sim.run_until(end);
  sim.coordinator().record_to(nullptr);
  session_out.close();
  result.artifacts.push_back(session_path);

  result.reports = sim.coordinator().grasp_reports();
  result.touches = sim.coordinator().touch_events();

  const auto reports_path = output_dir / "grasp_reports.json";
  {
    nlohmann::json j = {{"reports", result.reports}, {"action_errors", result.action_errors}};
    std::ofstream out(reports_path, std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  result.artifacts.push_back(reports_path);

  const auto touches_path = output_dir / "touch_events.csv";
  {
    std::ofstream out(touches_path, std::ios::trunc);
    touch::write_events_csv(out, result.touches);
  }
  result.artifacts.push_back(touches_path);

  for (const auto& [id, rows] : result.angles) {
    const auto path = output_dir / ("angles_" + std::to_string(id) + ".csv");
    std::ofstream out(path, std::ios::trunc);
    write_angles_csv(out, id, rows);
    result.artifacts.push_back(path);
  }
  return result;
}

}  // namespace softhand::sim
