#include "softhand/coordinator.hpp"

#include "softhand/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace softhand::coord {

using nlohmann::json;

namespace {

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }

dynamics::Angles angles_from(const std::array<std::int32_t, 3>& urad) {
  return {protocol::from_microradians(urad[0]), protocol::from_microradians(urad[1]),
          protocol::from_microradians(urad[2])};
}

std::array<std::int32_t, 3> angles_to(const dynamics::Angles& q) {
  return {protocol::to_microradians(q(0)), protocol::to_microradians(q(1)), protocol::to_microradians(q(2))};
}

const char* phase_name(int phase) {
  static const char* const kNames[] = {"preshape", "close", "hold", "settling"};
  return kNames[phase];
}

}  // namespace

bool StreamStats::accept(std::uint32_t seq) {
  if (last_seq && seq <= *last_seq) {
    ++duplicates;
    return false;
  }
  const std::uint32_t expected = last_seq ? *last_seq + 1 : 0;
  if (seq != expected) {
    ++gaps;
    missing += seq - expected;
  }
  last_seq = seq;
  ++frames;
  return true;
}

struct Coordinator::Connection {
  std::uint64_t id = 0;
  std::shared_ptr<Transport> transport;
  protocol::StreamDecoder decoder;
  std::optional<std::uint8_t> finger;
  bool closed = false;
};

struct Coordinator::Node {
  NodeInfo info;
  std::uint64_t connection_id = 0;
  MountPose mount;
  std::optional<dynamics::Geometry> geometry;
  bool has_pose = false;
  dynamics::Angles q = dynamics::Angles::Zero();
  std::int64_t pose_arrival_us = 0;
  std::int64_t pose_sample_us = 0;
  std::uint32_t pose_seq = 0;
  std::array<double, 2> motor{0.0, 0.0};
  std::optional<touch::Detector> detector;
  std::uint64_t detector_samples = 0;
  std::uint32_t command_seq = 0;
  std::uint32_t control_seq = 0;
};

struct Coordinator::ActiveGrasp {
  GraspSpec spec;
  std::vector<std::pair<std::uint8_t, Role>> fingers;
  std::int64_t started = 0;
  std::int64_t preshape_end = 0;
  std::int64_t close_end = 0;
  std::int64_t hold_end = 0;
  std::int64_t deadline = 0;
  int phase = 0;  // index into phase_name
  bool full_sent = false;
};

Coordinator::Coordinator(HandConfiguration hand, PresetLibrary presets, GraspLibrary grasps, const Clock& clock,
                         CoordinatorConfig config, Logger logger)
    : hand_(std::move(hand)),
      presets_(std::move(presets)),
      grasps_(std::move(grasps)),
      clock_(clock),
      config_(config),
      log_(std::move(logger)) {
  hand_.validate(presets_);
  config_.detector.validate();
  if (!(config_.liveness_timeout > 0.0)) throw std::invalid_argument("liveness timeout must be positive");
}

Coordinator::~Coordinator() = default;

void Coordinator::add_listener(std::shared_ptr<Listener> listener) {
  std::lock_guard lock(mutex_);
  listeners_.push_back(std::move(listener));
}

void Coordinator::add_connection(std::shared_ptr<Transport> transport) {
  std::lock_guard lock(mutex_);
  auto c = std::make_unique<Connection>();
  c->id = next_connection_id_++;
  c->transport = std::move(transport);
  log_->info("event=connection_opened conn={} peer={}", c->id, c->transport->peer());
  connections_.push_back(std::move(c));
}

void Coordinator::record_to(session::Writer* writer) {
  std::lock_guard lock(mutex_);
  recorder_ = writer;
}

void Coordinator::set_pose_observer(PoseObserver observer) {
  std::lock_guard lock(mutex_);
  pose_observer_ = std::move(observer);
}

void Coordinator::record(std::int64_t now, session::Direction d, std::span<const std::uint8_t> frame) {
  if (recorder_ != nullptr) recorder_->append(static_cast<std::uint64_t>(now), d, frame);
}

void Coordinator::emit(std::int64_t now, std::string type, json data) {
  events_.push_back(Event{next_event_id_++, now, std::move(type), std::move(data)});
  while (events_.size() > config_.event_capacity) events_.pop_front();
}

void Coordinator::send_to(Connection& c, std::uint8_t finger_id, const protocol::Message& m, std::uint32_t seq,
                          std::int64_t now) {
  const auto bytes = protocol::encode(m, finger_id, seq, static_cast<std::uint64_t>(now));
  if (c.transport->send(bytes)) record(now, session::Direction::coordinator_to_node, bytes);
}

void Coordinator::send_error(Connection& c, std::uint8_t finger_id, std::uint16_t code, const std::string& text,
                             std::int64_t now) {
  log_->warn("event=error_sent conn={} finger={} code={} text=\"{}\"", c.id, finger_id, code, text);
  std::uint32_t seq = 0;
  if (auto it = nodes_.find(finger_id); it != nodes_.end() && it->second->connection_id == c.id)
    seq = it->second->control_seq++;
  send_to(c, finger_id, protocol::Error{code, text}, seq, now);
}

Coordinator::Connection* Coordinator::connection_of(const Node& n) {
  for (auto& c : connections_)
    if (c->id == n.connection_id && !c->closed) return c.get();
  return nullptr;
}

std::size_t Coordinator::service() {
  std::lock_guard lock(mutex_);
  const std::int64_t now = clock_.now_us();

  for (auto& l : listeners_)
    while (auto t = l->accept()) {
      auto c = std::make_unique<Connection>();
      c->id = next_connection_id_++;
      c->transport = std::move(t);
      log_->info("event=connection_opened conn={} peer={}", c->id, c->transport->peer());
      connections_.push_back(std::move(c));
    }

  std::size_t frames = 0;
  std::vector<std::uint8_t> rx;
  // Index loop: handlers never add connections, but keep iteration stable.
  for (std::size_t i = 0; i < connections_.size(); ++i) {
    Connection& c = *connections_[i];
    if (c.closed) continue;
    rx.clear();
    c.transport->receive(rx);
    c.decoder.feed(rx);
    while (auto r = c.decoder.next()) {
      if (r->ok()) ++frames;
      handle_frame(c, *r, now);
    }
    if (!c.transport->connected()) {
      c.closed = true;
      log_->info("event=connection_closed conn={}", c.id);
      if (c.finger) remove_node(*c.finger, "detached", now);
    }
  }

  const std::int64_t timeout = to_us(config_.liveness_timeout);
  std::vector<std::uint8_t> silent;
  for (const auto& [id, n] : nodes_)
    if (now - n->info.last_frame_us > timeout) silent.push_back(id);
  for (auto id : silent) {
    if (auto* c = connection_of(*nodes_.at(id))) {
      c->transport->close();
      c->closed = true;
    }
    remove_node(id, "evicted", now);
  }

  advance_grasp(now);
  std::erase_if(connections_, [](const auto& c) { return c->closed; });
  return frames;
}

std::int64_t Coordinator::next_deadline_us() const {
  std::lock_guard lock(mutex_);
  std::int64_t t = INT64_MAX;
  const std::int64_t timeout = to_us(config_.liveness_timeout);
  for (const auto& [id, n] : nodes_) t = std::min(t, n->info.last_frame_us + timeout + 1);
  if (grasp_) {
    const auto& g = *grasp_;
    switch (g.phase) {
      case 0: t = std::min(t, g.preshape_end); break;
      case 1: t = std::min(t, g.close_end); break;
      case 2: t = std::min(t, g.hold_end); break;
      default: t = std::min(t, g.deadline); break;
    }
  }
  return t;
}

void Coordinator::handle_frame(Connection& c, const protocol::DecodeResult& r, std::int64_t now) {
  using protocol::MsgType;
  if (!r.ok()) {
    // Corrupted frames get an ERROR; bytes skipped during resync do not.
    log_->warn("event=decode_error conn={} status={} detail=\"{}\"", c.id, protocol::status_name(r.status), r.detail);
    if (r.status != protocol::DecodeStatus::bad_magic)
      send_error(c, c.finger.value_or(0), protocol::error_code::malformed_frame,
                 std::string(protocol::status_name(r.status)), now);
    return;
  }
  const protocol::Frame& f = *r.frame;
  record(now, session::Direction::node_to_coordinator, r.raw);

  if (f.header.type == MsgType::hello) {
    handle_hello(c, f, now);
    return;
  }
  if (!c.finger) {
    send_error(c, f.header.finger_id, protocol::error_code::not_registered, "send HELLO first", now);
    return;
  }
  if (f.header.finger_id != *c.finger) {
    send_error(c, *c.finger, protocol::error_code::wrong_finger,
               "connection is registered as finger " + std::to_string(*c.finger), now);
    return;
  }
  Node& n = *nodes_.at(*c.finger);
  n.info.last_frame_us = now;
  switch (f.header.type) {
    case MsgType::pose_telemetry:
      if (n.info.pose.accept(f.header.seq)) handle_pose(n, f, now);
      break;
    case MsgType::motor_telemetry:
      if (n.info.motor.accept(f.header.seq)) {
        const auto& m = std::get<protocol::MotorTelemetry>(f.message);
        n.motor = {protocol::from_microradians(m.spool_urad[0]), protocol::from_microradians(m.spool_urad[1])};
      }
      break;
    case MsgType::heartbeat:
      n.info.heartbeat.accept(f.header.seq);
      break;
    case MsgType::error: {
      const auto& e = std::get<protocol::Error>(f.message);
      ++n.info.node_errors;
      log_->warn("event=node_error finger={} code={} text=\"{}\"", n.info.finger_id, e.code, e.text);
      emit(now, "node_error", {{"finger_id", n.info.finger_id}, {"code", e.code}, {"text", e.text}});
      break;
    }
    default:
      send_error(c, *c.finger, protocol::error_code::unexpected_message,
                 std::string(protocol::type_name(f.header.type)) + " is not accepted from a node", now);
  }
}

void Coordinator::handle_hello(Connection& c, const protocol::Frame& f, std::int64_t now) {
  const std::uint8_t id = f.header.finger_id;
  const auto& hello = std::get<protocol::Hello>(f.message);
  if (c.finger) {
    if (*c.finger == id) {
      // The node missed our ack and asked again.
      Node& n = *nodes_.at(id);
      n.info.last_frame_us = now;
      send_to(c, id, hello, n.control_seq++, now);
    } else {
      send_error(c, *c.finger, protocol::error_code::wrong_finger, "connection already registered", now);
    }
    return;
  }
  if (nodes_.count(id) != 0) {
    send_error(c, id, protocol::error_code::duplicate_finger, "finger " + std::to_string(id) + " is already active",
               now);
    emit(now, "rejected", {{"finger_id", id}, {"reason", "duplicate_finger"}, {"peer", c.transport->peer()}});
    return;
  }

  auto n = std::make_unique<Node>();
  n->info.finger_id = id;
  n->info.kind = hello.kind;
  n->info.geometry_hash = hello.geometry_hash;
  n->info.registered_us = now;
  n->info.last_frame_us = now;
  n->info.peer = c.transport->peer();
  n->connection_id = c.id;
  const std::string by_hash = presets_.find_by_hash(hello.geometry_hash);
  if (const auto* entry = hand_.find(id)) {
    n->info.role = entry->role;
    n->mount = entry->mount;
    n->info.preset = entry->preset;
    n->info.geometry_warning = geometry_hash(presets_.geometry(entry->preset)) != hello.geometry_hash;
  } else {
    n->info.role = Role::generic;
    n->info.preset = by_hash;
    n->info.geometry_warning = by_hash.empty();
  }
  if (!n->info.preset.empty()) n->geometry = presets_.geometry(n->info.preset);
  if (config_.detect_touch) n->detector.emplace(config_.detector, id);
  c.finger = id;

  const NodeInfo info = n->info;
  nodes_.emplace(id, std::move(n));
  send_to(c, id, hello, nodes_.at(id)->control_seq++, now);

  if (info.geometry_warning)
    log_->warn("event=registered finger={} role={} preset={} geometry_warning=true hash={:016x}", id,
               role_name(info.role), info.preset, info.geometry_hash);
  else
    log_->info("event=registered finger={} role={} preset={}", id, role_name(info.role), info.preset);
  emit(now, "registered",
       {{"finger_id", id},
        {"role", role_name(info.role)},
        {"preset", info.preset},
        {"geometry_warning", info.geometry_warning},
        {"peer", info.peer}});
}

void Coordinator::handle_pose(Node& n, const protocol::Frame& f, std::int64_t now) {
  const auto& m = std::get<protocol::PoseTelemetry>(f.message);
  n.q = angles_from(m.angles_urad);
  n.has_pose = true;
  n.pose_arrival_us = now;
  n.pose_sample_us = static_cast<std::int64_t>(f.header.timestamp_us);
  n.pose_seq = f.header.seq;
  if (pose_observer_) pose_observer_(f.header, n.q);

  if (n.detector) {
    touch::Sample s{n.detector_samples++, n.pose_sample_us, n.q};
    for (const auto& ev : n.detector->feed(s)) {
      touches_.push_back(ev);
      const std::uint32_t magnitude =
          static_cast<std::uint32_t>(std::min<double>(std::llround(ev.peak * 1e6), protocol::kMaxAngleMicrorad));
      const auto bytes = protocol::encode(protocol::TouchEvent{magnitude, static_cast<std::uint8_t>(ev.joint)},
                                          n.info.finger_id, touch_seq_++, static_cast<std::uint64_t>(ev.onset_us));
      record(now, session::Direction::coordinator_event, bytes);
      log_->info("event=touch finger={} joint={} onset_us={} peak={:.6g}", ev.finger_id, ev.joint, ev.onset_us,
                 ev.peak);
      json data = ev;
      emit(now, "touch", data);
    }
  }
  if (grasp_ && grasp_->phase == 3) evaluate_grasp(now, false);
}

void Coordinator::remove_node(std::uint8_t finger_id, const char* why, std::int64_t now) {
  auto it = nodes_.find(finger_id);
  if (it == nodes_.end()) return;
  log_->info("event={} finger={} t_us={}", why, finger_id, now);
  emit(now, why, {{"finger_id", finger_id}, {"role", role_name(it->second->info.role)}});
  nodes_.erase(it);
  for (auto& c : connections_)
    if (c->finger == finger_id) c->finger.reset();
  if (grasp_) {
    const bool involved = std::any_of(grasp_->fingers.begin(), grasp_->fingers.end(),
                                      [&](const auto& p) { return p.first == finger_id; });
    if (involved) {
      evaluate_grasp(now, true);
    }
  }
}

void Coordinator::disconnect(std::uint8_t finger_id) {
  std::lock_guard lock(mutex_);
  auto it = nodes_.find(finger_id);
  if (it == nodes_.end()) return;
  if (auto* c = connection_of(*it->second)) c->transport->close();
}

std::vector<NodeInfo> Coordinator::registry() const {
  std::lock_guard lock(mutex_);
  std::vector<NodeInfo> out;
  for (const auto& [id, n] : nodes_) out.push_back(n->info);
  return out;
}

bool Coordinator::active(std::uint8_t finger_id) const {
  std::lock_guard lock(mutex_);
  return nodes_.count(finger_id) != 0;
}

std::size_t Coordinator::connection_count() const {
  std::lock_guard lock(mutex_);
  return connections_.size();
}

FingerPose Coordinator::pose_of(const Node& n, std::int64_t now) const {
  FingerPose p;
  p.finger_id = n.info.finger_id;
  p.role = n.info.role;
  p.has_pose = n.has_pose;
  p.q = n.q;
  p.sample_us = n.pose_sample_us;
  p.pose_seq = n.pose_seq;
  p.staleness_us = now - (n.has_pose ? n.pose_arrival_us : n.info.registered_us);
  p.geometry_warning = n.info.geometry_warning;
  if (n.geometry) {
    const auto local = kinematics::joint_positions(*n.geometry, n.q);
    for (int i = 0; i < 4; ++i) p.joints[i] = n.mount.apply(local[i]);
  } else {
    for (auto& j : p.joints) j = n.mount.apply(dynamics::Point::Zero());
  }
  p.tip = p.joints[3];
  return p;
}

HandPose Coordinator::hand_pose() const {
  std::lock_guard lock(mutex_);
  if (nodes_.empty()) throw std::runtime_error("hand_pose: no finger is registered");
  HandPose h;
  h.time_us = clock_.now_us();
  for (const auto& [id, n] : nodes_) h.fingers.push_back(pose_of(*n, h.time_us));
  if (grasp_) {
    h.grasp = grasp_->spec.name;
    h.grasp_phase = phase_name(grasp_->phase);
  }
  return h;
}

void Coordinator::send_joint_targets_locked(Node& n, const dynamics::Angles& q, std::int64_t now) {
  Connection* c = connection_of(n);
  if (c == nullptr) return;
  send_to(*c, n.info.finger_id, protocol::SetJointTargets{angles_to(q)}, n.command_seq++, now);
}

void Coordinator::send_joint_targets(std::uint8_t finger_id, const dynamics::Angles& q) {
  std::lock_guard lock(mutex_);
  auto it = nodes_.find(finger_id);
  if (it == nodes_.end()) throw std::invalid_argument("finger " + std::to_string(finger_id) + " is not registered");
  Node& n = *it->second;
  if (n.geometry && !n.geometry->within_limits(q))
    throw std::invalid_argument("joint targets outside the limits of finger " + std::to_string(finger_id));
  if (!q.allFinite() || q.cwiseAbs().maxCoeff() > 2 * EIGEN_PI) throw std::invalid_argument("joint targets out of range");
  send_joint_targets_locked(n, q, clock_.now_us());
}

void Coordinator::send_motor_targets(std::uint8_t finger_id, double flexor, double extensor, double rate_limit) {
  std::lock_guard lock(mutex_);
  auto it = nodes_.find(finger_id);
  if (it == nodes_.end()) throw std::invalid_argument("finger " + std::to_string(finger_id) + " is not registered");
  Node& n = *it->second;
  Connection* c = connection_of(n);
  if (c == nullptr) return;
  if (!(rate_limit >= 0.0) || rate_limit * 1e6 > 4294967295.0) throw std::invalid_argument("bad motor rate limit");
  protocol::SetMotorTargets m{{protocol::to_microradians(flexor), protocol::to_microradians(extensor)},
                              static_cast<std::uint32_t>(std::llround(rate_limit * 1e6))};
  send_to(*c, finger_id, m, n.command_seq++, clock_.now_us());
}

void Coordinator::start_grasp(const std::string& name) {
  std::lock_guard lock(mutex_);
  const std::int64_t now = clock_.now_us();
  if (!grasps_.has(name)) throw GraspError(GraspError::Kind::unknown_grasp, "", "unknown grasp '" + name + "'");
  if (grasp_)
    throw GraspError(GraspError::Kind::busy, "", "grasp '" + grasp_->spec.name + "' is still running");
  const GraspSpec& spec = grasps_.get(name);

  auto g = std::make_unique<ActiveGrasp>();
  g->spec = spec;
  for (const auto& [role, target] : spec.targets) {
    const FingerEntry* entry = hand_.find(role);
    if (entry == nullptr || nodes_.count(entry->finger_id) == 0)
      throw GraspError(GraspError::Kind::missing_role, role_name(role),
                       "grasp '" + name + "' needs a " + role_name(role) + " finger, and none is " +
                           (entry == nullptr ? "configured" : "registered"));
    const Node& n = *nodes_.at(entry->finger_id);
    if (n.geometry && !n.geometry->within_limits(target))
      throw GraspError(GraspError::Kind::out_of_limits, role_name(role),
                       "grasp '" + name + "' target for " + role_name(role) + " is outside its joint limits");
    g->fingers.emplace_back(entry->finger_id, role);
  }
  g->started = now;
  g->preshape_end = now + to_us(spec.preshape);
  g->close_end = g->preshape_end + to_us(spec.close);
  g->hold_end = g->close_end + to_us(spec.hold);
  g->deadline = now + 2 * to_us(spec.budget());
  g->phase = 0;
  grasp_ = std::move(g);

  const bool preshape = spec.preshape > 0.0;
  for (const auto& [id, role] : grasp_->fingers) {
    const dynamics::Angles target = spec.targets.at(role);
    send_joint_targets_locked(*nodes_.at(id), preshape ? dynamics::Angles(target * spec.preshape_fraction) : target,
                              now);
  }
  grasp_->full_sent = !preshape;
  log_->info("event=grasp_started name={} t_us={}", name, now);
  emit(now, "grasp_phase", {{"grasp", name}, {"phase", "preshape"}});
  advance_grasp(now);
}

void Coordinator::advance_grasp(std::int64_t now) {
  while (grasp_) {
    ActiveGrasp& g = *grasp_;
    if (g.phase == 0 && now >= g.preshape_end) {
      if (!g.full_sent) {
        for (const auto& [id, role] : g.fingers)
          if (auto it = nodes_.find(id); it != nodes_.end()) send_joint_targets_locked(*it->second, g.spec.targets.at(role), now);
        g.full_sent = true;
      }
      g.phase = 1;
      emit(now, "grasp_phase", {{"grasp", g.spec.name}, {"phase", "close"}});
    } else if (g.phase == 1 && now >= g.close_end) {
      g.phase = 2;
      emit(now, "grasp_phase", {{"grasp", g.spec.name}, {"phase", "hold"}});
    } else if (g.phase == 2 && now >= g.hold_end) {
      g.phase = 3;
      emit(now, "grasp_phase", {{"grasp", g.spec.name}, {"phase", "settling"}});
      evaluate_grasp(now, now >= g.deadline);
    } else if (g.phase == 3 && now >= g.deadline) {
      evaluate_grasp(now, true);
    } else {
      return;
    }
  }
}

bool Coordinator::evaluate_grasp(std::int64_t now, bool final) {
  ActiveGrasp& g = *grasp_;
  GraspReport report;
  report.name = g.spec.name;
  report.started_us = g.started;
  report.finished_us = now;
  report.tolerance = g.spec.tolerance;
  bool ok = true;
  std::string missing;
  for (const auto& [id, role] : g.fingers) {
    FingerReport fr;
    fr.finger_id = id;
    fr.role = role;
    fr.target = g.spec.targets.at(role);
    auto it = nodes_.find(id);
    if (it != nodes_.end() && it->second->has_pose) {
      fr.measured = it->second->q;
      fr.measured_valid = true;
      const dynamics::Angles err = fr.measured - fr.target;
      fr.error_norm = err.norm();
      fr.max_error = err.cwiseAbs().maxCoeff();
      fr.success = fr.max_error <= g.spec.tolerance;
    } else if (missing.empty()) {
      missing = std::string(role_name(role)) + " finger stopped reporting";
    }
    ok = ok && fr.success;
    report.fingers.push_back(fr);
  }
  report.success = ok;
  if (ok || final || !missing.empty()) {
    if (!ok) {
      report.timed_out = missing.empty();
      report.failure = missing.empty() ? "no convergence within twice the phase budget" : missing;
    }
    finish_grasp(now, std::move(report));
    return true;
  }
  return false;
}

void Coordinator::finish_grasp(std::int64_t now, GraspReport report) {
  log_->info("event=grasp_finished name={} success={} t_us={}", report.name, report.success, now);
  emit(now, "grasp_report", report);
  reports_.push_back(std::move(report));
  grasp_.reset();
}

bool Coordinator::grasp_active() const {
  std::lock_guard lock(mutex_);
  return grasp_ != nullptr;
}

std::string Coordinator::grasp_phase() const {
  std::lock_guard lock(mutex_);
  return grasp_ ? phase_name(grasp_->phase) : "idle";
}

std::vector<GraspReport> Coordinator::grasp_reports() const {
  std::lock_guard lock(mutex_);
  return reports_;
}

std::vector<touch::Event> Coordinator::touch_events() const {
  std::lock_guard lock(mutex_);
  return touches_;
}

std::vector<Event> Coordinator::events_since(std::uint64_t after_id, std::size_t max) const {
  std::lock_guard lock(mutex_);
  std::vector<Event> out;
  for (const auto& e : events_) {
    if (e.id <= after_id) continue;
    if (out.size() >= max) break;
    out.push_back(e);
  }
  return out;
}

std::uint64_t Coordinator::last_event_id() const {
  std::lock_guard lock(mutex_);
  return next_event_id_ - 1;
}

void to_json(json& j, const StreamStats& s) {
  j = {{"frames", s.frames}, {"gaps", s.gaps}, {"missing", s.missing}, {"duplicates", s.duplicates}};
  j["last_seq"] = s.last_seq ? json(*s.last_seq) : json(nullptr);
}

void to_json(json& j, const NodeInfo& n) {
  j = {{"finger_id", n.finger_id},
       {"role", role_name(n.role)},
       {"kind", static_cast<int>(n.kind)},
       {"geometry_hash", n.geometry_hash},
       {"preset", n.preset},
       {"geometry_warning", n.geometry_warning},
       {"registered_us", n.registered_us},
       {"last_frame_us", n.last_frame_us},
       {"peer", n.peer},
       {"pose", n.pose},
       {"motor", n.motor},
       {"heartbeat", n.heartbeat},
       {"node_errors", n.node_errors}};
}

namespace {

json point(const dynamics::Point& p) { return json::array({p.x(), p.y()}); }
json vec3(const dynamics::Angles& q) { return json::array({q(0), q(1), q(2)}); }

}  // namespace

void to_json(json& j, const FingerPose& f) {
  json joints = json::array();
  for (const auto& p : f.joints) joints.push_back(point(p));
  j = {{"finger_id", f.finger_id},
       {"role", role_name(f.role)},
       {"has_pose", f.has_pose},
       {"q", vec3(f.q)},
       {"joints", joints},
       {"tip", point(f.tip)},
       {"sample_us", f.sample_us},
       {"staleness_us", f.staleness_us},
       {"pose_seq", f.pose_seq},
       {"geometry_warning", f.geometry_warning}};
}

void to_json(json& j, const HandPose& p) {
  j = {{"time_us", p.time_us}, {"fingers", p.fingers}, {"grasp", p.grasp}, {"grasp_phase", p.grasp_phase}};
}

void to_json(json& j, const FingerReport& r) {
  j = {{"finger_id", r.finger_id},
       {"role", role_name(r.role)},
       {"target", vec3(r.target)},
       {"measured", r.measured_valid ? vec3(r.measured) : json(nullptr)},
       {"error_norm", r.error_norm},
       {"max_error", r.max_error},
       {"success", r.success}};
}

void to_json(json& j, const GraspReport& r) {
  j = {{"name", r.name},
       {"success", r.success},
       {"timed_out", r.timed_out},
       {"failure", r.failure},
       {"started_us", r.started_us},
       {"finished_us", r.finished_us},
       {"tolerance", r.tolerance},
       {"fingers", r.fingers}};
}

void to_json(json& j, const Event& e) { j = {{"id", e.id}, {"time_us", e.time_us}, {"type", e.type}, {"data", e.data}}; }

}  // namespace softhand::coord

namespace softhand::touch {

void to_json(nlohmann::json& j, const Event& e) {
  j = {{"finger_id", e.finger_id},
       {"joint", e.joint},
       {"onset_us", e.onset_us},
       {"peak", e.peak},
       {"confirmed_us", e.confirmed_us}};
}

}  // namespace softhand::touch
