#include "softhand/finger_node.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace softhand::node {

namespace {

std::int64_t to_us(double seconds) { return std::llround(seconds * 1e6); }

std::int64_t whole_period_us(double rate_hz, const char* what) {
  const double period = 1e6 / rate_hz;
  const auto rounded = std::llround(period);
  if (std::abs(period - double(rounded)) > 1e-6)
    throw std::invalid_argument(std::string(what) + " period is not a whole number of microseconds");
  return rounded;
}

}  // namespace

SimDriver::SimDriver(dynamics::FingerParams params, std::uint64_t seed)
    : params_(std::move(params)), state_(dynamics::initial_state(params_)), rng_(seed) {}

void SimDriver::step(double dt) { state_ = dynamics::step(params_, state_, dt); }

dynamics::SensorReading SimDriver::read_sensors() { return dynamics::read_sensors(params_, state_, rng_); }

void SimDriver::set_motor_targets(double flexor, double extensor, double rate_limit) {
  state_.motor.flexor_target = flexor;
  state_.motor.extensor_target = extensor;
  state_.motor.rate_limit = rate_limit;
}

void SimDriver::hold_motors() {
  state_.motor.flexor_target = state_.motor.flexor_angle;
  state_.motor.extensor_target = state_.motor.extensor_angle;
}

void SimDriver::press_fingertip(const dynamics::Point& force, std::int64_t start_us, std::int64_t duration_us) {
  const dynamics::Torques tau = dynamics::fingertip_force_to_torques(params_.geometry, state_.q, force);
  dynamics::add_perturbation(state_, {tau, start_us, duration_us});
}

void NodeConfig::validate() const {
  if (!(motor_rate > 0.0) || !(pose_rate >= motor_rate))
    throw std::invalid_argument("node rates must satisfy pose_rate >= motor_rate > 0");
  if (!(dt > 0.0) || dt > 1.0 / pose_rate + 1e-12) throw std::invalid_argument("node dt must lie in (0, 1/pose_rate]");
  if (!(heartbeat_period > 0.0) || !(hello_retry > 0.0) || !(reconnect_backoff > 0.0))
    throw std::invalid_argument("node periods must be positive");
  if (max_reconnects < 0) throw std::invalid_argument("max_reconnects must be >= 0");
  (void)pose_period_us();
  (void)motor_period_us();
  (void)step_us();
}

std::int64_t NodeConfig::pose_period_us() const { return whole_period_us(pose_rate, "pose"); }
std::int64_t NodeConfig::motor_period_us() const { return whole_period_us(motor_rate, "motor"); }
std::int64_t NodeConfig::step_us() const { return whole_period_us(1.0 / dt, "step"); }

const char* lifecycle_name(Lifecycle s) {
  switch (s) {
    case Lifecycle::init: return "init";
    case Lifecycle::registered: return "registered";
    case Lifecycle::running: return "running";
    case Lifecycle::stopping: return "stopping";
    case Lifecycle::stopped: return "stopped";
  }
  return "?";
}

FingerNode::FingerNode(NodeConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<FingerDriver> driver,
                       Logger logger)
    : config_(config), transport_(std::move(transport)), driver_(std::move(driver)), log_(std::move(logger)) {
  config_.validate();
  if (!transport_ || !driver_) throw std::invalid_argument("finger node needs a transport and a driver");
}

void FingerNode::start(std::int64_t now_us) {
  if (started_) return;
  started_ = true;
  driver_->set_time(now_us);
  next_step_us_ = now_us + config_.step_us();
  if (transport_->connected()) {
    send_hello(now_us);
  } else {
    link_down_ = true;
    next_reconnect_us_ = now_us;
  }
  log_->info("event=started finger={} t_us={}", config_.finger_id, now_us);
}

void FingerNode::send(const protocol::Message& msg, std::uint32_t seq, std::int64_t now_us) {
  const auto bytes = protocol::encode(msg, config_.finger_id, seq, static_cast<std::uint64_t>(now_us));
  transport_->send(bytes);
}

void FingerNode::send_error(std::uint16_t code, const std::string& text, std::int64_t now_us) {
  ++counters_.errors_sent;
  log_->warn("event=error_sent finger={} t_us={} code={} text=\"{}\"", config_.finger_id, now_us, code, text);
  send(protocol::Error{code, text}, control_seq_++, now_us);
}

void FingerNode::send_hello(std::int64_t now_us) {
  send(protocol::Hello{config_.kind, config_.geometry_hash}, control_seq_++, now_us);
  next_hello_us_ = now_us + to_us(config_.hello_retry);
}

void FingerNode::on_registered(std::int64_t now_us) {
  lifecycle_ = Lifecycle::registered;
  registered_at_us_ = now_us;
  next_pose_us_ = now_us + config_.pose_period_us();
  next_motor_us_ = now_us + config_.motor_period_us();
  next_heartbeat_us_ = now_us + to_us(config_.heartbeat_period);
  pose_seq_ = motor_seq_ = heartbeat_seq_ = 0;
  last_command_seq_.reset();
  ++counters_.registrations;
  log_->info("event=registered finger={} t_us={}", config_.finger_id, now_us);
}

std::size_t FingerNode::service(std::int64_t now_us) {
  if (!started_) start(now_us);
  if (lifecycle_ == Lifecycle::stopped) return 0;
  if (lifecycle_ == Lifecycle::stopping) {
    transport_->close();
    lifecycle_ = Lifecycle::stopped;
    log_->info("event=stopped finger={} t_us={}", config_.finger_id, now_us);
    return 0;
  }

  std::size_t frames = 0;
  if (!link_down_) {
    rx_.clear();
    transport_->receive(rx_);
    decoder_.feed(rx_);
    while (auto r = decoder_.next()) {
      if (r->ok()) {
        ++frames;
        handle_frame(*r->frame, now_us);
      } else {
        ++counters_.decode_errors;
        // Bytes skipped while hunting for the next frame get no reply.
        if (r->status != protocol::DecodeStatus::bad_magic)
          send_error(protocol::error_code::malformed_frame,
                     std::string(protocol::status_name(r->status)) + (r->detail.empty() ? "" : ": " + r->detail),
                     now_us);
      }
      if (lifecycle_ == Lifecycle::stopping) return frames;
    }
    if (!transport_->connected()) {
      link_down_ = true;
      reconnect_attempts_ = 0;
      next_reconnect_us_ = now_us + to_us(config_.reconnect_backoff);
      if (lifecycle_ != Lifecycle::init) lifecycle_ = Lifecycle::init;
      log_->warn("event=link_lost finger={} t_us={}", config_.finger_id, now_us);
    }
  }
  if (link_down_) handle_link_loss(now_us);
  if (lifecycle_ == Lifecycle::stopping || lifecycle_ == Lifecycle::stopped) return frames;

  run_schedule(now_us);
  return frames;
}

void FingerNode::handle_link_loss(std::int64_t now_us) {
  if (now_us < next_reconnect_us_) return;
  if (reconnect_attempts_ >= config_.max_reconnects) {
    log_->error("event=giving_up finger={} t_us={} attempts={}", config_.finger_id, now_us, reconnect_attempts_);
    lifecycle_ = Lifecycle::stopping;
    return;
  }
  ++reconnect_attempts_;
  ++counters_.reconnects;
  if (transport_->reconnect()) {
    log_->info("event=reconnected finger={} t_us={} attempt={}", config_.finger_id, now_us, reconnect_attempts_);
    link_down_ = false;
    decoder_ = protocol::StreamDecoder{};
    lifecycle_ = Lifecycle::init;
    send_hello(now_us);
    return;
  }
  const double backoff = config_.reconnect_backoff * std::ldexp(1.0, reconnect_attempts_);
  next_reconnect_us_ = now_us + to_us(backoff);
}

void FingerNode::handle_frame(const protocol::Frame& frame, std::int64_t now_us) {
  using protocol::MsgType;
  const auto& h = frame.header;
  if (h.finger_id != config_.finger_id) {
    send_error(protocol::error_code::wrong_finger,
               "frame for finger " + std::to_string(h.finger_id) + " reached finger " +
                   std::to_string(config_.finger_id),
               now_us);
    return;
  }
  const bool registered = lifecycle_ == Lifecycle::registered || lifecycle_ == Lifecycle::running;
  switch (h.type) {
    case MsgType::hello:
      if (lifecycle_ == Lifecycle::init) on_registered(now_us);
      break;
    case MsgType::set_motor_targets:
    case MsgType::set_joint_targets:
      if (!registered) {
        send_error(protocol::error_code::not_registered, "command before registration", now_us);
        break;
      }
      apply_command(frame, now_us);
      break;
    case MsgType::heartbeat:
      break;
    case MsgType::error: {
      const auto& e = std::get<protocol::Error>(frame.message);
      log_->warn("event=error_received finger={} t_us={} code={} text=\"{}\"", config_.finger_id, now_us, e.code,
                 e.text);
      if (e.code == protocol::error_code::duplicate_finger) {
        lifecycle_ = Lifecycle::stopping;
      } else if (e.code == protocol::error_code::not_registered && registered) {
        lifecycle_ = Lifecycle::init;
        send_hello(now_us);
      }
      break;
    }
    default:
      send_error(protocol::error_code::unexpected_message,
                 std::string(protocol::type_name(h.type)) + " is not a command", now_us);
  }
}

void FingerNode::apply_command(const protocol::Frame& frame, std::int64_t now_us) {
  const std::uint32_t seq = frame.header.seq;
  if (last_command_seq_ && seq <= *last_command_seq_) {
    ++counters_.stale_commands;
    return;
  }
  last_command_seq_ = seq;

  const auto& params = driver_->params();
  if (const auto* m = std::get_if<protocol::SetMotorTargets>(&frame.message)) {
    const double f = protocol::from_microradians(m->targets_urad[0]);
    const double e = protocol::from_microradians(m->targets_urad[1]);
    if (std::abs(f) > params.motor.travel || std::abs(e) > params.motor.travel) {
      send_error(protocol::error_code::infeasible_command, "motor target beyond travel", now_us);
      return;
    }
    const double rate = m->rate_limit_urad_s == 0 ? params.motor.rate_limit : m->rate_limit_urad_s * 1e-6;
    driver_->set_motor_targets(f, e, rate);
    targets_ = {f, e};
  } else {
    const auto& j = std::get<protocol::SetJointTargets>(frame.message);
    const dynamics::Angles q(protocol::from_microradians(j.targets_urad[0]),
                             protocol::from_microradians(j.targets_urad[1]),
                             protocol::from_microradians(j.targets_urad[2]));
    if (!params.geometry.within_limits(q)) {
      send_error(protocol::error_code::infeasible_command, "joint target outside the joint limits", now_us);
      return;
    }
    targets_ = dynamics::motor_targets_for(params, q);
    driver_->set_motor_targets(targets_.first, targets_.second, params.motor.rate_limit);
  }
  ++counters_.commands_applied;
}

void FingerNode::run_schedule(std::int64_t now_us) {
  const bool registered = lifecycle_ == Lifecycle::registered || lifecycle_ == Lifecycle::running;
  const double dt = double(config_.step_us()) * 1e-6;
  enum Event { step, pose, motor, heartbeat, hello, none };
  for (;;) {
    // Ties resolve in enum order: the step lands before the frames it feeds.
    Event next = step;
    std::int64_t t = next_step_us_;
    auto consider = [&](Event e, std::int64_t at) {
      if (at < t) {
        t = at;
        next = e;
      }
    };
    if (registered) {
      consider(pose, next_pose_us_);
      consider(motor, next_motor_us_);
      consider(heartbeat, next_heartbeat_us_);
    } else if (lifecycle_ == Lifecycle::init && !link_down_) {
      consider(hello, next_hello_us_);
    }
    if (t > now_us) return;

    switch (next) {
      case step:
        try {
          driver_->step(dt);
        } catch (const dynamics::OverConstrainedError& e) {
          driver_->hold_motors();
          send_error(protocol::error_code::infeasible_command, std::string("cable ") + e.constraint() + ": " + e.what(),
                     t);
          try {
            driver_->step(dt);
          } catch (const dynamics::OverConstrainedError& again) {
            log_->error("event=step_failed finger={} t_us={} what=\"{}\"", config_.finger_id, t, again.what());
          }
        }
        next_step_us_ += config_.step_us();
        break;
      case pose: {
        const auto reading = driver_->read_sensors();
        protocol::PoseTelemetry m;
        for (int i = 0; i < 3; ++i) m.angles_urad[i] = protocol::to_microradians(reading.q(i));
        send(m, pose_seq_++, t);
        ++counters_.pose_frames;
        lifecycle_ = Lifecycle::running;
        next_pose_us_ += config_.pose_period_us();
        break;
      }
      case motor: {
        const auto reading = driver_->read_sensors();
        send(protocol::MotorTelemetry{{protocol::to_microradians(reading.motor.flexor_angle),
                                       protocol::to_microradians(reading.motor.extensor_angle)}},
             motor_seq_++, t);
        ++counters_.motor_frames;
        lifecycle_ = Lifecycle::running;
        next_motor_us_ += config_.motor_period_us();
        break;
      }
      case heartbeat:
        send(protocol::Heartbeat{}, heartbeat_seq_++, t);
        ++counters_.heartbeats;
        next_heartbeat_us_ += to_us(config_.heartbeat_period);
        break;
      case hello:
        send_hello(t);
        break;
      case none:
        return;
    }
  }
}

std::int64_t FingerNode::next_deadline_us() const {
  if (lifecycle_ == Lifecycle::stopped) return INT64_MAX;
  if (lifecycle_ == Lifecycle::stopping) return 0;
  std::int64_t t = next_step_us_;
  if (lifecycle_ == Lifecycle::registered || lifecycle_ == Lifecycle::running) {
    t = std::min({t, next_pose_us_, next_motor_us_, next_heartbeat_us_});
  } else if (!link_down_) {
    t = std::min(t, next_hello_us_);
  }
  if (link_down_) t = std::min(t, next_reconnect_us_);
  return t;
}

void FingerNode::request_stop() {
  if (lifecycle_ != Lifecycle::stopped) lifecycle_ = Lifecycle::stopping;
}

void FingerNode::run(Clock& clock, std::stop_token stop, std::int64_t poll_us) {
  if (!started_) start(clock.now_us());
  while (lifecycle_ != Lifecycle::stopped) {
    if (stop.stop_requested()) request_stop();
    const std::int64_t now = clock.now_us();
    service(now);
    clock.sleep_until(std::min(next_deadline_us(), now + poll_us));
  }
}

}  // namespace softhand::node
