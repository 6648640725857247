#include "softhand/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace softhand::dynamics {

namespace {

// One linear inequality a.q >= b.
struct Constraint {
  Eigen::Vector3d a;
  double b;
};

// Constraint indices: 0..2 lower limits, 3..5 upper limits, 6 flexor, 7 extensor.
constexpr int kFlexor = 6;
constexpr int kExtensor = 7;
constexpr int kConstraintCount = 8;

std::array<Constraint, kConstraintCount> build_constraints(const Geometry& geom, const TendonConfig& tendon,
                                                           CableDisplacements cables) {
  std::array<Constraint, kConstraintCount> c;
  for (int i = 0; i < 3; ++i) {
    c[i] = {Eigen::Vector3d::Unit(i), geom.lower(i)};
    c[3 + i] = {-Eigen::Vector3d::Unit(i), -geom.upper(i)};
  }
  c[kFlexor] = {tendon.flexor_arms, cables.flexor};
  c[kExtensor] = {-tendon.extensor_arms, cables.extensor};
  return c;
}

constexpr double kFeasibilityTol = 1e-11;
constexpr double kMultiplierTol = 1e-11;

// Solves the equality-constrained problem for one active set and checks the
// KKT conditions of the full problem.
bool try_active_set(const std::array<Constraint, kConstraintCount>& cons, const std::vector<int>& active,
                    const Eigen::Vector3d& stiffness, const Torques& tau, Equilibrium& out) {
  const Eigen::Vector3d k_inv = stiffness.cwiseInverse();
  const int m = static_cast<int>(active.size());

  Eigen::Vector3d q = k_inv.cwiseProduct(tau);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    Eigen::MatrixXd a(m, 3);
    Eigen::VectorXd b(m);
    for (int r = 0; r < m; ++r) {
      a.row(r) = cons[active[r]].a.transpose();
      b(r) = cons[active[r]].b;
    }
    const Eigen::MatrixXd schur = a * k_inv.asDiagonal() * a.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(schur);
    lu.setThreshold(1e-10);
    if (lu.rank() < m) return false;
    mu = lu.solve(b - a * q);
    q += k_inv.asDiagonal() * (a.transpose() * mu);
  }

  for (int r = 0; r < m; ++r) {
    if (mu(r) * cons[active[r]].a.norm() < -kMultiplierTol) return false;
  }
  for (const auto& c : cons) {
    const double scale = std::max(c.a.norm(), 1.0);
    if (c.a.dot(q) - c.b < -kFeasibilityTol * scale) return false;
  }

  out = Equilibrium{};
  out.q = q;
  for (int r = 0; r < m; ++r) {
    const int idx = active[r];
    if (idx < 3) {
      out.limits[idx] = LimitState::lower;
      out.limit_torques(idx) += mu(r);
    } else if (idx < 6) {
      out.limits[idx - 3] = LimitState::upper;
      out.limit_torques(idx - 3) -= mu(r);
    } else if (idx == kFlexor) {
      out.flexor_taut = true;
      out.flexor_tension = std::max(0.0, mu(r));
    } else {
      out.extensor_taut = true;
      out.extensor_tension = std::max(0.0, mu(r));
    }
  }
  return true;
}

// Every choice of (free | lower | upper) per joint and (slack | taut) per cable.
// A joint cannot sit on both stops, and more than three independent equalities
// in three unknowns never occurs at a KKT point we need.
std::vector<std::vector<int>> candidate_active_sets(const std::vector<int>& preferred) {
  std::vector<std::vector<int>> sets;
  sets.reserve(109);
  sets.push_back(preferred);
  for (int code = 0; code < 27 * 4; ++code) {
    std::vector<int> active;
    int joints = code / 4;
    for (int i = 0; i < 3; ++i) {
      const int s = joints % 3;
      joints /= 3;
      if (s == 1) active.push_back(i);
      if (s == 2) active.push_back(3 + i);
    }
    if (code & 1) active.push_back(kFlexor);
    if (code & 2) active.push_back(kExtensor);
    if (active.size() > 3) continue;
    if (active != preferred) sets.push_back(std::move(active));
  }
  return sets;
}

[[noreturn]] void diagnose_infeasible(const Geometry& geom, const TendonConfig& tendon, CableDisplacements cables) {
  // Largest flexor excursion and smallest extensor excursion reachable inside the limits.
  double flexor_max = 0.0;
  double extensor_min = 0.0;
  for (int i = 0; i < 3; ++i) {
    flexor_max += tendon.flexor_arms(i) * (tendon.flexor_arms(i) >= 0 ? geom.upper(i) : geom.lower(i));
    extensor_min += tendon.extensor_arms(i) * (tendon.extensor_arms(i) >= 0 ? geom.lower(i) : geom.upper(i));
  }
  if (cables.flexor > flexor_max + kFeasibilityTol)
    throw OverConstrainedError("flexor", "flexor displacement " + std::to_string(cables.flexor) +
                                             " m exceeds the full-flexion excursion " +
                                             std::to_string(flexor_max) + " m");
  if (-cables.extensor < extensor_min - kFeasibilityTol)
    throw OverConstrainedError("extensor", "extensor displacement " + std::to_string(cables.extensor) +
                                               " m exceeds the full-extension excursion " +
                                               std::to_string(-extensor_min) + " m");
  throw OverConstrainedError("flexor+extensor",
                             "flexor displacement " + std::to_string(cables.flexor) +
                                 " m and extensor displacement " + std::to_string(cables.extensor) +
                                 " m cannot both be taut within the joint limits");
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string(what) + " is not finite");
}

}  // namespace

void TendonConfig::validate() const {
  if ((flexor_arms.array() <= 0.0).any()) throw std::invalid_argument("tendon: flexor moment arms must be positive");
  if ((extensor_arms.array() < 0.0).any()) throw std::invalid_argument("tendon: extensor moment arms must be >= 0");
  if (!(spool_radius > 0.0)) throw std::invalid_argument("tendon: spool radius must be positive");
}

void SkinModel::validate() const {
  if ((stiffness.array() <= 0.0).any()) throw std::invalid_argument("skin: stiffness must be positive");
  if ((damping.array() < 0.0).any()) throw std::invalid_argument("skin: damping must be >= 0");
}

void FingerParams::validate() const {
  geometry.validate();
  tendon.validate();
  skin.validate();
  if (!(motor.rate_limit > 0.0)) throw std::invalid_argument("motor: rate limit must be positive");
  if (!(motor.travel > 0.0)) throw std::invalid_argument("motor: travel must be positive");
  if (sensor.resolution_bits < 1 || sensor.resolution_bits > 32)
    throw std::invalid_argument("sensor: resolution must be 1..32 bits");
  if (sensor.noise_std < 0.0) throw std::invalid_argument("sensor: noise must be >= 0");
  if (sensor.latency_samples < 0 || sensor.latency_samples > 1)
    throw std::invalid_argument("sensor: latency must be 0 or 1 samples");
}

double potential_energy(const SkinModel& skin, const Angles& q, const Torques& ext_torque) {
  return 0.5 * skin.stiffness.dot(q.cwiseAbs2()) - ext_torque.dot(q);
}

Equilibrium equilibrium(const Geometry& geom, const Angles& seed, const TendonConfig& tendon, const SkinModel& skin,
                        CableDisplacements cables, const Torques& ext_torque) {
  require_finite(cables.flexor, "flexor displacement");
  require_finite(cables.extensor, "extensor displacement");
  for (int i = 0; i < 3; ++i) require_finite(ext_torque(i), "external torque");

  const auto cons = build_constraints(geom, tendon, cables);

  std::vector<int> preferred;
  if (seed.allFinite()) {
    for (int i = 0; i < kConstraintCount; ++i) {
      const double scale = std::max(cons[i].a.norm(), 1.0);
      if (std::abs(cons[i].a.dot(seed) - cons[i].b) <= 1e-9 * scale) preferred.push_back(i);
    }
    if (preferred.size() > 3) preferred.clear();
  }

  Equilibrium eq;
  for (const auto& active : candidate_active_sets(preferred)) {
    if (try_active_set(cons, active, skin.stiffness, ext_torque, eq)) {
      eq.energy = potential_energy(skin, eq.q, ext_torque);
      return eq;
    }
  }
  diagnose_infeasible(geom, tendon, cables);
}

CableDisplacements excursion(const TendonConfig& tendon, const Angles& q) {
  return {tendon.flexor_arms.dot(q), -tendon.extensor_arms.dot(q)};
}

Torques fingertip_force_to_torques(const Geometry& geom, const Angles& q, const Point& force) {
  if (!force.allFinite()) throw std::domain_error("fingertip force is not finite");
  return kinematics::jacobian(geom, q).transpose() * force;
}

double quantize_angle(double theta, int resolution_bits) {
  const double step = 2.0 * EIGEN_PI / double(std::uint64_t{1} << resolution_bits);
  return double(std::llround(theta / step)) * step;
}

FingerState initial_state(const FingerParams& params) {
  FingerState s;
  s.motor.rate_limit = params.motor.rate_limit;
  s.last = equilibrium(params.geometry, s.q, params.tendon, params.skin, {}, Torques::Zero());
  s.q = s.last.q;
  s.sensed = s.q;
  return s;
}

namespace {

double advance_toward(double current, double target, double max_delta) {
  return current + std::clamp(target - current, -max_delta, max_delta);
}

}  // namespace

FingerState step(const FingerParams& params, FingerState state, double dt) {
  if (!(dt > 0.0 && dt <= 0.05)) throw std::invalid_argument("step: dt must lie in (0, 0.05] s");

  const std::int64_t t_next = state.time_us + std::llround(dt * 1e6);
  const double travel = params.motor.travel;
  const double max_delta = std::max(0.0, state.motor.rate_limit) * dt;

  MotorState motor = state.motor;
  motor.flexor_angle = std::clamp(advance_toward(motor.flexor_angle, motor.flexor_target, max_delta), -travel, travel);
  motor.extensor_angle =
      std::clamp(advance_toward(motor.extensor_angle, motor.extensor_target, max_delta), -travel, travel);

  Torques tau = Torques::Zero();
  for (const auto& p : state.perturbations)
    if (p.active_at(t_next)) tau += p.torques;

  const CableDisplacements cables{params.tendon.spool_radius * motor.flexor_angle,
                                  params.tendon.spool_radius * motor.extensor_angle};
  const Equilibrium eq = equilibrium(params.geometry, state.q, params.tendon, params.skin, cables, tau);

  state.sensed = params.sensor.latency_samples > 0 ? state.q : eq.q;
  state.q = eq.q;
  state.last = eq;
  state.motor = motor;
  state.time_us = t_next;
  std::erase_if(state.perturbations,
                [t_next](const Perturbation& p) { return p.start_us + p.duration_us <= t_next; });
  return state;
}

void add_perturbation(FingerState& state, const Perturbation& p) {
  if (p.duration_us <= 0) throw std::invalid_argument("perturbation duration must be positive");
  if (!p.torques.allFinite()) throw std::domain_error("perturbation torque is not finite");
  state.perturbations.push_back(p);
}

SensorReading read_sensors(const FingerParams& params, const FingerState& state, std::mt19937_64& rng) {
  SensorReading out;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    double theta = state.sensed(i);
    if (params.sensor.noise_std > 0.0) theta += params.sensor.noise_std * noise(rng);
    out.q(i) = quantize_angle(theta, params.sensor.resolution_bits);
  }
  out.motor = state.motor;
  return out;
}

SensorReading read_sensors(const FingerParams& params, const FingerState& state, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return read_sensors(params, state, rng);
}

std::pair<double, double> motor_targets_for(const FingerParams& params, const Angles& q) {
  const auto cables = excursion(params.tendon, params.geometry.clamp(q));
  const double travel = params.motor.travel;
  return {std::clamp(cables.flexor / params.tendon.spool_radius, -travel, travel),
          std::clamp(cables.extensor / params.tendon.spool_radius, -travel, travel)};
}

}  // namespace softhand::dynamics
