// Quasi-static model of one cable-driven finger.
//
// Two inextensible cables act on the joints: the flexor (front, tied at the
// tip, crosses all three joints) and the extensor (back, tied at the proximal
// phalange, crosses the proximal joint by default). The silicone skin acts as
// a torsional spring at each joint. At every instant the finger sits at the
// minimum of
//
//   E(q) = 1/2 sum_i k_i q_i^2 - tau_ext . q
//
// subject to the joint limits and the cable constraints
//
//   r_f . q >= d_f     (flexor cannot stretch; taut when equal)
//  -r_e . q >= d_e     (extensor cannot stretch; taut when equal)
//
// where d_f and d_e are the cable lengths pulled in by the motors. A cable
// carries tension only while taut.

#pragma once

#include "softhand/kinematics.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace softhand::dynamics {

using Geometry = kinematics::FingerGeometry<double>;
using Angles = kinematics::JointAngles<double>;
using Point = kinematics::PlanarPoint<double>;
using Torques = Eigen::Vector3d;

struct TendonConfig {
  /// Moment arms per joint (theta1, theta2, theta3), meters.
  Eigen::Vector3d flexor_arms = Eigen::Vector3d::Constant(0.004);
  Eigen::Vector3d extensor_arms{0.0, 0.0, 0.005};
  double spool_radius = 0.005;

  void validate() const;
};

struct SkinModel {
  /// Torsional stiffness per joint, N*m/rad.
  Eigen::Vector3d stiffness{0.05, 0.06, 0.075};
  /// N*m*s/rad. Carried for visualization of transients; equilibria ignore it.
  Eigen::Vector3d damping = Eigen::Vector3d::Constant(0.002);

  void validate() const;
};

struct MotorLimits {
  double rate_limit = 8.0;  ///< rad/s of spool rotation
  double travel = 6.0;      ///< |spool angle| bound, rad
};

struct SensorModel {
  int resolution_bits = 16;
  double noise_std = 2.0 * (2.0 * EIGEN_PI / 65536.0);
  int latency_samples = 1;  ///< 0 or 1

  double step() const { return 2.0 * EIGEN_PI / double(std::uint64_t{1} << resolution_bits); }
};

struct FingerParams {
  Geometry geometry;
  TendonConfig tendon;
  SkinModel skin;
  MotorLimits motor;
  SensorModel sensor;

  void validate() const;
};

struct CableDisplacements {
  double flexor = 0.0;    ///< pulled-in length, m
  double extensor = 0.0;  ///< pulled-in length, m; negative means paid out
};

class OverConstrainedError : public std::runtime_error {
 public:
  OverConstrainedError(std::string constraint, const std::string& message)
      : std::runtime_error(message), constraint_(std::move(constraint)) {}
  /// "flexor", "extensor" or "flexor+extensor".
  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

enum class LimitState : std::int8_t { free = 0, lower = -1, upper = 1 };

struct Equilibrium {
  Angles q = Angles::Zero();
  double flexor_tension = 0.0;    ///< N, >= 0
  double extensor_tension = 0.0;  ///< N, >= 0
  bool flexor_taut = false;
  bool extensor_taut = false;
  std::array<LimitState, 3> limits{LimitState::free, LimitState::free, LimitState::free};
  /// Torque exerted by each joint stop, N*m. Positive pushes toward flexion.
  Torques limit_torques = Torques::Zero();
  double energy = 0.0;
};

double potential_energy(const SkinModel& skin, const Angles& q, const Torques& ext_torque);

/// Exact minimizer of the potential energy above. `seed` only orders the
/// search. Throws OverConstrainedError when no pose satisfies the cables and
/// the joint limits together.
Equilibrium equilibrium(const Geometry& geom, const Angles& seed, const TendonConfig& tendon,
                        const SkinModel& skin, CableDisplacements cables, const Torques& ext_torque);

/// Cable lengths that keep both cables exactly taut at pose q.
CableDisplacements excursion(const TendonConfig& tendon, const Angles& q);

/// Joint torques produced by a force (N) applied at the fingertip: J^T f.
Torques fingertip_force_to_torques(const Geometry& geom, const Angles& q, const Point& force);

double quantize_angle(double theta, int resolution_bits);

struct MotorState {
  double flexor_angle = 0.0;
  double extensor_angle = 0.0;
  double flexor_target = 0.0;
  double extensor_target = 0.0;
  double rate_limit = 8.0;
};

struct Perturbation {
  Torques torques = Torques::Zero();
  std::int64_t start_us = 0;
  std::int64_t duration_us = 0;

  bool active_at(std::int64_t t_us) const { return t_us >= start_us && t_us < start_us + duration_us; }
};

struct FingerState {
  Angles q = Angles::Zero();
  Angles sensed = Angles::Zero();  ///< what the encoders report (lags q by the sensor latency)
  MotorState motor;
  std::int64_t time_us = 0;
  std::vector<Perturbation> perturbations;
  Equilibrium last;
};

FingerState initial_state(const FingerParams& params);

/// Advances motors under their rate limit, re-solves the equilibrium and
/// applies the perturbations active at the new time. dt must lie in (0, 0.05] s.
FingerState step(const FingerParams& params, FingerState state, double dt);

/// Queues a perturbation. Throws std::invalid_argument for non-positive duration.
void add_perturbation(FingerState& state, const Perturbation& p);

struct SensorReading {
  Angles q = Angles::Zero();
  MotorState motor;
};

SensorReading read_sensors(const FingerParams& params, const FingerState& state, std::mt19937_64& rng);
SensorReading read_sensors(const FingerParams& params, const FingerState& state, std::uint64_t seed);

/// Motor targets (spool radians) that place both cables at the excursion of
/// q, clamped to the motor travel.
std::pair<double, double> motor_targets_for(const FingerParams& params, const Angles& q);

}  // namespace softhand::dynamics
