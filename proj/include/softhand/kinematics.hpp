// Planar kinematics of one tendon-driven finger.
//
// The finger is a chain of three revolute joints. Each joint transform is
//
//          | cos t  -sin t  l |
//   H(t) = | sin t   cos t  0 |
//          |   0       0    1 |
//
// and the tip is  H(theta3, l3) * H(theta2, l2) * H(theta1, l1) * [l0 0 1]^T,
// so theta3 is the proximal (base) joint, theta1 the distal one and l3 is an
// unrotated offset from the finger root to the proximal joint. Angles are
// flexion-positive.
//
// Everything here is templated on the scalar type and free of state.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace softhand::kinematics {

/// (theta1 distal, theta2 middle, theta3 proximal), radians.
template <typename Scalar>
using JointAngles = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
using PlanarPoint = Eigen::Matrix<Scalar, 2, 1>;

/// d(tip)/d(theta1, theta2, theta3).
template <typename Scalar>
using TipJacobian = Eigen::Matrix<Scalar, 2, 3>;

/// Nine per-finger MANO pose parameters: three axis-angle triples ordered
/// proximal, middle, distal joint.
template <typename Scalar>
using ManoFingerPose = Eigen::Matrix<Scalar, 9, 1>;

template <typename Scalar>
struct FingerGeometry {
  /// l0 (distal phalanx), l1, l2, l3 (root offset), meters.
  Eigen::Matrix<Scalar, 4, 1> lengths = Eigen::Matrix<Scalar, 4, 1>::Ones();
  JointAngles<Scalar> lower = JointAngles<Scalar>::Zero();
  JointAngles<Scalar> upper = JointAngles<Scalar>::Constant(Scalar(EIGEN_PI / 2));

  Scalar l0() const { return lengths(0); }
  Scalar l1() const { return lengths(1); }
  Scalar l2() const { return lengths(2); }
  Scalar l3() const { return lengths(3); }

  Scalar reach() const { return lengths.sum(); }

  /// Throws std::invalid_argument when a length is not strictly positive or a
  /// joint range is empty or excludes the neutral pose.
  void validate() const {
    for (Eigen::Index i = 0; i < 4; ++i) {
      if (!(lengths(i) > Scalar(0)) || !std::isfinite(double(lengths(i))))
        throw std::invalid_argument("finger geometry: link length l" + std::to_string(i) +
                                    " must be positive and finite");
    }
    for (Eigen::Index i = 0; i < 3; ++i) {
      if (!(lower(i) < upper(i)))
        throw std::invalid_argument("finger geometry: joint " + std::to_string(i + 1) +
                                    " has min >= max");
      if (lower(i) > Scalar(0) || upper(i) < Scalar(0))
        throw std::invalid_argument("finger geometry: joint " + std::to_string(i + 1) +
                                    " range excludes the neutral pose");
    }
  }

  bool within_limits(const JointAngles<Scalar>& q) const {
    return (q.array() >= lower.array()).all() && (q.array() <= upper.array()).all();
  }

  JointAngles<Scalar> clamp(const JointAngles<Scalar>& q) const {
    return q.cwiseMax(lower).cwiseMin(upper);
  }
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(double(v(i)))) throw std::domain_error(std::string(what) + " is not finite");
  }
}

}  // namespace detail

template <typename Scalar>
PlanarPoint<Scalar> forward_kinematics(const FingerGeometry<Scalar>& geom,
                                       const JointAngles<Scalar>& q) {
  using std::cos;
  using std::sin;
  detail::require_finite(q, "joint angles");
  const Scalar a3 = q(2);
  const Scalar a23 = q(2) + q(1);
  const Scalar a123 = a23 + q(0);
  return PlanarPoint<Scalar>(
      geom.l3() + geom.l2() * cos(a3) + geom.l1() * cos(a23) + geom.l0() * cos(a123),
      geom.l2() * sin(a3) + geom.l1() * sin(a23) + geom.l0() * sin(a123));
}

/// Proximal joint, middle joint, distal joint and tip, in the finger root frame.
template <typename Scalar>
std::array<PlanarPoint<Scalar>, 4> joint_positions(const FingerGeometry<Scalar>& geom,
                                                   const JointAngles<Scalar>& q) {
  using std::cos;
  using std::sin;
  detail::require_finite(q, "joint angles");
  std::array<PlanarPoint<Scalar>, 4> out;
  out[0] = PlanarPoint<Scalar>(geom.l3(), Scalar(0));
  Scalar heading = q(2);
  out[1] = out[0] + geom.l2() * PlanarPoint<Scalar>(cos(heading), sin(heading));
  heading += q(1);
  out[2] = out[1] + geom.l1() * PlanarPoint<Scalar>(cos(heading), sin(heading));
  heading += q(0);
  out[3] = out[2] + geom.l0() * PlanarPoint<Scalar>(cos(heading), sin(heading));
  return out;
}

template <typename Scalar>
TipJacobian<Scalar> jacobian(const FingerGeometry<Scalar>& geom, const JointAngles<Scalar>& q) {
  using std::cos;
  using std::sin;
  detail::require_finite(q, "joint angles");
  const Scalar a3 = q(2);
  const Scalar a23 = q(2) + q(1);
  const Scalar a123 = a23 + q(0);

  // Column j accumulates the contribution of every link distal to joint j.
  const PlanarPoint<Scalar> d1(-geom.l0() * sin(a123), geom.l0() * cos(a123));
  const PlanarPoint<Scalar> d2 = d1 + PlanarPoint<Scalar>(-geom.l1() * sin(a23), geom.l1() * cos(a23));
  const PlanarPoint<Scalar> d3 = d2 + PlanarPoint<Scalar>(-geom.l2() * sin(a3), geom.l2() * cos(a3));

  TipJacobian<Scalar> jac;
  jac.col(0) = d1;
  jac.col(1) = d2;
  jac.col(2) = d3;
  return jac;
}

template <typename Scalar>
struct IkOptions {
  Scalar damping = Scalar(0.05);
  Scalar tolerance = Scalar(1e-4);
  int max_iterations = 500;
};

/// Outcome of an inverse kinematics solve. An unreachable target is not an
/// error: `reached` is false and `q` is the best iterate found.
template <typename Scalar>
struct IkResult {
  JointAngles<Scalar> q = JointAngles<Scalar>::Zero();
  Scalar residual = Scalar(0);
  bool reached = false;
  int iterations = 0;
};

/// Damped least squares from `seed`, clamping to the joint limits after every
/// update.
template <typename Scalar>
IkResult<Scalar> inverse_kinematics(const FingerGeometry<Scalar>& geom,
                                    const PlanarPoint<Scalar>& target,
                                    const JointAngles<Scalar>& seed,
                                    const IkOptions<Scalar>& options = {}) {
  detail::require_finite(target, "IK target");
  detail::require_finite(seed, "IK seed");

  const Scalar lambda_sq = options.damping * options.damping;
  JointAngles<Scalar> q = geom.clamp(seed);

  IkResult<Scalar> best;
  best.q = q;
  best.residual = (target - forward_kinematics(geom, q)).norm();

  for (int it = 0; it < options.max_iterations; ++it) {
    const PlanarPoint<Scalar> err = target - forward_kinematics(geom, q);
    const Scalar residual = err.norm();
    if (residual < best.residual) {
      best.q = q;
      best.residual = residual;
    }
    best.iterations = it;
    if (best.residual <= options.tolerance) break;

    const TipJacobian<Scalar> jac = jacobian(geom, q);
    const Eigen::Matrix<Scalar, 2, 2> jjt =
        jac * jac.transpose() + lambda_sq * Eigen::Matrix<Scalar, 2, 2>::Identity();
    const JointAngles<Scalar> step = jac.transpose() * jjt.ldlt().solve(err);
    q = geom.clamp(q + step);
  }

  const Scalar final_residual = (target - forward_kinematics(geom, q)).norm();
  if (final_residual < best.residual) {
    best.q = q;
    best.residual = final_residual;
  }
  best.reached = best.residual <= options.tolerance;
  return best;
}

/// Which of the three axis-angle components of a MANO ball joint carries the
/// flexion angle, per finger. Fingers use MANO ordering:
/// 0 index, 1 middle, 2 little, 3 ring, 4 thumb.
struct ManoFlexionSlots {
  std::array<int, 5> slot{2, 2, 2, 2, 1};
};

/// Writes theta3, theta2, theta1 into the flexion component of the proximal,
/// middle and distal ball joints; every other component stays zero.
template <typename Scalar>
ManoFingerPose<Scalar> mano_parameters(const JointAngles<Scalar>& q, int finger_index,
                                       const ManoFlexionSlots& slots = {}) {
  if (finger_index < 0 || finger_index >= 5)
    throw std::out_of_range("MANO finger index must be in 0..4");
  const int slot = slots.slot[static_cast<std::size_t>(finger_index)];
  if (slot < 0 || slot > 2) throw std::invalid_argument("MANO flexion slot must be in 0..2");

  ManoFingerPose<Scalar> pose = ManoFingerPose<Scalar>::Zero();
  pose(0 * 3 + slot) = q(2);
  pose(1 * 3 + slot) = q(1);
  pose(2 * 3 + slot) = q(0);
  return pose;
}

/// Tip positions over an n x n x n grid spanning the joint limits.
template <typename Scalar>
std::vector<PlanarPoint<Scalar>> sample_workspace(const FingerGeometry<Scalar>& geom,
                                                  std::size_t n_per_joint) {
  if (n_per_joint < 2) throw std::invalid_argument("workspace sampling needs n >= 2 per joint");
  const auto at = [&](Eigen::Index joint, std::size_t k) {
    const Scalar frac = Scalar(k) / Scalar(n_per_joint - 1);
    return geom.lower(joint) + frac * (geom.upper(joint) - geom.lower(joint));
  };
  std::vector<PlanarPoint<Scalar>> points;
  points.reserve(n_per_joint * n_per_joint * n_per_joint);
  for (std::size_t i = 0; i < n_per_joint; ++i)
    for (std::size_t j = 0; j < n_per_joint; ++j)
      for (std::size_t k = 0; k < n_per_joint; ++k)
        points.push_back(forward_kinematics(geom, JointAngles<Scalar>(at(0, i), at(1, j), at(2, k))));
  return points;
}

}  // namespace softhand::kinematics
