// Brute-force equilibrium oracle: evaluate the potential energy on a regular
// grid over the joint limits and keep the best point that satisfies both cable
// inequalities. Every kept point is feasible, so the true minimum can never be
// above the grid minimum; the grid spacing bounds how far below it may be.

#pragma once

#include "softhand/dynamics.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace softhand::testing {

struct EquilibriumCase {
  dynamics::Geometry geometry;
  dynamics::TendonConfig tendon;
  dynamics::SkinModel skin;
  dynamics::CableDisplacements cables;
  dynamics::Torques torque = dynamics::Torques::Zero();
};

inline EquilibriumCase random_equilibrium_case(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * u(rng); };

  EquilibriumCase c;
  c.geometry.lengths << between(0.015, 0.05), between(0.015, 0.05), between(0.015, 0.05), between(0.02, 0.05);
  for (int i = 0; i < 3; ++i) {
    c.geometry.lower(i) = u(rng) < 0.5 ? 0.0 : between(-0.25, 0.0);
    c.geometry.upper(i) = between(1.0, 1.7);
  }
  c.tendon.flexor_arms << between(0.002, 0.006), between(0.002, 0.006), between(0.002, 0.006);
  c.tendon.extensor_arms << 0.0, (u(rng) < 0.3 ? between(0.001, 0.004) : 0.0), between(0.003, 0.007);
  c.skin.stiffness << between(0.02, 0.1), between(0.02, 0.1), between(0.02, 0.1);
  c.torque << between(-0.01, 0.01), between(-0.01, 0.01), between(-0.01, 0.01);

  // Cable lengths consistent with an interior pose, so the feasible set has volume.
  dynamics::Angles q0;
  for (int i = 0; i < 3; ++i) q0(i) = between(0.1, 0.9) * c.geometry.upper(i);
  c.cables.flexor = c.tendon.flexor_arms.dot(q0) - between(0.0, 0.002);
  c.cables.extensor = -c.tendon.extensor_arms.dot(q0) - between(0.0, 0.002);
  return c;
}

struct GridResult {
  double min_energy = std::numeric_limits<double>::infinity();
  dynamics::Angles argmin = dynamics::Angles::Zero();
  long feasible_points = 0;
  /// Upper bound on how far the grid minimum can sit above the true minimum.
  double tolerance = 0.0;
};

inline GridResult grid_minimum(const EquilibriumCase& c, int n) {
  GridResult r;
  Eigen::Vector3d h;
  for (int i = 0; i < 3; ++i) h(i) = (c.geometry.upper(i) - c.geometry.lower(i)) / (n - 1);

  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int d = 0; d < n; ++d) {
        const dynamics::Angles q(c.geometry.lower(0) + a * h(0), c.geometry.lower(1) + b * h(1),
                                 c.geometry.lower(2) + d * h(2));
        if (c.tendon.flexor_arms.dot(q) < c.cables.flexor) continue;
        if (-c.tendon.extensor_arms.dot(q) < c.cables.extensor) continue;
        ++r.feasible_points;
        const double e = 0.5 * (c.skin.stiffness.array() * q.array().square()).sum() - c.torque.dot(q);
        if (e < r.min_energy) {
          r.min_energy = e;
          r.argmin = q;
        }
      }

  // |dE/dq_i| <= k_i max|q_i| + |tau_i| over the box.
  double gradient_bound = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double qmax = std::max(std::abs(c.geometry.lower(i)), std::abs(c.geometry.upper(i)));
    gradient_bound = std::max(gradient_bound, c.skin.stiffness(i) * qmax + std::abs(c.torque(i)));
  }
  r.tolerance = gradient_bound * h.sum();
  return r;
}

}  // namespace softhand::testing
