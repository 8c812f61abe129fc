#pragma once

#include "egg/thb.hpp"

namespace egg {

/// Reparameterization s: (0,1)^2 -> (0,1)^2 with identity boundary trace.
struct ControlMap {
  GeometryMap map;

  /// Check the identity boundary trace by dense sampling.
  void validateBoundary(double tol = 1e-8) const;
};

struct ControlPoint {
  Eigen::Matrix2d T;       // Jacobian of s
  double detT = 1.0;
  Eigen::Matrix2d P1, P2;  // P^k_ij = k-th component of -T^{-1} s_{,xi_i xi_j}
};

ControlPoint control_matrices(const GeometryMap& s, double xi, double eta);

ControlMap identity_control(const SpacePtr& space);

}  // namespace egg
