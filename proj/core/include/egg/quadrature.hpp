#pragma once

#include "egg/thb.hpp"

namespace egg {

/// Precomputed Gauss tables for every active element of a space.
struct QuadratureCache {
  SpacePtr space;
  int q = 0;  // points per direction

  struct ElementQuad {
    std::vector<double> xi, eta, w;  // q*q entries, w includes element area
    std::vector<Eigen::MatrixXd> B;  // per point: |dofIds| x 6 (val..detaeta)
  };
  std::vector<ElementQuad> elems;  // indexed like space->elements

  std::size_t numPoints() const { return elems.empty() ? 0 : elems.size() * q * q; }
};

/// Build tables with q Gauss points per direction (default p+1 if q <= 0).
QuadratureCache build_quadrature(const SpacePtr& space, int q = 0);

}  // namespace egg
