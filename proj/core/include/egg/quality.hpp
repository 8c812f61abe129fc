#pragma once

#include <map>
#include <optional>
#include <string>

#include "egg/quadrature.hpp"

namespace egg {

/// Parametric sub-rectangle; snapped to element boundaries on use.
struct QualityRestrict {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
};

struct QualityReport {
  std::map<std::string, double> values;
  double min_detJ = 0.0, max_detJ = 0.0;
  int num_negative = 0;
  int dofs = 0;
};

/// Known functional names: winslow, area, length, uniformity, liao, ml,
/// orthogonality, area-orthogonality, eccentricity.
const std::vector<std::string>& quality_names();

QualityReport evaluate(const QuadratureCache& cache, const GeometryMap& x,
                       const std::vector<std::string>& which,
                       const std::optional<QualityRestrict>& restrict_to = {});

struct NegPoint {
  int element = 0, point = 0;
  double xi = 0.0, eta = 0.0, detJ = 0.0;
};

/// detJ at every cached quadrature point: minimum and the negative set.
std::pair<double, std::vector<NegPoint>> bijectivity_scan(
    const QuadratureCache& cache, const GeometryMap& x);

}  // namespace egg
