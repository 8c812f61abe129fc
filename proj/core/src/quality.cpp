#include "egg/quality.hpp"

#include <algorithm>
#include <cmath>

#include "egg/assembly.hpp"

namespace egg {

const std::vector<std::string>& quality_names() {
  static const std::vector<std::string> names = {
      "winslow",       "area", "length", "uniformity",        "liao",
      "ml",            "orthogonality", "area-orthogonality", "eccentricity"};
  return names;
}

namespace {

double point_value(const std::string& name, const MetricPoint& m) {
  const double N = m.g11 + m.g22;
  if (name == "winslow") return N / m.detJ;
  if (name == "area") return m.detJ * m.detJ;
  if (name == "length") return N;
  if (name == "liao")
    return m.g11 * m.g11 + 2.0 * m.g12 * m.g12 + m.g22 * m.g22;
  if (name == "ml") return (N / m.detJ) * (N / m.detJ);
  if (name == "orthogonality") return m.g12 * m.g12;
  if (name == "area-orthogonality") return m.g11 * m.g22;
  if (name == "uniformity") {
    // ||x_xixi||^2 + 2 ||x_xieta||^2 + ||x_etaeta||^2
    const double a = m.H1(0, 0) * m.H1(0, 0) + m.H2(0, 0) * m.H2(0, 0);
    const double b = m.H1(0, 1) * m.H1(0, 1) + m.H2(0, 1) * m.H2(0, 1);
    const double c = m.H1(1, 1) * m.H1(1, 1) + m.H2(1, 1) * m.H2(1, 1);
    return a + 2.0 * b + c;
  }
  if (name == "eccentricity") {
    const Eigen::Vector2d xxi(m.J(0, 0), m.J(1, 0)), xeta(m.J(0, 1), m.J(1, 1));
    const Eigen::Vector2d xxx(m.H1(0, 0), m.H2(0, 0)), xee(m.H1(1, 1), m.H2(1, 1));
    const double t1 = xxi.dot(xxx) / m.g11;
    const double t2 = xeta.dot(xee) / m.g22;
    return t1 * t1 + t2 * t2;
  }
  throw Error("unknown quality functional: " + name);
}

}  // namespace

QualityReport evaluate(const QuadratureCache& cache, const GeometryMap& x,
                       const std::vector<std::string>& which,
                       const std::optional<QualityRestrict>& restrict_to) {
  const ThbSpace& sp = *cache.space;
  for (const auto& n : which) {
    if (std::find(quality_names().begin(), quality_names().end(), n) ==
        quality_names().end())
      throw Error("unknown quality functional: " + n);
    if ((n == "uniformity" || n == "eccentricity") && sp.alpha < 1)
      throw Error(n + " needs a C1 map (regularity >= 1)");
  }
  const bool needs_bijective =
      std::find(which.begin(), which.end(), "winslow") != which.end() ||
      std::find(which.begin(), which.end(), "ml") != which.end();
  QualityReport rep;
  rep.dofs = sp.numDofs();
  for (const auto& n : which) rep.values[n] = 0.0;
  const MetricData md = compute_metric(cache, x);
  rep.min_detJ = std::numeric_limits<double>::infinity();
  rep.max_detJ = -std::numeric_limits<double>::infinity();
  std::size_t flat = 0;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    bool included = true;
    if (restrict_to) {
      // snap to element boundaries: include by element midpoint
      const double mx = 0.5 * (ei.x0 + ei.x1), my = 0.5 * (ei.y0 + ei.y1);
      included = mx >= restrict_to->x0 && mx <= restrict_to->x1 &&
                 my >= restrict_to->y0 && my <= restrict_to->y1;
    }
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k, ++flat) {
      if (!included) continue;
      const MetricPoint& m = md.pts[flat];
      rep.min_detJ = std::min(rep.min_detJ, m.detJ);
      rep.max_detJ = std::max(rep.max_detJ, m.detJ);
      if (m.detJ <= 0.0) {
        ++rep.num_negative;
        if (needs_bijective)
          throw Error("quality: map is folded (detJ <= 0) inside the region");
      }
      for (auto& [name, acc] : rep.values)
        acc += eq.w[k] * point_value(name, m);
    }
  }
  return rep;
}

std::pair<double, std::vector<NegPoint>> bijectivity_scan(
    const QuadratureCache& cache, const GeometryMap& x) {
  const MetricData md = compute_metric(cache, x);
  double mn = std::numeric_limits<double>::infinity();
  std::vector<NegPoint> neg;
  std::size_t flat = 0;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k, ++flat) {
      const double d = md.pts[flat].detJ;
      mn = std::min(mn, d);
      if (d < 0.0)
        neg.push_back({static_cast<int>(e), static_cast<int>(k), eq.xi[k],
                       eq.eta[k], d});
    }
  }
  return {mn, neg};
}

}  // namespace egg
