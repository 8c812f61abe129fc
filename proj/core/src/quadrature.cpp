#include "egg/quadrature.hpp"

namespace egg {

QuadratureCache build_quadrature(const SpacePtr& space, int q) {
  if (q <= 0) q = space->p + 1;
  QuadratureCache cache;
  cache.space = space;
  cache.q = q;
  std::vector<double> gp, gw;
  gauss_legendre(q, gp, gw);
  cache.elems.resize(space->elements.size());
  for (std::size_t e = 0; e < space->elements.size(); ++e) {
    const auto& ei = space->elements[e];
    auto& eq = cache.elems[e];
    const double ax = ei.x1 - ei.x0, ay = ei.y1 - ei.y0;
    eq.xi.reserve(q * q);
    eq.eta.reserve(q * q);
    eq.w.reserve(q * q);
    eq.B.reserve(q * q);
    for (int qy = 0; qy < q; ++qy)
      for (int qx = 0; qx < q; ++qx) {
        const double xi = ei.x0 + ax * gp[qx];
        const double eta = ei.y0 + ay * gp[qy];
        eq.xi.push_back(xi);
        eq.eta.push_back(eta);
        eq.w.push_back(ax * ay * gw[qx] * gw[qy]);
        eq.B.push_back(space->evalElementBasis(static_cast<int>(e), xi, eta, 2));
      }
  }
  return cache;
}

}  // namespace egg
