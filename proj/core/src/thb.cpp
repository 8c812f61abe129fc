#include "egg/thb.hpp"

#include <algorithm>
#include <cmath>

namespace egg {

std::size_t HierarchicalMesh::numActiveElements() const {
  std::size_t n = 0;
  for (const auto& lv : active) n += lv.size();
  return n;
}

void HierarchicalMesh::refineElements(
    const std::vector<std::pair<int, std::pair<int, int>>>& elems) {
  for (const auto& [level, e] : elems) {
    auto it = active[level].find(e);
    if (it == active[level].end())
      throw Error("refineElements: element not active");
    active[level].erase(it);
    if (level + 1 >= numLevels()) active.emplace_back();
    const auto [ex, ey] = e;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        active[level + 1].insert({2 * ex + dx, 2 * ey + dy});
  }
  while (!active.empty() && active.back().empty()) active.pop_back();
}

void HierarchicalMesh::validate() const {
  // exact tiling: total area of active elements equals 1
  double area = 0.0;
  for (int l = 0; l < numLevels(); ++l) {
    const double h = 1.0 / elemsPerSide(l);
    area += active[l].size() * h * h;
  }
  if (std::abs(area - 1.0) > 1e-12)
    throw Error("HierarchicalMesh: active elements do not tile the unit square");
}

HierarchicalMesh uniform_mesh(int n0) {
  HierarchicalMesh m;
  m.n0 = n0;
  m.active.emplace_back();
  for (int ey = 0; ey < n0; ++ey)
    for (int ex = 0; ex < n0; ++ex) m.active[0].insert({ex, ey});
  return m;
}

namespace {

// Per-level flags: element region is contained in Omega^l (union of active
// elements of level >= l).
std::vector<std::vector<char>> coverage(const HierarchicalMesh& mesh) {
  const int L = mesh.numLevels();
  std::vector<std::vector<char>> cov(L);
  for (int l = L - 1; l >= 0; --l) {
    const int n = mesh.elemsPerSide(l);
    cov[l].assign(static_cast<std::size_t>(n) * n, 0);
    for (int ey = 0; ey < n; ++ey)
      for (int ex = 0; ex < n; ++ex) {
        bool in = mesh.active[l].count({ex, ey}) > 0;
        if (!in && l + 1 < L) {
          in = true;
          for (int dy = 0; dy < 2 && in; ++dy)
            for (int dx = 0; dx < 2 && in; ++dx)
              in = cov[l + 1][(2 * ey + dy) * (std::size_t)(2 * n) + 2 * ex + dx] != 0;
        }
        cov[l][ey * (std::size_t)n + ex] = in ? 1 : 0;
      }
  }
  return cov;
}

}  // namespace

ThbSpace build_thb_space(const HierarchicalMesh& mesh, int p, int alpha) {
  if (alpha < 0 || alpha > p - 1) throw Error("build_thb_space: invalid regularity");
  mesh.validate();
  ThbSpace sp;
  sp.p = p;
  sp.alpha = alpha;
  sp.mesh = mesh;
  const int L = mesh.numLevels();

  sp.kvx.resize(L);
  sp.kvy.resize(L);
  sp.kvx[0] = uniform_knot_vector(p, mesh.n0, alpha);
  sp.kvy[0] = sp.kvx[0];
  for (int l = 1; l < L; ++l) {
    sp.kvx[l] = dyadic_refine(sp.kvx[l - 1]);
    sp.kvy[l] = sp.kvx[l];
  }

  const auto cov = coverage(mesh);

  // 1D support ranges per level (same in x and y for our uniform levels).
  std::vector<std::vector<std::pair<int, int>>> supp1d(L);
  for (int l = 0; l < L; ++l) {
    const int nb = sp.kvx[l].numBasis();
    supp1d[l].resize(nb);
    for (int i = 0; i < nb; ++i) supp1d[l][i] = sp.kvx[l].supportElements(i);
  }

  // Active (hierarchical) function selection.
  sp.activeFuncs.assign(L, {});
  sp.dofOf.assign(L, {});
  for (int l = 0; l < L; ++l) {
    const int nb = sp.kvx[l].numBasis();
    const int n = mesh.elemsPerSide(l);
    for (int iy = 0; iy < nb; ++iy) {
      const auto [ylo, yhi] = supp1d[l][iy];
      for (int ix = 0; ix < nb; ++ix) {
        const auto [xlo, xhi] = supp1d[l][ix];
        bool all_cov = true, any_active = false;
        for (int ey = ylo; ey <= yhi && all_cov; ++ey)
          for (int ex = xlo; ex <= xhi && all_cov; ++ex) {
            if (!cov[l][ey * (std::size_t)n + ex]) all_cov = false;
            if (mesh.active[l].count({ex, ey})) any_active = true;
          }
        if (all_cov && any_active) {
          const int t = iy * nb + ix;
          sp.dofOf[l][t] = static_cast<int>(sp.dofs.size());
          sp.dofs.push_back({l, t});
          sp.activeFuncs[l].push_back(t);
        }
      }
    }
  }

  // Boundary mask: tensor index touching the boundary of the unit square.
  sp.boundaryMask.resize(sp.dofs.size());
  for (std::size_t d = 0; d < sp.dofs.size(); ++d) {
    const int l = sp.dofs[d].level;
    const int nb = sp.kvx[l].numBasis();
    const int ix = sp.dofs[d].tensorIndex % nb;
    const int iy = sp.dofs[d].tensorIndex / nb;
    sp.boundaryMask[d] = (ix == 0 || ix == nb - 1 || iy == 0 || iy == nb - 1);
  }

  // Two-scale matrices between consecutive levels (1D, shared by x and y).
  std::vector<Eigen::SparseMatrix<double>> S(L > 0 ? L - 1 : 0);
  for (int l = 0; l + 1 < L; ++l) S[l] = subdivision_matrix(sp.kvx[l], sp.kvx[l + 1]);

  // Truncated representations.
  sp.rep.resize(sp.dofs.size());
  for (std::size_t d = 0; d < sp.dofs.size(); ++d) {
    const int l0 = sp.dofs[d].level;
    auto& chain = sp.rep[d];
    chain.resize(L - l0);
    chain[0][sp.dofs[d].tensorIndex] = 1.0;
    for (int l = l0; l + 1 < L; ++l) {
      const int nbc = sp.kvx[l].numBasis();
      const int nbf = sp.kvx[l + 1].numBasis();
      std::map<int, double> fine;
      for (const auto& [t, c] : chain[l - l0]) {
        const int ix = t % nbc, iy = t / nbc;
        for (Eigen::SparseMatrix<double>::InnerIterator itx(S[l], ix); itx; ++itx)
          for (Eigen::SparseMatrix<double>::InnerIterator ity(S[l], iy); ity; ++ity)
            fine[static_cast<int>(ity.row()) * nbf + static_cast<int>(itx.row())] +=
                c * itx.value() * ity.value();
      }
      // truncation: drop contributions of active fine functions
      for (int t : sp.activeFuncs[l + 1]) fine.erase(t);
      for (auto it = fine.begin(); it != fine.end();) {
        if (std::abs(it->second) < 1e-15)
          it = fine.erase(it);
        else
          ++it;
      }
      chain[l + 1 - l0] = std::move(fine);
    }
  }

  // Per-level inverse tables: tensor index -> contributing (dof, coeff).
  std::vector<std::map<int, std::vector<std::pair<int, double>>>> contrib(L);
  for (std::size_t d = 0; d < sp.dofs.size(); ++d) {
    const int l0 = sp.dofs[d].level;
    for (int l = l0; l < L; ++l)
      for (const auto& [t, c] : sp.rep[d][l - l0])
        contrib[l][t].emplace_back(static_cast<int>(d), c);
  }

  // Element tables.
  sp.elementIndex.assign(L, {});
  for (int l = 0; l < L; ++l) {
    const int n = mesh.elemsPerSide(l);
    const double h = 1.0 / n;
    for (const auto& [ex, ey] : mesh.active[l]) {
      ThbSpace::ElementInfo ei;
      ei.level = l;
      ei.ex = ex;
      ei.ey = ey;
      ei.x0 = ex * h;
      ei.x1 = (ex + 1) * h;
      ei.y0 = ey * h;
      ei.y1 = (ey + 1) * h;
      const double mx = 0.5 * (ei.x0 + ei.x1), my = 0.5 * (ei.y0 + ei.y1);
      ei.spanx = sp.kvx[l].findSpan(mx);
      ei.spany = sp.kvy[l].findSpan(my);
      const int nb = sp.kvx[l].numBasis();
      std::map<int, int> local;  // dof -> row
      std::vector<Eigen::Triplet<double>> entries;
      for (int ly = 0; ly <= p; ++ly)
        for (int lx = 0; lx <= p; ++lx) {
          const int t = (ei.spany - p + ly) * nb + (ei.spanx - p + lx);
          auto it = contrib[l].find(t);
          if (it == contrib[l].end()) continue;
          const int col = ly * (p + 1) + lx;
          for (const auto& [d, c] : it->second) {
            auto [li, inserted] = local.try_emplace(d, static_cast<int>(local.size()));
            entries.emplace_back(li->second, col, c);
          }
        }
      ei.dofIds.resize(local.size());
      for (const auto& [d, r] : local) ei.dofIds[r] = d;
      ei.C = Eigen::MatrixXd::Zero(static_cast<int>(local.size()), (p + 1) * (p + 1));
      for (const auto& tr : entries) ei.C(tr.row(), tr.col()) += tr.value();
      sp.elementIndex[l][{ex, ey}] = static_cast<int>(sp.elements.size());
      sp.elements.push_back(std::move(ei));
    }
  }
  // fixed deterministic order: level asc, then ey, ex (std::set iteration order
  // of (ex,ey) pairs is ex-major; reorder)
  std::sort(sp.elements.begin(), sp.elements.end(),
            [](const auto& a, const auto& b) {
              return std::tie(a.level, a.ey, a.ex) < std::tie(b.level, b.ey, b.ex);
            });
  for (int l = 0; l < L; ++l) sp.elementIndex[l].clear();
  for (std::size_t i = 0; i < sp.elements.size(); ++i) {
    const auto& ei = sp.elements[i];
    sp.elementIndex[ei.level][{ei.ex, ei.ey}] = static_cast<int>(i);
  }
  return sp;
}

int ThbSpace::numInteriorDofs() const {
  int n = 0;
  for (bool b : boundaryMask)
    if (!b) ++n;
  return n;
}

std::vector<int> ThbSpace::interiorDofs() const {
  std::vector<int> out;
  for (int d = 0; d < numDofs(); ++d)
    if (!boundaryMask[d]) out.push_back(d);
  return out;
}

int ThbSpace::findElement(double xi, double eta) const {
  if (xi < 0.0 || xi > 1.0 || eta < 0.0 || eta > 1.0)
    throw Error("findElement: point outside the unit square");
  for (int l = 0; l < mesh.numLevels(); ++l) {
    const int n = mesh.elemsPerSide(l);
    const int ex = std::min(static_cast<int>(xi * n), n - 1);
    const int ey = std::min(static_cast<int>(eta * n), n - 1);
    auto it = elementIndex[l].find({ex, ey});
    if (it != elementIndex[l].end()) return it->second;
  }
  throw Error("findElement: no active element found (corrupt mesh)");
}

Eigen::MatrixXd ThbSpace::evalElementBasis(int e, double xi, double eta,
                                           int max_deriv) const {
  const auto& ei = elements[e];
  const int l = ei.level;
  const auto bx = eval_basis(kvx[l], xi, max_deriv);
  const auto by = eval_basis(kvy[l], eta, max_deriv);
  if (bx.span != ei.spanx || by.span != ei.spany)
    throw Error("evalElementBasis: point not in element");
  const int ncols = max_deriv == 0 ? 1 : (max_deriv == 1 ? 3 : 6);
  Eigen::MatrixXd local((p + 1) * (p + 1), ncols);
  for (int ly = 0; ly <= p; ++ly)
    for (int lx = 0; lx <= p; ++lx) {
      const int r = ly * (p + 1) + lx;
      local(r, 0) = bx.values(0, lx) * by.values(0, ly);
      if (max_deriv >= 1) {
        local(r, 1) = bx.values(1, lx) * by.values(0, ly);
        local(r, 2) = bx.values(0, lx) * by.values(1, ly);
      }
      if (max_deriv >= 2) {
        local(r, 3) = bx.values(2, lx) * by.values(0, ly);
        local(r, 4) = bx.values(1, lx) * by.values(1, ly);
        local(r, 5) = bx.values(0, lx) * by.values(2, ly);
      }
    }
  return ei.C * local;
}

ThbSpace refine_functions(const ThbSpace& space, const std::vector<int>& marked) {
  if (marked.empty()) return space;
  std::set<std::pair<int, std::pair<int, int>>> to_refine;
  for (int d : marked) {
    if (d < 0 || d >= space.numDofs()) throw Error("refine_functions: bad dof index");
    const int l = space.dofs[d].level;
    const int nb = space.kvx[l].numBasis();
    const int ix = space.dofs[d].tensorIndex % nb;
    const int iy = space.dofs[d].tensorIndex / nb;
    const auto [xlo, xhi] = space.kvx[l].supportElements(ix);
    const auto [ylo, yhi] = space.kvy[l].supportElements(iy);
    for (int ey = ylo; ey <= yhi; ++ey)
      for (int ex = xlo; ex <= xhi; ++ex)
        if (space.mesh.active[l].count({ex, ey}))
          to_refine.insert({l, {ex, ey}});
  }
  HierarchicalMesh mesh = space.mesh;
  mesh.refineElements({to_refine.begin(), to_refine.end()});
  return build_thb_space(mesh, space.p, space.alpha);
}

ThbSpace adjoint_space(const ThbSpace& space) {
  return build_thb_space(space.mesh, space.p + 1, space.alpha + 1);
}

Eigen::Vector2d GeometryMap::value(double xi, double eta) const {
  const int e = space->findElement(xi, eta);
  const Eigen::MatrixXd B = space->evalElementBasis(e, xi, eta, 0);
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  const auto& ids = space->elements[e].dofIds;
  for (int r = 0; r < B.rows(); ++r) v += B(r, 0) * coeffs.row(ids[r]).transpose();
  return v;
}

Eigen::Matrix2d GeometryMap::jacobian(double xi, double eta) const {
  const int e = space->findElement(xi, eta);
  const Eigen::MatrixXd B = space->evalElementBasis(e, xi, eta, 1);
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  const auto& ids = space->elements[e].dofIds;
  for (int r = 0; r < B.rows(); ++r) {
    J.col(0) += B(r, 1) * coeffs.row(ids[r]).transpose();
    J.col(1) += B(r, 2) * coeffs.row(ids[r]).transpose();
  }
  return J;
}

std::pair<Eigen::Matrix2d, Eigen::Matrix2d> GeometryMap::hessians(double xi,
                                                                  double eta) const {
  const int e = space->findElement(xi, eta);
  const Eigen::MatrixXd B = space->evalElementBasis(e, xi, eta, 2);
  Eigen::Matrix2d H1 = Eigen::Matrix2d::Zero(), H2 = Eigen::Matrix2d::Zero();
  const auto& ids = space->elements[e].dofIds;
  for (int r = 0; r < B.rows(); ++r) {
    const Eigen::Vector2d c = coeffs.row(ids[r]).transpose();
    H1(0, 0) += B(r, 3) * c[0];
    H1(0, 1) += B(r, 4) * c[0];
    H1(1, 1) += B(r, 5) * c[0];
    H2(0, 0) += B(r, 3) * c[1];
    H2(0, 1) += B(r, 4) * c[1];
    H2(1, 1) += B(r, 5) * c[1];
  }
  H1(1, 0) = H1(0, 1);
  H2(1, 0) = H2(0, 1);
  return {H1, H2};
}

GeometryMap identity_map(const SpacePtr& space) {
  // Greville collocation is exact for the linear field (xi, eta) per level;
  // use L2 projection instead to stay exact for any THB pattern.
  GeometryMap g;
  g.space = space;
  g.coeffs.resize(space->numDofs(), 2);
  // Projection via least squares on a dense sample grid would be inexact;
  // assemble the Galerkin projection with Gauss quadrature (exact: integrand
  // polynomial).
  std::vector<double> gp, gw;
  gauss_legendre(space->p + 1, gp, gw);
  const int N = space->numDofs();
  Eigen::SparseMatrix<double> M(N, N);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(N, 2);
  for (std::size_t e = 0; e < space->elements.size(); ++e) {
    const auto& ei = space->elements[e];
    const double ax = ei.x1 - ei.x0, ay = ei.y1 - ei.y0;
    for (std::size_t qy = 0; qy < gp.size(); ++qy)
      for (std::size_t qx = 0; qx < gp.size(); ++qx) {
        const double xi = ei.x0 + ax * gp[qx], eta = ei.y0 + ay * gp[qy];
        const double w = ax * ay * gw[qx] * gw[qy];
        const Eigen::MatrixXd B =
            space->evalElementBasis(static_cast<int>(e), xi, eta, 0);
        for (int r = 0; r < B.rows(); ++r) {
          const int dr = ei.dofIds[r];
          rhs(dr, 0) += w * B(r, 0) * xi;
          rhs(dr, 1) += w * B(r, 0) * eta;
          for (int s = 0; s < B.rows(); ++s)
            trip.emplace_back(dr, ei.dofIds[s], w * B(r, 0) * B(s, 0));
        }
      }
  }
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(M);
  if (lu.info() != Eigen::Success) throw Error("identity_map: singular mass matrix");
  g.coeffs.col(0) = lu.solve(rhs.col(0));
  g.coeffs.col(1) = lu.solve(rhs.col(1));
  return g;
}

Eigen::VectorXd prolong_scalar(const ThbSpace& coarse, const Eigen::VectorXd& coeffs,
                               const ThbSpace& fine) {
  // Galerkin L2 projection onto the fine space; exact for nested spaces since
  // the quadrature integrates the piecewise-polynomial integrand exactly.
  std::vector<double> gp, gw;
  gauss_legendre(fine.p + 1, gp, gw);
  const int N = fine.numDofs();
  Eigen::SparseMatrix<double> M(N, N);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
  for (std::size_t e = 0; e < fine.elements.size(); ++e) {
    const auto& ei = fine.elements[e];
    const double ax = ei.x1 - ei.x0, ay = ei.y1 - ei.y0;
    for (std::size_t qy = 0; qy < gp.size(); ++qy)
      for (std::size_t qx = 0; qx < gp.size(); ++qx) {
        const double xi = ei.x0 + ax * gp[qx], eta = ei.y0 + ay * gp[qy];
        const double w = ax * ay * gw[qx] * gw[qy];
        const Eigen::MatrixXd B = fine.evalElementBasis(static_cast<int>(e), xi, eta, 0);
        // coarse value
        const int ce = coarse.findElement(xi, eta);
        const Eigen::MatrixXd Bc = coarse.evalElementBasis(ce, xi, eta, 0);
        double fv = 0.0;
        const auto& cids = coarse.elements[ce].dofIds;
        for (int r = 0; r < Bc.rows(); ++r) fv += Bc(r, 0) * coeffs[cids[r]];
        for (int r = 0; r < B.rows(); ++r) {
          const int dr = ei.dofIds[r];
          rhs[dr] += w * B(r, 0) * fv;
          for (int s = 0; s < B.rows(); ++s)
            trip.emplace_back(dr, ei.dofIds[s], w * B(r, 0) * B(s, 0));
        }
      }
  }
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(M);
  if (lu.info() != Eigen::Success) throw Error("prolong: singular mass matrix");
  return lu.solve(rhs);
}

GeometryMap prolong(const GeometryMap& coarse, const SpacePtr& fine) {
  GeometryMap out;
  out.space = fine;
  out.coeffs.resize(fine->numDofs(), 2);
  out.coeffs.col(0) = prolong_scalar(*coarse.space, coarse.coeffs.col(0), *fine);
  out.coeffs.col(1) = prolong_scalar(*coarse.space, coarse.coeffs.col(1), *fine);
  return out;
}

}  // namespace egg
