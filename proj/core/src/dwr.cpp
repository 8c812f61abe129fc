#include "egg/dwr.hpp"

#include <cmath>

namespace egg {

namespace {

inline double ddot(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
  return a.cwiseProduct(b).sum();
}

struct XPoint {
  Eigen::Matrix2d J, H1, H2;
  double g11, g12, g22;
};

XPoint x_point(const GeometryMap& x, double xi, double eta) {
  XPoint p;
  p.J = x.jacobian(xi, eta);
  std::tie(p.H1, p.H2) = x.hessians(xi, eta);
  p.g11 = p.J.col(0).squaredNorm();
  p.g22 = p.J.col(1).squaredNorm();
  p.g12 = p.J.col(0).dot(p.J.col(1));
  return p;
}

Eigen::Matrix2d cofactor(const Eigen::Matrix2d& J) {
  Eigen::Matrix2d c;
  c << J(1, 1), -J(1, 0), -J(0, 1), J(0, 0);
  return c;
}

}  // namespace

GoalFunctional make_bijectivity_goal(const QuadratureCache& cache,
                                     const GeometryMap& x) {
  GoalFunctional g;
  g.kind = GoalKind::Bijectivity;
  g.xi_minus = bijectivity_scan(cache, x).second;
  return g;
}

GoalFunctional make_winslow_goal() {
  GoalFunctional g;
  g.kind = GoalKind::Winslow;
  return g;
}

double goal_value(const QuadratureCache& cache, const GeometryMap& x,
                  const GoalFunctional& goal) {
  if (goal.kind == GoalKind::Bijectivity) {
    double v = 0.0;
    for (const auto& pt : goal.xi_minus) v += x.jacobian(pt.xi, pt.eta).determinant();
    return v;
  }
  return evaluate(cache, x, {"winslow"}).values.at("winslow");
}

Eigen::VectorXd goal_gradient(const QuadratureCache& test_cache,
                              const GeometryMap& x, const GoalFunctional& goal) {
  const ThbSpace& sp = *test_cache.space;
  const InteriorMap im(sp);
  const int ni = im.ni();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * ni);
  if (goal.kind == GoalKind::Bijectivity) {
    for (const auto& pt : goal.xi_minus) {
      const int e = sp.findElement(pt.xi, pt.eta);
      const Eigen::MatrixXd B = sp.evalElementBasis(e, pt.xi, pt.eta, 1);
      const Eigen::Matrix2d cof = cofactor(x.jacobian(pt.xi, pt.eta));
      const auto& ids = sp.elements[e].dofIds;
      for (int r = 0; r < B.rows(); ++r) {
        const int pr = im.pos[ids[r]];
        if (pr < 0) continue;
        for (int j = 0; j < 2; ++j)
          g[j * ni + pr] += cof(j, 0) * B(r, 1) + cof(j, 1) * B(r, 2);
      }
    }
    return g;
  }
  // Winslow goal: the cost is -L_W, so the gradient is the negated first
  // variation of L_W at x, tested in the cache's space
  for (std::size_t e = 0; e < test_cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = test_cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const XPoint p = x_point(x, eq.xi[k], eq.eta[k]);
      const double d = p.J.determinant();
      if (d <= 0.0) throw Error("winslow goal gradient: nonpositive detJ");
      const double N = p.g11 + p.g22, w = eq.w[k];
      const Eigen::Matrix2d cof = cofactor(p.J);
      const Eigen::MatrixXd& B = eq.B[k];
      for (int r = 0; r < B.rows(); ++r) {
        const int pr = im.pos[ei.dofIds[r]];
        if (pr < 0) continue;
        for (int j = 0; j < 2; ++j) {
          const double dN = 2.0 * (p.J(j, 0) * B(r, 1) + p.J(j, 1) * B(r, 2));
          const double dd = cof(j, 0) * B(r, 1) + cof(j, 1) * B(r, 2);
          g[j * ni + pr] -= w * (dN / d - N * dd / (d * d));
        }
      }
    }
  }
  return g;
}

GeometryMap solve_adjoint(const GeometryMap& x, const GoalFunctional& goal,
                          const SpacePtr& adjoint, double eps) {
  const QuadratureCache cache = build_quadrature(adjoint);
  const ThbSpace& sp = *adjoint;
  const InteriorMap im(sp);
  const int ni = im.ni();
  // linearization of F (tau = Id) at x: rows test adjoint basis, columns
  // perturb the geometry along adjoint basis directions
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    const int nd = static_cast<int>(ei.dofIds.size());
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const XPoint p = x_point(x, eq.xi[k], eq.eta[k]);
      const double dd = p.g11 + p.g22 + eps;
      Eigen::Matrix2d A;
      A << p.g22, -p.g12, -p.g12, p.g11;
      A /= dd;
      const Eigen::Matrix2d H[2] = {p.H1, p.H2};
      const double w = eq.w[k];
      for (int a = 0; a < nd; ++a) {
        const int pa = im.pos[ei.dofIds[a]];
        if (pa < 0) continue;
        const double ba1 = B(a, 1), ba2 = B(a, 2);
        Eigen::Matrix2d Hw;
        Hw << B(a, 3), B(a, 4), B(a, 4), B(a, 5);
        const double AdH = ddot(A, Hw);
        for (int j = 0; j < 2; ++j) {
          const double dg11 = 2.0 * p.J(j, 0) * ba1;
          const double dg22 = 2.0 * p.J(j, 1) * ba2;
          const double dg12 = p.J(j, 0) * ba2 + p.J(j, 1) * ba1;
          Eigen::Matrix2d dM;
          dM << dg22, -dg12, -dg12, dg11;
          const Eigen::Matrix2d dA = (dM - A * (dg11 + dg22)) / dd;
          const double dAH[2] = {ddot(dA, H[0]), ddot(dA, H[1])};
          for (int b = 0; b < nd; ++b) {
            const int pb = im.pos[ei.dofIds[b]];
            if (pb < 0) continue;
            for (int i = 0; i < 2; ++i) {
              double val = B(b, 0) * dAH[i];
              if (i == j) val += B(b, 0) * AdH;
              if (val != 0.0)
                trip.emplace_back(i * ni + pb, j * ni + pa, w * val);
            }
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> K(2 * ni, 2 * ni);
  K.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd rhs = goal_gradient(cache, x, goal);
  const Eigen::SparseMatrix<double> Kt = K.transpose();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(Kt);
  if (lu.info() != Eigen::Success)
    throw Error("adjoint linearization singular; restart with a uniformly "
                "refined initial basis");
  const Eigen::VectorXd z = lu.solve(rhs);
  GeometryMap out;
  out.space = adjoint;
  out.coeffs = Eigen::MatrixX2d::Zero(sp.numDofs(), 2);
  for (int k = 0; k < ni; ++k) {
    out.coeffs(im.dofs[k], 0) = z[k];
    out.coeffs(im.dofs[k], 1) = z[ni + k];
  }
  return out;
}

ResidualDecomposition decompose_residual(const GeometryMap& x,
                                         const GeometryMap& z, PsiChoice psi,
                                         double eps) {
  const SpacePtr sp = x.space;
  // order bumped by the adjoint degree excess (+1)
  const QuadratureCache cache = build_quadrature(sp, sp->p + 2);
  GeometryMap psi_h;
  psi_h.space = sp;
  psi_h.coeffs = Eigen::MatrixX2d::Zero(sp->numDofs(), 2);
  if (psi == PsiChoice::L2Projection) {
    auto zf = [&z](double xi, double eta) { return z.value(xi, eta); };
    psi_h = l2_project(cache, zf, Subspace::Interior);
  }
  const int N = sp->numDofs();
  ResidualDecomposition dec;
  dec.r = Eigen::VectorXd::Zero(N);
  dec.w = Eigen::VectorXd::Zero(N);
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp->elements[e];
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const double w = eq.w[k];
      // metric of x straight from the primal basis tables
      Eigen::Matrix2d J = Eigen::Matrix2d::Zero(), H1 = Eigen::Matrix2d::Zero(),
                      H2 = Eigen::Matrix2d::Zero();
      Eigen::Vector2d psiv = Eigen::Vector2d::Zero();
      for (int r = 0; r < B.rows(); ++r) {
        const int d = ei.dofIds[r];
        const double cx = x.coeffs(d, 0), cy = x.coeffs(d, 1);
        J(0, 0) += B(r, 1) * cx;
        J(0, 1) += B(r, 2) * cx;
        J(1, 0) += B(r, 1) * cy;
        J(1, 1) += B(r, 2) * cy;
        H1(0, 0) += B(r, 3) * cx;
        H1(0, 1) += B(r, 4) * cx;
        H1(1, 1) += B(r, 5) * cx;
        H2(0, 0) += B(r, 3) * cy;
        H2(0, 1) += B(r, 4) * cy;
        H2(1, 1) += B(r, 5) * cy;
        psiv += B(r, 0) * psi_h.coeffs.row(d).transpose();
      }
      H1(1, 0) = H1(0, 1);
      H2(1, 0) = H2(0, 1);
      const double g11 = J.col(0).squaredNorm(), g22 = J.col(1).squaredNorm();
      const double g12 = J.col(0).dot(J.col(1));
      const double dd = g11 + g22 + eps;
      Eigen::Matrix2d A;
      A << g22, -g12, -g12, g11;
      A /= dd;
      const Eigen::Vector2d AH(ddot(A, H1), ddot(A, H2));
      const Eigen::Vector2d v = z.value(eq.xi[k], eq.eta[k]) - psiv;
      const double G = v.dot(AH);
      for (int r = 0; r < B.rows(); ++r) {
        const int d = ei.dofIds[r];
        dec.r[d] -= w * B(r, 0) * G;
        dec.w[d] += w * B(r, 0);
      }
    }
  }
  dec.rtil = dec.r.cwiseQuotient(dec.w);
  dec.estimate = dec.r.sum();
  return dec;
}

std::vector<int> mark(const ResidualDecomposition& dec, double beta,
                      bool positive_only) {
  Eigen::VectorXd rt = dec.rtil;
  if (positive_only)
    for (int i = 0; i < rt.size(); ++i)
      if (rt[i] < 0.0) rt[i] = 0.0;
  const double mx = rt.cwiseAbs().maxCoeff();
  std::vector<int> out;
  if (mx == 0.0) return out;
  for (int i = 0; i < rt.size(); ++i)
    if (std::abs(rt[i]) >= beta * mx && rt[i] != 0.0) out.push_back(i);
  return out;
}

AdaptResult adapt_loop(const BoundaryData& b, const SpacePtr& space0,
                       const AdaptConfig& cfg) {
  AdaptResult res;
  SpacePtr space = space0;
  GeometryMap xprev;
  bool have_prev = false;
  for (int round = 0; round <= cfg.max_rounds; ++round) {
    const QuadratureCache cache = build_quadrature(space);
    GeometryMap x0;
    if (!have_prev) {
      x0 = coons_patch(b, cache);
    } else {
      x0 = prolong(xprev, space);
      apply_dirichlet(cache, x0, boundary_trace(b));
    }
    AdaptRound rec;
    auto [x, rep] = solve(cache, x0, cfg.solver);
    rec.solve = rep;
    rec.dofs = space->numDofs();
    res.x = x;
    xprev = x;
    have_prev = true;
    const auto [mindet, neg] = bijectivity_scan(cache, x);
    rec.num_negative = static_cast<int>(neg.size());
    if (cfg.goal == GoalKind::Bijectivity && neg.empty()) {
      res.satisfied = true;
      res.rounds.push_back(rec);
      break;
    }
    GoalFunctional goal;
    if (cfg.goal == GoalKind::Bijectivity) {
      goal = make_bijectivity_goal(cache, x);
    } else {
      if (mindet <= 0.0) {
        res.note = "winslow goal needs a bijective solution; got a fold";
        res.rounds.push_back(rec);
        break;
      }
      goal = make_winslow_goal();
    }
    const SpacePtr adj = std::make_shared<const ThbSpace>(adjoint_space(*space));
    const GeometryMap z = solve_adjoint(x, goal, adj, cfg.eps);
    const ResidualDecomposition dec = decompose_residual(x, z, PsiChoice::L2Projection, cfg.eps);
    rec.estimate = dec.estimate;
    if (cfg.goal == GoalKind::Winslow) {
      const double Lw = evaluate(cache, x, {"winslow"}).values.at("winslow");
      const double tol = cfg.winslow_tol > 0.0 ? cfg.winslow_tol : 1e-3 * Lw;
      if (std::abs(dec.estimate) <= tol) {
        res.satisfied = true;
        res.rounds.push_back(rec);
        break;
      }
    }
    const std::vector<int> marked = mark(dec, cfg.beta, cfg.positive_only);
    rec.marked = static_cast<int>(marked.size());
    res.rounds.push_back(rec);
    if (round == cfg.max_rounds) {
      res.note = "round limit reached before the goal was met";
      break;
    }
    if (marked.empty()) {
      res.note = "marking produced no candidates";
      break;
    }
    space = std::make_shared<const ThbSpace>(refine_functions(*space, marked));
  }
  return res;
}

}  // namespace egg
