#include "egg/domopt.hpp"

#include "egg/quality.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>

namespace egg {

// ---------------------------------------------------------------------------
// control matrices

ControlPoint control_matrices(const GeometryMap& s, double xi, double eta) {
  ControlPoint cp;
  cp.T = s.jacobian(xi, eta);
  cp.detT = cp.T.determinant();
  if (std::abs(cp.detT) < 1e-14) {
    std::ostringstream os;
    os << "singular control-map Jacobian at (" << xi << ", " << eta << ")";
    throw Error(os.str());
  }
  const auto [H1, H2] = s.hessians(xi, eta);
  const Eigen::Matrix2d Tinv = cp.T.inverse();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const Eigen::Vector2d pij = -Tinv * Eigen::Vector2d(H1(i, j), H2(i, j));
      cp.P1(i, j) = pij(0);
      cp.P2(i, j) = pij(1);
    }
  return cp;
}

void ControlMap::validateBoundary(double tol) const {
  const int ns = 200;
  for (int i = 0; i <= ns; ++i) {
    const double t = static_cast<double>(i) / ns;
    const double pts[4][2] = {{t, 0.0}, {t, 1.0}, {0.0, t}, {1.0, t}};
    for (const auto& p : pts) {
      const Eigen::Vector2d v = map.value(p[0], p[1]);
      if ((v - Eigen::Vector2d(p[0], p[1])).norm() > tol) {
        std::ostringstream os;
        os << "control map boundary trace is not the identity at (" << p[0]
           << ", " << p[1] << ")";
        throw Error(os.str());
      }
    }
  }
}

ControlMap identity_control(const SpacePtr& space) {
  return ControlMap{identity_map(space)};
}

// ---------------------------------------------------------------------------
// metric-based quality kernel

namespace {

// Q(g11, g12, g22, det) and partial derivatives for the metric-based subset.
struct QKernel {
  double val = 0.0, dg11 = 0.0, dg12 = 0.0, dg22 = 0.0, ddet = 0.0;
};

QKernel q_kernel(const std::string& name, double g11, double g12, double g22,
                 double det) {
  QKernel q;
  if (name == "area") {
    q.val = det * det;
    q.ddet = 2.0 * det;
  } else if (name == "orthogonality") {
    q.val = g12 * g12;
    q.dg12 = 2.0 * g12;
  } else if (name == "area-orthogonality") {
    q.val = g11 * g22;
    q.dg11 = g22;
    q.dg22 = g11;
  } else if (name == "length") {
    q.val = g11 + g22;
    q.dg11 = q.dg22 = 1.0;
  } else if (name == "liao") {
    q.val = g11 * g11 + 2.0 * g12 * g12 + g22 * g22;
    q.dg11 = 2.0 * g11;
    q.dg12 = 4.0 * g12;
    q.dg22 = 2.0 * g22;
  } else if (name == "winslow") {
    if (det <= 0.0) throw Error("winslow cost requires det > 0");
    const double n = g11 + g22;
    q.val = n / det;
    q.dg11 = q.dg22 = 1.0 / det;
    q.ddet = -n / (det * det);
  } else if (name == "ml") {
    if (det <= 0.0) throw Error("ml cost requires det > 0");
    const double n = g11 + g22;
    q.val = n * n / (det * det);
    q.dg11 = q.dg22 = 2.0 * n / (det * det);
    q.ddet = -2.0 * n * n / (det * det * det);
  } else {
    throw Error("unknown cost functional: " + name);
  }
  return q;
}

double clamp01(double t) { return std::min(1.0, std::max(0.0, t)); }

}  // namespace

double domain_cost(const QuadratureCache& cache_s, const GeometryMap& s,
                   const GeometryMap* x_star, const QualitySpec& cost,
                   Eigen::VectorXd* grad) {
  const ThbSpace& space = *cache_s.space;
  const InteriorMap im(space);
  const int ni = im.ni();
  bool need_pullback = false;
  for (const auto& t : cost) need_pullback |= t.pulled_back;
  if (need_pullback && !x_star)
    throw Error("pulled-back cost terms require a base map");
  double total = 0.0;
  if (grad) grad->setZero(2 * ni);
  for (std::size_t e = 0; e < cache_s.elems.size(); ++e) {
    const auto& el = space.elements[e];
    const auto& eq = cache_s.elems[e];
    const int nb = static_cast<int>(el.dofIds.size());
    for (std::size_t k = 0; k < eq.w.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      Eigen::Vector2d sv = Eigen::Vector2d::Zero();
      Eigen::Matrix2d T = Eigen::Matrix2d::Zero();
      for (int r = 0; r < nb; ++r) {
        const Eigen::Vector2d cr = s.coeffs.row(el.dofIds[r]).transpose();
        sv += B(r, 0) * cr;
        T.col(0) += B(r, 1) * cr;
        T.col(1) += B(r, 2) * cr;
      }
      const double detT = T.determinant();
      Eigen::Matrix2d cofT;
      cofT << T(1, 1), -T(1, 0), -T(0, 1), T(0, 0);

      // composite (pulled-back) metric quantities at this point
      Eigen::Matrix2d G = Eigen::Matrix2d::Identity(), Jx, Hx1, Hx2;
      double detJx = 1.0;
      Eigen::Matrix2d gs = T.transpose() * T;
      double dets = detT;
      if (need_pullback) {
        const double u = clamp01(sv(0)), v = clamp01(sv(1));
        Jx = x_star->jacobian(u, v);
        std::tie(Hx1, Hx2) = x_star->hessians(u, v);
        G = Jx.transpose() * Jx;
        detJx = Jx.determinant();
        gs = T.transpose() * G * T;
        dets = detJx * detT;
      }
      const Eigen::Matrix2d gp = T.transpose() * T;

      for (const auto& term : cost) {
        const double g11 = term.pulled_back ? gs(0, 0) : gp(0, 0);
        const double g12 = term.pulled_back ? gs(0, 1) : gp(0, 1);
        const double g22 = term.pulled_back ? gs(1, 1) : gp(1, 1);
        const double det = term.pulled_back ? dets : detT;
        const QKernel q = q_kernel(term.name, g11, g12, g22, det);
        double wgt = term.weight;
        if (term.spatial) wgt *= term.spatial(eq.xi[k], eq.eta[k]);
        total += eq.w[k] * wgt * q.val;
        if (!grad) continue;
        const Eigen::Matrix2d& Gm =
            term.pulled_back ? G : Eigen::Matrix2d::Identity().eval();
        for (int r = 0; r < nb; ++r) {
          const int pos = im.pos[el.dofIds[r]];
          if (pos < 0) continue;
          const double wa = B(r, 0), wx = B(r, 1), wy = B(r, 2);
          for (int c = 0; c < 2; ++c) {
            // dT: row c becomes grad(w_a), all else zero
            Eigen::Matrix2d dT = Eigen::Matrix2d::Zero();
            dT(c, 0) = wx;
            dT(c, 1) = wy;
            Eigen::Matrix2d dg = dT.transpose() * Gm * T + T.transpose() * Gm * dT;
            double ddet = cofT(c, 0) * wx + cofT(c, 1) * wy;  // d(detT)
            if (term.pulled_back) {
              // the evaluation point s(xi) moves: G and det J* depend on s_c
              Eigen::Matrix2d dJ;
              dJ.row(0) = wa * Eigen::RowVector2d(Hx1(0, c), Hx1(1, c));
              dJ.row(1) = wa * Eigen::RowVector2d(Hx2(0, c), Hx2(1, c));
              const Eigen::Matrix2d dG =
                  dJ.transpose() * Jx + Jx.transpose() * dJ;
              dg += T.transpose() * dG * T;
              Eigen::Matrix2d cofJ;
              cofJ << Jx(1, 1), -Jx(1, 0), -Jx(0, 1), Jx(0, 0);
              const double ddetJx = (cofJ.array() * dJ.array()).sum();
              ddet = ddetJx * detT + detJx * ddet;
            }
            const double dq = q.dg11 * dg(0, 0) + q.dg12 * dg(0, 1) +
                              q.dg22 * dg(1, 1) + q.ddet * ddet;
            (*grad)(c * ni + pos) += eq.w[k] * wgt * dq;
          }
        }
      }
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// constraint sets

namespace {

// Bernstein basis of degree d on [0,1].
Eigen::VectorXd bernstein(int d, double t) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d + 1);
  b(0) = 1.0;
  for (int j = 1; j <= d; ++j) {
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = b(r);
      b(r) = saved + (1.0 - t) * tmp;
      saved = t * tmp;
    }
    b(j) = saved;
  }
  return b;
}

// detT and its per-dof gradient rows at one cached point.
struct DetPoint {
  double detT = 0.0;
  Eigen::Matrix2d cofT;
};

DetPoint det_at(const Eigen::MatrixXd& B, const GeometryMap& map,
                const std::vector<int>& dofIds) {
  Eigen::Matrix2d T = Eigen::Matrix2d::Zero();
  for (std::size_t r = 0; r < dofIds.size(); ++r) {
    const Eigen::Vector2d cr = map.coeffs.row(dofIds[r]).transpose();
    T.col(0) += B(r, 1) * cr;
    T.col(1) += B(r, 2) * cr;
  }
  DetPoint d;
  d.detT = T.determinant();
  d.cofT << T(1, 1), -T(1, 0), -T(0, 1), T(0, 0);
  return d;
}

// Assemble f_i = integral of phi_i * det(ds) for either the Bernstein segment
// basis (per element) or the space's own basis, plus the Jacobian wrt the
// interior dofs.
void bezier_f(const ConstraintSet& c, const GeometryMap& map,
              Eigen::VectorXd& f, Eigen::MatrixXd* jac) {
  const ThbSpace& space = *c.space;
  const InteriorMap im(space);
  const int ni = im.ni();
  const int d = 2 * space.p - 1;
  const int nseg = (d + 1) * (d + 1);
  const QuadratureCache cache = build_quadrature(c.space, c.qdet);
  f.setZero(static_cast<int>(space.elements.size()) * nseg);
  if (jac) jac->setZero(f.size(), 2 * ni);
  for (std::size_t e = 0; e < space.elements.size(); ++e) {
    const auto& el = space.elements[e];
    const auto& eq = cache.elems[e];
    const double hx = el.x1 - el.x0, hy = el.y1 - el.y0;
    const int base = static_cast<int>(e) * nseg;
    for (std::size_t k = 0; k < eq.w.size(); ++k) {
      const DetPoint dp = det_at(eq.B[k], map, el.dofIds);
      const Eigen::VectorXd bx = bernstein(d, (eq.xi[k] - el.x0) / hx);
      const Eigen::VectorXd by = bernstein(d, (eq.eta[k] - el.y0) / hy);
      for (int j = 0; j <= d; ++j)
        for (int i = 0; i <= d; ++i) {
          const double phi = bx(i) * by(j);
          f(base + j * (d + 1) + i) += eq.w[k] * phi * dp.detT;
          if (!jac) continue;
          for (std::size_t r = 0; r < el.dofIds.size(); ++r) {
            const int pos = im.pos[el.dofIds[r]];
            if (pos < 0) continue;
            for (int comp = 0; comp < 2; ++comp)
              (*jac)(base + j * (d + 1) + i, comp * ni + pos) +=
                  eq.w[k] * phi *
                  (dp.cofT(comp, 0) * eq.B[k](r, 1) +
                   dp.cofT(comp, 1) * eq.B[k](r, 2));
          }
        }
    }
  }
}

// f_i = integral of w_i det(ds) over the space's own (full) basis.
void coarse_f(const ConstraintSet& c, const GeometryMap& map,
              Eigen::VectorXd& f, Eigen::MatrixXd* jac) {
  const ThbSpace& space = *c.space;
  const InteriorMap im(space);
  const int ni = im.ni();
  const QuadratureCache cache = build_quadrature(c.space, c.qdet);
  f.setZero(space.numDofs());
  if (jac) jac->setZero(space.numDofs(), 2 * ni);
  for (std::size_t e = 0; e < space.elements.size(); ++e) {
    const auto& el = space.elements[e];
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.w.size(); ++k) {
      const DetPoint dp = det_at(eq.B[k], map, el.dofIds);
      for (std::size_t b = 0; b < el.dofIds.size(); ++b) {
        f(el.dofIds[b]) += eq.w[k] * eq.B[k](b, 0) * dp.detT;
        if (!jac) continue;
        for (std::size_t r = 0; r < el.dofIds.size(); ++r) {
          const int pos = im.pos[el.dofIds[r]];
          if (pos < 0) continue;
          for (int comp = 0; comp < 2; ++comp)
            (*jac)(el.dofIds[b], comp * ni + pos) +=
                eq.w[k] * eq.B[k](b, 0) *
                (dp.cofT(comp, 0) * eq.B[k](r, 1) +
                 dp.cofT(comp, 1) * eq.B[k](r, 2));
        }
      }
    }
  }
}

Eigen::SparseMatrix<double> scalar_mass(const SpacePtr& space) {
  const QuadratureCache cache = build_quadrature(space);
  return mass_matrix(cache);
}

// per-element block inverse of the Bernstein mass matrix on the unit square
Eigen::MatrixXd bernstein_mass_inverse(int d) {
  std::vector<double> gp, gw;
  gauss_legendre(d + 1, gp, gw);
  Eigen::MatrixXd M1 = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (std::size_t k = 0; k < gp.size(); ++k) {
    const Eigen::VectorXd b = bernstein(d, gp[k]);
    M1 += gw[k] * b * b.transpose();
  }
  const int n = (d + 1) * (d + 1);
  Eigen::MatrixXd M2(n, n);
  for (int j1 = 0; j1 <= d; ++j1)
    for (int i1 = 0; i1 <= d; ++i1)
      for (int j2 = 0; j2 <= d; ++j2)
        for (int i2 = 0; i2 <= d; ++i2)
          M2(j1 * (d + 1) + i1, j2 * (d + 1) + i2) = M1(i1, i2) * M1(j1, j2);
  return M2.inverse();
}

void require_tensor(const ThbSpace& space) {
  if (space.mesh.numLevels() != 1)
    throw Error(
        "cone constraint requires a structured tensor-product basis; the "
        "space has hierarchical levels");
}

}  // namespace

ConstraintSet make_bezier_constraint(const SpacePtr& space) {
  ConstraintSet c;
  c.kind = ConstraintKind::Bezier;
  c.space = space;
  c.qdet = 2 * space->p;
  return c;
}

ConstraintSet make_coarse_slack_constraint(const SpacePtr& space) {
  ConstraintSet c;
  c.kind = ConstraintKind::CoarseSlack;
  c.space = space;
  c.qdet = 2 * space->p;
  // initial slack from the identity: e = M^{-1} f(identity), strictly positive
  const GeometryMap id = identity_map(space);
  Eigen::VectorXd f;
  coarse_f(c, id, f, nullptr);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(scalar_mass(space));
  c.slack = ldlt.solve(f);
  return c;
}

ConstraintSet make_pointwise_constraint(const SpacePtr& space,
                                        const GeometryMap* ref, double alpha_L,
                                        double alpha_U, int pts_per_elem) {
  ConstraintSet c;
  c.kind = ConstraintKind::Pointwise;
  c.space = space;
  const int m = std::max(1, static_cast<int>(std::lround(std::sqrt(
                                static_cast<double>(pts_per_elem)))));
  for (const auto& el : space->elements)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        c.abscissae.emplace_back(el.x0 + (el.x1 - el.x0) * (i + 0.5) / m,
                                 el.y0 + (el.y1 - el.y0) * (j + 0.5) / m);
  const int n = static_cast<int>(c.abscissae.size());
  c.epsL.resize(n);
  c.epsU.resize(n);
  for (int i = 0; i < n; ++i) {
    double dj = 1.0;
    if (ref) dj = ref->jacobian(c.abscissae[i].first, c.abscissae[i].second)
                      .determinant();
    if (dj <= 0.0)
      throw Error("pointwise constraint: reference map folds at a sample");
    c.epsL(i) = alpha_L * dj;
    c.epsU(i) = alpha_U * dj;
  }
  return c;
}

ConstraintSet make_cone_constraint(const SpacePtr& space, double margin) {
  require_tensor(*space);
  ConstraintSet c;
  c.kind = ConstraintKind::Cone;
  c.space = space;
  c.margin = margin;
  return c;
}

void constraint_value_and_gradient(const ConstraintSet& c, const GeometryMap& map,
                                   Eigen::VectorXd& values,
                                   Eigen::MatrixXd* jacobian) {
  const ThbSpace& space = *c.space;
  const InteriorMap im(space);
  const int ni = im.ni();
  switch (c.kind) {
    case ConstraintKind::Bezier: {
      Eigen::VectorXd f;
      bezier_f(c, map, f, jacobian);
      const int d = 2 * space.p - 1;
      const int nseg = (d + 1) * (d + 1);
      const Eigen::MatrixXd Minv = bernstein_mass_inverse(d);
      values.resize(f.size());
      for (std::size_t e = 0; e < space.elements.size(); ++e) {
        const auto& el = space.elements[e];
        const double area = (el.x1 - el.x0) * (el.y1 - el.y0);
        const int base = static_cast<int>(e) * nseg;
        values.segment(base, nseg) = Minv * f.segment(base, nseg) / area;
        if (jacobian)
          jacobian->middleRows(base, nseg) =
              (Minv * jacobian->middleRows(base, nseg) / area).eval();
      }
      return;
    }
    case ConstraintKind::CoarseSlack: {
      // equality residual f(s) - M e at the stored slack
      Eigen::VectorXd f;
      coarse_f(c, map, f, jacobian);
      values = f - scalar_mass(c.space) * c.slack;
      return;
    }
    case ConstraintKind::Pointwise: {
      const int m = static_cast<int>(c.abscissae.size());
      values.resize(2 * m);
      if (jacobian) jacobian->setZero(2 * m, 2 * ni);
      for (int i = 0; i < m; ++i) {
        const auto [xi, eta] = c.abscissae[i];
        const int e = space.findElement(xi, eta);
        const Eigen::MatrixXd B = space.evalElementBasis(e, xi, eta, 1);
        const DetPoint dp = det_at(B, map, space.elements[e].dofIds);
        values(i) = dp.detT - c.epsL(i);
        values(m + i) = c.epsU(i) - dp.detT;
        if (!jacobian) continue;
        const auto& dofIds = space.elements[e].dofIds;
        for (std::size_t r = 0; r < dofIds.size(); ++r) {
          const int pos = im.pos[dofIds[r]];
          if (pos < 0) continue;
          for (int comp = 0; comp < 2; ++comp) {
            const double dd =
                dp.cofT(comp, 0) * B(r, 1) + dp.cofT(comp, 1) * B(r, 2);
            (*jacobian)(i, comp * ni + pos) = dd;
            (*jacobian)(m + i, comp * ni + pos) = -dd;
          }
        }
      }
      return;
    }
    case ConstraintKind::Cone: {
      require_tensor(space);
      const double ep = c.margin;
      const int nx = space.kvx[0].numBasis(), ny = space.kvy[0].numBasis();
      auto dof = [&](int ix, int iy) { return space.dofOf[0].at(iy * nx + ix); };
      const int n1 = (nx - 1) * ny, n2 = nx * (ny - 1);
      values.resize(2 * (n1 + n2));
      if (jacobian) jacobian->setZero(values.size(), 2 * ni);
      int row = 0;
      // entry helper: coefficient of constraint wrt control point (d, comp)
      auto add = [&](int r, int d, int comp, double coef) {
        const int pos = im.pos[d];
        if (jacobian && pos >= 0) (*jacobian)(r, comp * ni + pos) += coef;
      };
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix + 1 < nx; ++ix) {
          const int a = dof(ix, iy), b = dof(ix + 1, iy);
          const Eigen::Vector2d D =
              map.coeffs.row(b).transpose() - map.coeffs.row(a).transpose();
          // Delta^1 inside the cone spanned by (1, -1+ep) and (1, 1+ep)
          values(row) = D(1) + (1.0 - ep) * D(0);
          add(row, b, 1, 1.0), add(row, a, 1, -1.0);
          add(row, b, 0, 1.0 - ep), add(row, a, 0, -(1.0 - ep));
          ++row;
          values(row) = (1.0 + ep) * D(0) - D(1);
          add(row, b, 0, 1.0 + ep), add(row, a, 0, -(1.0 + ep));
          add(row, b, 1, -1.0), add(row, a, 1, 1.0);
          ++row;
        }
      for (int iy = 0; iy + 1 < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
          const int a = dof(ix, iy), b = dof(ix, iy + 1);
          const Eigen::Vector2d D =
              map.coeffs.row(b).transpose() - map.coeffs.row(a).transpose();
          // Delta^2 inside the cone spanned by (1, 1+ep) and (-1, 1+ep)
          values(row) = D(1) - (1.0 + ep) * D(0);
          add(row, b, 1, 1.0), add(row, a, 1, -1.0);
          add(row, b, 0, -(1.0 + ep)), add(row, a, 0, 1.0 + ep);
          ++row;
          values(row) = (1.0 + ep) * D(0) + D(1);
          add(row, b, 0, 1.0 + ep), add(row, a, 0, -(1.0 + ep));
          add(row, b, 1, 1.0), add(row, a, 1, -1.0);
          ++row;
        }
      return;
    }
  }
  throw Error("unknown constraint kind");
}

// ---------------------------------------------------------------------------
// augmented-Lagrangian optimizer with L-BFGS inner iterations

namespace {

struct Nlp {
  int n = 0;
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> objective;
  // inequality c(v) >= 0; empty function means unconstrained
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)>
      ineq;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&, Eigen::MatrixXd*)>
      eq;
  // accepted iterates must keep all inequalities >= -feas_tol
  double feas_tol = 1e-12;
};

struct AlState {
  Eigen::VectorXd lam_ineq, lam_eq;
  double rho = 10.0;
};

double al_merit(const Nlp& nlp, const AlState& st, const Eigen::VectorXd& v,
                Eigen::VectorXd* grad) {
  Eigen::VectorXd gf;
  double phi = nlp.objective(v, grad ? &gf : nullptr);
  if (grad) *grad = gf;
  if (nlp.ineq) {
    Eigen::VectorXd cv;
    Eigen::MatrixXd J;
    nlp.ineq(v, cv, grad ? &J : nullptr);
    for (int i = 0; i < cv.size(); ++i) {
      const double lam = st.lam_ineq(i);
      if (cv(i) <= lam / st.rho) {
        phi += -lam * cv(i) + 0.5 * st.rho * cv(i) * cv(i);
        if (grad) *grad += (-lam + st.rho * cv(i)) * J.row(i).transpose();
      } else {
        phi += -0.5 * lam * lam / st.rho;
      }
    }
  }
  if (nlp.eq) {
    Eigen::VectorXd h;
    Eigen::MatrixXd J;
    nlp.eq(v, h, grad ? &J : nullptr);
    phi += st.lam_eq.dot(h) + 0.5 * st.rho * h.squaredNorm();
    if (grad)
      *grad += J.transpose() * (st.lam_eq + st.rho * h);
  }
  return phi;
}

bool is_feasible(const Nlp& nlp, const Eigen::VectorXd& v, double tol) {
  if (!nlp.ineq) return true;
  Eigen::VectorXd cv;
  nlp.ineq(v, cv, nullptr);
  return cv.size() == 0 || cv.minCoeff() >= -tol;
}

// KKT stationarity residual, scaled by 1 + |grad f|.
double kkt_residual(const Nlp& nlp, const AlState& st, const Eigen::VectorXd& v) {
  Eigen::VectorXd gf;
  nlp.objective(v, &gf);
  Eigen::VectorXd r = gf;
  if (nlp.ineq) {
    Eigen::VectorXd cv;
    Eigen::MatrixXd J;
    nlp.ineq(v, cv, &J);
    for (int i = 0; i < cv.size(); ++i)
      r -= st.lam_ineq(i) * J.row(i).transpose();
  }
  if (nlp.eq) {
    Eigen::VectorXd h;
    Eigen::MatrixXd J;
    nlp.eq(v, h, &J);
    r += J.transpose() * st.lam_eq;
  }
  return r.lpNorm<Eigen::Infinity>() / (1.0 + gf.lpNorm<Eigen::Infinity>());
}

Eigen::VectorXd solve_al(const Nlp& nlp, Eigen::VectorXd v,
                         const DomOptOptions& opts, DomOptReport* report) {
  AlState st;
  st.rho = opts.rho0;
  int n_ineq = 0, n_eq = 0;
  if (nlp.ineq) {
    Eigen::VectorXd cv;
    nlp.ineq(v, cv, nullptr);
    n_ineq = static_cast<int>(cv.size());
  }
  if (nlp.eq) {
    Eigen::VectorXd h;
    nlp.eq(v, h, nullptr);
    n_eq = static_cast<int>(h.size());
  }
  st.lam_ineq = Eigen::VectorXd::Zero(n_ineq);
  st.lam_eq = Eigen::VectorXd::Zero(n_eq);

  if (!is_feasible(nlp, v, nlp.feas_tol))
    throw Error("constrained optimizer: infeasible starting point");

  double min_feas = std::numeric_limits<double>::infinity();
  auto record_feas = [&](const Eigen::VectorXd& vv) {
    if (!nlp.ineq) return;
    Eigen::VectorXd cv;
    nlp.ineq(vv, cv, nullptr);
    if (cv.size() > 0) min_feas = std::min(min_feas, cv.minCoeff());
  };
  record_feas(v);

  double kkt = 0.0;
  int outer = 0;
  std::string note;
  for (; outer < opts.max_outer; ++outer) {
    // inner L-BFGS on the AL merit, feasibility enforced on accepted steps
    std::deque<Eigen::VectorXd> S, Y;
    const int mem = 8;
    Eigen::VectorXd g;
    double phi = al_merit(nlp, st, v, &g);
    for (int it = 0; it < opts.max_inner; ++it) {
      if (g.lpNorm<Eigen::Infinity>() <= 1e-10 * (1.0 + std::abs(phi))) break;
      // two-loop recursion
      Eigen::VectorXd q = g;
      std::vector<double> alpha(S.size());
      for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
        const double rho_i = 1.0 / Y[i].dot(S[i]);
        alpha[i] = rho_i * S[i].dot(q);
        q -= alpha[i] * Y[i];
      }
      if (!S.empty()) {
        const double gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
        q *= gamma;
      }
      for (std::size_t i = 0; i < S.size(); ++i) {
        const double rho_i = 1.0 / Y[i].dot(S[i]);
        const double beta = rho_i * Y[i].dot(q);
        q += (alpha[i] - beta) * S[i];
      }
      Eigen::VectorXd d = -q;
      if (d.dot(g) >= 0.0) d = -g;  // safeguard

      double step = 1.0;
      bool accepted = false;
      Eigen::VectorXd vn, gn;
      double phin = 0.0;
      for (int ls = 0; ls < 40; ++ls) {
        vn = v + step * d;
        if (is_feasible(nlp, vn, nlp.feas_tol)) {
          phin = al_merit(nlp, st, vn, &gn);
          if (phin <= phi + 1e-4 * step * d.dot(g)) {
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted) break;
      const Eigen::VectorXd s = vn - v, y = gn - g;
      if (y.dot(s) > 1e-14 * s.norm() * y.norm()) {
        S.push_back(s);
        Y.push_back(y);
        if (static_cast<int>(S.size()) > mem) {
          S.pop_front();
          Y.pop_front();
        }
      }
      v = vn;
      g = gn;
      phi = phin;
      record_feas(v);
    }

    // multiplier updates
    double infeas = 0.0;
    if (nlp.ineq) {
      Eigen::VectorXd cv;
      nlp.ineq(v, cv, nullptr);
      for (int i = 0; i < cv.size(); ++i) {
        st.lam_ineq(i) = std::max(0.0, st.lam_ineq(i) - st.rho * cv(i));
        infeas = std::max(infeas, std::max(0.0, -cv(i)));
      }
    }
    if (nlp.eq) {
      Eigen::VectorXd h;
      nlp.eq(v, h, nullptr);
      st.lam_eq += st.rho * h;
      infeas = std::max(infeas, h.lpNorm<Eigen::Infinity>());
    }
    kkt = kkt_residual(nlp, st, v);
    if (kkt <= opts.kkt_tol && infeas <= opts.kkt_tol) {
      ++outer;
      if (report) report->converged = true;
      break;
    }
    st.rho = std::min(st.rho * 4.0, 1e10);
  }
  if (report) {
    report->outer_iters = outer;
    report->kkt_residual = kkt;
    report->min_feasibility = std::isfinite(min_feas) ? min_feas : 0.0;
    if (!report->converged)
      report->note = "iteration cap reached; returning best feasible iterate";
  }
  return v;
}

void set_interior(GeometryMap& map, const InteriorMap& im,
                  const Eigen::VectorXd& v) {
  const int ni = im.ni();
  for (int k = 0; k < ni; ++k) {
    map.coeffs(im.dofs[k], 0) = v(k);
    map.coeffs(im.dofs[k], 1) = v(ni + k);
  }
}

Eigen::VectorXd get_interior(const GeometryMap& map, const InteriorMap& im) {
  const int ni = im.ni();
  Eigen::VectorXd v(2 * ni);
  for (int k = 0; k < ni; ++k) {
    v(k) = map.coeffs(im.dofs[k], 0);
    v(ni + k) = map.coeffs(im.dofs[k], 1);
  }
  return v;
}

}  // namespace

ControlMap optimize_domain(const GeometryMap& x_star, const QualitySpec& cost,
                           ConstraintSet& c, const SpacePtr& space_s,
                           const DomOptOptions& opts, DomOptReport* report) {
  GeometryMap s = identity_map(space_s);
  const InteriorMap im(*space_s);
  const int n2 = 2 * im.ni();
  const QuadratureCache cache_s = build_quadrature(space_s);
  const bool slackform = c.kind == ConstraintKind::CoarseSlack;
  const int ne = slackform ? static_cast<int>(c.slack.size()) : 0;

  Nlp nlp;
  nlp.n = n2 + ne;
  GeometryMap work = s;
  nlp.objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    set_interior(work, im, v.head(n2));
    Eigen::VectorXd g;
    const double val = domain_cost(cache_s, work, &x_star, cost, grad ? &g : nullptr);
    if (grad) {
      grad->setZero(nlp.n);
      grad->head(n2) = g;
    }
    return val;
  };
  if (slackform) {
    const Eigen::SparseMatrix<double> M = scalar_mass(c.space);
    nlp.eq = [&, M](const Eigen::VectorXd& v, Eigen::VectorXd& h,
                    Eigen::MatrixXd* J) {
      set_interior(work, im, v.head(n2));
      Eigen::VectorXd f;
      Eigen::MatrixXd Jf;
      coarse_f(c, work, f, J ? &Jf : nullptr);
      h = f - M * v.tail(ne);
      if (J) {
        J->setZero(h.size(), nlp.n);
        J->leftCols(n2) = Jf;
        J->rightCols(ne) = -Eigen::MatrixXd(M);
      }
    };
    nlp.ineq = [&](const Eigen::VectorXd& v, Eigen::VectorXd& cv,
                   Eigen::MatrixXd* J) {
      cv = v.tail(ne);
      if (J) {
        J->setZero(ne, nlp.n);
        J->rightCols(ne).setIdentity();
      }
    };
  } else {
    nlp.ineq = [&](const Eigen::VectorXd& v, Eigen::VectorXd& cv,
                   Eigen::MatrixXd* J) {
      set_interior(work, im, v);
      constraint_value_and_gradient(c, work, cv, J);
    };
  }

  Eigen::VectorXd v0(nlp.n);
  v0.head(n2) = get_interior(s, im);
  if (slackform) v0.tail(ne) = c.slack;

  if (report) {
    *report = DomOptReport{};
    report->cost_initial = domain_cost(cache_s, s, &x_star, cost, nullptr);
  }
  const Eigen::VectorXd v = solve_al(nlp, v0, opts, report);
  set_interior(s, im, v.head(n2));
  if (slackform) c.slack = v.tail(ne);
  if (report) report->cost_final = domain_cost(cache_s, s, &x_star, cost, nullptr);
  return ControlMap{s};
}

GeometryMap optimize_geometry_direct(const GeometryMap& x_star,
                                     const QualitySpec& cost, ConstraintSet& c,
                                     const DomOptOptions& opts,
                                     DomOptReport* report) {
  if (c.kind != ConstraintKind::Bezier && c.kind != ConstraintKind::Pointwise)
    throw Error(
        "direct geometry optimization supports bezier or pointwise "
        "constraints only");
  {
    Eigen::VectorXd cv;
    constraint_value_and_gradient(c, x_star, cv, nullptr);
    if (cv.minCoeff() <= 0.0) {
      if (c.kind == ConstraintKind::Bezier)
        throw Error(
            "base map violates the bezier constraint; use the pointwise "
            "constraint instead");
      throw Error("base map violates the pointwise constraint");
    }
  }
  GeometryMap x = x_star;
  const InteriorMap im(*x.space);
  const int n2 = 2 * im.ni();
  const QuadratureCache cache = build_quadrature(x.space);
  QualitySpec plain = cost;
  for (auto& t : plain) t.pulled_back = false;

  Nlp nlp;
  nlp.n = n2;
  GeometryMap work = x;
  nlp.objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    set_interior(work, im, v);
    return domain_cost(cache, work, nullptr, plain, grad);
  };
  nlp.ineq = [&](const Eigen::VectorXd& v, Eigen::VectorXd& cv,
                 Eigen::MatrixXd* J) {
    set_interior(work, im, v);
    constraint_value_and_gradient(c, work, cv, J);
  };

  if (report) {
    *report = DomOptReport{};
    report->cost_initial = domain_cost(cache, x, nullptr, plain, nullptr);
  }
  const Eigen::VectorXd v = solve_al(nlp, get_interior(x, im), opts, report);
  set_interior(x, im, v);
  if (report) report->cost_final = domain_cost(cache, x, nullptr, plain, nullptr);
  return x;
}

// ---------------------------------------------------------------------------
// diffusion-based reparameterizations

namespace {

// Assemble sum over quadrature points of (grad w_a)^T D(pt) (grad w_b) * w
// and solve both components with the given Dirichlet coefficients.
GeometryMap weighted_diffusion_solve(
    const QuadratureCache& cache,
    const std::function<Eigen::Matrix2d(std::size_t e, std::size_t k)>& D,
    const GeometryMap& dirichlet) {
  const ThbSpace& space = *cache.space;
  const int n = space.numDofs();
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& el = space.elements[e];
    const auto& eq = cache.elems[e];
    const int nb = static_cast<int>(el.dofIds.size());
    Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(nb, nb);
    for (std::size_t k = 0; k < eq.w.size(); ++k) {
      const Eigen::Matrix2d Dk = D(e, k);
      const Eigen::MatrixXd G = eq.B[k].middleCols(1, 2);  // nb x 2 gradients
      Ke += eq.w[k] * G * Dk * G.transpose();
    }
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b)
        trips.emplace_back(el.dofIds[a], el.dofIds[b], Ke(a, b));
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trips.begin(), trips.end());

  const std::vector<int> interior = space.interiorDofs();
  std::vector<int> pos(n, -1);
  for (std::size_t k = 0; k < interior.size(); ++k) pos[interior[k]] = static_cast<int>(k);
  const int ni = static_cast<int>(interior.size());
  std::vector<Eigen::Triplet<double>> ti;
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(ni, 2);
  for (int col = 0; col < K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
      const int pr = pos[it.row()], pc = pos[it.col()];
      if (pr < 0) continue;
      if (pc >= 0)
        ti.emplace_back(pr, pc, it.value());
      else
        rhs.row(pr) -= it.value() * dirichlet.coeffs.row(it.col());
    }
  Eigen::SparseMatrix<double> Kii(ni, ni);
  Kii.setFromTriplets(ti.begin(), ti.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Kii);
  if (ldlt.info() != Eigen::Success)
    throw Error("diffusion solve: factorization failed");
  const Eigen::MatrixX2d sol = ldlt.solve(rhs);
  GeometryMap out = dirichlet;
  for (int k = 0; k < ni; ++k) out.coeffs.row(interior[k]) = sol.row(k);
  return out;
}

void scan_folds(const QuadratureCache& cache, const GeometryMap& s,
                const std::string& what) {
  const auto [mn, neg] = bijectivity_scan(cache, s);
  if (mn <= 0.0) throw Error(what);
}

}  // namespace

ControlMap maxprinciple_reparam(const GeometryMap& x_star, double k,
                                const SpacePtr& space_s) {
  if (k < 0.0) throw Error("maxprinciple_reparam requires k >= 0");
  const QuadratureCache cache = build_quadrature(space_s);
  // diffusivity (det J x*)^k, evaluated at the s-space quadrature points
  std::vector<std::vector<double>> wgt(cache.elems.size());
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& eq = cache.elems[e];
    wgt[e].resize(eq.w.size());
    for (std::size_t kk = 0; kk < eq.w.size(); ++kk) {
      const double dj = x_star.jacobian(eq.xi[kk], eq.eta[kk]).determinant();
      if (dj <= 0.0)
        throw Error("maxprinciple_reparam: base map folds; diffusivity undefined");
      wgt[e][kk] = std::pow(dj, k);
    }
  }
  const GeometryMap id = identity_map(space_s);
  GeometryMap s = weighted_diffusion_solve(
      cache,
      [&](std::size_t e, std::size_t kk) {
        return (wgt[e][kk] * Eigen::Matrix2d::Identity()).eval();
      },
      id);
  scan_folds(cache, s,
             "maxprinciple reparameterization folds; retry with a smaller k");
  return ControlMap{s};
}

namespace {

enum class Edge { West, East, South, North };

bool on_edge(const ThbSpace& space, int d, Edge which) {
  const auto& id = space.dofs[d];
  const int nx = space.kvx[id.level].numBasis();
  const int ny = space.kvy[id.level].numBasis();
  const int ix = id.tensorIndex % nx, iy = id.tensorIndex / nx;
  switch (which) {
    case Edge::West: return ix == 0;
    case Edge::East: return ix == nx - 1;
    case Edge::South: return iy == 0;
    case Edge::North: return iy == ny - 1;
  }
  return false;
}

}  // namespace

ControlMap boundary_orth_pipeline(const GeometryMap& x_star, OrthSides sides,
                                  const SpacePtr& space) {
  const QuadratureCache cache = build_quadrature(space);
  const ThbSpace& sp = *space;
  const int n = sp.numDofs();

  // surface-Laplace stiffness: grad f . G^{-1} grad v * sqrt(det G)
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& el = sp.elements[e];
    const auto& eq = cache.elems[e];
    const int nb = static_cast<int>(el.dofIds.size());
    Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(nb, nb);
    for (std::size_t k = 0; k < eq.w.size(); ++k) {
      const Eigen::Matrix2d J = x_star.jacobian(eq.xi[k], eq.eta[k]);
      const Eigen::Matrix2d G = J.transpose() * J;
      const double dg = G.determinant();
      if (dg <= 0.0)
        throw Error("boundary orthogonalization: base map folds");
      const Eigen::MatrixXd Gr = eq.B[k].middleCols(1, 2);
      Ke += eq.w[k] * std::sqrt(dg) * Gr * G.inverse() * Gr.transpose();
    }
    for (int a = 0; a < nb; ++a)
      for (int b = 0; b < nb; ++b)
        trips.emplace_back(el.dofIds[a], el.dofIds[b], Ke(a, b));
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trips.begin(), trips.end());

  // Dirichlet 0 and 1 on the two transverse sides, natural elsewhere
  const Edge lo = sides == OrthSides::NorthSouth ? Edge::West : Edge::South;
  const Edge hi = sides == OrthSides::NorthSouth ? Edge::East : Edge::North;
  std::vector<int> unknown;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  std::vector<int> pos(n, -1);
  for (int d = 0; d < n; ++d) {
    if (on_edge(sp, d, hi))
      f(d) = 1.0;
    else if (!on_edge(sp, d, lo)) {
      pos[d] = static_cast<int>(unknown.size());
      unknown.push_back(d);
    }
  }
  const int nu = static_cast<int>(unknown.size());
  std::vector<Eigen::Triplet<double>> ti;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nu);
  for (int col = 0; col < K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
      const int pr = pos[it.row()], pc = pos[it.col()];
      if (pr < 0) continue;
      if (pc >= 0)
        ti.emplace_back(pr, pc, it.value());
      else
        rhs(pr) -= it.value() * f(it.col());
    }
  Eigen::SparseMatrix<double> Kuu(nu, nu);
  Kuu.setFromTriplets(ti.begin(), ti.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Kuu);
  if (ldlt.info() != Eigen::Success)
    throw Error("boundary orthogonalization: singular surface-Laplace solve");
  const Eigen::VectorXd sol = ldlt.solve(rhs);
  for (int k = 0; k < nu; ++k) f(unknown[k]) = sol(k);

  auto feval = [&](double xi, double eta) {
    const int e = sp.findElement(xi, eta);
    const Eigen::MatrixXd B = sp.evalElementBasis(e, xi, eta, 0);
    double v = 0.0;
    for (std::size_t r = 0; r < sp.elements[e].dofIds.size(); ++r)
      v += B(r, 0) * f(sp.elements[e].dofIds[r]);
    return v;
  };

  // monotonicity of the trace along both blended sides
  const int ns = 200;
  for (int side = 0; side < 2; ++side) {
    double prev = -1e300;
    for (int i = 0; i <= ns; ++i) {
      const double t = static_cast<double>(i) / ns;
      const double v = sides == OrthSides::NorthSouth
                           ? feval(t, static_cast<double>(side))
                           : feval(static_cast<double>(side), t);
      if (v <= prev)
        throw Error(
            "boundary orthogonalization: harmonic coordinate is not monotone "
            "along the blended sides; the control map would fold");
      prev = v;
    }
  }

  auto H0 = [](double t) { return (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t); };
  auto H1 = [](double t) { return (3.0 - 2.0 * t) * t * t; };
  auto field = [&](double xi, double eta) -> Eigen::Vector2d {
    if (sides == OrthSides::NorthSouth)
      return {feval(xi, 0.0) * H0(eta) + feval(xi, 1.0) * H1(eta), eta};
    return {xi, feval(0.0, eta) * H0(xi) + feval(1.0, eta) * H1(xi)};
  };
  GeometryMap s = l2_project(cache, field, Subspace::All);
  apply_dirichlet(cache, s, field);
  scan_folds(cache, s, "boundary orthogonalization produced a folded control map");
  return ControlMap{s};
}

ControlMap sprime_postprocess(const ControlMap& s, const GeometryMap& x_h,
                              double k, double beta) {
  if (beta <= 0.0) throw Error("sprime_postprocess requires beta > 0");
  const SpacePtr space = s.map.space;
  const QuadratureCache cache = build_quadrature(space);
  // anisotropic diffusion in the s-coordinates, pulled back to xi:
  // (T^{-T} grad v)^T D (T^{-T} grad u) detT with D = (det d_s x)^k diag(1,b)
  std::vector<std::vector<Eigen::Matrix2d>> Dk(cache.elems.size());
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& eq = cache.elems[e];
    Dk[e].resize(eq.w.size());
    for (std::size_t q = 0; q < eq.w.size(); ++q) {
      const Eigen::Matrix2d T = s.map.jacobian(eq.xi[q], eq.eta[q]);
      const double detT = T.determinant();
      if (detT <= 0.0)
        throw Error("sprime_postprocess: input control map folds");
      const double detJx = x_h.jacobian(eq.xi[q], eq.eta[q]).determinant();
      const double dsx = detJx / detT;
      if (dsx <= 0.0)
        throw Error("sprime_postprocess: geometry map folds in s-coordinates");
      Eigen::Matrix2d D = Eigen::Matrix2d::Zero();
      D(0, 0) = 1.0;
      D(1, 1) = beta;
      D *= std::pow(dsx, k);
      const Eigen::Matrix2d Ti = T.inverse();
      Dk[e][q] = detT * Ti * D * Ti.transpose();
    }
  }
  GeometryMap sp = weighted_diffusion_solve(
      cache, [&](std::size_t e, std::size_t q) { return Dk[e][q]; }, s.map);
  scan_folds(cache, sp, "sprime_postprocess produced a folded control map");
  return ControlMap{sp};
}

}  // namespace egg
