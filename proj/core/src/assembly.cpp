#include "egg/assembly.hpp"

#include <cmath>
#include <sstream>

namespace egg {

namespace {

MetricPoint metric_at(const Eigen::MatrixXd& B, const std::vector<int>& ids,
                      const Eigen::MatrixX2d& X) {
  MetricPoint m;
  m.J.setZero();
  m.H1.setZero();
  m.H2.setZero();
  for (int r = 0; r < B.rows(); ++r) {
    const double cx = X(ids[r], 0), cy = X(ids[r], 1);
    m.J(0, 0) += B(r, 1) * cx;
    m.J(0, 1) += B(r, 2) * cx;
    m.J(1, 0) += B(r, 1) * cy;
    m.J(1, 1) += B(r, 2) * cy;
    m.H1(0, 0) += B(r, 3) * cx;
    m.H1(0, 1) += B(r, 4) * cx;
    m.H1(1, 1) += B(r, 5) * cx;
    m.H2(0, 0) += B(r, 3) * cy;
    m.H2(0, 1) += B(r, 4) * cy;
    m.H2(1, 1) += B(r, 5) * cy;
  }
  m.H1(1, 0) = m.H1(0, 1);
  m.H2(1, 0) = m.H2(0, 1);
  m.detJ = m.J.determinant();
  m.g11 = m.J.col(0).squaredNorm();
  m.g22 = m.J.col(1).squaredNorm();
  m.g12 = m.J.col(0).dot(m.J.col(1));
  return m;
}

inline double ddot(const Eigen::Matrix2d& a, const Eigen::Matrix2d& b) {
  return a.cwiseProduct(b).sum();
}

void require_c1_for_tau(const ThbSpace& sp, Tau tau) {
  if ((tau == Tau::Div || tau == Tau::Ls) && sp.alpha < 1)
    throw Error("tau variant needs C1 test functions (regularity >= 1)");
}

// Scalar test factor per local function: Id -> value, div -> gamma * Laplacian,
// ls -> A_mu : Hessian.
Eigen::VectorXd tau_factors(const Eigen::MatrixXd& B, Tau tau,
                            const Eigen::Matrix2d& Amu, double gamma) {
  const int nd = static_cast<int>(B.rows());
  Eigen::VectorXd t(nd);
  switch (tau) {
    case Tau::Id:
      for (int r = 0; r < nd; ++r) t[r] = B(r, 0);
      break;
    case Tau::Div:
      for (int r = 0; r < nd; ++r) t[r] = gamma * (B(r, 3) + B(r, 5));
      break;
    case Tau::Ls:
      for (int r = 0; r < nd; ++r)
        t[r] = Amu(0, 0) * B(r, 3) + 2.0 * Amu(0, 1) * B(r, 4) +
               Amu(1, 1) * B(r, 5);
      break;
  }
  return t;
}

struct PointControl {
  Eigen::Matrix2d P1 = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d P2 = Eigen::Matrix2d::Zero();
  double detT = 1.0;
};

PointControl point_control(const AssemblyOpts& opts, double xi, double eta) {
  PointControl pc;
  if (opts.s) {
    const ControlPoint cp = control_matrices(opts.s->map, xi, eta);
    pc.P1 = cp.P1;
    pc.P2 = cp.P2;
    pc.detT = cp.detT;
  }
  return pc;
}

}  // namespace

MetricData compute_metric(const QuadratureCache& cache, const GeometryMap& x,
                          double eps) {
  MetricData md;
  md.eps = eps;
  md.pts.reserve(cache.numPoints());
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ids = cache.space->elements[e].dofIds;
    for (const auto& B : cache.elems[e].B) md.pts.push_back(metric_at(B, ids, x.coeffs));
  }
  return md;
}

Eigen::Matrix2d a_matrix(const MetricPoint& md, double eps) {
  const double dd = md.g11 + md.g22 + eps;
  Eigen::Matrix2d A;
  A << md.g22, -md.g12, -md.g12, md.g11;
  return A / dd;
}

InteriorMap::InteriorMap(const ThbSpace& space) {
  dofs = space.interiorDofs();
  pos.assign(space.numDofs(), -1);
  for (std::size_t k = 0; k < dofs.size(); ++k) pos[dofs[k]] = static_cast<int>(k);
}

Eigen::VectorXd residual_F(const QuadratureCache& cache, const GeometryMap& x,
                           const AssemblyOpts& opts) {
  const ThbSpace& sp = *cache.space;
  require_c1_for_tau(sp, opts.tau);
  const InteriorMap im(sp);
  const int ni = im.ni();
  Eigen::VectorXd res = Eigen::VectorXd::Zero(2 * ni);
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const MetricPoint m = metric_at(B, ei.dofIds, x.coeffs);
      const Eigen::Matrix2d A = a_matrix(m, opts.eps);
      const Eigen::Matrix2d Amu = A + opts.mu * Eigen::Matrix2d::Identity();
      const double gamma = Amu.trace() / ddot(Amu, Amu);
      const PointControl pc = point_control(opts, eq.xi[k], eq.eta[k]);
      Eigen::Matrix2d Ht[2];
      for (int i = 0; i < 2; ++i) {
        const Eigen::Matrix2d& H = i == 0 ? m.H1 : m.H2;
        Ht[i] = (H + pc.P1 * m.J(i, 0) + pc.P2 * m.J(i, 1)) * pc.detT;
      }
      const double AHt[2] = {ddot(A, Ht[0]), ddot(A, Ht[1])};
      const Eigen::VectorXd t = tau_factors(B, opts.tau, Amu, gamma);
      const double w = eq.w[k];
      for (int r = 0; r < B.rows(); ++r) {
        const int pb = im.pos[ei.dofIds[r]];
        if (pb < 0) continue;
        res[pb] += w * t[r] * AHt[0];
        res[ni + pb] += w * t[r] * AHt[1];
      }
    }
  }
  return res;
}

Eigen::SparseMatrix<double> jacobian_F(const QuadratureCache& cache,
                                       const GeometryMap& x,
                                       const AssemblyOpts& opts) {
  const ThbSpace& sp = *cache.space;
  require_c1_for_tau(sp, opts.tau);
  const InteriorMap im(sp);
  const int ni = im.ni();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    const int nd = static_cast<int>(ei.dofIds.size());
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const MetricPoint m = metric_at(B, ei.dofIds, x.coeffs);
      const double dd = m.g11 + m.g22 + opts.eps;
      const Eigen::Matrix2d A = a_matrix(m, opts.eps);
      const Eigen::Matrix2d Amu = A + opts.mu * Eigen::Matrix2d::Identity();
      const double nrm = ddot(Amu, Amu);
      const double gamma = Amu.trace() / nrm;
      const PointControl pc = point_control(opts, eq.xi[k], eq.eta[k]);
      Eigen::Matrix2d Ht[2];
      for (int i = 0; i < 2; ++i) {
        const Eigen::Matrix2d& H = i == 0 ? m.H1 : m.H2;
        Ht[i] = (H + pc.P1 * m.J(i, 0) + pc.P2 * m.J(i, 1)) * pc.detT;
      }
      const double AHt[2] = {ddot(A, Ht[0]), ddot(A, Ht[1])};
      const Eigen::VectorXd t = tau_factors(B, opts.tau, Amu, gamma);
      const double w = eq.w[k];

      // trial-side precomputation, indexed (a, j)
      std::vector<Eigen::Matrix2d> dA(2 * nd);
      std::vector<double> dAHt0(2 * nd), dAHt1(2 * nd), dgam(2 * nd);
      std::vector<double> AdHt(nd);  // A : dHt, same for both components
      for (int a = 0; a < nd; ++a) {
        const double ba1 = B(a, 1), ba2 = B(a, 2);
        Eigen::Matrix2d Hw;
        Hw << B(a, 3), B(a, 4), B(a, 4), B(a, 5);
        AdHt[a] = ddot(A, (Hw + pc.P1 * ba1 + pc.P2 * ba2) * pc.detT);
        for (int j = 0; j < 2; ++j) {
          const double dg11 = 2.0 * m.J(j, 0) * ba1;
          const double dg22 = 2.0 * m.J(j, 1) * ba2;
          const double dg12 = m.J(j, 0) * ba2 + m.J(j, 1) * ba1;
          Eigen::Matrix2d dM;
          dM << dg22, -dg12, -dg12, dg11;
          const Eigen::Matrix2d dAa = (dM - A * (dg11 + dg22)) / dd;
          const int idx = j * nd + a;
          dA[idx] = dAa;
          dAHt0[idx] = ddot(dAa, Ht[0]);
          dAHt1[idx] = ddot(dAa, Ht[1]);
          if (opts.tau == Tau::Div)
            dgam[idx] = (dAa.trace() * nrm - Amu.trace() * 2.0 * ddot(Amu, dAa)) /
                        (nrm * nrm);
        }
      }

      for (int b = 0; b < nd; ++b) {
        const int pb = im.pos[ei.dofIds[b]];
        if (pb < 0) continue;
        const double lapb = B(b, 3) + B(b, 5);
        Eigen::Matrix2d Hwb;
        Hwb << B(b, 3), B(b, 4), B(b, 4), B(b, 5);
        for (int a = 0; a < nd; ++a) {
          const int pa = im.pos[ei.dofIds[a]];
          if (pa < 0) continue;
          for (int j = 0; j < 2; ++j) {
            const int idx = j * nd + a;
            double dtb = 0.0;
            if (opts.tau == Tau::Div)
              dtb = dgam[idx] * lapb;
            else if (opts.tau == Tau::Ls)
              dtb = ddot(dA[idx], Hwb);
            for (int i = 0; i < 2; ++i) {
              double val = t[b] * (i == 0 ? dAHt0[idx] : dAHt1[idx]);
              if (i == j) val += t[b] * AdHt[a];
              if (dtb != 0.0) val += dtb * AHt[i];
              if (val != 0.0)
                trip.emplace_back(i * ni + pb, j * ni + pa, w * val);
            }
          }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> Jm(2 * ni, 2 * ni);
  Jm.setFromTriplets(trip.begin(), trip.end());
  return Jm;
}

Eigen::VectorXd gateaux_exact(const QuadratureCache& cache, const GeometryMap& x,
                              const AssemblyOpts& opts, const Eigen::VectorXd& v) {
  return jacobian_F(cache, x, opts) * v;
}

Eigen::VectorXd gateaux_fd(const QuadratureCache& cache, const GeometryMap& x,
                           const AssemblyOpts& opts, const Eigen::VectorXd& v,
                           double eps_fd) {
  if (eps_fd <= 0.0) throw Error("gateaux_fd: eps_fd must be positive");
  const InteriorMap im(*cache.space);
  const int ni = im.ni();
  GeometryMap xp = x;
  for (int k = 0; k < ni; ++k) {
    xp.coeffs(im.dofs[k], 0) += eps_fd * v[k];
    xp.coeffs(im.dofs[k], 1) += eps_fd * v[ni + k];
  }
  return (residual_F(cache, xp, opts) - residual_F(cache, x, opts)) / eps_fd;
}

PicardSystem picard_system(const QuadratureCache& cache, const GeometryMap& xk,
                           const AssemblyOpts& opts) {
  const ThbSpace& sp = *cache.space;
  require_c1_for_tau(sp, opts.tau);
  const InteriorMap im(sp);
  const int ni = im.ni();
  std::vector<Eigen::Triplet<double>> trip;
  PicardSystem sys;
  sys.rhs = Eigen::MatrixX2d::Zero(ni, 2);
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    const int nd = static_cast<int>(ei.dofIds.size());
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const MetricPoint m = metric_at(B, ei.dofIds, xk.coeffs);
      const Eigen::Matrix2d A = a_matrix(m, opts.eps);
      const Eigen::Matrix2d Amu = A + opts.mu * Eigen::Matrix2d::Identity();
      const double gamma = Amu.trace() / ddot(Amu, Amu);
      const PointControl pc = point_control(opts, eq.xi[k], eq.eta[k]);
      const Eigen::VectorXd t = tau_factors(B, opts.tau, Amu, gamma);
      const double w = eq.w[k];
      // A_mu : Htilde(w_a, s) per local trial function
      Eigen::VectorXd ka(nd);
      for (int a = 0; a < nd; ++a) {
        Eigen::Matrix2d Hw;
        Hw << B(a, 3), B(a, 4), B(a, 4), B(a, 5);
        ka[a] = ddot(Amu, (Hw + pc.P1 * B(a, 1) + pc.P2 * B(a, 2)) * pc.detT);
      }
      const double lap1 = m.H1.trace(), lap2 = m.H2.trace();
      for (int b = 0; b < nd; ++b) {
        const int pb = im.pos[ei.dofIds[b]];
        if (pb < 0) continue;
        sys.rhs(pb, 0) += w * t[b] * opts.mu * lap1;
        sys.rhs(pb, 1) += w * t[b] * opts.mu * lap2;
        for (int a = 0; a < nd; ++a) {
          const int pa = im.pos[ei.dofIds[a]];
          if (pa >= 0) {
            trip.emplace_back(pb, pa, w * t[b] * ka[a]);
          } else {
            const int d = ei.dofIds[a];
            sys.rhs(pb, 0) -= w * t[b] * ka[a] * xk.coeffs(d, 0);
            sys.rhs(pb, 1) -= w * t[b] * ka[a] * xk.coeffs(d, 1);
          }
        }
      }
    }
  }
  sys.M.resize(ni, ni);
  sys.M.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

std::pair<double, Eigen::VectorXd> winslow_value_and_gradient(
    const QuadratureCache& cache, const GeometryMap& x) {
  const ThbSpace& sp = *cache.space;
  const InteriorMap im(sp);
  const int ni = im.ni();
  double value = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(2 * ni);
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const MetricPoint m = metric_at(B, ei.dofIds, x.coeffs);
      if (m.detJ <= 0.0) {
        std::ostringstream os;
        os << "winslow: detJ = " << m.detJ << " <= 0 at (" << eq.xi[k] << ", "
           << eq.eta[k] << ")";
        throw Error(os.str());
      }
      const double N = m.g11 + m.g22, d = m.detJ, w = eq.w[k];
      value += w * N / d;
      // cofactor matrix: ddetJ / dJ(j, l)
      Eigen::Matrix2d cof;
      cof << m.J(1, 1), -m.J(1, 0), -m.J(0, 1), m.J(0, 0);
      for (int r = 0; r < B.rows(); ++r) {
        const int pr = im.pos[ei.dofIds[r]];
        if (pr < 0) continue;
        for (int j = 0; j < 2; ++j) {
          const double dN = 2.0 * (m.J(j, 0) * B(r, 1) + m.J(j, 1) * B(r, 2));
          const double dd = cof(j, 0) * B(r, 1) + cof(j, 1) * B(r, 2);
          grad[j * ni + pr] += w * (dN / d - N * dd / (d * d));
        }
      }
    }
  }
  return {value, grad};
}

Eigen::SparseMatrix<double> winslow_hessian(const QuadratureCache& cache,
                                            const GeometryMap& x) {
  const ThbSpace& sp = *cache.space;
  const InteriorMap im(sp);
  const int ni = im.ni();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ei = sp.elements[e];
    const auto& eq = cache.elems[e];
    const int nd = static_cast<int>(ei.dofIds.size());
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const MetricPoint m = metric_at(B, ei.dofIds, x.coeffs);
      if (m.detJ <= 0.0) throw Error("winslow_hessian: nonpositive detJ");
      const double N = m.g11 + m.g22, d = m.detJ, w = eq.w[k];
      Eigen::Matrix2d cof;
      cof << m.J(1, 1), -m.J(1, 0), -m.J(0, 1), m.J(0, 0);
      // first derivatives per (local, component)
      std::vector<double> dN(2 * nd), ddet(2 * nd);
      for (int a = 0; a < nd; ++a)
        for (int j = 0; j < 2; ++j) {
          dN[j * nd + a] = 2.0 * (m.J(j, 0) * B(a, 1) + m.J(j, 1) * B(a, 2));
          ddet[j * nd + a] = cof(j, 0) * B(a, 1) + cof(j, 1) * B(a, 2);
        }
      for (int b = 0; b < nd; ++b) {
        const int pb = im.pos[ei.dofIds[b]];
        if (pb < 0) continue;
        for (int a = 0; a < nd; ++a) {
          const int pa = im.pos[ei.dofIds[a]];
          if (pa < 0) continue;
          const double gdot = B(a, 1) * B(b, 1) + B(a, 2) * B(b, 2);
          for (int l = 0; l < 2; ++l)
            for (int j = 0; j < 2; ++j) {
              const double Na = dN[j * nd + a], Nb = dN[l * nd + b];
              const double da = ddet[j * nd + a], db = ddet[l * nd + b];
              const double Nab = (j == l) ? 2.0 * gdot : 0.0;
              double dab = 0.0;  // det is linear in each row of J
              if (j == 0 && l == 1)
                dab = B(a, 1) * B(b, 2) - B(a, 2) * B(b, 1);
              else if (j == 1 && l == 0)
                dab = B(b, 1) * B(a, 2) - B(b, 2) * B(a, 1);
              const double val = Nab / d - (Na * db + Nb * da) / (d * d) -
                                 N * dab / (d * d) +
                                 2.0 * N * da * db / (d * d * d);
              trip.emplace_back(l * ni + pb, j * ni + pa, w * val);
            }
        }
      }
    }
  }
  Eigen::SparseMatrix<double> H(2 * ni, 2 * ni);
  H.setFromTriplets(trip.begin(), trip.end());
  return H;
}

Eigen::SparseMatrix<double> mass_matrix(const QuadratureCache& cache) {
  const ThbSpace& sp = *cache.space;
  const int N = sp.numDofs();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ids = sp.elements[e].dofIds;
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::MatrixXd& B = eq.B[k];
      const double w = eq.w[k];
      for (int r = 0; r < B.rows(); ++r)
        for (int s = 0; s < B.rows(); ++s)
          trip.emplace_back(ids[r], ids[s], w * B(r, 0) * B(s, 0));
    }
  }
  Eigen::SparseMatrix<double> M(N, N);
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

namespace {

// Solve the projection for possibly several right-hand sides restricted to a
// dof subset; entries outside the subset are zero.
Eigen::MatrixXd solve_subset(const Eigen::SparseMatrix<double>& Mfull,
                             const Eigen::MatrixXd& rhsFull,
                             const std::vector<int>& subset, int N) {
  std::vector<int> pos(N, -1);
  for (std::size_t k = 0; k < subset.size(); ++k) pos[subset[k]] = static_cast<int>(k);
  const int n = static_cast<int>(subset.size());
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < Mfull.outerSize(); ++c)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Mfull, c); it; ++it) {
      const int pr = pos[it.row()], pcn = pos[it.col()];
      if (pr >= 0 && pcn >= 0) trip.emplace_back(pr, pcn, it.value());
    }
  Eigen::SparseMatrix<double> M(n, n);
  M.setFromTriplets(trip.begin(), trip.end());
  Eigen::MatrixXd rhs(n, rhsFull.cols());
  for (int k = 0; k < n; ++k) rhs.row(k) = rhsFull.row(subset[k]);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(M);
  if (lu.info() != Eigen::Success) throw Error("l2_project: singular mass matrix");
  const Eigen::MatrixXd sol = lu.solve(rhs);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(N, rhsFull.cols());
  for (int k = 0; k < n; ++k) out.row(subset[k]) = sol.row(k);
  return out;
}

// Assemble the boundary (trace) mass matrix and load vector by 1D Gauss
// quadrature over all active element edges on the domain boundary.
void trace_system(const QuadratureCache& cache,
                  const std::function<Eigen::Vector2d(double, double)>& f,
                  Eigen::SparseMatrix<double>& M, Eigen::MatrixXd& rhs) {
  const ThbSpace& sp = *cache.space;
  const int N = sp.numDofs();
  std::vector<double> gp, gw;
  gauss_legendre(cache.q, gp, gw);
  std::vector<Eigen::Triplet<double>> trip;
  rhs = Eigen::MatrixXd::Zero(N, 2);
  auto edge = [&](int e, bool horizontal, double fixed, double a, double b) {
    const auto& ids = sp.elements[e].dofIds;
    const double len = b - a;
    for (std::size_t k = 0; k < gp.size(); ++k) {
      const double s = a + len * gp[k];
      const double xi = horizontal ? s : fixed;
      const double eta = horizontal ? fixed : s;
      const double w = len * gw[k];
      const Eigen::MatrixXd B = sp.evalElementBasis(e, xi, eta, 0);
      const Eigen::Vector2d fv = f(xi, eta);
      for (int r = 0; r < B.rows(); ++r) {
        if (B(r, 0) == 0.0) continue;
        rhs.row(ids[r]) += w * B(r, 0) * fv.transpose();
        for (int t = 0; t < B.rows(); ++t)
          if (B(t, 0) != 0.0)
            trip.emplace_back(ids[r], ids[t], w * B(r, 0) * B(t, 0));
      }
    }
  };
  for (std::size_t e = 0; e < sp.elements.size(); ++e) {
    const auto& ei = sp.elements[e];
    const int ie = static_cast<int>(e);
    if (ei.y0 == 0.0) edge(ie, true, 0.0, ei.x0, ei.x1);
    if (ei.y1 == 1.0) edge(ie, true, 1.0, ei.x0, ei.x1);
    if (ei.x0 == 0.0) edge(ie, false, 0.0, ei.y0, ei.y1);
    if (ei.x1 == 1.0) edge(ie, false, 1.0, ei.y0, ei.y1);
  }
  M.resize(N, N);
  M.setFromTriplets(trip.begin(), trip.end());
}

Eigen::MatrixXd project_impl(const QuadratureCache& cache,
                             const std::function<Eigen::Vector2d(double, double)>& f,
                             Subspace sub) {
  const ThbSpace& sp = *cache.space;
  const int N = sp.numDofs();
  if (sub == Subspace::Trace) {
    Eigen::SparseMatrix<double> M;
    Eigen::MatrixXd rhs;
    trace_system(cache, f, M, rhs);
    std::vector<int> bdofs;
    for (int d = 0; d < N; ++d)
      if (sp.boundaryMask[d]) bdofs.push_back(d);
    return solve_subset(M, rhs, bdofs, N);
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(N, 2);
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ids = sp.elements[e].dofIds;
    const auto& eq = cache.elems[e];
    for (std::size_t k = 0; k < eq.B.size(); ++k) {
      const Eigen::Vector2d fv = f(eq.xi[k], eq.eta[k]);
      const double w = eq.w[k];
      const Eigen::MatrixXd& B = eq.B[k];
      for (int r = 0; r < B.rows(); ++r)
        rhs.row(ids[r]) += w * B(r, 0) * fv.transpose();
    }
  }
  const Eigen::SparseMatrix<double> M = mass_matrix(cache);
  std::vector<int> subset;
  if (sub == Subspace::All) {
    subset.resize(N);
    for (int d = 0; d < N; ++d) subset[d] = d;
  } else {
    subset = sp.interiorDofs();
  }
  return solve_subset(M, rhs, subset, N);
}

}  // namespace

Eigen::VectorXd l2_project_scalar(const QuadratureCache& cache,
                                  const std::function<double(double, double)>& f,
                                  Subspace sub) {
  auto f2 = [&](double xi, double eta) {
    return Eigen::Vector2d(f(xi, eta), 0.0);
  };
  return project_impl(cache, f2, sub).col(0);
}

GeometryMap l2_project(const QuadratureCache& cache,
                       const std::function<Eigen::Vector2d(double, double)>& f,
                       Subspace sub) {
  GeometryMap g;
  g.space = cache.space;
  g.coeffs = project_impl(cache, f, sub);
  return g;
}

void apply_dirichlet(const QuadratureCache& cache, GeometryMap& x,
                     const std::function<Eigen::Vector2d(double, double)>& f) {
  const GeometryMap tr = l2_project(cache, f, Subspace::Trace);
  const ThbSpace& sp = *cache.space;
  for (int d = 0; d < sp.numDofs(); ++d)
    if (sp.boundaryMask[d]) x.coeffs.row(d) = tr.coeffs.row(d);
}

}  // namespace egg
