#include "egg/solvers.hpp"

#include <chrono>
#include <cmath>

namespace egg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

AssemblyOpts make_opts(const SolverConfig& cfg, const ControlMap* s) {
  AssemblyOpts o;
  o.tau = cfg.tau;
  o.mu = cfg.mu;
  o.eps = cfg.eps;
  o.s = s;
  return o;
}

Eigen::VectorXd interior_coeffs(const GeometryMap& x, const InteriorMap& im) {
  const int ni = im.ni();
  Eigen::VectorXd v(2 * ni);
  for (int k = 0; k < ni; ++k) {
    v[k] = x.coeffs(im.dofs[k], 0);
    v[ni + k] = x.coeffs(im.dofs[k], 1);
  }
  return v;
}

void add_interior(GeometryMap& x, const InteriorMap& im, const Eigen::VectorXd& v,
                  double scale = 1.0) {
  const int ni = im.ni();
  for (int k = 0; k < ni; ++k) {
    x.coeffs(im.dofs[k], 0) += scale * v[k];
    x.coeffs(im.dofs[k], 1) += scale * v[ni + k];
  }
}

void finalize(SolveReport& rep, const QuadratureCache& cache, const GeometryMap& x,
              Clock::time_point t0) {
  rep.dofs = cache.space->numDofs();
  rep.min_detJ = min_det_j(cache, x);
  rep.wall_time = seconds_since(t0);
}

double auto_eps_fd(const SolverConfig& cfg, const GeometryMap& x) {
  if (cfg.eps_fd > 0.0) return cfg.eps_fd;
  return 1e-7 * (1.0 + x.coeffs.cwiseAbs().maxCoeff());
}

// Shared Newton outer loop; linear_solve returns the increment for J dx = -r
// and the linear iteration count (0 for a direct solve).
template <class LinearSolve>
std::pair<GeometryMap, SolveReport> newton_loop(const QuadratureCache& cache,
                                                const GeometryMap& x0,
                                                const SolverConfig& cfg,
                                                const ControlMap* s,
                                                LinearSolve linear_solve) {
  const auto t0 = Clock::now();
  const AssemblyOpts opts = make_opts(cfg, s);
  const InteriorMap im(*cache.space);
  GeometryMap x = x0;
  SolveReport rep;
  Eigen::VectorXd r = residual_F(cache, x, opts);
  double rn = r.norm();
  const double tol = cfg.tol_residual > 0.0 ? cfg.tol_residual : 1e-8 * (rn + 1.0);
  rep.iters.push_back({rn, 0.0, 0.0, 0});
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (rn <= tol) {
      rep.converged = true;
      break;
    }
    int lin_iters = 0;
    Eigen::VectorXd delta;
    if (!linear_solve(x, r, delta, lin_iters)) {
      rep.note = "linear solve failed";
      break;
    }
    double kappa = 1.0;
    GeometryMap xt = x;
    Eigen::VectorXd rt;
    double rtn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < (cfg.linesearch ? 24 : 1); ++ls) {
      xt = x;
      add_interior(xt, im, delta, kappa);
      rt = residual_F(cache, xt, opts);
      rtn = rt.norm();
      if (!cfg.linesearch || rtn < rn) {
        accepted = true;
        break;
      }
      kappa *= 0.5;
    }
    if (!accepted) {
      rep.note = "line search stagnated";
      break;
    }
    const double inc = kappa * delta.cwiseAbs().maxCoeff();
    x = xt;
    r = rt;
    rn = rtn;
    rep.iters.push_back({rn, inc, kappa, lin_iters});
    if (rn <= tol) {
      rep.converged = true;
      break;
    }
    if (inc <= cfg.tol_increment) {
      rep.converged = rn <= tol;
      if (!rep.converged) rep.note = "increment stalled above residual tolerance";
      break;
    }
  }
  if (!rep.converged && rn <= tol) rep.converged = true;
  finalize(rep, cache, x, t0);
  return {x, rep};
}

}  // namespace

double min_det_j(const QuadratureCache& cache, const GeometryMap& x) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < cache.elems.size(); ++e) {
    const auto& ids = cache.space->elements[e].dofIds;
    for (const auto& B : cache.elems[e].B) {
      Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
      for (int r = 0; r < B.rows(); ++r) {
        J(0, 0) += B(r, 1) * x.coeffs(ids[r], 0);
        J(0, 1) += B(r, 2) * x.coeffs(ids[r], 0);
        J(1, 0) += B(r, 1) * x.coeffs(ids[r], 1);
        J(1, 1) += B(r, 2) * x.coeffs(ids[r], 1);
      }
      mn = std::min(mn, J.determinant());
    }
  }
  return mn;
}

int gmres(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& matvec,
          const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol_rel,
          int max_iters) {
  const int n = static_cast<int>(b.size());
  const double bn = b.norm();
  if (bn == 0.0) {
    x.setZero(n);
    return 0;
  }
  max_iters = std::min(max_iters, n);
  Eigen::MatrixXd V(n, max_iters + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(max_iters + 1, max_iters);
  Eigen::VectorXd cs(max_iters), sn(max_iters), g = Eigen::VectorXd::Zero(max_iters + 1);
  V.col(0) = b / bn;
  g[0] = bn;
  int k = 0;
  for (; k < max_iters; ++k) {
    Eigen::VectorXd w = matvec(V.col(k));
    for (int i = 0; i <= k; ++i) {
      H(i, k) = w.dot(V.col(i));
      w -= H(i, k) * V.col(i);
    }
    const double hsub = w.norm();  // subdiagonal before the rotations zero it
    H(k + 1, k) = hsub;
    if (hsub > 1e-14 * bn) V.col(k + 1) = w / hsub;
    for (int i = 0; i < k; ++i) {
      const double t = cs[i] * H(i, k) + sn[i] * H(i + 1, k);
      H(i + 1, k) = -sn[i] * H(i, k) + cs[i] * H(i + 1, k);
      H(i, k) = t;
    }
    const double denom = std::hypot(H(k, k), H(k + 1, k));
    if (denom == 0.0) return -1;
    cs[k] = H(k, k) / denom;
    sn[k] = H(k + 1, k) / denom;
    H(k, k) = denom;
    H(k + 1, k) = 0.0;
    g[k + 1] = -sn[k] * g[k];
    g[k] *= cs[k];
    if (std::abs(g[k + 1]) <= tol_rel * bn) {
      ++k;
      break;
    }
    if (hsub <= 1e-14 * bn && std::abs(g[k + 1]) > tol_rel * bn) return -1;
  }
  if (std::abs(g[k]) > tol_rel * bn && k == max_iters) return -1;
  Eigen::VectorXd y = H.topLeftCorner(k, k)
                          .triangularView<Eigen::Upper>()
                          .solve(g.head(k));
  x = V.leftCols(k) * y;
  return k;
}

std::pair<GeometryMap, SolveReport> newton_solve(const QuadratureCache& cache,
                                                 const GeometryMap& x0,
                                                 const SolverConfig& cfg,
                                                 const ControlMap* s) {
  const AssemblyOpts opts = make_opts(cfg, s);
  auto lin = [&](const GeometryMap& x, const Eigen::VectorXd& r,
                 Eigen::VectorXd& delta, int& iters) {
    iters = 0;
    const Eigen::SparseMatrix<double> J = jacobian_F(cache, x, opts);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
    if (lu.info() != Eigen::Success) return false;
    delta = lu.solve(-r);
    return lu.info() == Eigen::Success;
  };
  return newton_loop(cache, x0, cfg, s, lin);
}

std::pair<GeometryMap, SolveReport> newton_krylov_solve(const QuadratureCache& cache,
                                                        const GeometryMap& x0,
                                                        const SolverConfig& cfg,
                                                        const ControlMap* s) {
  const AssemblyOpts opts = make_opts(cfg, s);
  const InteriorMap im(*cache.space);
  bool fell_back = false;
  auto lin = [&](const GeometryMap& x, const Eigen::VectorXd& r,
                 Eigen::VectorXd& delta, int& iters) {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> mv;
    Eigen::SparseMatrix<double> Jm;
    if (cfg.exact_products) {
      Jm = jacobian_F(cache, x, opts);
      mv = [&Jm](const Eigen::VectorXd& v) { return Jm * v; };
    } else {
      const double efd = auto_eps_fd(cfg, x);
      mv = [&, efd](const Eigen::VectorXd& v) {
        GeometryMap xp = x;
        add_interior(xp, im, v, efd);
        return Eigen::VectorXd(((residual_F(cache, xp, opts) - r) / efd));
      };
    }
    iters = gmres(mv, Eigen::VectorXd(-r), delta, 1e-3,
                  std::min<int>(300, 2 * im.ni()));
    if (iters < 0) {
      // Krylov stagnation: fall back to the assembled Jacobian for this step
      fell_back = true;
      const Eigen::SparseMatrix<double> J = jacobian_F(cache, x, opts);
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
      if (lu.info() != Eigen::Success) return false;
      delta = lu.solve(-r);
      iters = 0;
      return lu.info() == Eigen::Success;
    }
    return true;
  };
  auto out = newton_loop(cache, x0, cfg, s, lin);
  if (fell_back) out.second.note += (out.second.note.empty() ? "" : "; ") +
                                    std::string("krylov fallback to assembled step");
  return out;
}

std::pair<GeometryMap, SolveReport> ptc_solve(const QuadratureCache& cache,
                                              const GeometryMap& x0,
                                              const SolverConfig& cfg) {
  const auto t0 = Clock::now();
  SolverConfig c = cfg;
  c.tau = Tau::Id;  // PTC is defined for the identity tau only
  const AssemblyOpts opts = make_opts(c, nullptr);
  const InteriorMap im(*cache.space);
  const int ni = im.ni();
  GeometryMap x = x0;
  SolveReport rep;
  Eigen::VectorXd r = residual_F(cache, x, opts);
  double rn = r.norm(), rn_prev = rn;
  const double tol = cfg.tol_residual > 0.0 ? cfg.tol_residual : 1e-8 * (rn + 1.0);
  rep.iters.push_back({rn, 0.0, cfg.dt0, 0});
  if (rn <= tol) rep.converged = true;
  double dt = cfg.dt0;
  // scalar interior mass, duplicated over the two component blocks
  const Eigen::SparseMatrix<double> Mfull = mass_matrix(cache);
  std::vector<Eigen::Triplet<double>> mt;
  for (int cidx = 0; cidx < Mfull.outerSize(); ++cidx)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Mfull, cidx); it; ++it) {
      const int pr = im.pos[it.row()], pcn = im.pos[it.col()];
      if (pr >= 0 && pcn >= 0) {
        mt.emplace_back(pr, pcn, it.value());
        mt.emplace_back(ni + pr, ni + pcn, it.value());
      }
    }
  Eigen::SparseMatrix<double> Mii(2 * ni, 2 * ni);
  Mii.setFromTriplets(mt.begin(), mt.end());
  for (int it = 0; !rep.converged && it < cfg.max_iters; ++it) {
    const Eigen::SparseMatrix<double> J = jacobian_F(cache, x, opts);
    Eigen::SparseMatrix<double> Sys = J;
    Sys += Eigen::SparseMatrix<double>(Mii * (1.0 / dt));
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(Sys);
    if (lu.info() != Eigen::Success) {
      rep.note = "ptc linear solve failed";
      break;
    }
    const Eigen::VectorXd delta = lu.solve(-r);
    add_interior(x, im, delta);
    r = residual_F(cache, x, opts);
    rn_prev = rn;
    rn = r.norm();
    const double inc = delta.cwiseAbs().maxCoeff();
    rep.iters.push_back({rn, inc, dt, 0});
    if (inc <= cfg.tol_increment || rn <= tol) {
      rep.converged = true;
      break;
    }
    if (!std::isfinite(rn)) {
      rep.note = "ptc diverged";
      break;
    }
    dt = std::min(1e12, dt * (rn > 0.0 ? rn_prev / rn : 1e12));
  }
  finalize(rep, cache, x, t0);
  return {x, rep};
}

std::pair<GeometryMap, SolveReport> picard_solve(const QuadratureCache& cache,
                                                 const GeometryMap& x0,
                                                 const SolverConfig& cfg,
                                                 const ControlMap* s) {
  const auto t0 = Clock::now();
  const AssemblyOpts opts = make_opts(cfg, s);
  const InteriorMap im(*cache.space);
  const int ni = im.ni();
  GeometryMap x = x0;
  SolveReport rep;
  rep.mu_zero_warning = cfg.mu == 0.0;
  rep.iters.push_back({residual_F(cache, x, opts).norm(), 0.0, 0.0, 0});
  for (int it = 0; it < cfg.max_iters; ++it) {
    const PicardSystem sys = picard_system(cache, x, opts);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(sys.M);
    if (lu.info() != Eigen::Success) {
      rep.note = cfg.mu == 0.0 ? "picard matrix singular; retry with mu > 0"
                               : "picard linear solve failed";
      break;
    }
    const Eigen::VectorXd c0 = lu.solve(sys.rhs.col(0));
    const Eigen::VectorXd c1 = lu.solve(sys.rhs.col(1));
    double inc = 0.0;
    for (int k = 0; k < ni; ++k) {
      inc = std::max(inc, std::abs(c0[k] - x.coeffs(im.dofs[k], 0)));
      inc = std::max(inc, std::abs(c1[k] - x.coeffs(im.dofs[k], 1)));
      x.coeffs(im.dofs[k], 0) = c0[k];
      x.coeffs(im.dofs[k], 1) = c1[k];
    }
    rep.iters.push_back({residual_F(cache, x, opts).norm(), inc, 1.0, 0});
    if (inc <= cfg.tol_increment) {
      rep.converged = true;
      break;
    }
  }
  finalize(rep, cache, x, t0);
  return {x, rep};
}

std::pair<GeometryMap, SolveReport> direct_winslow(const QuadratureCache& cache,
                                                   const GeometryMap& x0,
                                                   const SolverConfig& cfg) {
  const auto t0 = Clock::now();
  const InteriorMap im(*cache.space);
  if (min_det_j(cache, x0) <= 0.0)
    throw Error("direct_winslow: initial guess is not bijective");
  GeometryMap x = x0;
  SolveReport rep;
  auto [L, g] = winslow_value_and_gradient(cache, x);
  double gn = g.norm();
  const double tol = cfg.tol_residual > 0.0 ? cfg.tol_residual : 1e-8 * (gn + 1.0);
  rep.iters.push_back({gn, 0.0, 0.0, 0});
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (gn <= tol) {
      rep.converged = true;
      break;
    }
    Eigen::VectorXd delta;
    const Eigen::SparseMatrix<double> H = winslow_hessian(cache, x);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(H);
    bool have_newton = lu.info() == Eigen::Success;
    if (have_newton) {
      delta = lu.solve(-g);
      have_newton = lu.info() == Eigen::Success && delta.allFinite();
    }
    if (!have_newton) delta = -g;
    // feasibility line search: keep detJ > 0 and L_W non-increasing
    double kappa = 1.0;
    bool accepted = false;
    GeometryMap xt = x;
    double Lt = 0.0;
    Eigen::VectorXd gt;
    for (int ls = 0; ls < 30; ++ls) {
      xt = x;
      add_interior(xt, im, delta, kappa);
      if (min_det_j(cache, xt) > 0.0) {
        try {
          std::tie(Lt, gt) = winslow_value_and_gradient(cache, xt);
          if (Lt <= L * (1.0 + 1e-14) && (gt.norm() < gn || Lt < L)) {
            accepted = true;
            break;
          }
        } catch (const Error&) {
          // a quadrature point slipped below zero; shrink further
        }
      }
      kappa *= 0.5;
    }
    if (!accepted) {
      rep.note = "no acceptable step; retry with refined x0";
      break;
    }
    const double inc = kappa * delta.cwiseAbs().maxCoeff();
    x = xt;
    L = Lt;
    g = gt;
    gn = g.norm();
    rep.iters.push_back({gn, inc, kappa, 0});
    if (inc <= cfg.tol_increment) {
      rep.converged = gn <= tol;
      break;
    }
  }
  if (gn <= tol) rep.converged = true;
  finalize(rep, cache, x, t0);
  return {x, rep};
}

std::pair<GeometryMap, SolveReport> solve(const QuadratureCache& cache,
                                          const GeometryMap& x0,
                                          const SolverConfig& cfg,
                                          const ControlMap* s) {
  std::pair<GeometryMap, SolveReport> out;
  switch (cfg.method) {
    case Method::Newton:
      out = newton_solve(cache, x0, cfg, s);
      break;
    case Method::NewtonKrylov:
      out = newton_krylov_solve(cache, x0, cfg, s);
      break;
    case Method::Ptc:
      return ptc_solve(cache, x0, cfg);
    case Method::Picard:
      return picard_solve(cache, x0, cfg, s);
    case Method::DirectWinslow:
      return direct_winslow(cache, x0, cfg);
  }
  if (!out.second.converged && cfg.fallback) {
    SolverConfig pc = cfg;
    pc.method = Method::Picard;
    pc.mu = 1e-2;
    auto fb = picard_solve(cache, out.first, pc, s);
    fb.second.used_fallback = true;
    fb.second.note = "newton failed; picard fallback (mu = 1e-2)" +
                     (out.second.note.empty() ? "" : ": " + out.second.note);
    return fb;
  }
  return out;
}

}  // namespace egg
