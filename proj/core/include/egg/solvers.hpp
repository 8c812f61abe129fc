#pragma once

#include <string>

#include "egg/assembly.hpp"

namespace egg {

enum class Method { Newton, NewtonKrylov, Ptc, Picard, DirectWinslow };

struct SolverConfig {
  Method method = Method::Newton;
  Tau tau = Tau::Id;
  double mu = 0.0;
  double eps = 1e-4;
  double tol_residual = -1.0;   // < 0: 1e-8 * (initial residual + 1)
  double tol_increment = 1e-10; // coefficient inf-norm
  int max_iters = 50;
  double eps_fd = -1.0;         // < 0: 1e-7 * (1 + |x|_inf)
  double dt0 = 1.0;
  bool linesearch = true;
  bool exact_products = false;  // Newton-Krylov: exact instead of fd products
  bool fallback = false;        // newton -> picard(mu = 1e-2) on failure
};

struct IterRecord {
  double residual = 0.0;
  double increment = 0.0;
  double step = 0.0;  // line-search kappa or PTC time-step
  int linear_iters = 0;
};

struct SolveReport {
  std::vector<IterRecord> iters;  // iters[0] holds the initial residual
  bool converged = false;
  bool mu_zero_warning = false;
  bool used_fallback = false;
  double min_detJ = 0.0;
  int dofs = 0;
  double wall_time = 0.0;
  std::string note;
};

std::pair<GeometryMap, SolveReport> newton_solve(const QuadratureCache& cache,
                                                 const GeometryMap& x0,
                                                 const SolverConfig& cfg,
                                                 const ControlMap* s = nullptr);

std::pair<GeometryMap, SolveReport> newton_krylov_solve(const QuadratureCache& cache,
                                                        const GeometryMap& x0,
                                                        const SolverConfig& cfg,
                                                        const ControlMap* s = nullptr);

std::pair<GeometryMap, SolveReport> ptc_solve(const QuadratureCache& cache,
                                              const GeometryMap& x0,
                                              const SolverConfig& cfg);

std::pair<GeometryMap, SolveReport> picard_solve(const QuadratureCache& cache,
                                                 const GeometryMap& x0,
                                                 const SolverConfig& cfg,
                                                 const ControlMap* s = nullptr);

std::pair<GeometryMap, SolveReport> direct_winslow(const QuadratureCache& cache,
                                                   const GeometryMap& x0,
                                                   const SolverConfig& cfg);

/// Dispatch on cfg.method; applies the newton -> picard fallback when enabled.
std::pair<GeometryMap, SolveReport> solve(const QuadratureCache& cache,
                                          const GeometryMap& x0,
                                          const SolverConfig& cfg,
                                          const ControlMap* s = nullptr);

/// Smallest detJ over all cached quadrature points.
double min_det_j(const QuadratureCache& cache, const GeometryMap& x);

/// GMRES without restarts; returns iteration count or -1 on breakdown or
/// failure to reach the relative tolerance.
int gmres(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& matvec,
          const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol_rel,
          int max_iters);

}  // namespace egg
