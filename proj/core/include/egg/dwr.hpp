#pragma once

#include "egg/geometry.hpp"
#include "egg/quality.hpp"
#include "egg/solvers.hpp"

namespace egg {

enum class GoalKind { Bijectivity, Winslow };

struct GoalFunctional {
  GoalKind kind = GoalKind::Bijectivity;
  std::vector<NegPoint> xi_minus;  // frozen negative set (bijectivity only)
};

/// Bijectivity goal with the negative quadrature set frozen at call time.
GoalFunctional make_bijectivity_goal(const QuadratureCache& cache,
                                     const GeometryMap& x);

GoalFunctional make_winslow_goal();

/// Goal value at x: sum of detJ over the frozen negative set, or L_W.
double goal_value(const QuadratureCache& cache, const GeometryMap& x,
                  const GoalFunctional& goal);

/// L'(x, sigma) tested against the interior dofs of the cache's space
/// (component-major layout as in assembly).
Eigen::VectorXd goal_gradient(const QuadratureCache& test_cache,
                              const GeometryMap& x, const GoalFunctional& goal);

/// Discrete adjoint on the K-refined space: transpose linearization of F
/// (tau = Id) at x, adjoint test against adjoint directions. Returns a map
/// on the adjoint space with zero boundary coefficients.
GeometryMap solve_adjoint(const GeometryMap& x, const GoalFunctional& goal,
                          const SpacePtr& adjoint, double eps = 1e-4);

enum class PsiChoice { Zero, L2Projection };

struct ResidualDecomposition {
  Eigen::VectorXd r;     // per primal basis function, all dofs
  Eigen::VectorXd w;     // basis measures, all positive
  Eigen::VectorXd rtil;  // r / w
  double estimate = 0.0; // sum of r
};

ResidualDecomposition decompose_residual(const GeometryMap& x,
                                         const GeometryMap& z,
                                         PsiChoice psi = PsiChoice::L2Projection,
                                         double eps = 1e-4);

/// Primal dof indices with |rtil| >= beta * max |rtil|.
std::vector<int> mark(const ResidualDecomposition& dec, double beta,
                      bool positive_only = false);

struct AdaptConfig {
  GoalKind goal = GoalKind::Bijectivity;
  double beta = 0.2;
  int max_rounds = 6;
  bool positive_only = false;
  double winslow_tol = -1.0;  // < 0: 1e-3 * L_W(x_h)
  double eps = 1e-4;
  SolverConfig solver;
};

struct AdaptRound {
  int dofs = 0;
  int num_negative = 0;
  double estimate = 0.0;
  int marked = 0;
  SolveReport solve;
};

struct AdaptResult {
  GeometryMap x;
  bool satisfied = false;
  std::string note;
  std::vector<AdaptRound> rounds;
};

/// Outer loop: solve, evaluate goal, adjoint, decompose, mark, refine,
/// prolonged warm start.
AdaptResult adapt_loop(const BoundaryData& b, const SpacePtr& space0,
                       const AdaptConfig& cfg);

}  // namespace egg
