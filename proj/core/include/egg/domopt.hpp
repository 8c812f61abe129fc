#pragma once

#include "egg/geometry.hpp"
#include "egg/solvers.hpp"

namespace egg {

/// One term of a domain-optimization cost: a metric-based quality functional,
/// either pulled back through the base map (Q^s) or plain (regularizer).
/// Supported names: area, orthogonality, area-orthogonality, length, liao,
/// winslow, ml (metric-based functionals only).
struct CostTerm {
  std::string name = "area";
  double weight = 1.0;
  bool pulled_back = true;
  std::function<double(double, double)> spatial;  // optional multiplier
};
using QualitySpec = std::vector<CostTerm>;

/// Cost integral and (optionally) its gradient over the interior dofs of s.
/// x_star supplies the pulled-back metric; may be null if no term needs it.
double domain_cost(const QuadratureCache& cache_s, const GeometryMap& s,
                   const GeometryMap* x_star, const QualitySpec& cost,
                   Eigen::VectorXd* grad = nullptr);

enum class ConstraintKind { Bezier, CoarseSlack, Pointwise, Cone };

struct ConstraintSet {
  ConstraintKind kind = ConstraintKind::Cone;
  SpacePtr space;
  // pointwise
  std::vector<std::pair<double, double>> abscissae;
  Eigen::VectorXd epsL, epsU;
  // cone
  double margin = 1e-3;
  // coarse-slack: slack vector (joint variable, initialized from identity)
  Eigen::VectorXd slack;
  // bezier / coarse-slack internals
  int qdet = 0;  // quadrature order for det integrals
};

ConstraintSet make_bezier_constraint(const SpacePtr& space);
ConstraintSet make_coarse_slack_constraint(const SpacePtr& space);
/// Bounds eps^L/U = alpha_{L,U} * detJ(ref) at a uniform per-element sampling;
/// ref == nullptr uses detJ = 1 (control maps starting from the identity).
ConstraintSet make_pointwise_constraint(const SpacePtr& space,
                                        const GeometryMap* ref,
                                        double alpha_L = 0.05,
                                        double alpha_U = 4.0,
                                        int pts_per_elem = 36);
ConstraintSet make_cone_constraint(const SpacePtr& space, double margin = 1e-3);

/// Inequality values (>= 0 feasible) and the dense Jacobian with respect to
/// the interior dofs of the map (component-major layout). For coarse-slack
/// these are the equality residuals f(s) - M e at the stored slack.
void constraint_value_and_gradient(const ConstraintSet& c, const GeometryMap& map,
                                   Eigen::VectorXd& values,
                                   Eigen::MatrixXd* jacobian = nullptr);

struct DomOptOptions {
  int max_outer = 20;
  int max_inner = 80;
  double kkt_tol = 1e-6;
  double rho0 = 10.0;
};

struct DomOptReport {
  int outer_iters = 0;
  double cost_initial = 0.0, cost_final = 0.0;
  double kkt_residual = 0.0;
  // smallest inequality value seen over all accepted iterates
  double min_feasibility = 0.0;
  bool converged = false;
  std::string note;
};

/// Divergence-form reparameterization with D = (detJ x*)^k I; k = 0 returns
/// the identity map exactly.
ControlMap maxprinciple_reparam(const GeometryMap& x_star, double k,
                                const SpacePtr& space_s);

ControlMap optimize_domain(const GeometryMap& x_star, const QualitySpec& cost,
                           ConstraintSet& c, const SpacePtr& space_s,
                           const DomOptOptions& opts = {},
                           DomOptReport* report = nullptr);

GeometryMap optimize_geometry_direct(const GeometryMap& x_star,
                                     const QualitySpec& cost, ConstraintSet& c,
                                     const DomOptOptions& opts = {},
                                     DomOptReport* report = nullptr);

enum class OrthSides { NorthSouth, EastWest };

/// Laplace-Beltrami based boundary orthogonalization control map.
ControlMap boundary_orth_pipeline(const GeometryMap& x_star, OrthSides sides,
                                  const SpacePtr& space);

/// Anisotropic-diffusion post-processing of a control map.
ControlMap sprime_postprocess(const ControlMap& s, const GeometryMap& x_h,
                              double k, double beta);

}  // namespace egg
