#pragma once

#include <functional>
#include <optional>

#include "egg/controlmap.hpp"
#include "egg/quadrature.hpp"

namespace egg {

enum class Tau { Id, Div, Ls };

struct AssemblyOpts {
  Tau tau = Tau::Id;
  double mu = 0.0;
  double eps = 1e-4;             // stabilization constant in A
  const ControlMap* s = nullptr; // optional reparameterization
};

struct MetricPoint {
  Eigen::Matrix2d J;
  double detJ = 0.0, g11 = 0.0, g12 = 0.0, g22 = 0.0;
  Eigen::Matrix2d H1, H2;  // Hessians of the two map components
};

/// Metric quantities at every cached quadrature point (flat, element-major).
struct MetricData {
  std::vector<MetricPoint> pts;
  double eps = 1e-4;
};

MetricData compute_metric(const QuadratureCache& cache, const GeometryMap& x,
                          double eps = 1e-4);

/// A(x) = [[g22, -g12], [-g12, g11]] / (g11 + g22 + eps).
Eigen::Matrix2d a_matrix(const MetricPoint& md, double eps);

/// Interior-dof indexing shared by all assembled vectors: component-major,
/// entry c * ni + k for the k-th interior dof (ascending dof order).
struct InteriorMap {
  std::vector<int> dofs;  // interior dof ids, ascending
  std::vector<int> pos;   // dof -> position or -1
  explicit InteriorMap(const ThbSpace& space);
  int ni() const { return static_cast<int>(dofs.size()); }
};

/// Residual F(x, sigma_h) over interior test dofs (size 2 * ni).
Eigen::VectorXd residual_F(const QuadratureCache& cache, const GeometryMap& x,
                           const AssemblyOpts& opts);

/// Exact Jacobian dF/dx over interior dofs (2ni x 2ni).
Eigen::SparseMatrix<double> jacobian_F(const QuadratureCache& cache,
                                       const GeometryMap& x,
                                       const AssemblyOpts& opts);

/// Hand-linearized directional derivative F'(x, sigma_h, v).
Eigen::VectorXd gateaux_exact(const QuadratureCache& cache, const GeometryMap& x,
                              const AssemblyOpts& opts, const Eigen::VectorXd& v);

/// One-sided finite-difference directional derivative.
Eigen::VectorXd gateaux_fd(const QuadratureCache& cache, const GeometryMap& x,
                           const AssemblyOpts& opts, const Eigen::VectorXd& v,
                           double eps_fd);

/// Linear system of one Picard step: the scalar matrix M (ni x ni) is shared
/// by both components (block-diagonal coupling is a structural zero) and
/// rhs holds one column per component.
struct PicardSystem {
  Eigen::SparseMatrix<double> M;
  Eigen::MatrixX2d rhs;
};

PicardSystem picard_system(const QuadratureCache& cache, const GeometryMap& xk,
                           const AssemblyOpts& opts);

/// Winslow functional value and its first variation over interior dofs.
/// Throws if detJ <= 0 at any quadrature point.
std::pair<double, Eigen::VectorXd> winslow_value_and_gradient(
    const QuadratureCache& cache, const GeometryMap& x);

/// Exact second variation of the Winslow functional (2ni x 2ni).
Eigen::SparseMatrix<double> winslow_hessian(const QuadratureCache& cache,
                                            const GeometryMap& x);

enum class Subspace { All, Interior, Trace };

Eigen::SparseMatrix<double> mass_matrix(const QuadratureCache& cache);

/// Galerkin L2 projection of a scalar field onto the chosen subspace; dofs
/// outside the subspace get zero coefficients. Trace projects along the
/// domain boundary (1D quadrature over boundary edges).
Eigen::VectorXd l2_project_scalar(const QuadratureCache& cache,
                                  const std::function<double(double, double)>& f,
                                  Subspace sub = Subspace::All);

GeometryMap l2_project(const QuadratureCache& cache,
                       const std::function<Eigen::Vector2d(double, double)>& f,
                       Subspace sub = Subspace::All);

/// Overwrite the boundary coefficients of x with the trace L2 projection of f.
void apply_dirichlet(const QuadratureCache& cache, GeometryMap& x,
                     const std::function<Eigen::Vector2d(double, double)>& f);

}  // namespace egg
