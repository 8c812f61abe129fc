#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace egg {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Open knot vector of a univariate B-spline space on [0,1].
///
/// The first and last knot (0 and 1) are repeated degree+1 times; interior
/// multiplicities lie in [1, degree].
struct KnotVector {
  int degree = 0;
  std::vector<double> knots;

  int numBasis() const { return static_cast<int>(knots.size()) - degree - 1; }
  int numElements() const;
  std::vector<double> breakpoints() const;

  /// Span index s with knots[s] <= xi < knots[s+1] (right-continuous);
  /// xi == 1 falls into the last nonempty span.
  int findSpan(double xi) const;

  /// Element index (breakpoint interval) containing xi, same continuity rule.
  int findElement(double xi) const;

  /// Range [first, last] of element indices on which basis function i is nonzero.
  std::pair<int, int> supportElements(int i) const;

  void validate() const;

  bool operator==(const KnotVector& other) const {
    return degree == other.degree && knots == other.knots;
  }
};

/// Derivatives 0..max_deriv of the degree+1 basis functions that are nonzero
/// at a point. Row k holds the k-th derivatives; the nonzero functions have
/// global indices span-degree .. span.
struct LocalBasisEval {
  int span = 0;
  Eigen::MatrixXd values;  // (max_deriv+1) x (degree+1)
};

/// Open knot vector with multiplicity p - regularity[i] at interior breakpoint i.
KnotVector make_knot_vector(int p, const std::vector<double>& breakpoints,
                            const std::vector<int>& regularity);

/// Uniform n-element knot vector of degree p and regularity alpha.
KnotVector uniform_knot_vector(int p, int n_elements, int alpha);

/// Dyadic refinement: insert every element midpoint with the same interior
/// multiplicity pattern (regularity preserved).
KnotVector dyadic_refine(const KnotVector& kv);

/// Cox-de Boor evaluation with derivatives up to max_deriv (<= 2).
LocalBasisEval eval_basis(const KnotVector& kv, double xi, int max_deriv);

/// Knot-insertion (two-scale) matrix S with fine_coeffs = S * coarse_coeffs
/// representing the same function. Requires nested knot multisets, equal degree.
Eigen::SparseMatrix<double> subdivision_matrix(const KnotVector& coarse,
                                               const KnotVector& fine);

/// Per-element Bezier extraction: operators E_e of size (p+1) x (p+1) mapping
/// the local spline control ordinates to the Bezier (Bernstein) ordinates of
/// the element segment. Rows are nonnegative and sum to 1.
std::vector<Eigen::MatrixXd> bezier_extraction(const KnotVector& kv);

/// Evaluate the spline with given coefficients at xi (derivative order deriv).
double eval_spline(const KnotVector& kv, const Eigen::VectorXd& coeffs,
                   double xi, int deriv = 0);

/// Greville abscissae (knot averages), one per basis function.
std::vector<double> greville_points(const KnotVector& kv);

/// Gauss-Legendre rule on [0,1] with q points.
void gauss_legendre(int q, std::vector<double>& pts, std::vector<double>& wts);

}  // namespace egg
