#pragma once

#include <functional>
#include <string>

#include "egg/assembly.hpp"

namespace egg {

struct SideCurve {
  KnotVector kv;
  Eigen::MatrixX2d cps;

  Eigen::Vector2d value(double t) const;
  Eigen::Vector2d tangent(double t) const;
};

/// Four boundary curves, each over [0,1] in coordinate orientation:
/// south(t) = x(t,0), east(t) = x(1,t), north(t) = x(t,1), west(t) = x(0,t).
struct BoundaryData {
  SideCurve south, east, north, west;

  /// Corner closure: south(0)=west(0), south(1)=east(0), north(1)=east(1),
  /// north(0)=west(1).
  void validate(double tol = 1e-10) const;
};

/// Dirichlet data: evaluates the matching side curve; only valid on points
/// with xi or eta equal to 0 or 1.
std::function<Eigen::Vector2d(double, double)> boundary_trace(const BoundaryData& b);

/// Transfinite (Coons) interpolant of the four sides, defined on all of
/// (0,1)^2.
std::function<Eigen::Vector2d(double, double)> coons_field(const BoundaryData& b);

/// Coons field projected onto the cache's space; boundary dofs are then
/// overwritten with the trace projection of the side curves.
GeometryMap coons_patch(const BoundaryData& b, const QuadratureCache& cache);

/// Least-squares spline fit with exact endpoint interpolation.
SideCurve fit_curve(const std::function<Eigen::Vector2d(double)>& f, int p,
                    int n_elements);

/// Starting from a uniform n0 x n0 grid, dyadically refines elements adjacent
/// to the domain boundary until the trace-space L2 fit error of every side
/// curve drops below fit_tol on each boundary edge. Errors out (reporting the
/// achieved error) if the tolerance is unreachable within max_levels levels.
SpacePtr build_initial_space(const BoundaryData& b, int n0, int p, int alpha,
                             double fit_tol = 1e-10, int max_levels = 8);

// Packaged test geometries.
BoundaryData make_square();
BoundaryData make_skew();
/// Quarter annulus sector 1 <= r <= 2; the exact inversely harmonic map is
/// x(xi, eta) = 2^xi (cos(eta pi/2), sin(eta pi/2)).
BoundaryData make_annulus(int n_fit = 64);
/// Concave C-shape whose coarse solve folds.
BoundaryData make_horseshoe(int n_fit = 16);
/// Sinusoidal tube with vertical caps.
BoundaryData make_tube(int n_fit = 32);

BoundaryData load_geometry(const std::string& path);
void save_geometry(const std::string& path, const BoundaryData& b);

Eigen::Vector2d annulus_exact(double xi, double eta);

}  // namespace egg
