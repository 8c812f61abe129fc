#pragma once

#include <map>
#include <memory>
#include <set>
#include <utility>
#include <vector>

#include "egg/splinecore.hpp"

namespace egg {

/// Nested dyadic element hierarchy over (0,1)^2. Level l has n0*2^l x n0*2^l
/// elements; the active elements of all levels tile the unit square exactly.
struct HierarchicalMesh {
  int n0 = 1;
  std::vector<std::set<std::pair<int, int>>> active;  // per level, (ex, ey)

  int numLevels() const { return static_cast<int>(active.size()); }
  int elemsPerSide(int level) const { return n0 << level; }
  std::size_t numActiveElements() const;

  /// Replace the given active elements by their four dyadic children.
  void refineElements(const std::vector<std::pair<int, std::pair<int, int>>>& elems);

  void validate() const;
};

HierarchicalMesh uniform_mesh(int n0);

struct ThbSpace;
using SpacePtr = std::shared_ptr<const ThbSpace>;

/// Truncated hierarchical B-spline space over a HierarchicalMesh.
struct ThbSpace {
  int p = 3;
  int alpha = 2;
  HierarchicalMesh mesh;
  std::vector<KnotVector> kvx, kvy;  // tensor knot vectors per level

  // Active tensor functions per level, flattened index iy * nx + ix, sorted.
  std::vector<std::vector<int>> activeFuncs;

  struct DofId {
    int level;
    int tensorIndex;  // iy * nx(level) + ix
  };
  std::vector<DofId> dofs;                 // global numbering
  std::vector<std::map<int, int>> dofOf;   // per level: tensorIndex -> global dof
  std::vector<bool> boundaryMask;

  // Truncated two-scale representation: rep[d][l] maps tensor index at level
  // l to coefficient; defined for l >= dofs[d].level.
  std::vector<std::vector<std::map<int, double>>> rep;

  struct ElementInfo {
    int level, ex, ey;
    double x0, x1, y0, y1;
    std::vector<int> dofIds;  // global dofs with support here
    Eigen::MatrixXd C;        // |dofIds| x (p+1)^2 extraction to tensor-local basis
    int spanx, spany;         // spans of the element at its level
  };
  std::vector<ElementInfo> elements;  // level-major, then ey, ex (fixed order)
  std::vector<std::map<std::pair<int, int>, int>> elementIndex;  // per level

  int numDofs() const { return static_cast<int>(dofs.size()); }
  int numInteriorDofs() const;

  /// Element (in `elements`) containing the parametric point.
  int findElement(double xi, double eta) const;

  /// Values and derivatives (up to max_deriv in each variable, total order 2)
  /// of all basis functions supported on the element at one point.
  /// Rows follow elements[e].dofIds; columns are the requested derivative:
  /// 0:val 1:dxi 2:deta 3:dxixi 4:dxieta 5:detaeta.
  Eigen::MatrixXd evalElementBasis(int e, double xi, double eta, int max_deriv) const;

  /// List of interior (non-boundary) dof ids, ascending.
  std::vector<int> interiorDofs() const;
};

/// Build the canonical THB space of degree p, regularity alpha over the mesh.
ThbSpace build_thb_space(const HierarchicalMesh& mesh, int p, int alpha);

/// Refine the coarsest-level supporting active elements of every marked
/// function and rebuild the space. Empty `marked` returns the input unchanged.
ThbSpace refine_functions(const ThbSpace& space, const std::vector<int>& marked);

/// K-refined companion space: degree p+1, regularity alpha+1, same mesh.
ThbSpace adjoint_space(const ThbSpace& space);

/// Map x_h in (V_h)^2: per-dof control points.
struct GeometryMap {
  SpacePtr space;
  Eigen::MatrixX2d coeffs;  // numDofs x 2

  Eigen::Vector2d value(double xi, double eta) const;
  Eigen::Matrix2d jacobian(double xi, double eta) const;
  /// Hessians of the two components (symmetric 2x2 each).
  std::pair<Eigen::Matrix2d, Eigen::Matrix2d> hessians(double xi, double eta) const;
};

GeometryMap identity_map(const SpacePtr& space);

/// Represent a coarse-space map exactly in a nested finer space
/// (Galerkin L2 projection, exact for nested spaces).
GeometryMap prolong(const GeometryMap& coarse, const SpacePtr& fine);

/// Scalar-field version of prolong.
Eigen::VectorXd prolong_scalar(const ThbSpace& coarse, const Eigen::VectorXd& coeffs,
                               const ThbSpace& fine);

}  // namespace egg
