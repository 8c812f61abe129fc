#include <cmath>
#include <random>

#include "doctest.h"
#include "egg/domopt.hpp"
#include "egg/dwr.hpp"
#include "egg/geometry.hpp"

using namespace egg;

namespace {

SpacePtr make_space(int n, int p = 3, int alpha = 2) {
  return std::make_shared<const ThbSpace>(build_thb_space(uniform_mesh(n), p, alpha));
}

GeometryMap solved(const BoundaryData& b, const SpacePtr& sp) {
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x0 = coons_patch(b, cache);
  apply_dirichlet(cache, x0, boundary_trace(b));
  SolverConfig cfg;
  cfg.fallback = true;
  auto [x, rep] = solve(cache, x0, cfg);
  REQUIRE(rep.converged);
  return x;
}

void check_constraint_gradient(ConstraintSet& c, const GeometryMap& s0) {
  const InteriorMap im(*s0.space);
  Eigen::VectorXd v0;
  Eigen::MatrixXd Jc;
  constraint_value_and_gradient(c, s0, v0, &Jc);
  REQUIRE(Jc.rows() == v0.size());
  REQUIRE(Jc.cols() == 2 * im.ni());
  std::mt19937 rng(61);
  std::uniform_int_distribution<int> pick(0, 2 * im.ni() - 1);
  // every constraint is at most quadratic in the dofs, so the central
  // difference is exact for any step; a large one keeps rounding noise down
  const double h = 1e-3;
  for (int t = 0; t < 5; ++t) {
    const int col = pick(rng);
    const int k = col % im.ni(), comp = col / im.ni();
    GeometryMap sp = s0, sm = s0;
    sp.coeffs(im.dofs[k], comp) += h;
    sm.coeffs(im.dofs[k], comp) -= h;
    Eigen::VectorXd vp, vm;
    constraint_value_and_gradient(c, sp, vp);
    constraint_value_and_gradient(c, sm, vm);
    const Eigen::VectorXd fd = (vp - vm) / (2.0 * h);
    CHECK((fd - Jc.col(col)).cwiseAbs().maxCoeff() <=
          1e-6 * (1.0 + fd.cwiseAbs().maxCoeff()));
  }
}

}  // namespace

TEST_CASE("control matrices of the identity") {
  const SpacePtr sp = make_space(4);
  const GeometryMap id = identity_map(sp);
  const ControlPoint cp = control_matrices(id, 0.3, 0.7);
  CHECK((cp.T - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(cp.detT == doctest::Approx(1.0));
  CHECK(cp.P1.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(cp.P2.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("control matrices of a quadratic stretch") {
  // s = (xi^2, eta): T = diag(2 xi, 1), second derivative (2, 0), so the
  // first control matrix carries -1/xi in its (1,1) slot
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap s = l2_project(
      cache, [](double xi, double eta) { return Eigen::Vector2d(xi * xi, eta); },
      Subspace::All);
  for (double xi : {0.25, 0.5, 0.8}) {
    const ControlPoint cp = control_matrices(s, xi, 0.5);
    CHECK(cp.detT == doctest::Approx(2.0 * xi).epsilon(1e-9));
    CHECK(cp.P1(0, 0) == doctest::Approx(-1.0 / xi).epsilon(1e-8));
    CHECK(std::abs(cp.P2(0, 0)) <= 1e-9);
    CHECK(cp.P1.cwiseAbs().sum() == doctest::Approx(1.0 / xi).epsilon(1e-8));
  }
}

TEST_CASE("domain cost of the identity control map") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap id = identity_map(sp);
  const QualitySpec cost{CostTerm{"area", 1.0, true, nullptr}};
  CHECK(domain_cost(cache, id, &id, cost) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("domain cost gradient matches finite differences") {
  const SpacePtr sp = make_space(4);
  const SpacePtr ss = make_space(4);
  const QuadratureCache cache = build_quadrature(ss);
  const GeometryMap xs = solved(make_skew(), sp);
  const GeometryMap s0 = identity_map(ss);
  const InteriorMap im(*ss);
  for (const char* name : {"area", "orthogonality", "winslow", "length"}) {
    const QualitySpec cost{CostTerm{name, 1.0, true, nullptr}};
    Eigen::VectorXd g;
    const double c0 = domain_cost(cache, s0, &xs, cost, &g);
    REQUIRE(g.size() == 2 * im.ni());
    std::mt19937 rng(67);
    std::uniform_int_distribution<int> pick(0, 2 * im.ni() - 1);
    const double h = 1e-6;
    for (int t = 0; t < 5; ++t) {
      const int col = pick(rng);
      const int k = col % im.ni(), comp = col / im.ni();
      GeometryMap sp2 = s0, sm = s0;
      sp2.coeffs(im.dofs[k], comp) += h;
      sm.coeffs(im.dofs[k], comp) -= h;
      const double fd =
          (domain_cost(cache, sp2, &xs, cost) - domain_cost(cache, sm, &xs, cost)) /
          (2.0 * h);
      CHECK(std::abs(fd - g[col]) <= 1e-6 * (1.0 + std::abs(fd)));
    }
    CHECK(std::isfinite(c0));
  }
}

TEST_CASE("bezier ordinates of the identity are all ones") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_bezier_constraint(ss);
  const GeometryMap id = identity_map(ss);
  Eigen::VectorXd v;
  constraint_value_and_gradient(c, id, v);
  CHECK(v.size() > 0);
  CHECK((v.array() - 1.0).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("bezier constraint gradient") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_bezier_constraint(ss);
  check_constraint_gradient(c, identity_map(ss));
}

TEST_CASE("coarse slack residual vanishes at the identity") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_coarse_slack_constraint(ss);
  CHECK(c.slack.minCoeff() > 0.0);
  Eigen::VectorXd v;
  constraint_value_and_gradient(c, identity_map(ss), v);
  CHECK(v.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("coarse slack constraint gradient") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_coarse_slack_constraint(ss);
  check_constraint_gradient(c, identity_map(ss));
}

TEST_CASE("pointwise bounds hold strictly at the identity") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_pointwise_constraint(ss, nullptr, 0.05, 4.0);
  Eigen::VectorXd v;
  constraint_value_and_gradient(c, identity_map(ss), v);
  CHECK(v.minCoeff() > 0.0);
}

TEST_CASE("pointwise constraint gradient") {
  const SpacePtr ss = make_space(3);
  ConstraintSet c = make_pointwise_constraint(ss, nullptr, 0.05, 4.0);
  check_constraint_gradient(c, identity_map(ss));
}

TEST_CASE("cone constraint is strictly feasible at the identity") {
  const SpacePtr ss = make_space(4);
  ConstraintSet c = make_cone_constraint(ss, 1e-3);
  Eigen::VectorXd v;
  constraint_value_and_gradient(c, identity_map(ss), v);
  CHECK(v.minCoeff() > 0.0);
}

TEST_CASE("cone constraint gradient") {
  const SpacePtr ss = make_space(4);
  ConstraintSet c = make_cone_constraint(ss, 1e-3);
  check_constraint_gradient(c, identity_map(ss));
}

TEST_CASE("cone constraints require a single-level space") {
  const SpacePtr sp = make_space(4);
  const ThbSpace refined = refine_functions(*sp, {0});
  CHECK_THROWS_AS(
      make_cone_constraint(std::make_shared<const ThbSpace>(refined)),
      Error);
}

TEST_CASE("zero diffusivity exponent returns the identity control map") {
  const SpacePtr sp = make_space(4);
  const GeometryMap xs = solved(make_skew(), sp);
  const ControlMap s = maxprinciple_reparam(xs, 0.0, make_space(4));
  const GeometryMap id = identity_map(s.map.space);
  CHECK((s.map.coeffs - id.coeffs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("negative diffusivity exponent is rejected") {
  const SpacePtr sp = make_space(4);
  const GeometryMap xs = solved(make_square(), sp);
  CHECK_THROWS_AS(maxprinciple_reparam(xs, -0.5, make_space(4)), Error);
}

TEST_CASE("boundary orthogonalization of the identity is the identity") {
  // the harmonic coordinate of the flat square is xi itself, so the blended
  // control map collapses to the identity
  const SpacePtr sp = make_space(4);
  const GeometryMap id = identity_map(sp);
  const ControlMap s = boundary_orth_pipeline(id, OrthSides::NorthSouth, sp);
  CHECK((s.map.coeffs - id.coeffs).cwiseAbs().maxCoeff() <= 1e-9);
  const ControlMap t = boundary_orth_pipeline(id, OrthSides::EastWest, sp);
  CHECK((t.map.coeffs - id.coeffs).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("the smoothing postprocess fixes the identity") {
  const SpacePtr sp = make_space(4);
  const GeometryMap id = identity_map(sp);
  const ControlMap s{id};
  const ControlMap s2 = sprime_postprocess(s, id, 0.0, 1.0);
  CHECK((s2.map.coeffs - id.coeffs).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK_THROWS_AS(sprime_postprocess(s, id, 0.5, 0.0), Error);
}

TEST_CASE("constrained optimization lowers the pulled-back cost") {
  const SpacePtr sp = make_space(8);
  const GeometryMap xs = solved(make_horseshoe(), sp);
  const SpacePtr ss = make_space(8);
  ConstraintSet cone = make_cone_constraint(ss);
  const QualitySpec cost{CostTerm{"area", 1.0, true, nullptr}};
  DomOptReport rep;
  const ControlMap s = optimize_domain(xs, cost, cone, ss, {}, &rep);
  CHECK(rep.cost_final < rep.cost_initial);
  Eigen::VectorXd v;
  constraint_value_and_gradient(cone, s.map, v);
  CHECK(v.minCoeff() >= -1e-12);
  s.validateBoundary();
}
