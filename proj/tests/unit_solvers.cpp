#include <cmath>
#include <random>

#include "doctest.h"
#include "egg/geometry.hpp"
#include "egg/solvers.hpp"

using namespace egg;

namespace {

SpacePtr make_space(int n, int p = 3, int alpha = 2) {
  return std::make_shared<const ThbSpace>(build_thb_space(uniform_mesh(n), p, alpha));
}

GeometryMap coons_start(const BoundaryData& b, const QuadratureCache& cache) {
  GeometryMap x = coons_patch(b, cache);
  apply_dirichlet(cache, x, boundary_trace(b));
  return x;
}

}  // namespace

TEST_CASE("every method leaves the square identity in place") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x0 = coons_start(make_square(), cache);
  for (Method m : {Method::Newton, Method::NewtonKrylov, Method::Ptc,
                   Method::Picard, Method::DirectWinslow}) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.mu = m == Method::Picard ? 1e-2 : 0.0;
    auto [x, rep] = solve(cache, x0, cfg);
    CHECK(rep.converged);
    CHECK(static_cast<int>(rep.iters.size()) - 1 <= 2);
    const GeometryMap id = identity_map(sp);
    CHECK((x.coeffs - id.coeffs).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("newton contracts quadratically near the root") {
  const SpacePtr sp = make_space(8);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x0 = coons_start(make_annulus(), cache);
  SolverConfig cfg;
  cfg.tol_residual = 1e-12;
  auto [x, rep] = newton_solve(cache, x0, cfg);
  CHECK(rep.converged);
  REQUIRE(rep.iters.size() >= 4);
  const std::size_t m = rep.iters.size();
  for (std::size_t k = m - 3; k + 1 < m; ++k) {
    const double rk = rep.iters[k].residual, rk1 = rep.iters[k + 1].residual;
    if (rk1 <= 1e-14) continue;  // at rounding level
    CHECK(rk1 <= 1e3 * std::pow(rk, 1.8));
  }
}

TEST_CASE("boundary coefficients are bit-identical after a solve") {
  const SpacePtr sp = make_space(6);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x0 = coons_start(make_annulus(), cache);
  const InteriorMap im(*sp);
  for (Method m : {Method::Newton, Method::Picard, Method::Ptc}) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.mu = m == Method::Picard ? 1e-2 : 0.0;
    auto [x, rep] = solve(cache, x0, cfg);
    for (int d = 0; d < sp->numDofs(); ++d) {
      if (im.pos[d] >= 0) continue;
      CHECK(x.coeffs(d, 0) == x0.coeffs(d, 0));
      CHECK(x.coeffs(d, 1) == x0.coeffs(d, 1));
    }
  }
}

TEST_CASE("picard with mu zero raises the ill-posedness warning") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x0 = coons_start(make_annulus(), cache);
  SolverConfig cfg;
  cfg.method = Method::Picard;
  cfg.mu = 0.0;
  auto [x, rep] = picard_solve(cache, x0, cfg);
  CHECK(rep.mu_zero_warning);
}

TEST_CASE("picard increments settle monotonically") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x0 = coons_start(make_annulus(), cache);
  SolverConfig cfg;
  cfg.method = Method::Picard;
  cfg.mu = 1e-2;
  auto [x, rep] = picard_solve(cache, x0, cfg);
  CHECK(rep.converged);
  for (std::size_t k = 4; k < rep.iters.size(); ++k)
    CHECK(rep.iters[k].increment <= rep.iters[k - 1].increment * (1.0 + 1e-9));
}

TEST_CASE("direct minimizer never raises the winslow value") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x0 = coons_start(make_skew(), cache);
  SolverConfig cfg;
  auto [x, rep] = direct_winslow(cache, x0, cfg);
  CHECK(rep.converged);
  const double L0 = winslow_value_and_gradient(cache, x0).first;
  const double L1 = winslow_value_and_gradient(cache, x).first;
  CHECK(L1 <= L0 * (1.0 + 1e-12));
}

TEST_CASE("direct minimizer rejects a folded start") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x0 = identity_map(sp);
  x0.coeffs.col(0) *= -1.0;  // mirror the map, detJ < 0 everywhere
  CHECK_THROWS_AS(direct_winslow(cache, x0, {}), Error);
}

TEST_CASE("newton fallback hands a stuck solve to picard") {
  const SpacePtr sp = make_space(8);
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x0 = coons_start(make_annulus(), cache);
  SolverConfig cfg;
  cfg.max_iters = 1;  // guarantee a newton failure
  cfg.fallback = true;
  auto [x, rep] = solve(cache, x0, cfg);
  CHECK(rep.used_fallback);
}

TEST_CASE("gmres matches a dense solve") {
  std::mt19937 rng(53);
  std::normal_distribution<double> N(0.0, 1.0);
  const int n = 30;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = N(rng) / (1.0 + 2.0 * std::abs(i - j));
  A += 10.0 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) b[i] = N(rng);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const int iters = gmres([&](const Eigen::VectorXd& v) { return (A * v).eval(); },
                          b, x, 1e-10, n);
  CHECK(iters > 0);
  CHECK((A * x - b).norm() <= 1e-8 * b.norm());
}
