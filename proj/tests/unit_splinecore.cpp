#include <cmath>
#include <random>

#include "doctest.h"
#include "egg/splinecore.hpp"

using namespace egg;

TEST_CASE("cubic Bezier basis at the midpoint") {
  const KnotVector kv = uniform_knot_vector(3, 1, 2);
  const LocalBasisEval be = eval_basis(kv, 0.5, 0);
  REQUIRE(be.values.cols() == 4);
  const double expect[4] = {0.125, 0.375, 0.375, 0.125};
  for (int i = 0; i < 4; ++i)
    CHECK(be.values(0, i) == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("basis partition of unity and derivative sums") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int p = 1; p <= 4; ++p) {
    const KnotVector kv = uniform_knot_vector(p, 6, p - 1);
    for (int t = 0; t < 50; ++t) {
      const double xi = U(rng);
      const LocalBasisEval be = eval_basis(kv, xi, std::min(p, 2));
      CHECK(std::abs(be.values.row(0).sum() - 1.0) <= 1e-12);
      if (p >= 1) CHECK(std::abs(be.values.row(1).sum()) <= 1e-9);
    }
  }
}

TEST_CASE("span and element lookup at the right endpoint") {
  const KnotVector kv = uniform_knot_vector(2, 4, 1);
  CHECK(kv.numElements() == 4);
  CHECK(kv.findElement(0.0) == 0);
  CHECK(kv.findElement(1.0) == 3);
  CHECK(kv.findSpan(1.0) == kv.findSpan(1.0 - 1e-12));
}

TEST_CASE("dyadic refinement reproduces coarse splines") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const KnotVector coarse = uniform_knot_vector(3, 4, 2);
  const KnotVector fine = dyadic_refine(coarse);
  CHECK(fine.numElements() == 8);
  const Eigen::SparseMatrix<double> S = subdivision_matrix(coarse, fine);
  Eigen::VectorXd c(coarse.numBasis());
  for (int i = 0; i < c.size(); ++i) c[i] = U(rng);
  const Eigen::VectorXd cf = S * c;
  for (int k = 0; k <= 40; ++k) {
    const double xi = k / 40.0;
    CHECK(std::abs(eval_spline(coarse, c, xi) - eval_spline(fine, cf, xi)) <=
          1e-12);
  }
}

TEST_CASE("Bezier extraction operators are stochastic matrices") {
  const KnotVector kv = uniform_knot_vector(3, 5, 2);
  const auto ops = bezier_extraction(kv);
  REQUIRE(static_cast<int>(ops.size()) == kv.numElements());
  for (const auto& E : ops) {
    CHECK(E.rows() == 4);
    CHECK(E.cols() == 4);
    CHECK(E.minCoeff() >= -1e-14);
    for (int r = 0; r < E.rows(); ++r)
      CHECK(std::abs(E.row(r).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("Greville abscissae count and range") {
  const KnotVector kv = uniform_knot_vector(3, 6, 2);
  const auto g = greville_points(kv);
  REQUIRE(static_cast<int>(g.size()) == kv.numBasis());
  CHECK(g.front() == doctest::Approx(0.0));
  CHECK(g.back() == doctest::Approx(1.0));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}

TEST_CASE("Gauss rule integrates polynomials of degree 2q-1 exactly") {
  for (int q = 1; q <= 6; ++q) {
    std::vector<double> pts, wts;
    gauss_legendre(q, pts, wts);
    REQUIRE(static_cast<int>(pts.size()) == q);
    for (int d = 0; d <= 2 * q - 1; ++d) {
      double s = 0.0;
      for (int k = 0; k < q; ++k) s += wts[k] * std::pow(pts[k], d);
      CHECK(std::abs(s - 1.0 / (d + 1)) <= 1e-13);
    }
  }
}

TEST_CASE("knot vector construction respects regularity") {
  const KnotVector kv = make_knot_vector(3, {0.0, 0.25, 0.5, 1.0}, {2, 0});
  // multiplicity p - regularity at each interior breakpoint: 1 and 3
  int m25 = 0, m50 = 0;
  for (double k : kv.knots) {
    if (k == 0.25) ++m25;
    if (k == 0.5) ++m50;
  }
  CHECK(m25 == 1);
  CHECK(m50 == 3);
  kv.validate();
}

TEST_CASE("invalid knot vectors are rejected") {
  KnotVector kv = uniform_knot_vector(2, 3, 1);
  kv.knots[2] = 0.9;  // breaks the open clamping
  CHECK_THROWS_AS(kv.validate(), Error);
}
