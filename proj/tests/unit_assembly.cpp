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

TEST_CASE("residual of the identity on the square is zero") {
  const SpacePtr sp = make_space(6);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap id = identity_map(sp);
  const Eigen::VectorXd F = residual_F(cache, id, {});
  CHECK(F.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("hand linearization matches finite differences") {
  std::mt19937 rng(31);
  std::normal_distribution<double> N(0.0, 1.0);
  const BoundaryData geoms[3] = {make_square(), make_skew(), make_annulus()};
  for (const auto& b : geoms) {
    const SpacePtr sp = make_space(4);
    const QuadratureCache cache = build_quadrature(sp);
    const GeometryMap x = coons_start(b, cache);
    const InteriorMap im(*sp);
    for (int t = 0; t < 10; ++t) {
      Eigen::VectorXd v(2 * im.ni());
      for (int i = 0; i < v.size(); ++i) v[i] = N(rng);
      v /= v.norm();
      const Eigen::VectorXd ge = gateaux_exact(cache, x, {}, v);
      const Eigen::VectorXd gf = gateaux_fd(cache, x, {}, v, 1e-7);
      CHECK((ge - gf).norm() <= 1e-5 * (1.0 + ge.norm()));
    }
  }
}

TEST_CASE("jacobian columns are directional derivatives") {
  const SpacePtr sp = make_space(3);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x = coons_start(make_annulus(), cache);
  const InteriorMap im(*sp);
  const Eigen::SparseMatrix<double> K = jacobian_F(cache, x, {});
  for (int col : {0, im.ni(), 2 * im.ni() - 1}) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2 * im.ni());
    e[col] = 1.0;
    const Eigen::VectorXd ge = gateaux_exact(cache, x, {}, e);
    CHECK((Eigen::VectorXd(K * e) - ge).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("winslow gradient matches central differences") {
  std::mt19937 rng(37);
  std::normal_distribution<double> N(0.0, 1.0);
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x = coons_start(make_annulus(), cache);
  const InteriorMap im(*sp);
  auto [L, g] = winslow_value_and_gradient(cache, x);
  CHECK(L > 0.0);
  const double h = 1e-6;
  for (int t = 0; t < 5; ++t) {
    Eigen::VectorXd v(2 * im.ni());
    for (int i = 0; i < v.size(); ++i) v[i] = N(rng);
    v /= v.norm();
    auto perturb = [&](double s) {
      GeometryMap xp = x;
      for (int k = 0; k < im.ni(); ++k) {
        xp.coeffs(im.dofs[k], 0) += s * v[k];
        xp.coeffs(im.dofs[k], 1) += s * v[im.ni() + k];
      }
      return winslow_value_and_gradient(cache, xp).first;
    };
    const double fd = (perturb(h) - perturb(-h)) / (2.0 * h);
    CHECK(std::abs(fd - g.dot(v)) <= 1e-6 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("winslow hessian matches gradient differences") {
  const SpacePtr sp = make_space(3);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x = coons_start(make_annulus(), cache);
  const InteriorMap im(*sp);
  const Eigen::SparseMatrix<double> H = winslow_hessian(cache, x);
  const double h = 1e-6;
  std::mt19937 rng(41);
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::VectorXd v(2 * im.ni());
  for (int i = 0; i < v.size(); ++i) v[i] = N(rng);
  v /= v.norm();
  auto grad_at = [&](double s) {
    GeometryMap xp = x;
    for (int k = 0; k < im.ni(); ++k) {
      xp.coeffs(im.dofs[k], 0) += s * v[k];
      xp.coeffs(im.dofs[k], 1) += s * v[im.ni() + k];
    }
    return winslow_value_and_gradient(cache, xp).second;
  };
  const Eigen::VectorXd fd = (grad_at(h) - grad_at(-h)) / (2.0 * h);
  CHECK((Eigen::VectorXd(H * v) - fd).norm() <= 1e-5 * (1.0 + fd.norm()));
}

TEST_CASE("picard system shares one scalar matrix between components") {
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  const GeometryMap x = coons_start(make_annulus(), cache);
  AssemblyOpts opts;
  opts.mu = 1e-2;
  const PicardSystem sys = picard_system(cache, x, opts);
  const InteriorMap im(*sp);
  CHECK(sys.M.rows() == im.ni());
  CHECK(sys.rhs.rows() == im.ni());
  CHECK(sys.rhs.cols() == 2);
}

TEST_CASE("projected exact annulus solution has a vanishing residual") {
  // the exact inversely harmonic map, sampled into richer and richer spaces,
  // leaves a residual that decays with the projection error
  double prev = -1.0;
  for (int n : {4, 8, 16}) {
    const SpacePtr sp = make_space(n);
    const QuadratureCache cache = build_quadrature(sp);
    GeometryMap x = l2_project(
        cache, [](double xi, double eta) { return annulus_exact(xi, eta); },
        Subspace::All);
    const double rn = residual_F(cache, x, {}).cwiseAbs().maxCoeff();
    if (prev > 0.0) CHECK(rn <= prev / 4.0);
    prev = rn;
  }
}

TEST_CASE("projection of a member function is exact") {
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const SpacePtr sp = make_space(4);
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x;
  x.space = sp;
  x.coeffs.resize(sp->numDofs(), 2);
  for (int i = 0; i < x.coeffs.rows(); ++i) x.coeffs.row(i) << U(rng), U(rng);
  const GeometryMap y = l2_project(
      cache, [&x](double xi, double eta) { return x.value(xi, eta); },
      Subspace::All);
  CHECK((x.coeffs - y.coeffs).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("dirichlet application never touches interior coefficients") {
  const SpacePtr sp = make_space(5);
  const QuadratureCache cache = build_quadrature(sp);
  GeometryMap x = identity_map(sp);
  const Eigen::MatrixX2d before = x.coeffs;
  apply_dirichlet(cache, x, boundary_trace(make_annulus()));
  const InteriorMap im(*sp);
  for (int k = 0; k < im.ni(); ++k)
    CHECK(x.coeffs.row(im.dofs[k]) == before.row(im.dofs[k]));
}
