#include "egg/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace egg {

using nlohmann::json;

Eigen::Vector2d SideCurve::value(double t) const {
  return Eigen::Vector2d(eval_spline(kv, cps.col(0), t, 0),
                         eval_spline(kv, cps.col(1), t, 0));
}

Eigen::Vector2d SideCurve::tangent(double t) const {
  return Eigen::Vector2d(eval_spline(kv, cps.col(0), t, 1),
                         eval_spline(kv, cps.col(1), t, 1));
}

void BoundaryData::validate(double tol) const {
  struct Corner {
    const char* name;
    Eigen::Vector2d a, b;
  };
  const Corner corners[4] = {
      {"south-west", south.value(0.0), west.value(0.0)},
      {"south-east", south.value(1.0), east.value(0.0)},
      {"north-east", north.value(1.0), east.value(1.0)},
      {"north-west", north.value(0.0), west.value(1.0)}};
  for (const auto& c : corners)
    if ((c.a - c.b).norm() > tol) {
      std::ostringstream os;
      os << "boundary corner mismatch at " << c.name << ": ("
         << c.a.transpose() << ") vs (" << c.b.transpose() << ")";
      throw Error(os.str());
    }
  for (const SideCurve* sc : {&south, &east, &north, &west}) {
    sc->kv.validate();
    if (sc->cps.rows() != sc->kv.numBasis())
      throw Error("side curve: control point count does not match knot vector");
  }
}

std::function<Eigen::Vector2d(double, double)> boundary_trace(const BoundaryData& b) {
  return [b](double xi, double eta) -> Eigen::Vector2d {
    if (eta == 0.0) return b.south.value(xi);
    if (eta == 1.0) return b.north.value(xi);
    if (xi == 0.0) return b.west.value(eta);
    if (xi == 1.0) return b.east.value(eta);
    throw Error("boundary_trace evaluated at an interior point");
  };
}

std::function<Eigen::Vector2d(double, double)> coons_field(const BoundaryData& b) {
  const Eigen::Vector2d p00 = b.south.value(0.0), p10 = b.south.value(1.0);
  const Eigen::Vector2d p01 = b.north.value(0.0), p11 = b.north.value(1.0);
  return [b, p00, p10, p01, p11](double xi, double eta) -> Eigen::Vector2d {
    return (1.0 - xi) * b.west.value(eta) + xi * b.east.value(eta) +
           (1.0 - eta) * b.south.value(xi) + eta * b.north.value(xi) -
           ((1.0 - xi) * (1.0 - eta) * p00 + xi * (1.0 - eta) * p10 +
            (1.0 - xi) * eta * p01 + xi * eta * p11);
  };
}

GeometryMap coons_patch(const BoundaryData& b, const QuadratureCache& cache) {
  b.validate();
  GeometryMap g = l2_project(cache, coons_field(b), Subspace::All);
  apply_dirichlet(cache, g, boundary_trace(b));
  return g;
}

SpacePtr build_initial_space(const BoundaryData& b, int n0, int p, int alpha,
                             double fit_tol, int max_levels) {
  b.validate();
  HierarchicalMesh mesh = uniform_mesh(n0);
  std::vector<double> gp, gw;
  gauss_legendre(p + 2, gp, gw);
  double worst = 0.0;
  for (;;) {
    auto space = std::make_shared<const ThbSpace>(build_thb_space(mesh, p, alpha));
    const QuadratureCache cache = build_quadrature(space);
    GeometryMap m;
    m.space = space;
    m.coeffs = Eigen::MatrixX2d::Zero(space->numDofs(), 2);
    apply_dirichlet(cache, m, boundary_trace(b));
    // per boundary edge: L2 distance of the projected trace to the side curve
    worst = 0.0;
    std::vector<std::pair<int, std::pair<int, int>>> marked;
    for (const auto& el : space->elements) {
      struct EdgeProbe {
        bool on;
        const SideCurve* curve;
        double t0, t1;
        bool horizontal;
        double fixed;
      };
      const EdgeProbe probes[4] = {
          {el.y0 == 0.0, &b.south, el.x0, el.x1, true, 0.0},
          {el.y1 == 1.0, &b.north, el.x0, el.x1, true, 1.0},
          {el.x0 == 0.0, &b.west, el.y0, el.y1, false, 0.0},
          {el.x1 == 1.0, &b.east, el.y0, el.y1, false, 1.0},
      };
      bool bad = false;
      for (const auto& pr : probes) {
        if (!pr.on) continue;
        const double h = pr.t1 - pr.t0;
        double err2 = 0.0;
        for (std::size_t k = 0; k < gp.size(); ++k) {
          const double t = pr.t0 + h * gp[k];
          const Eigen::Vector2d mv = pr.horizontal ? m.value(t, pr.fixed)
                                                   : m.value(pr.fixed, t);
          err2 += h * gw[k] * (mv - pr.curve->value(t)).squaredNorm();
        }
        const double err = std::sqrt(err2);
        worst = std::max(worst, err);
        if (err > fit_tol) bad = true;
      }
      if (bad) marked.push_back({el.level, {el.ex, el.ey}});
    }
    if (marked.empty()) return space;
    if (mesh.numLevels() >= max_levels)
      throw Error("build_initial_space: boundary fit tolerance " +
                  std::to_string(fit_tol) + " unreachable within " +
                  std::to_string(max_levels) + " levels; achieved " +
                  std::to_string(worst));
    mesh.refineElements(marked);
  }
}

SideCurve fit_curve(const std::function<Eigen::Vector2d(double)>& f, int p,
                    int n_elements) {
  SideCurve sc;
  sc.kv = uniform_knot_vector(p, n_elements, p - 1);
  const int n = sc.kv.numBasis();
  sc.cps.resize(n, 2);
  // endpoint-interpolating least squares: first and last control points are
  // pinned so adjacent sides meet exactly at the corners
  std::vector<double> gp, gw;
  gauss_legendre(p + 2, gp, gw);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
  const auto bps = sc.kv.breakpoints();
  for (std::size_t e = 0; e + 1 < bps.size(); ++e) {
    const double h = bps[e + 1] - bps[e];
    for (std::size_t k = 0; k < gp.size(); ++k) {
      const double t = bps[e] + h * gp[k];
      const double w = h * gw[k];
      const LocalBasisEval be = eval_basis(sc.kv, t, 0);
      const Eigen::Vector2d fv = f(t);
      for (int r = 0; r <= p; ++r) {
        const int gr = be.span - p + r;
        rhs.row(gr) += w * be.values(0, r) * fv.transpose();
        for (int s = 0; s <= p; ++s)
          M(gr, be.span - p + s) += w * be.values(0, r) * be.values(0, s);
      }
    }
  }
  const Eigen::Vector2d c0 = f(0.0), cn = f(1.0);
  Eigen::MatrixXd Mi = M.block(1, 1, n - 2, n - 2);
  Eigen::MatrixXd ri = rhs.block(1, 0, n - 2, 2);
  ri -= M.block(1, 0, n - 2, 1) * c0.transpose();
  ri -= M.block(1, n - 1, n - 2, 1) * cn.transpose();
  const Eigen::MatrixXd ci = Mi.ldlt().solve(ri);
  sc.cps.row(0) = c0.transpose();
  sc.cps.row(n - 1) = cn.transpose();
  sc.cps.block(1, 0, n - 2, 2) = ci;
  return sc;
}

namespace {

SideCurve line(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  SideCurve sc;
  sc.kv = uniform_knot_vector(1, 1, 0);
  sc.cps.resize(2, 2);
  sc.cps.row(0) = a.transpose();
  sc.cps.row(1) = b.transpose();
  return sc;
}

}  // namespace

BoundaryData make_square() {
  BoundaryData b;
  b.south = line({0, 0}, {1, 0});
  b.east = line({1, 0}, {1, 1});
  b.north = line({0, 1}, {1, 1});
  b.west = line({0, 0}, {0, 1});
  return b;
}

BoundaryData make_skew() {
  const Eigen::Vector2d p00(0.0, 0.0), p10(1.2, 0.1), p11(1.0, 1.1),
      p01(-0.2, 0.9);
  BoundaryData b;
  b.south = line(p00, p10);
  b.east = line(p10, p11);
  b.north = line(p01, p11);
  b.west = line(p00, p01);
  return b;
}

Eigen::Vector2d annulus_exact(double xi, double eta) {
  // xi radial, eta angular: this ordering keeps detJ > 0
  const double r = std::exp(xi * std::numbers::ln2);
  const double th = eta * std::numbers::pi / 2.0;
  return Eigen::Vector2d(r * std::cos(th), r * std::sin(th));
}

BoundaryData make_annulus(int n_fit) {
  BoundaryData b;
  b.south = fit_curve([](double t) { return annulus_exact(t, 0.0); }, 3, n_fit);
  b.north = fit_curve([](double t) { return annulus_exact(t, 1.0); }, 3, n_fit);
  b.west = fit_curve([](double t) { return annulus_exact(0.0, t); }, 3, n_fit);
  b.east = fit_curve([](double t) { return annulus_exact(1.0, t); }, 3, n_fit);
  return b;
}

namespace {

// C-shape: angular sweep of 3/2 pi with a small inner radius. The strong
// concavity of the inner arc makes under-resolved inversely harmonic maps
// fold near it.
constexpr double hs_r_in = 0.17;
constexpr double hs_r_out = 1.0;
constexpr double hs_sweep = 1.5 * std::numbers::pi;
// deep, narrow dent in the outer arc; coarse solves overshoot it and fold
constexpr double hs_dent_depth = 0.8;
constexpr double hs_dent_width = 0.045;

double hs_outer_radius(double t) {
  const double d = (t - 0.5) / hs_dent_width;
  return hs_r_out - hs_dent_depth * std::exp(-d * d);
}

Eigen::Vector2d horseshoe_point(double t, double r) {
  // clockwise sweep keeps the parameterization positively oriented
  const double th = hs_sweep / 2.0 - t * hs_sweep;
  return Eigen::Vector2d(r * std::cos(th), r * std::sin(th));
}

}  // namespace

BoundaryData make_horseshoe(int n_fit) {
  BoundaryData b;
  b.south = fit_curve([](double t) { return horseshoe_point(t, hs_r_in); }, 3, n_fit);
  b.north = fit_curve(
      [](double t) { return horseshoe_point(t, hs_outer_radius(t)); }, 3, n_fit);
  b.west = line(horseshoe_point(0.0, hs_r_in), horseshoe_point(0.0, hs_r_out));
  b.east = line(horseshoe_point(1.0, hs_r_in), horseshoe_point(1.0, hs_r_out));
  return b;
}

BoundaryData make_tube(int n_fit) {
  auto mid = [](double t) { return 0.35 * std::sin(2.0 * std::numbers::pi * t); };
  BoundaryData b;
  b.south = fit_curve(
      [mid](double t) { return Eigen::Vector2d(3.0 * t, mid(t)); }, 3, n_fit);
  b.north = fit_curve(
      [mid](double t) { return Eigen::Vector2d(3.0 * t, mid(t) + 1.0); }, 3, n_fit);
  b.west = line({0.0, 0.0}, {0.0, 1.0});
  b.east = line({3.0, 0.0}, {3.0, 1.0});
  return b;
}

namespace {

json side_to_json(const SideCurve& sc) {
  json j;
  j["degree"] = sc.kv.degree;
  j["knots"] = sc.kv.knots;
  auto& cps = j["cps"] = json::array();
  for (int i = 0; i < sc.cps.rows(); ++i)
    cps.push_back({sc.cps(i, 0), sc.cps(i, 1)});
  return j;
}

SideCurve side_from_json(const json& j, const std::string& path) {
  for (const auto& [key, val] : j.items())
    if (key != "degree" && key != "knots" && key != "cps")
      throw Error("unknown key " + path + "." + key);
  for (const char* key : {"degree", "knots", "cps"})
    if (!j.contains(key)) throw Error("missing key " + path + "." + key);
  SideCurve sc;
  if (!j["degree"].is_number_integer())
    throw Error(path + ".degree must be an integer");
  sc.kv.degree = j["degree"].get<int>();
  if (!j["knots"].is_array()) throw Error(path + ".knots must be an array");
  sc.kv.knots = j["knots"].get<std::vector<double>>();
  sc.kv.validate();
  if (!j["cps"].is_array()) throw Error(path + ".cps must be an array");
  const auto& cps = j["cps"];
  sc.cps.resize(static_cast<int>(cps.size()), 2);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (!cps[i].is_array() || cps[i].size() != 2)
      throw Error(path + ".cps[" + std::to_string(i) + "] must be [x, y]");
    sc.cps(static_cast<int>(i), 0) = cps[i][0].get<double>();
    sc.cps(static_cast<int>(i), 1) = cps[i][1].get<double>();
  }
  if (sc.cps.rows() != sc.kv.numBasis())
    throw Error(path + ": control point count does not match knot vector");
  return sc;
}

}  // namespace

BoundaryData load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open geometry file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("geometry file " + path + ": " + e.what());
  }
  for (const auto& [key, val] : j.items())
    if (key != "sides") throw Error("unknown key " + key);
  if (!j.contains("sides")) throw Error("missing key sides");
  const auto& sides = j["sides"];
  for (const auto& [key, val] : sides.items())
    if (key != "south" && key != "east" && key != "north" && key != "west")
      throw Error("unknown key sides." + key);
  BoundaryData b;
  for (const char* name : {"south", "east", "north", "west"})
    if (!sides.contains(name)) throw Error("missing key sides." + std::string(name));
  b.south = side_from_json(sides["south"], "sides.south");
  b.east = side_from_json(sides["east"], "sides.east");
  b.north = side_from_json(sides["north"], "sides.north");
  b.west = side_from_json(sides["west"], "sides.west");
  b.validate();
  return b;
}

void save_geometry(const std::string& path, const BoundaryData& b) {
  json j;
  j["sides"]["south"] = side_to_json(b.south);
  j["sides"]["east"] = side_to_json(b.east);
  j["sides"]["north"] = side_to_json(b.north);
  j["sides"]["west"] = side_to_json(b.west);
  std::ofstream out(path);
  if (!out) throw Error("cannot write geometry file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace egg
