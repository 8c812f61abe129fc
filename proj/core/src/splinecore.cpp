#include "egg/splinecore.hpp"

#include <algorithm>
#include <cmath>

namespace egg {

int KnotVector::numElements() const {
  int n = 0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    if (knots[i + 1] > knots[i]) ++n;
  return n;
}

std::vector<double> KnotVector::breakpoints() const {
  std::vector<double> b;
  for (double t : knots)
    if (b.empty() || t > b.back()) b.push_back(t);
  return b;
}

int KnotVector::findSpan(double xi) const {
  if (xi < 0.0 || xi > 1.0) throw Error("findSpan: xi outside [0,1]");
  const int n = numBasis();
  if (xi >= 1.0) {
    // last nonempty span
    int s = n;
    while (s > degree && knots[s] >= 1.0) --s;
    return s;
  }
  // binary search: knots[s] <= xi < knots[s+1]
  int lo = degree, hi = n;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (knots[mid] <= xi)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

int KnotVector::findElement(double xi) const {
  const auto b = breakpoints();
  if (xi >= 1.0) return static_cast<int>(b.size()) - 2;
  int lo = 0, hi = static_cast<int>(b.size()) - 2;
  while (lo < hi) {
    int mid = (lo + hi + 1) / 2;
    if (b[mid] <= xi)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

std::pair<int, int> KnotVector::supportElements(int i) const {
  const auto b = breakpoints();
  const double t0 = knots[i], t1 = knots[i + degree + 1];
  int first = -1, last = -1;
  for (int e = 0; e + 1 < static_cast<int>(b.size()); ++e) {
    if (b[e] >= t0 - 1e-14 && b[e + 1] <= t1 + 1e-14) {
      if (first < 0) first = e;
      last = e;
    }
  }
  return {first, last};
}

void KnotVector::validate() const {
  const int p = degree;
  if (p < 0) throw Error("KnotVector: negative degree");
  if (numBasis() < p + 1) throw Error("KnotVector: too few knots");
  for (std::size_t i = 0; i + 1 < knots.size(); ++i)
    if (knots[i + 1] < knots[i]) throw Error("KnotVector: knots not nondecreasing");
  for (int i = 0; i <= p; ++i) {
    if (knots[i] != 0.0) throw Error("KnotVector: not open at 0");
    if (knots[knots.size() - 1 - i] != 1.0) throw Error("KnotVector: not open at 1");
  }
  // interior multiplicities
  std::size_t i = p + 1;
  while (i + p + 1 < knots.size()) {
    if (knots[i] <= 0.0 || knots[i] >= 1.0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < knots.size() && knots[j] == knots[i]) ++j;
    const int mult = static_cast<int>(j - i);
    if (mult > p) throw Error("KnotVector: interior multiplicity exceeds degree");
    i = j;
  }
}

KnotVector make_knot_vector(int p, const std::vector<double>& breakpoints,
                            const std::vector<int>& regularity) {
  if (breakpoints.size() < 2 || breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
    throw Error("make_knot_vector: breakpoints must start at 0 and end at 1");
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
    if (breakpoints[i + 1] <= breakpoints[i])
      throw Error("make_knot_vector: breakpoints not increasing");
  if (regularity.size() != breakpoints.size() - 2)
    throw Error("make_knot_vector: need one regularity per interior breakpoint");
  KnotVector kv;
  kv.degree = p;
  kv.knots.assign(p + 1, 0.0);
  for (std::size_t i = 1; i + 1 < breakpoints.size(); ++i) {
    const int alpha = regularity[i - 1];
    if (alpha < 0 || alpha > p - 1)
      throw Error("make_knot_vector: regularity out of range [0, p-1]");
    kv.knots.insert(kv.knots.end(), p - alpha, breakpoints[i]);
  }
  kv.knots.insert(kv.knots.end(), p + 1, 1.0);
  kv.validate();
  return kv;
}

KnotVector uniform_knot_vector(int p, int n_elements, int alpha) {
  std::vector<double> b(n_elements + 1);
  for (int i = 0; i <= n_elements; ++i) b[i] = static_cast<double>(i) / n_elements;
  b.front() = 0.0;
  b.back() = 1.0;
  return make_knot_vector(p, b, std::vector<int>(std::max(0, n_elements - 1), alpha));
}

KnotVector dyadic_refine(const KnotVector& kv) {
  const auto b = kv.breakpoints();
  // multiplicity of interior breakpoints is uniform in our hierarchy use,
  // but handle the general case: keep each old multiplicity, give midpoints
  // the maximum interior multiplicity present (or p - p + 1 = 1 if none).
  std::vector<double> nb;
  std::vector<int> reg;
  const int p = kv.degree;
  auto mult_of = [&](double t) {
    return static_cast<int>(std::count(kv.knots.begin(), kv.knots.end(), t));
  };
  int interior_mult = 1;
  if (b.size() > 2) interior_mult = mult_of(b[1]);
  for (std::size_t e = 0; e + 1 < b.size(); ++e) {
    nb.push_back(b[e]);
    nb.push_back(0.5 * (b[e] + b[e + 1]));
  }
  nb.push_back(1.0);
  for (std::size_t i = 1; i + 1 < nb.size(); ++i) {
    const int m = (std::find(b.begin(), b.end(), nb[i]) != b.end() && nb[i] != 0.0 &&
                   nb[i] != 1.0)
                      ? mult_of(nb[i])
                      : interior_mult;
    reg.push_back(p - m);
  }
  return make_knot_vector(p, nb, reg);
}

LocalBasisEval eval_basis(const KnotVector& kv, double xi, int max_deriv) {
  if (xi < 0.0 || xi > 1.0) throw Error("eval_basis: xi outside [0,1]");
  if (max_deriv < 0 || max_deriv > 2) throw Error("eval_basis: max_deriv must be in [0,2]");
  const int p = kv.degree;
  const int span = kv.findSpan(xi);
  const auto& U = kv.knots;

  // Standard derivative algorithm (NURBS book A2.3).
  Eigen::MatrixXd ndu = Eigen::MatrixXd::Zero(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = xi - U[span + 1 - j];
    right[j] = U[span + j] - xi;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double temp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu(j, j) = saved;
  }

  LocalBasisEval out;
  out.span = span;
  out.values = Eigen::MatrixXd::Zero(max_deriv + 1, p + 1);
  for (int j = 0; j <= p; ++j) out.values(0, j) = ndu(j, p);

  const int n_der = std::min(max_deriv, p);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, p + 1);
  for (int r = 0; r <= p; ++r) {
    int s1 = 0, s2 = 1;
    a.setZero();
    a(0, 0) = 1.0;
    for (int k = 1; k <= n_der; ++k) {
      double d = 0.0;
      const int rk = r - k, pk = p - k;
      if (r >= k) {
        a(s2, 0) = a(s1, 0) / ndu(pk + 1, rk);
        d = a(s2, 0) * ndu(rk, pk);
      }
      const int j1 = (rk >= -1) ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a(s2, j) = (a(s1, j) - a(s1, j - 1)) / ndu(pk + 1, rk + j);
        d += a(s2, j) * ndu(rk + j, pk);
      }
      if (r <= pk) {
        a(s2, k) = -a(s1, k - 1) / ndu(pk + 1, r);
        d += a(s2, k) * ndu(r, pk);
      }
      out.values(k, r) = d;
      std::swap(s1, s2);
    }
  }
  double r = p;
  for (int k = 1; k <= n_der; ++k) {
    for (int j = 0; j <= p; ++j) out.values(k, j) *= r;
    r *= (p - k);
  }
  return out;
}

namespace {

// Single-knot insertion matrix (n+1) x n.
Eigen::SparseMatrix<double> insertion_matrix(const KnotVector& kv, double u) {
  const int p = kv.degree;
  const int n = kv.numBasis();
  const auto& t = kv.knots;
  const int k = kv.findSpan(u);
  Eigen::SparseMatrix<double> S(n + 1, n);
  std::vector<Eigen::Triplet<double>> trip;
  for (int i = 0; i <= n; ++i) {
    double a;
    if (i <= k - p)
      a = 1.0;
    else if (i <= k)
      a = (u - t[i]) / (t[i + p] - t[i]);
    else
      a = 0.0;
    if (a != 0.0) trip.emplace_back(i, i, a);
    if (a != 1.0 && i > 0) trip.emplace_back(i, i - 1, 1.0 - a);
  }
  S.setFromTriplets(trip.begin(), trip.end());
  return S;
}

}  // namespace

Eigen::SparseMatrix<double> subdivision_matrix(const KnotVector& coarse,
                                               const KnotVector& fine) {
  if (coarse.degree != fine.degree)
    throw Error("subdivision_matrix: degree mismatch");
  // knots to insert = fine multiset minus coarse multiset
  std::vector<double> to_insert;
  {
    std::size_t ci = 0;
    for (double t : fine.knots) {
      if (ci < coarse.knots.size() && coarse.knots[ci] == t)
        ++ci;
      else
        to_insert.push_back(t);
    }
    if (ci != coarse.knots.size())
      throw Error("subdivision_matrix: knot vectors not nested");
  }
  KnotVector work = coarse;
  Eigen::SparseMatrix<double> S(coarse.numBasis(), coarse.numBasis());
  S.setIdentity();
  for (double u : to_insert) {
    S = (insertion_matrix(work, u) * S).eval();
    work.knots.insert(
        std::upper_bound(work.knots.begin(), work.knots.end(), u), u);
  }
  return S;
}

std::vector<Eigen::MatrixXd> bezier_extraction(const KnotVector& kv) {
  kv.validate();
  const int p = kv.degree;
  const auto b = kv.breakpoints();
  std::vector<int> reg(b.size() > 2 ? b.size() - 2 : 0, 0);  // C0 target
  const KnotVector c0 = make_knot_vector(p, b, reg);
  const Eigen::SparseMatrix<double> S = subdivision_matrix(kv, c0);
  const Eigen::MatrixXd Sd(S);
  const int n_el = kv.numElements();
  std::vector<Eigen::MatrixXd> ops(n_el);
  for (int e = 0; e < n_el; ++e) {
    const double mid = 0.5 * (b[e] + b[e + 1]);
    const int span = kv.findSpan(mid);
    Eigen::MatrixXd E(p + 1, p + 1);
    for (int l = 0; l <= p; ++l)
      for (int r = 0; r <= p; ++r) E(l, r) = Sd(e * p + l, span - p + r);
    ops[e] = E;
  }
  return ops;
}

double eval_spline(const KnotVector& kv, const Eigen::VectorXd& coeffs,
                   double xi, int deriv) {
  const auto ev = eval_basis(kv, xi, deriv);
  double v = 0.0;
  for (int j = 0; j <= kv.degree; ++j)
    v += coeffs[ev.span - kv.degree + j] * ev.values(deriv, j);
  return v;
}

std::vector<double> greville_points(const KnotVector& kv) {
  const int p = kv.degree;
  std::vector<double> g(kv.numBasis());
  for (int i = 0; i < kv.numBasis(); ++i) {
    double s = 0.0;
    for (int j = 1; j <= p; ++j) s += kv.knots[i + j];
    g[i] = p > 0 ? s / p : 0.5 * (kv.knots[i] + kv.knots[i + 1]);
  }
  return g;
}

void gauss_legendre(int q, std::vector<double>& pts, std::vector<double>& wts) {
  // Golub-Welsch via symmetric tridiagonal eigensolve, mapped to [0,1].
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(q, q);
  for (int i = 1; i < q; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    T(i, i - 1) = T(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  pts.resize(q);
  wts.resize(q);
  for (int i = 0; i < q; ++i) {
    pts[i] = 0.5 * (es.eigenvalues()[i] + 1.0);
    const double v = es.eigenvectors()(0, i);
    wts[i] = v * v;  // weights on [-1,1] sum to 2; halved by the 1/2 scale
  }
}

}  // namespace egg
