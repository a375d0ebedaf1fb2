#include "hoflow/polybasis.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hoflow/error.hpp"

namespace hoflow::basis {

namespace {

// Returns (L_n(x), L_n'(x)).
std::pair<double, double> legendre_pair(int n, double x) {
  if (n == 0) return {1.0, 0.0};
  double p0 = 1.0, p1 = x;
  double d0 = 0.0, d1 = 1.0;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    const double d2 = d0 + (2.0 * k - 1.0) * p1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
  }
  return {p1, d1};
}

// Product-form cardinal function and derivative; fine for the orders used here.
double cardinal(const std::vector<double>& nodes, int k, double x) {
  double v = 1.0;
  for (int j = 0; j < static_cast<int>(nodes.size()); ++j)
    if (j != k) v *= (x - nodes[j]) / (nodes[k] - nodes[j]);
  return v;
}

double cardinal_derivative(const std::vector<double>& nodes, int k, double x) {
  const int n = static_cast<int>(nodes.size());
  double sum = 0.0;
  for (int m = 0; m < n; ++m) {
    if (m == k) continue;
    double term = 1.0 / (nodes[k] - nodes[m]);
    for (int j = 0; j < n; ++j)
      if (j != k && j != m) term *= (x - nodes[j]) / (nodes[k] - nodes[j]);
    sum += term;
  }
  return sum;
}

} // namespace

double legendre(int n, double x) { return legendre_pair(n, x).first; }

double legendre_derivative(int n, double x) { return legendre_pair(n, x).second; }

QuadratureRule gll_rule(int q) {
  if (q < 2) fail(ErrorKind::InvalidArgument, "gll_rule: need at least 2 points, got " + std::to_string(q));
  const int n = q - 1;
  QuadratureRule rule;
  rule.points.assign(q, 0.0);
  rule.weights.assign(q, 0.0);
  rule.points.front() = -1.0;
  rule.points.back() = 1.0;

  // Interior nodes are the roots of L_n'. Newton on L_n' from Chebyshev-Gauss-
  // Lobatto guesses; L_n'' from the Legendre ODE.
  for (int j = 1; j < n; ++j) {
    double x = -std::cos(std::numbers::pi * j / n);
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre_pair(n, x);
      const double ddp = (2.0 * x * dp - n * (n + 1.0) * p) / (1.0 - x * x);
      const double dx = dp / ddp;
      x -= dx;
      if (std::abs(dx) < 1e-14) break;
    }
    rule.points[j] = x;
  }
  for (int j = 0; j < q; ++j) {
    const double p = legendre(n, rule.points[j]);
    rule.weights[j] = 2.0 / (n * (n + 1.0) * p * p);
  }
  return rule;
}

int min_points_for_degree(int degree) {
  if (degree < 0) fail(ErrorKind::InvalidArgument, "min_points_for_degree: negative degree");
  // 2Q - 3 >= degree
  return std::max(2, (degree + 4) / 2);
}

double dealiasing_bound(int order, int power) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "dealiasing_bound: order must be >= 1");
  switch (power) {
  case 2: return order + 1.5;
  case 3: return 1.5 * order + 1.5;
  case 4: return 2.0 * order + 1.5;
  default:
    fail(ErrorKind::InvalidArgument, "dealiasing_bound: power must be 2, 3 or 4, got " + std::to_string(power));
  }
}

int dealiasing_points(int order, int power) {
  return static_cast<int>(std::ceil(dealiasing_bound(order, power)));
}

int min_quadrature_points(int order, int nonlinearity) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "min_quadrature_points: order must be >= 1");
  double bound = 0.0;
  switch (nonlinearity) {
  case 1: bound = (order + 3.0) / 2.0; break;
  case 2: bound = dealiasing_bound(order, 3); break;
  case 3: bound = dealiasing_bound(order, 4); break;
  default:
    fail(ErrorKind::InvalidArgument,
         "min_quadrature_points: nonlinearity degree must be 1, 2 or 3, got " + std::to_string(nonlinearity));
  }
  return std::max(2, static_cast<int>(std::ceil(bound)));
}

Basis::Basis(int order, BasisKind kind, std::vector<double> nodes)
    : order_(order), kind_(kind), nodes_(std::move(nodes)) {}

Basis Basis::nodal_gll(int order) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "Basis: order must be >= 1");
  return Basis(order, BasisKind::NodalGll, gll_rule(order + 1).points);
}

Basis Basis::nodal_equispaced(int order) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "Basis: order must be >= 1");
  std::vector<double> nodes(order + 1);
  for (int i = 0; i <= order; ++i) nodes[i] = -1.0 + 2.0 * i / order;
  return Basis(order, BasisKind::NodalEquispaced, std::move(nodes));
}

Basis Basis::legendre(int order) {
  if (order < 0) fail(ErrorKind::InvalidArgument, "Basis: order must be >= 0");
  return Basis(order, BasisKind::Legendre, {});
}

double Basis::eval(int k, double xi) const {
  if (k < 0 || k > order_)
    fail(ErrorKind::InvalidArgument, "Basis::eval: index " + std::to_string(k) + " out of range");
  if (kind_ == BasisKind::Legendre) return hoflow::basis::legendre(k, xi);
  return cardinal(nodes_, k, xi);
}

double Basis::derivative(int k, double xi) const {
  if (k < 0 || k > order_)
    fail(ErrorKind::InvalidArgument, "Basis::derivative: index " + std::to_string(k) + " out of range");
  if (kind_ == BasisKind::Legendre) return legendre_derivative(k, xi);
  return cardinal_derivative(nodes_, k, xi);
}

double lagrange_eval(const Basis& basis, int k, double xi) {
  if (basis.kind() == BasisKind::Legendre)
    fail(ErrorKind::InvalidArgument, "lagrange_eval: basis is not nodal");
  if (xi < -1.0 - 1e-12 || xi > 1.0 + 1e-12)
    fail(ErrorKind::DomainError, "lagrange_eval: xi outside [-1, 1]");
  return basis.eval(k, xi);
}

Eigen::MatrixXd interpolation_matrix(std::span<const double> nodes, std::span<const double> points) {
  const std::vector<double> n(nodes.begin(), nodes.end());
  Eigen::MatrixXd b(points.size(), nodes.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < nodes.size(); ++j) b(i, j) = cardinal(n, static_cast<int>(j), points[i]);
  return b;
}

Eigen::MatrixXd differentiation_matrix(std::span<const double> nodes, std::span<const double> points) {
  const std::vector<double> n(nodes.begin(), nodes.end());
  Eigen::MatrixXd d(points.size(), nodes.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < nodes.size(); ++j)
      d(i, j) = cardinal_derivative(n, static_cast<int>(j), points[i]);
  return d;
}

ModalTransform modal_transform(int order) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "modal_transform: order must be >= 1");
  const auto nodes = gll_rule(order + 1).points;
  Eigen::MatrixXd vandermonde(order + 1, order + 1);
  for (int i = 0; i <= order; ++i)
    for (int p = 0; p <= order; ++p) vandermonde(i, p) = legendre(p, nodes[i]);
  ModalTransform t;
  t.order = order;
  t.inverse = vandermonde;
  t.forward = vandermonde.inverse();
  return t;
}

} // namespace hoflow::basis
