#pragma once

// One-dimensional polynomial machinery: Legendre polynomials, Gauss-Lobatto-
// Legendre quadrature, Lagrange cardinal functions, and the nodal <-> modal
// (Legendre hierarchical) transform. Multi-dimensional rules are tensor
// products assembled by callers.

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hoflow::basis {

/// Legendre polynomial L_n(x) by the three-term recurrence.
double legendre(int n, double x);
/// dL_n/dx.
double legendre_derivative(int n, double x);

struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;

  int count() const { return static_cast<int>(points.size()); }
  /// Highest polynomial degree integrated exactly (2Q - 3 for GLL).
  int exactness_degree() const { return 2 * count() - 3; }

  template <class F> double integrate(F&& f) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) sum += weights[i] * f(points[i]);
    return sum;
  }
};

/// Gauss-Lobatto-Legendre rule with q points on [-1, 1]; q >= 2.
QuadratureRule gll_rule(int q);

/// Smallest GLL point count whose exactness degree 2Q-3 covers `degree`.
int min_points_for_degree(int degree);

/// Real-valued dealiasing bound on Q for integrands [u]^power with u of
/// order P (power in {2,3,4}): P + 3/2, 3P/2 + 3/2, 2P + 3/2.
double dealiasing_bound(int order, int power);

/// Minimum GLL point count for integrands [u]^power, u of order P.
int dealiasing_points(int order, int power);

/// Point-count rule indexed by nonlinearity degree m:
///   m = 1 -> (P + 3)/2      (integrand of order P)
///   m = 2 -> 3P/2 + 3/2     (cubic products, order 3P)
///   m = 3 -> 2P + 3/2       (quartic products, order 4P)
/// rounded up to the next integer.
int min_quadrature_points(int order, int nonlinearity);

enum class BasisKind { NodalGll, NodalEquispaced, Legendre };

/// Order-P one-dimensional basis. Nodal kinds are Lagrange cardinal functions
/// on their node set; the Legendre kind is the orthogonal hierarchical basis.
class Basis {
public:
  static Basis nodal_gll(int order);
  static Basis nodal_equispaced(int order);
  static Basis legendre(int order);

  int order() const { return order_; }
  int size() const { return order_ + 1; }
  BasisKind kind() const { return kind_; }
  const std::vector<double>& nodes() const { return nodes_; }

  double eval(int k, double xi) const;
  double derivative(int k, double xi) const;

private:
  Basis(int order, BasisKind kind, std::vector<double> nodes);

  int order_;
  BasisKind kind_;
  std::vector<double> nodes_;
};

/// Value of cardinal function k of a nodal basis at xi in [-1, 1].
double lagrange_eval(const Basis& basis, int k, double xi);

/// Interpolation matrix B(i, j) = l_j(points[i]) for the Lagrange basis on `nodes`.
Eigen::MatrixXd interpolation_matrix(std::span<const double> nodes,
                                     std::span<const double> points);
/// Derivative matrix D(i, j) = l_j'(points[i]).
Eigen::MatrixXd differentiation_matrix(std::span<const double> nodes,
                                       std::span<const double> points);

/// Maps nodal coefficients on the order-P GLL nodes to Legendre coefficients.
struct ModalTransform {
  int order = 0;
  Eigen::MatrixXd forward; // R: nodal -> modal
  Eigen::MatrixXd inverse; // R^-1: modal -> nodal (Legendre Vandermonde)
};

ModalTransform modal_transform(int order);

} // namespace hoflow::basis
