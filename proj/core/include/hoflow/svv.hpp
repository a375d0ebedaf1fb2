#pragma once

// Spectral vanishing viscosity for continuous Galerkin discretisations on GLL
// nodal bases: kernels, the Peclet-scaled coefficient, modal filtering of
// gradients, and element / global operators evaluated with a common GLL rule.
//
// The SVV term nu div(Q * grad u) is applied by filtering the gradient in the
// Legendre basis: Q * grad u ~ R^-1 diag(Q_hat) R g, with R the nodal-to-modal
// transform of the order-P GLL basis.

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "hoflow/mesh.hpp"

namespace hoflow::svv {

struct Kernel {
  int order = 0;
  std::vector<double> entries; // Q_hat_0 .. Q_hat_P
  std::string provenance;      // "unit", "power-law(<P_svv>)", "dg-optimized"
  nlohmann::json generator_config = nlohmann::json::object();

  /// Throws InvalidArgument unless there are order + 1 entries in [0, 1].
  void validate() const;
};

Kernel unit_kernel(int order);
Kernel zero_kernel(int order);
/// Q_hat_p = (p / P)^P_svv, with Q_hat_0 = 1 when P_svv = 0.
Kernel power_law_kernel(int order, double p_svv);

nlohmann::json to_json(const Kernel& k);
Kernel kernel_from_json(const nlohmann::json& j);
Kernel read_kernel(const std::filesystem::path& path);
void write_kernel(const std::filesystem::path& path, const Kernel& k);

/// Directory holding dg_P<P>.json: $HOFLOW_KERNEL_DIR if set, else the
/// bundled data/kernels directory.
std::filesystem::path default_kernel_dir();
/// DG-matching kernel for P in 2..10, loaded from `dir`, regenerated with the
/// default optimisation settings and written back when absent.
Kernel dg_kernel(int order, const std::filesystem::path& dir = default_kernel_dir());

struct SvvConfig {
  double pe_star = 1.0; // reference Peclet number
  double velocity = 1.0;
  double size = 1.0;
  int order = 1;
};

/// nu_svv = v h / (P Pe*).
double svv_coefficient(const SvvConfig& c);

/// R^-1 diag(Q_hat) R acting on nodal GLL coefficients.
Eigen::MatrixXd filter_matrix(const Kernel& k);
/// Filters the nodal coefficients of one gradient component.
Eigen::VectorXd apply_kernel(const Eigen::VectorXd& g, const Kernel& k);
/// Tensor-product coefficients g(i, j) (i along x, j along y) filtered along
/// one direction (0 = x, 1 = y).
Eigen::MatrixXd apply_kernel(const Eigen::MatrixXd& g, const Kernel& k, int direction);

/// ceil(3P/2 + 3/2) + 1 GLL points.
int default_quadrature_points(int order);
/// Throws InvalidArgument unless q >= order + 1.
void require_quadrature(int order, int q);

/// One-dimensional element matrices on [x0, x0 + h], GLL nodal basis of
/// order P, every term integrated with the same q-point GLL rule.
struct Element1D {
  int order = 0;
  int points = 0;
  double h = 1.0;
  Eigen::MatrixXd B;  // basis values at quadrature points
  Eigen::MatrixXd Bd; // physical derivatives at quadrature points
  Eigen::MatrixXd Dn; // nodal differentiation (physical)
  Eigen::VectorXd w;  // quadrature weights times h/2

  Element1D(int order, double h, int q);

  Eigen::MatrixXd mass() const;
  /// C(i, j) = int l_i l_j'.
  Eigen::MatrixXd convection() const;
  /// K(i, j) = int l_i' l_j'.
  Eigen::MatrixXd stiffness() const;
  /// Weak form of nu d/dx(Q * du/dx): -nu int l_i' [F Dn u].
  Eigen::MatrixXd svv(const Kernel& k, double nu) const;
  /// -int l_i u du/dx.
  Eigen::VectorXd burgers(const Eigen::VectorXd& u) const;
};

/// Continuous Galerkin grid on the vertex list, order P on every element.
/// Periodic grids identify the last vertex with the first.
struct Grid1D {
  std::vector<double> vertices;
  int order = 1;
  bool periodic = false;

  int num_elements() const { return static_cast<int>(vertices.size()) - 1; }
  int num_dofs() const { return num_elements() * order + (periodic ? 0 : 1); }
  int dof(int element, int local) const;
  double h(int element) const { return vertices[element + 1] - vertices[element]; }
  /// Physical coordinate of every degree of freedom.
  Eigen::VectorXd coordinates() const;

  static Grid1D uniform(double x0, double x1, int elements, int order, bool periodic = false);
};

Eigen::SparseMatrix<double> assemble_mass(const Grid1D& g, int q);
Eigen::SparseMatrix<double> assemble_convection(const Grid1D& g, int q);
Eigen::SparseMatrix<double> assemble_stiffness(const Grid1D& g, int q);
/// Global SVV operator with per-element nu from svv_coefficient(pe_star,
/// velocity, h_e, P). Symmetric negative semidefinite for q >= P + 2.
Eigen::SparseMatrix<double> assemble_svv_operator(const Grid1D& g, const Kernel& k, double pe_star, double velocity,
                                                  int q);
Eigen::VectorXd assemble_burgers(const Grid1D& g, const Eigen::VectorXd& u, int q);

/// Mass matrix of a (possibly curved) 2D mesh element in its Lagrange basis,
/// integrated with a q-point GLL rule per direction.
Eigen::MatrixXd element_mass_matrix(const mesh::Mesh& m, int element, int q);

} // namespace hoflow::svv
