#pragma once

// Variational high-order mesh optimisation. Each element is measured through
// the composite mapping grad(phi) = grad(phi_M) grad(phi_I)^-1, where phi_M is
// the curved isoparametric map and phi_I the straight-sided ideal map of the
// initial mesh. The energy sum_e int W(grad phi) det(grad phi_I) is reduced by
// Gauss-Seidel sweeps of node-wise Newton relaxation.

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hoflow/mesh.hpp"

namespace hoflow::variational {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

enum class EnergyKind { LinearElasticity, Hyperelastic, Winslow, Distortion };

std::string_view to_string(EnergyKind kind);
EnergyKind energy_kind_from_string(std::string_view name);

/// Strain energy density W(F) for 2x2 deformation gradients, with C = F^T F
/// and J_r = (J + sqrt(J^2 + 4 delta^2)) / 2 in place of J wherever J appears
/// in a denominator or logarithm.
///   linear elasticity  mu tr(E^2) + lambda/2 (tr E)^2,  E = (F + F^T)/2 - I
///   hyperelastic       mu/2 (tr C - 2) - mu ln J_r + lambda/2 (ln J_r)^2
///   winslow            tr C / J_r
///   distortion         tr C / (2 J_r)
struct EnergyFunctional {
  EnergyKind kind = EnergyKind::Winslow;
  double mu = 1.0;
  double lambda = 1.0;
  double delta = 1e-8;

  double regularized_jacobian(double J) const;
  double density(const Mat2& F) const;
  /// dW/dF flattened row-major (F00, F01, F10, F11).
  Vec4 gradient(const Mat2& F) const;
  Mat4 hessian(const Mat2& F) const;
};

/// Energy of one element against its own vertices as ideal element.
double element_energy(const mesh::Mesh& mesh, int element, const EnergyFunctional& w,
                      const basis::QuadratureRule& rule);
double element_energy(const mesh::Mesh& mesh, int element, const EnergyFunctional& w);

/// Default rule for energy integrals: GLL with 2P + 3 points.
basis::QuadratureRule energy_rule(int order);

struct OptimizeOptions {
  double tolerance = 1e-6; // on max |node displacement| per sweep / L
  int max_sweeps = 200;
  bool move_excluded = false;
  int newton_iterations = 50;
  double over_relaxation = 1.7; // 1 gives plain Gauss-Seidel
  /// Regularisation delta; <= 0 selects 1e-2 x min |J| over valid elements (floor 1e-8).
  double delta = 0.0;
};

/// Frozen ideal geometry and quadrature data for one mesh; node positions
/// change during optimisation but connectivity and ideal elements do not.
class Problem {
public:
  Problem(mesh::Mesh mesh, EnergyFunctional w, const OptimizeOptions& opts = {});

  const mesh::Mesh& mesh() const { return mesh_; }
  mesh::Mesh& mesh() { return mesh_; }
  const EnergyFunctional& functional() const { return w_; }
  const std::vector<bool>& free_mask() const { return free_; }
  bool is_free(int node) const { return free_[node]; }

  double element_energy(int element) const;
  double total_energy() const;
  /// Sum of the energies of the elements incident to `node`.
  double local_energy(int node) const;
  Vec2 gradient(int node) const;
  Mat2 hessian(int node) const;

  /// Local Newton iterations with Armijo backtracking, steepest descent when
  /// the local Hessian is not positive definite. Returns the accepted
  /// displacement; the local energy never increases. With omega != 1 the
  /// displacement is scaled by omega when that keeps the local energy at or
  /// below its starting value.
  Vec2 relax_node(int node, double omega = 1.0);

  /// Length of the mean edge incident to `node` in the ideal mesh.
  double local_length(int node) const { return local_length_[node]; }

private:
  struct QuadPoint {
    double weight;                                  // w_q det(grad phi_I)
    Eigen::Matrix<double, Eigen::Dynamic, 2> grads; // basis gradients in ideal coordinates
  };

  double energy_of(int element) const;
  void derivatives(int node, Vec2* gradient, Mat2* hessian) const;

  mesh::Mesh mesh_;
  EnergyFunctional w_;
  OptimizeOptions opts_;
  std::vector<std::vector<QuadPoint>> quad_;
  std::vector<std::vector<int>> incident_;
  std::vector<bool> free_;
  std::vector<double> local_length_;
};

/// 1e-2 x min |det grad phi| over quadrature points of valid elements, floored at 1e-8.
double default_delta(const mesh::Mesh& mesh);

struct SweepRecord {
  int sweep = 0;
  double energy = 0.0;
  double residual = 0.0;
  int invalid_count = 0;
};

struct OptimizeReport {
  bool converged = false;
  double characteristic_length = 0.0;
  double delta = 0.0;
  double initial_energy = 0.0;
  int initial_invalid = 0;
  std::vector<SweepRecord> sweeps;

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct OptimizeResult {
  mesh::Mesh mesh;
  OptimizeReport report;
};

/// Gauss-Seidel sweeps of relax_node over the free nodes in ascending index,
/// over-relaxed by opts.over_relaxation, until max displacement / L <
/// tolerance, L the bounding-box diagonal.
/// Boundary nodes are fixed; excluded-entity nodes are fixed unless
/// move_excluded is set.
OptimizeResult optimize(const mesh::Mesh& mesh, EnergyFunctional w, const OptimizeOptions& opts = {});

} // namespace hoflow::variational
