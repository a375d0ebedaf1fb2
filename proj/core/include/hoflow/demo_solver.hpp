#pragma once

// Continuous Galerkin solver for u_t + a u_x (+ u u_x) = nu lap(u) + SVV on
// structured 1D / 2D grids whose streamwise spacing jumps by a coarsening
// factor at an interface. Used to measure spurious reflections travelling
// upstream from the interface with and without SVV.
//
// 2D grids are tensor products of a streamwise and a crossflow Grid1D, so the
// global operators are Kronecker sums of 1D operators and the state is stored
// as a matrix u(ix, iy). In 1D the crossflow factor is the 1 x 1 identity.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hoflow/svv.hpp"

namespace hoflow::demo {

enum class KernelChoice { None, Dg, PowerLaw, Unit };

std::string_view to_string(KernelChoice k);
KernelChoice kernel_choice_from_string(std::string_view name);

/// Inflow u(0, y, t) = ramp(t) amplitude / n sum_i sin(phi_i - k_i a t) cos(m_i pi y / W)
/// with k_i equispaced in [min_fraction, max_fraction] of the upstream DoF
/// Nyquist wavenumber P pi / h, phases drawn from `seed`, and m_i = i mod 3 in
/// 2D (m_i = 0 in 1D).
struct InflowSignal {
  int components = 8;
  double min_fraction = 0.02;
  double max_fraction = 0.4;
  double amplitude = 1.0;
  double ramp_time = 4.0; // sin^2 start-up ramp length, in h / a
  unsigned seed = 1;
};

struct CaseConfig {
  int dimension = 1;
  double upstream_length = 10.0;
  double downstream_length = 32.0;
  double width = 11.0; // crossflow extent (2D)
  double h = 1.0;      // upstream cell size
  double coarsening = 4.0;
  int order = 4;
  KernelChoice kernel = KernelChoice::Dg;
  double power_law_exponent = 2.0;
  double pe_star = 1.0;
  double viscosity = 0.0;
  double velocity = 1.0;
  bool burgers = false;
  bool periodic = false; // 1D only; no inflow
  InflowSignal inflow;
  double cfl = 0.5;      // fraction of cfl_limit, in (0, 1]
  double end_time = 2.0; // in convective units t_c = length / velocity
  int quadrature = 0;    // GLL points per direction; 0 selects the SVV default

  void validate() const;
};

struct Case {
  CaseConfig config;
  svv::Grid1D x;
  svv::Grid1D y; // single unit element in 1D
  int upstream_elements = 0;
  bool has_interface = false;
  double interface_x = 0.0;
  int quadrature = 0;
  std::optional<svv::Kernel> kernel;
  double t_c = 1.0; // length / velocity

  Eigen::SparseMatrix<double> Mx, Lx, My, Ly;

  int nx() const { return x.num_dofs(); }
  int ny() const { return config.dimension == 2 ? y.num_dofs() : 1; }
  bool has_inflow() const { return !config.periodic; }
  /// Inflow value and time derivative at the crossflow dofs.
  Eigen::VectorXd inflow(double t) const;
  Eigen::VectorXd inflow_rate(double t) const;
  double value_at(const Eigen::MatrixXd& u, double px, double py = 0.0) const;

  struct Waves {
    std::vector<double> k, phase;
    std::vector<int> crossflow_mode;
  } waves;

  struct Factors; // mass factorisations, built by build_case
  std::shared_ptr<const Factors> factors;
};

/// Builds grids, operators and the inflow signal. Lengths that are not a
/// multiple of the local spacing are rounded to the nearest element count and
/// a warning is appended.
Case build_case(const CaseConfig& config, std::vector<std::string>* warnings = nullptr);

/// 0.5 h_min / (a P^2).
double cfl_limit(const Case& c);

struct DiagnosticRow {
  double time = 0.0;
  double energy = 0.0; // u^T M u
  double max_abs = 0.0;
  double reflection = 0.0;
};

struct SolverState {
  double time = 0.0;
  Eigen::MatrixXd u; // nx x ny
  std::vector<DiagnosticRow> diagnostics;
};

/// Zero field with the inflow value imposed (or `initial` sampled at the dofs).
SolverState initial_state(const Case& c);
SolverState initial_state(const Case& c, double (*initial)(double x, double y));

/// du/dt = M^-1 (L u + N(u)) with the inflow rows prescribed.
Eigen::MatrixXd rate(const Case& c, const Eigen::MatrixXd& u, double t);

/// One SSP-RK3 step. Throws InvalidArgument when dt exceeds cfl_limit and
/// Divergence when the new state is not finite.
void step(const Case& c, SolverState& s, double dt);

/// Fraction of upstream L2 energy held by the top ceil((P+1)/3) Legendre
/// modes (in 2D, modes (p, q) with max(p, q) in that band); 0 when the
/// upstream region carries no energy.
double reflection_metric(const Case& c, const Eigen::MatrixXd& u);

DiagnosticRow diagnose(const Case& c, const SolverState& s);

struct RunOptions {
  int samples = 400;          // diagnostic rows over the run
  double average_from = -1.0; // default: one convective time t_c
  std::optional<std::filesystem::path> snapshot_dir;
  int snapshots = 0;
};

struct RunResult {
  SolverState state;
  bool diverged = false;
  std::string message;
  int steps = 0;
  double dt = 0.0;
  double mean_reflection = 0.0; // over rows with time >= average_from
};

RunResult run(const Case& c, const RunOptions& opts = {});

/// Mean reflection over diagnostic rows with t0 <= time <= t1.
double mean_reflection(const std::vector<DiagnosticRow>& rows, double t0, double t1);

void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticRow>& rows);
void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticRow>& rows);

/// Writes the field in the mesh file format: order-P quadrilaterals covering
/// the domain with the solution stored as the z coordinate of every node.
void write_snapshot(const std::filesystem::path& path, const Case& c, const SolverState& s);

struct RampStage {
  double value = 0.0;
  double hold = 0.0;
};

/// start, start * factor, ... capped at target, each held for `hold`.
std::vector<RampStage> ramp_schedule(double start, double target, double factor = 10.0, double hold = 2.0);

} // namespace hoflow::demo
