#pragma once

// Eigensolution analysis of one-dimensional linear advection u_t + a u_x = 0
// discretised by CG (optionally with SVV) and by upwind DG, for wave-like
// solutions u ~ exp(i (kappa x - omega t)). Lengths are in units of the
// element size h and times in units of h / a.
//
// Temporal analysis: real kappa, complex omega from the Bloch-periodic
// one-element operator. Spatial analysis: real omega, complex kappa from the
// inter-element transfer relation after static condensation.

#include <complex>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hoflow/svv.hpp"

namespace hoflow::esa {

using cplx = std::complex<double>;

enum class Analysis { Temporal, Spatial };
enum class Label { Physical, Unphysical, Secondary };

std::string_view to_string(Label label);

struct Sample {
  double x = 0.0; // kappa h (temporal) or omega h / a (spatial)
  std::vector<cplx> values;
  std::vector<Label> labels;
  bool flagged = false; // ambiguous classification

  /// Value labelled physical (there is exactly one).
  cplx physical() const;
  /// Value labelled unphysical; spatial samples only.
  cplx unphysical() const;
};

struct Spectrum {
  Analysis analysis = Analysis::Temporal;
  int order = 0;
  std::string kernel = "none";
  double pe_star = 0.0;
  bool upwind = false;
  std::vector<Sample> samples;

  /// Rows "sample,Re,Im,label" for every value, or only those with `only`.
  void write_csv(std::ostream& out, std::optional<Label> only = std::nullopt) const;
  /// Writes <stem>_physical.csv, <stem>_unphysical.csv (spatial) and
  /// <stem>_secondary.csv next to each other.
  std::vector<std::filesystem::path> write_csv_files(const std::filesystem::path& stem) const;
};

/// CG discretisation settings: order P, optional SVV kernel with reference
/// Peclet number, and GLL points per element (0 selects the SVV default).
struct CgScheme {
  int order = 1;
  std::optional<svv::Kernel> kernel;
  double pe_star = 1.0;
  int quadrature = 0;
};

std::vector<double> linspace(double lo, double hi, int n, bool include_lo = true);

/// Samples are independent and evaluated on up to `threads` workers.
Spectrum temporal_esa(const CgScheme& scheme, const std::vector<double>& kappa_h, int threads = 1);
Spectrum spatial_esa(const CgScheme& scheme, const std::vector<double>& omega_h);
Spectrum dg_upwind_reference(int order, const std::vector<double>& kappa_h);

/// min over samples of -Im(kappa_u): damping of the reflected mode.
double reflected_margin(const Spectrum& spatial);

struct KernelOptimizeOptions {
  double c_min = 0.1;
  double match_fraction = 0.8; // kappa h matched over (0, match_fraction * P pi]
  int match_samples = 60;
  int omega_samples = 40;      // omega h / a in (0, P pi]
  int max_evaluations = 2000;
  double initial_value = 0.05;
  double initial_step = 0.1;
  unsigned seed = 0;
  /// Replace the DG diffusion target by CG without SVV (sanity limit).
  bool target_cg_without_svv = false;
};

struct KernelOptimizeResult {
  svv::Kernel kernel;
  double objective = 0.0;           // mean squared diffusion mismatch
  double relative_mismatch = 0.0;   // ||Im w_cg - Im w_dg|| / ||Im w_dg||
  double margin = 0.0;              // reflected_margin at the optimum
  int evaluations = 0;
  std::vector<double> history;      // best objective after each simplex iteration
};

/// Fits kernel entries 1..P-1 (entry 0 fixed at 0, entry P at 1) so that the
/// CG-SVV physical-mode diffusion matches upwind DG of order P-1 (same
/// degrees of freedom per element), subject to reflected_margin >= c_min.
/// Nelder-Mead with box projection onto [0, 1]; deterministic for a seed.
/// Throws Infeasible with the best margin when the constraint cannot be met.
KernelOptimizeResult optimize_kernel(int order, const KernelOptimizeOptions& opts = {});

} // namespace hoflow::esa
