#include "hoflow/eigenanalysis.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "hoflow/error.hpp"
#include "hoflow/parallel.hpp"
#include "hoflow/polybasis.hpp"

namespace hoflow::esa {

namespace {

using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
constexpr double pi = std::numbers::pi;
const cplx I(0.0, 1.0);

struct CgElement {
  Eigen::MatrixXd M, L;
  std::vector<double> nodes;
};

CgElement cg_element(const CgScheme& s) {
  if (s.order < 1) fail(ErrorKind::InvalidArgument, "CG analysis needs P >= 1");
  const int q = s.quadrature > 0 ? s.quadrature : svv::default_quadrature_points(s.order);
  const svv::Element1D el(s.order, 1.0, q);
  CgElement out{el.mass(), -el.convection(), basis::Basis::nodal_gll(s.order).nodes()};
  if (s.kernel) out.L += el.svv(*s.kernel, svv::svv_coefficient({s.pe_star, 1.0, 1.0, s.order}));
  return out;
}

std::string kernel_name(const CgScheme& s) { return s.kernel ? s.kernel->provenance : "none"; }

// Eigenvalues of A^-1 B with the index of the eigenvector best aligned with f
// in the weighted inner product given by `sample` (rows map eigenvectors to
// sampled values) and `weights`.
struct ModeSet {
  CVec omega;
  int physical = 0;
};

ModeSet solve_modes(const CMat& A, const CMat& B, const CMat& sample, const Eigen::VectorXd& weights, const CVec& f,
                    double kh) {
  Eigen::PartialPivLU<CMat> lu(A);
  const CMat op = lu.solve(B);
  Eigen::ComplexEigenSolver<CMat> es(op);
  if (es.info() != Eigen::Success) {
    const Eigen::JacobiSVD<CMat> svd(A);
    const auto sv = svd.singularValues();
    fail(ErrorKind::NumericalError, "eigensolver failed at kappa h = " + std::to_string(kh) +
                                        "; mass condition number " + std::to_string(sv[0] / sv[sv.size() - 1]));
  }
  ModeSet out;
  out.omega = I * es.eigenvalues();
  double best = -1.0;
  for (int m = 0; m < out.omega.size(); ++m) {
    const CVec v = sample * es.eigenvectors().col(m);
    const cplx dot = (f.conjugate().array() * weights.array().cast<cplx>() * v.array()).sum();
    const double nv = std::sqrt((weights.array() * v.array().abs2()).sum());
    const double nf = std::sqrt((weights.array() * f.array().abs2()).sum());
    const double align = std::abs(dot) / (nv * nf);
    if (align > best + 1e-12) {
      best = align;
      out.physical = m;
    }
  }
  return out;
}

Sample to_sample(double x, const ModeSet& modes) {
  Sample s;
  s.x = x;
  for (int m = 0; m < modes.omega.size(); ++m) {
    s.values.push_back(modes.omega[m]);
    s.labels.push_back(m == modes.physical ? Label::Physical : Label::Secondary);
  }
  return s;
}

// Roots of a z^2 + b z + c.
std::array<cplx, 2> quadratic_roots(cplx a, cplx b, cplx c) {
  if (std::abs(a) == 0.0) fail(ErrorKind::NumericalError, "spatial analysis: degenerate transfer relation");
  const cplx disc = std::sqrt(b * b - 4.0 * a * c);
  const cplx q = -0.5 * (std::real(std::conj(b) * disc) >= 0.0 ? b + disc : b - disc);
  if (std::abs(q) == 0.0) return {cplx(0.0), cplx(0.0)};
  return {q / a, c / q};
}

cplx wavenumber(cplx z) { return -I * std::log(z); }

double unwrap_near(double value, double reference) {
  return value + 2.0 * pi * std::round((reference - value) / (2.0 * pi));
}

} // namespace

std::string_view to_string(Label label) {
  switch (label) {
  case Label::Physical: return "physical";
  case Label::Unphysical: return "unphysical";
  case Label::Secondary: return "secondary";
  }
  return "unknown";
}

cplx Sample::physical() const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == Label::Physical) return values[i];
  fail(ErrorKind::NumericalError, "sample has no physical mode");
}

cplx Sample::unphysical() const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == Label::Unphysical) return values[i];
  fail(ErrorKind::NumericalError, "sample has no unphysical mode");
}

void Spectrum::write_csv(std::ostream& out, std::optional<Label> only) const {
  out << "sample,Re,Im,label\n";
  out.precision(17);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < s.values.size(); ++i)
      if (!only || s.labels[i] == *only)
        out << s.x << ',' << s.values[i].real() << ',' << s.values[i].imag() << ',' << to_string(s.labels[i]) << '\n';
}

std::vector<std::filesystem::path> Spectrum::write_csv_files(const std::filesystem::path& stem) const {
  std::vector<std::filesystem::path> paths;
  std::vector<Label> families{Label::Physical, Label::Secondary};
  if (analysis == Analysis::Spatial) families = {Label::Physical, Label::Unphysical};
  for (Label l : families) {
    std::filesystem::path p = stem;
    p += "_" + std::string(to_string(l)) + ".csv";
    std::ofstream f(p);
    if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + p.string());
    write_csv(f, l);
    paths.push_back(p);
  }
  return paths;
}

std::vector<double> linspace(double lo, double hi, int n, bool include_lo) {
  std::vector<double> out;
  if (n < 1) return out;
  if (include_lo) {
    for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  } else {
    for (int i = 1; i <= n; ++i) out.push_back(lo + (hi - lo) * i / n);
  }
  return out;
}

Spectrum temporal_esa(const CgScheme& scheme, const std::vector<double>& kappa_h, int threads) {
  const CgElement el = cg_element(scheme);
  const int P = scheme.order;
  Spectrum out{Analysis::Temporal, P, kernel_name(scheme), scheme.kernel ? scheme.pe_star : 0.0, false, {}};
  const CMat sample = CMat::Identity(P, P);
  const Eigen::VectorXd weights = Eigen::VectorXd::Ones(P);
  out.samples.resize(kappa_h.size());
  parallel_for(static_cast<int>(kappa_h.size()), threads, [&](int s) {
    const double kh = kappa_h[s];
    const cplx z = std::exp(I * kh);
    CMat Mb = CMat::Zero(P, P), Lb = CMat::Zero(P, P);
    for (int i = 0; i <= P; ++i)
      for (int j = 0; j <= P; ++j) {
        const cplx f = (j == P ? z : 1.0) / (i == P ? z : 1.0);
        Mb(i % P, j % P) += el.M(i, j) * f;
        Lb(i % P, j % P) += el.L(i, j) * f;
      }
    CVec f(P);
    for (int j = 0; j < P; ++j) f[j] = std::exp(I * kh * 0.5 * (el.nodes[j] + 1.0));
    out.samples[s] = to_sample(kh, solve_modes(Mb, Lb, sample, weights, f, kh));
  });
  return out;
}

Spectrum dg_upwind_reference(int order, const std::vector<double>& kappa_h) {
  if (order < 0) fail(ErrorKind::InvalidArgument, "DG analysis needs P >= 0");
  const int n = order + 1;
  const auto rule = basis::gll_rule(std::max(order + 2, 2));
  const int q = rule.count();
  Eigen::MatrixXd Lq(q, n), Ld(q, n);
  for (int i = 0; i < q; ++i)
    for (int p = 0; p < n; ++p) {
      Lq(i, p) = basis::legendre(p, rule.points[i]);
      Ld(i, p) = 2.0 * basis::legendre_derivative(p, rule.points[i]);
    }
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(rule.weights.data(), q) * 0.5;
  const Eigen::MatrixXd M = Lq.transpose() * w.asDiagonal() * Lq;
  const Eigen::MatrixXd C = Lq.transpose() * w.asDiagonal() * Ld;
  Eigen::VectorXd left(n), right = Eigen::VectorXd::Ones(n);
  for (int p = 0; p < n; ++p) left[p] = p % 2 ? -1.0 : 1.0;

  Spectrum out{Analysis::Temporal, order, "none", 0.0, true, {}};
  for (double kh : kappa_h) {
    const cplx z = std::exp(I * kh);
    // Strong form with upwind flux: the left trace is replaced by the left
    // neighbour's right trace, z^-1 times this element's.
    const CMat A = (-C - left * left.transpose()).cast<cplx>() + (left * right.transpose()).cast<cplx>() / z;
    CVec f(q);
    for (int i = 0; i < q; ++i) f[i] = std::exp(I * kh * 0.5 * (rule.points[i] + 1.0));
    out.samples.push_back(to_sample(kh, solve_modes(M.cast<cplx>(), A, Lq.cast<cplx>(), w, f, kh)));
  }
  return out;
}

namespace {

// One-element Bloch operator: rows and columns of the last node fold onto
// the first with u(x + h) = z u(x).
CMat bloch(const Eigen::MatrixXcd& E, cplx z) {
  const int P = static_cast<int>(E.rows()) - 1;
  CMat A = CMat::Zero(P, P);
  for (int i = 0; i <= P; ++i)
    for (int j = 0; j <= P; ++j) A(i % P, j % P) += E(i, j) * (j == P ? z : 1.0) / (i == P ? z : 1.0);
  return A;
}

// det A(z) = c_-1 / z + c_0 + c_1 z because z enters one row and one column
// only; the coefficients are recovered from three evaluations on the unit
// circle and the two roots of c_1 z^2 + c_0 z + c_-1 returned.
std::array<cplx, 2> transfer_roots(const CgElement& el, double wh) {
  const CMat E = -I * wh * el.M.cast<cplx>() - el.L.cast<cplx>();
  std::array<cplx, 3> c{};
  for (int k = 0; k < 3; ++k) {
    const cplx zk = std::exp(I * (2.0 * pi * k / 3.0));
    const cplx d = bloch(E, zk).partialPivLu().determinant();
    for (int m = -1; m <= 1; ++m) c[m + 1] += d * std::pow(zk, -m) / 3.0;
  }
  return quadratic_roots(c[2], c[1], c[0]);
}

} // namespace

Spectrum spatial_esa(const CgScheme& scheme, const std::vector<double>& omega_h) {
  const CgElement el = cg_element(scheme);
  const int P = scheme.order;
  Spectrum out{Analysis::Spatial, P, kernel_name(scheme), scheme.kernel ? scheme.pe_star : 0.0, false, {}};
  bool have_prev = false;
  cplx prev_p, prev_u;
  double prev_kp = 0.0, prev_ku = 0.0;
  for (double wh : omega_h) {
    const auto z = transfer_roots(el, wh);
    int phys = 0;
    if (!have_prev || std::abs(prev_p - prev_u) < 1e-3) {
      // Group velocity of each root from a forward difference in omega; the
      // physical root travels closest to a.
      const double dw = 1e-6 * std::max(1.0, std::abs(wh));
      const auto zn = transfer_roots(el, wh + dw);
      const bool cross =
          std::abs(zn[1] - z[0]) + std::abs(zn[0] - z[1]) < std::abs(zn[0] - z[0]) + std::abs(zn[1] - z[1]);
      double vg[2];
      for (int r = 0; r < 2; ++r) vg[r] = 1.0 / (wavenumber(zn[cross ? 1 - r : r] / z[r]) / dw).real();
      phys = std::abs(vg[0] - 1.0) <= std::abs(vg[1] - 1.0) ? 0 : 1;
    } else {
      const double keep = std::abs(z[0] - prev_p) + std::abs(z[1] - prev_u);
      const double swap = std::abs(z[1] - prev_p) + std::abs(z[0] - prev_u);
      phys = keep <= swap ? 0 : 1;
    }
    cplx kp = wavenumber(z[phys]), ku = wavenumber(z[1 - phys]);
    kp = {unwrap_near(kp.real(), have_prev ? prev_kp : wh), kp.imag()};
    if (have_prev) ku = {unwrap_near(ku.real(), prev_ku), ku.imag()};
    Sample s;
    s.x = wh;
    s.values = {kp, ku};
    s.labels = {Label::Physical, Label::Unphysical};
    s.flagged = std::abs(z[0] - z[1]) < 1e-8;
    out.samples.push_back(s);
    prev_p = z[phys];
    prev_u = z[1 - phys];
    prev_kp = kp.real();
    prev_ku = ku.real();
    have_prev = true;
  }
  return out;
}

double reflected_margin(const Spectrum& spatial) {
  if (spatial.analysis != Analysis::Spatial) fail(ErrorKind::InvalidArgument, "reflected_margin needs a spatial spectrum");
  double m = std::numeric_limits<double>::infinity();
  for (const auto& s : spatial.samples) m = std::min(m, -s.unphysical().imag());
  return m;
}

// ---------------------------------------------------------------------------

namespace {

// Nelder-Mead on the box [0, 1]^n with dimension-adaptive coefficients; every
// trial point is projected onto the box.
struct Simplex {
  std::vector<Eigen::VectorXd> x;
  std::vector<double> f;
};

template <class Objective>
Eigen::VectorXd nelder_mead(Objective&& fn, Eigen::VectorXd x0, double step, int max_evals, unsigned seed,
                            std::vector<double>& history, int& evals) {
  const int n = static_cast<int>(x0.size());
  const double expand = 1.0 + 2.0 / n;
  const double contract = 0.75 - 0.5 / n;
  const double shrink = 1.0 - 1.0 / n;
  auto clip = [](Eigen::VectorXd v) { return v.cwiseMax(0.0).cwiseMin(1.0).eval(); };
  auto eval = [&](const Eigen::VectorXd& v) {
    ++evals;
    return fn(v);
  };
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  Simplex s;
  x0 = clip(x0);
  s.x.push_back(x0);
  s.f.push_back(eval(x0));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd v = x0;
    v[i] += step * jitter(rng);
    if (v[i] > 1.0) v[i] = x0[i] - step;
    v = clip(v);
    s.x.push_back(v);
    s.f.push_back(eval(v));
  }
  std::vector<int> order(n + 1);
  while (evals < max_evals) {
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
    Simplex sorted;
    for (int i : order) {
      sorted.x.push_back(s.x[i]);
      sorted.f.push_back(s.f[i]);
    }
    s = std::move(sorted);
    history.push_back(s.f[0]);

    double size = 0.0;
    for (int i = 1; i <= n; ++i) size = std::max(size, (s.x[i] - s.x[0]).lpNorm<Eigen::Infinity>());
    if (size <= 1e-7 && s.f[n] - s.f[0] <= 1e-14 * (1.0 + std::abs(s.f[0]))) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += s.x[i];
    centroid /= n;
    const Eigen::VectorXd xr = clip(centroid + (centroid - s.x[n]));
    const double fr = eval(xr);
    if (fr < s.f[0]) {
      const Eigen::VectorXd xe = clip(centroid + expand * (centroid - s.x[n]));
      const double fe = eval(xe);
      if (fe < fr) {
        s.x[n] = xe;
        s.f[n] = fe;
      } else {
        s.x[n] = xr;
        s.f[n] = fr;
      }
      continue;
    }
    if (fr < s.f[n - 1]) {
      s.x[n] = xr;
      s.f[n] = fr;
      continue;
    }
    const bool outside = fr < s.f[n];
    const Eigen::VectorXd xc = clip(outside ? Eigen::VectorXd(centroid + contract * (xr - centroid))
                                            : Eigen::VectorXd(centroid + contract * (s.x[n] - centroid)));
    const double fc = eval(xc);
    if (fc < (outside ? fr : s.f[n])) {
      s.x[n] = xc;
      s.f[n] = fc;
      continue;
    }
    for (int i = 1; i <= n; ++i) {
      s.x[i] = clip(s.x[0] + shrink * (s.x[i] - s.x[0]));
      s.f[i] = eval(s.x[i]);
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (s.f[i] < s.f[best]) best = i;
  if (history.empty() || s.f[best] < history.back()) history.push_back(s.f[best]);
  return s.x[best];
}

// Restarts a fresh simplex at the incumbent until a restart stops improving.
template <class Objective>
Eigen::VectorXd nelder_mead_restarts(Objective&& fn, Eigen::VectorXd x, double step, int max_evals, unsigned seed,
                                     std::vector<double>& history, int& evals) {
  double best = std::numeric_limits<double>::infinity();
  for (unsigned round = 0; evals < max_evals; ++round) {
    x = nelder_mead(fn, x, step, max_evals, seed + round, history, evals);
    const double f = history.back();
    if (!(f < best - 1e-12 * (1.0 + std::abs(best)))) break;
    best = f;
  }
  return x;
}

} // namespace

KernelOptimizeResult optimize_kernel(int order, const KernelOptimizeOptions& opts) {
  if (order < 2 || order > 10) fail(ErrorKind::InvalidArgument, "optimize_kernel: P must be in 2..10");
  if (opts.match_samples < 1 || opts.omega_samples < 1 || opts.max_evaluations < order + 1 ||
      !(opts.match_fraction > 0.0 && opts.match_fraction <= 1.0))
    fail(ErrorKind::InvalidArgument, "optimize_kernel: invalid sampling or evaluation budget");
  const int P = order;
  const auto kh = linspace(0.0, opts.match_fraction * P * pi, opts.match_samples, false);
  const auto wh = linspace(0.0, P * pi, opts.omega_samples, false);

  std::vector<double> target(kh.size(), 0.0);
  if (opts.target_cg_without_svv) {
    const auto t = temporal_esa({P, std::nullopt, 1.0, 0}, kh);
    for (std::size_t i = 0; i < kh.size(); ++i) target[i] = t.samples[i].physical().imag();
  } else {
    const auto t = dg_upwind_reference(P - 1, kh);
    for (std::size_t i = 0; i < kh.size(); ++i) target[i] = t.samples[i].physical().imag();
  }

  auto kernel_of = [&](const Eigen::VectorXd& x) {
    svv::Kernel k;
    k.order = P;
    k.entries.assign(P + 1, 0.0);
    for (int p = 1; p < P; ++p) k.entries[p] = std::clamp(x[p - 1], 0.0, 1.0);
    k.entries[P] = 1.0;
    k.provenance = "dg-optimized";
    return k;
  };
  auto mismatch = [&](const svv::Kernel& k) {
    const auto t = temporal_esa({P, k, 1.0, 0}, kh);
    double sum = 0.0;
    for (std::size_t i = 0; i < kh.size(); ++i) sum += std::pow(t.samples[i].physical().imag() - target[i], 2);
    return sum / static_cast<double>(kh.size());
  };
  auto margin_of = [&](const svv::Kernel& k) { return reflected_margin(spatial_esa({P, k, 1.0, 0}, wh)); };
  auto objective = [&](const Eigen::VectorXd& x) {
    const svv::Kernel k = kernel_of(x);
    double f = mismatch(k);
    if (opts.c_min > 0.0) {
      const double m = margin_of(k);
      if (m < opts.c_min) f += 1e3 * (1.0 + (opts.c_min - m));
    }
    return f;
  };

  KernelOptimizeResult r;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(P - 1, opts.initial_value);
  const Eigen::VectorXd x =
      nelder_mead_restarts(objective, x0, opts.initial_step, opts.max_evaluations, opts.seed, r.history, r.evaluations);
  r.kernel = kernel_of(x);
  r.objective = mismatch(r.kernel);
  double ref_norm = 0.0;
  for (double t : target) ref_norm += t * t;
  ref_norm /= static_cast<double>(kh.size());
  r.relative_mismatch = ref_norm > 0.0 ? std::sqrt(r.objective / ref_norm) : std::sqrt(r.objective);
  r.margin = margin_of(r.kernel);
  r.kernel.generator_config = {
      {"reference", opts.target_cg_without_svv ? "cg-without-svv" : "upwind-dg-order-P-1"},
      {"c_min", opts.c_min},
      {"match_fraction", opts.match_fraction},
      {"match_samples", opts.match_samples},
      {"omega_samples", opts.omega_samples},
      {"max_evaluations", opts.max_evaluations},
      {"initial_value", opts.initial_value},
      {"initial_step", opts.initial_step},
      {"seed", opts.seed},
      {"pe_star", 1.0},
      {"objective", r.objective},
      {"relative_mismatch", r.relative_mismatch},
      {"margin", r.margin},
      {"evaluations", r.evaluations},
  };
  if (opts.c_min > 0.0 && r.margin < opts.c_min)
    fail(ErrorKind::Infeasible, "optimize_kernel: reflected-mode damping constraint not met; best margin " +
                                    std::to_string(r.margin) + " < c_min " + std::to_string(opts.c_min));
  return r;
}

} // namespace hoflow::esa
