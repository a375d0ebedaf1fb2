#include "hoflow/demo_solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/SparseCholesky>

#include "hoflow/error.hpp"
#include "hoflow/mesh.hpp"
#include "hoflow/polybasis.hpp"

namespace hoflow::demo {

namespace {

constexpr double pi = std::numbers::pi;

using Sparse = Eigen::SparseMatrix<double>;

int element_count(double length, double spacing, const char* what, std::vector<std::string>* warnings) {
  const int n = std::max(1, static_cast<int>(std::lround(length / spacing)));
  if (std::abs(n * spacing - length) > 1e-9 * std::max(1.0, length) && warnings)
    warnings->push_back(std::string(what) + " length " + std::to_string(length) + " adjusted to " +
                        std::to_string(n * spacing) + " (" + std::to_string(n) + " elements)");
  return n;
}

template <class ElementMatrix>
Sparse assemble(const svv::Grid1D& g, ElementMatrix&& local) {
  std::vector<Eigen::Triplet<double>> t;
  for (int e = 0; e < g.num_elements(); ++e) {
    const Eigen::MatrixXd m = local(e);
    for (int i = 0; i <= g.order; ++i)
      for (int j = 0; j <= g.order; ++j) t.emplace_back(g.dof(e, i), g.dof(e, j), m(i, j));
  }
  Sparse out(g.num_dofs(), g.num_dofs());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// Diffusive and SVV part of one direction, plus -a C when `velocity` != 0.
Sparse linear_operator(const Case& c, const svv::Grid1D& g, double velocity) {
  const double speed = std::abs(c.config.velocity);
  return assemble(g, [&](int e) {
    const svv::Element1D el(g.order, g.h(e), c.quadrature);
    Eigen::MatrixXd m = -velocity * el.convection() - c.config.viscosity * el.stiffness();
    if (c.kernel) m += el.svv(*c.kernel, svv::svv_coefficient({c.config.pe_star, speed, g.h(e), g.order}));
    return m;
  });
}

double ramp(const Case& c, double t) {
  const double T = c.config.inflow.ramp_time * c.config.h / std::abs(c.config.velocity);
  if (T <= 0.0 || t >= T) return 1.0;
  if (t <= 0.0) return 0.0;
  return std::pow(std::sin(0.5 * pi * t / T), 2);
}

double ramp_rate(const Case& c, double t) {
  const double T = c.config.inflow.ramp_time * c.config.h / std::abs(c.config.velocity);
  if (T <= 0.0 || t >= T || t <= 0.0) return 0.0;
  return 0.5 * pi / T * std::sin(pi * t / T);
}

Eigen::MatrixXd modal_element(const Case& c, const Eigen::MatrixXd& u, int ex, int ey,
                              const Eigen::MatrixXd& R) {
  const int P = c.config.order;
  if (c.config.dimension == 1) {
    Eigen::VectorXd ue(P + 1);
    for (int i = 0; i <= P; ++i) ue[i] = u(c.x.dof(ex, i), 0);
    return R * ue;
  }
  Eigen::MatrixXd ue(P + 1, P + 1);
  for (int i = 0; i <= P; ++i)
    for (int j = 0; j <= P; ++j) ue(i, j) = u(c.x.dof(ex, i), c.y.dof(ey, j));
  return R * ue * R.transpose();
}

} // namespace

struct Case::Factors {
  Eigen::SimplicialLDLT<Sparse> mx; // free streamwise rows
  Eigen::SimplicialLDLT<Sparse> my;
  Eigen::VectorXd mx_coupling;      // Mx(free, inflow)
  std::vector<svv::Element1D> ex, ey;
};

std::string_view to_string(KernelChoice k) {
  switch (k) {
  case KernelChoice::None: return "none";
  case KernelChoice::Dg: return "dg";
  case KernelChoice::PowerLaw: return "power-law";
  case KernelChoice::Unit: return "unit";
  }
  return "unknown";
}

KernelChoice kernel_choice_from_string(std::string_view name) {
  if (name == "none") return KernelChoice::None;
  if (name == "dg") return KernelChoice::Dg;
  if (name == "power-law") return KernelChoice::PowerLaw;
  if (name == "unit") return KernelChoice::Unit;
  fail(ErrorKind::InvalidArgument, "unknown kernel choice '" + std::string(name) + "'");
}

void CaseConfig::validate() const {
  if (dimension != 1 && dimension != 2) fail(ErrorKind::InvalidArgument, "dimension must be 1 or 2");
  if (order < 1) fail(ErrorKind::InvalidArgument, "order must be >= 1");
  if (!(h > 0.0) || !(upstream_length > 0.0) || !(downstream_length >= 0.0))
    fail(ErrorKind::InvalidArgument, "lengths must be positive");
  if (dimension == 2 && !(width > 0.0)) fail(ErrorKind::InvalidArgument, "width must be positive");
  if (!(coarsening >= 1.0)) fail(ErrorKind::InvalidArgument, "coarsening factor must be >= 1");
  if (!(cfl > 0.0 && cfl <= 1.0)) fail(ErrorKind::InvalidArgument, "CFL must lie in (0, 1]");
  if (!(velocity > 0.0)) fail(ErrorKind::InvalidArgument, "velocity must be positive");
  if (!(pe_star > 0.0)) fail(ErrorKind::InvalidArgument, "Pe* must be positive");
  if (!(viscosity >= 0.0)) fail(ErrorKind::InvalidArgument, "viscosity must be >= 0");
  if (!(end_time > 0.0)) fail(ErrorKind::InvalidArgument, "end time must be positive");
  if (periodic && dimension != 1) fail(ErrorKind::InvalidArgument, "periodic cases are 1D only");
  if (inflow.components < 1 || !(inflow.min_fraction > 0.0) || !(inflow.max_fraction >= inflow.min_fraction))
    fail(ErrorKind::InvalidArgument, "invalid inflow signal");
  if (kernel == KernelChoice::Dg && (order < 2 || order > 10))
    fail(ErrorKind::InvalidArgument, "the DG kernel is available for P in 2..10");
  if (quadrature != 0) svv::require_quadrature(order, quadrature);
}

Case build_case(const CaseConfig& config, std::vector<std::string>* warnings) {
  config.validate();
  Case c;
  c.config = config;
  const int P = config.order;
  c.quadrature = config.quadrature > 0 ? config.quadrature : svv::default_quadrature_points(P);

  const int nu = element_count(config.upstream_length, config.h, "upstream", warnings);
  const double hd = config.coarsening * config.h;
  const int nd = config.downstream_length > 0.0 ? element_count(config.downstream_length, hd, "downstream", warnings) : 0;
  c.x.order = P;
  c.x.periodic = config.periodic;
  c.x.vertices.push_back(0.0);
  for (int e = 0; e < nu; ++e) c.x.vertices.push_back((e + 1) * config.h);
  for (int e = 0; e < nd; ++e) c.x.vertices.push_back(nu * config.h + (e + 1) * hd);
  c.upstream_elements = nu;
  c.interface_x = nu * config.h;
  c.has_interface = nd > 0 && config.coarsening != 1.0;
  c.t_c = c.x.vertices.back() / config.velocity;

  if (config.dimension == 2) {
    const int ny = element_count(config.width, config.h, "crossflow", warnings);
    c.y = svv::Grid1D::uniform(0.0, ny * config.h, ny, P);
  } else {
    c.y = svv::Grid1D::uniform(0.0, 1.0, 1, 1);
  }

  switch (config.kernel) {
  case KernelChoice::None: break;
  case KernelChoice::Dg: c.kernel = svv::dg_kernel(P); break;
  case KernelChoice::PowerLaw: c.kernel = svv::power_law_kernel(P, config.power_law_exponent); break;
  case KernelChoice::Unit: c.kernel = svv::unit_kernel(P); break;
  }

  c.Mx = svv::assemble_mass(c.x, c.quadrature);
  c.Lx = linear_operator(c, c.x, config.velocity);
  if (config.dimension == 2) {
    c.My = svv::assemble_mass(c.y, c.quadrature);
    c.Ly = linear_operator(c, c.y, 0.0);
  } else {
    c.My = Sparse(1, 1);
    c.My.insert(0, 0) = 1.0;
    c.Ly = Sparse(1, 1);
  }

  auto f = std::make_shared<Case::Factors>();
  const int nx = c.nx();
  if (c.has_inflow()) {
    f->mx.compute(Sparse(c.Mx.bottomRightCorner(nx - 1, nx - 1)));
    f->mx_coupling = Eigen::VectorXd(c.Mx.col(0)).tail(nx - 1);
  } else {
    f->mx.compute(c.Mx);
  }
  f->my.compute(c.My);
  if (f->mx.info() != Eigen::Success || f->my.info() != Eigen::Success)
    fail(ErrorKind::NumericalError, "mass matrix factorisation failed");
  for (int e = 0; e < c.x.num_elements(); ++e) f->ex.emplace_back(P, c.x.h(e), c.quadrature);
  if (config.dimension == 2)
    for (int e = 0; e < c.y.num_elements(); ++e) f->ey.emplace_back(P, c.y.h(e), c.quadrature);
  c.factors = std::move(f);

  const auto& in = config.inflow;
  std::mt19937 rng(in.seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);
  const double k_nyquist = P * pi / config.h;
  for (int i = 0; i < in.components; ++i) {
    const double frac =
        in.components == 1 ? in.min_fraction
                           : in.min_fraction + (in.max_fraction - in.min_fraction) * i / (in.components - 1);
    c.waves.k.push_back(frac * k_nyquist);
    c.waves.phase.push_back(phase(rng));
    c.waves.crossflow_mode.push_back(config.dimension == 2 ? i % 3 : 0);
  }
  return c;
}

Eigen::VectorXd Case::inflow(double t) const {
  const Eigen::VectorXd yc = config.dimension == 2 ? y.coordinates() : Eigen::VectorXd::Zero(1);
  const double W = y.vertices.back();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(yc.size());
  const double scale = config.inflow.amplitude / waves.k.size() * ramp(*this, t);
  for (std::size_t i = 0; i < waves.k.size(); ++i) {
    const double s = std::sin(waves.phase[i] - waves.k[i] * config.velocity * t);
    for (int j = 0; j < yc.size(); ++j) g[j] += scale * s * std::cos(waves.crossflow_mode[i] * pi * yc[j] / W);
  }
  return g;
}

Eigen::VectorXd Case::inflow_rate(double t) const {
  const Eigen::VectorXd yc = config.dimension == 2 ? y.coordinates() : Eigen::VectorXd::Zero(1);
  const double W = y.vertices.back();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(yc.size());
  const double a = config.inflow.amplitude / waves.k.size();
  const double r = ramp(*this, t), dr = ramp_rate(*this, t);
  for (std::size_t i = 0; i < waves.k.size(); ++i) {
    const double arg = waves.phase[i] - waves.k[i] * config.velocity * t;
    const double d = a * (dr * std::sin(arg) - r * waves.k[i] * config.velocity * std::cos(arg));
    for (int j = 0; j < yc.size(); ++j) g[j] += d * std::cos(waves.crossflow_mode[i] * pi * yc[j] / W);
  }
  return g;
}

double Case::value_at(const Eigen::MatrixXd& u, double px, double py) const {
  auto locate = [](const svv::Grid1D& g, double p, double& xi) {
    const auto it = std::upper_bound(g.vertices.begin(), g.vertices.end(), p);
    const int e = std::clamp(static_cast<int>(it - g.vertices.begin()) - 1, 0, g.num_elements() - 1);
    xi = 2.0 * (p - g.vertices[e]) / g.h(e) - 1.0;
    return e;
  };
  const auto basis = basis::Basis::nodal_gll(config.order);
  double xi = 0.0, eta = 0.0;
  const int ex = locate(x, px, xi);
  if (config.dimension == 1) {
    double v = 0.0;
    for (int i = 0; i <= config.order; ++i) v += u(x.dof(ex, i), 0) * basis::lagrange_eval(basis, i, xi);
    return v;
  }
  const int ey = locate(y, py, eta);
  double v = 0.0;
  for (int i = 0; i <= config.order; ++i)
    for (int j = 0; j <= config.order; ++j)
      v += u(x.dof(ex, i), y.dof(ey, j)) * basis::lagrange_eval(basis, i, xi) * basis::lagrange_eval(basis, j, eta);
  return v;
}

double cfl_limit(const Case& c) {
  double h_min = std::numeric_limits<double>::infinity();
  for (int e = 0; e < c.x.num_elements(); ++e) h_min = std::min(h_min, c.x.h(e));
  if (c.config.dimension == 2)
    for (int e = 0; e < c.y.num_elements(); ++e) h_min = std::min(h_min, c.y.h(e));
  const int P = c.config.order;
  return 0.5 * h_min / (c.config.velocity * P * P);
}

SolverState initial_state(const Case& c) {
  SolverState s;
  s.u = Eigen::MatrixXd::Zero(c.nx(), c.ny());
  if (c.has_inflow()) s.u.row(0) = c.inflow(0.0).transpose();
  return s;
}

SolverState initial_state(const Case& c, double (*initial)(double, double)) {
  SolverState s;
  const Eigen::VectorXd xc = c.x.coordinates();
  const Eigen::VectorXd yc = c.config.dimension == 2 ? c.y.coordinates() : Eigen::VectorXd::Zero(1);
  s.u.resize(c.nx(), c.ny());
  for (int i = 0; i < c.nx(); ++i)
    for (int j = 0; j < c.ny(); ++j) s.u(i, j) = initial(xc[i], yc[j]);
  if (c.has_inflow()) s.u.row(0) = c.inflow(0.0).transpose();
  return s;
}

Eigen::MatrixXd rate(const Case& c, const Eigen::MatrixXd& u, double t) {
  const auto& f = *c.factors;
  const bool two_d = c.config.dimension == 2;
  Eigen::MatrixXd r = two_d ? Eigen::MatrixXd(c.Lx * u * c.My + c.Mx * u * c.Ly) : Eigen::MatrixXd(c.Lx * u);

  if (c.config.burgers) {
    const int P = c.config.order;
    for (int ex = 0; ex < c.x.num_elements(); ++ex) {
      const auto& bx = f.ex[ex];
      if (!two_d) {
        Eigen::VectorXd ue(P + 1);
        for (int i = 0; i <= P; ++i) ue[i] = u(c.x.dof(ex, i), 0);
        const Eigen::VectorXd n = bx.burgers(ue);
        for (int i = 0; i <= P; ++i) r(c.x.dof(ex, i), 0) += n[i];
        continue;
      }
      for (int ey = 0; ey < c.y.num_elements(); ++ey) {
        const auto& by = f.ey[ey];
        Eigen::MatrixXd ue(P + 1, P + 1);
        for (int i = 0; i <= P; ++i)
          for (int j = 0; j <= P; ++j) ue(i, j) = u(c.x.dof(ex, i), c.y.dof(ey, j));
        const Eigen::MatrixXd uq = bx.B * ue * by.B.transpose();
        const Eigen::MatrixXd dq = bx.Bd * ue * by.B.transpose();
        const Eigen::MatrixXd w = bx.w * by.w.transpose();
        const Eigen::MatrixXd n = -bx.B.transpose() * (w.array() * uq.array() * dq.array()).matrix() * by.B;
        for (int i = 0; i <= P; ++i)
          for (int j = 0; j <= P; ++j) r(c.x.dof(ex, i), c.y.dof(ey, j)) += n(i, j);
      }
    }
  }

  auto solve_y = [&](Eigen::MatrixXd m) {
    if (two_d) m = f.my.solve(Eigen::MatrixXd(m.transpose())).transpose();
    return m;
  };
  Eigen::MatrixXd du(c.nx(), c.ny());
  if (c.has_inflow()) {
    const Eigen::VectorXd g = c.inflow_rate(t);
    const int n = c.nx() - 1;
    Eigen::MatrixXd rf = r.bottomRows(n);
    const Eigen::RowVectorXd my_g = two_d ? Eigen::RowVectorXd((c.My * g).transpose()) : g.transpose();
    rf -= f.mx_coupling * my_g;
    du.bottomRows(n) = solve_y(f.mx.solve(rf));
    du.row(0) = g.transpose();
  } else {
    du = solve_y(f.mx.solve(r));
  }
  return du;
}

void step(const Case& c, SolverState& s, double dt) {
  const double limit = cfl_limit(c);
  if (!(dt > 0.0) || dt > limit * (1.0 + 1e-12))
    fail(ErrorKind::InvalidArgument, "time step " + std::to_string(dt) + " exceeds the CFL limit " + std::to_string(limit));
  const double t = s.time;
  const Eigen::MatrixXd u1 = s.u + dt * rate(c, s.u, t);
  const Eigen::MatrixXd u2 = 0.75 * s.u + 0.25 * (u1 + dt * rate(c, u1, t + dt));
  s.u = s.u / 3.0 + 2.0 / 3.0 * (u2 + dt * rate(c, u2, t + 0.5 * dt));
  s.time = t + dt;
  if (c.has_inflow()) s.u.row(0) = c.inflow(s.time).transpose();
  if (!s.u.allFinite()) fail(ErrorKind::Divergence, "non-finite state at t = " + std::to_string(s.time));
}

double reflection_metric(const Case& c, const Eigen::MatrixXd& u) {
  const int P = c.config.order;
  const int top = (P + 1 + 2) / 3;
  const Eigen::MatrixXd R = basis::modal_transform(P).forward;
  Eigen::VectorXd norm(P + 1);
  for (int p = 0; p <= P; ++p) norm[p] = 2.0 / (2 * p + 1);
  double upper = 0.0, total = 0.0;
  const int ney = c.config.dimension == 2 ? c.y.num_elements() : 1;
  for (int ex = 0; ex < c.upstream_elements; ++ex)
    for (int ey = 0; ey < ney; ++ey) {
      const Eigen::MatrixXd m = modal_element(c, u, ex, ey, R);
      const double jac = 0.5 * c.x.h(ex) * (c.config.dimension == 2 ? 0.5 * c.y.h(ey) : 1.0);
      for (int p = 0; p <= P; ++p)
        for (int q = 0; q < m.cols(); ++q) {
          const double e = m(p, q) * m(p, q) * norm[p] * (c.config.dimension == 2 ? norm[q] : 1.0) * jac;
          total += e;
          if (std::max(p, c.config.dimension == 2 ? q : 0) > P - top) upper += e;
        }
    }
  return total > 0.0 ? upper / total : 0.0;
}

DiagnosticRow diagnose(const Case& c, const SolverState& s) {
  DiagnosticRow row;
  row.time = s.time;
  const Eigen::MatrixXd mu = c.config.dimension == 2 ? Eigen::MatrixXd(c.Mx * s.u * c.My) : Eigen::MatrixXd(c.Mx * s.u);
  row.energy = (s.u.array() * mu.array()).sum();
  row.max_abs = s.u.cwiseAbs().maxCoeff();
  row.reflection = reflection_metric(c, s.u);
  return row;
}

double mean_reflection(const std::vector<DiagnosticRow>& rows, double t0, double t1) {
  double sum = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.time >= t0 && r.time <= t1) {
      sum += r.reflection;
      ++n;
    }
  return n ? sum / n : 0.0;
}

RunResult run(const Case& c, const RunOptions& opts) {
  RunResult r;
  r.state = initial_state(c);
  const double T = c.config.end_time * c.t_c;
  const double limit = c.config.cfl * cfl_limit(c);
  r.steps = static_cast<int>(std::ceil(T / limit - 1e-9));
  r.dt = T / r.steps;
  const int every = std::max(1, r.steps / std::max(1, opts.samples));
  const int snap_every = opts.snapshots > 0 ? std::max(1, r.steps / opts.snapshots) : 0;
  if (opts.snapshot_dir) std::filesystem::create_directories(*opts.snapshot_dir);
  int snap = 0;
  r.state.diagnostics.push_back(diagnose(c, r.state));
  for (int n = 1; n <= r.steps; ++n) {
    try {
      step(c, r.state, r.dt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Divergence) throw;
      r.diverged = true;
      r.message = e.what();
      r.steps = n - 1;
      break;
    }
    if (n % every == 0 || n == r.steps) r.state.diagnostics.push_back(diagnose(c, r.state));
    if (opts.snapshot_dir && snap_every && (n % snap_every == 0 || n == r.steps)) {
      char name[32];
      std::snprintf(name, sizeof name, "snapshot_%04d.json", snap++);
      write_snapshot(*opts.snapshot_dir / name, c, r.state);
    }
  }
  const double t0 = opts.average_from >= 0.0 ? opts.average_from : c.t_c;
  r.mean_reflection = mean_reflection(r.state.diagnostics, t0, r.state.time);
  return r;
}

void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticRow>& rows) {
  out << "time,l2_energy,max_abs,reflection_metric\n";
  out.precision(17);
  for (const auto& r : rows) out << r.time << ',' << r.energy << ',' << r.max_abs << ',' << r.reflection << '\n';
}

void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
  write_diagnostics_csv(out, rows);
}

void write_snapshot(const std::filesystem::path& path, const Case& c, const SolverState& s) {
  mesh::Mesh m;
  const auto& xv = c.x.vertices;
  const std::vector<double> yv = c.config.dimension == 2 ? c.y.vertices : std::vector<double>{0.0, c.config.h};
  const int nxv = static_cast<int>(xv.size()), nyv = static_cast<int>(yv.size());
  for (int j = 0; j < nyv; ++j)
    for (int i = 0; i < nxv; ++i) m.nodes.emplace_back(xv[i], yv[j], 0.0);
  for (int j = 0; j + 1 < nyv; ++j)
    for (int i = 0; i + 1 < nxv; ++i)
      m.elements.push_back(
          {mesh::Shape::Quadrilateral, 1, {j * nxv + i, j * nxv + i + 1, (j + 1) * nxv + i + 1, (j + 1) * nxv + i}});
  mesh::Mesh hi = mesh::elevate_order(m, c.config.order);
  for (auto& n : hi.nodes) n.z() = c.value_at(s.u, n.x(), n.y());
  mesh::write_mesh(path, hi);
}

std::vector<RampStage> ramp_schedule(double start, double target, double factor, double hold) {
  if (!(start > 0.0) || !(start <= target)) fail(ErrorKind::InvalidArgument, "ramp_schedule: need 0 < start <= target");
  if (!(factor > 1.0)) fail(ErrorKind::InvalidArgument, "ramp_schedule: factor must be > 1");
  if (!(hold >= 0.0)) fail(ErrorKind::InvalidArgument, "ramp_schedule: hold must be >= 0");
  std::vector<RampStage> out;
  double v = start;
  while (v < target * (1.0 - 1e-12)) {
    out.push_back({v, hold});
    v *= factor;
  }
  out.push_back({target, hold});
  return out;
}

} // namespace hoflow::demo
