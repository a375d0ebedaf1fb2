// Acceptance suite: one PASS/FAIL line per criterion, each with its runtime
// budget. Exit status is the number of failed criteria (capped at 1).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "hoflow/demo_solver.hpp"
#include "hoflow/eigenanalysis.hpp"
#include "hoflow/error.hpp"
#include "hoflow/geometry.hpp"
#include "hoflow/mesh.hpp"
#include "hoflow/polybasis.hpp"
#include "hoflow/projection_curving.hpp"
#include "hoflow/svv.hpp"
#include "hoflow/variational_curving.hpp"

using namespace hoflow;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

fs::path data(const std::string& name) { return fs::path(HOFLOW_DATA_DIR) / name; }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string violations;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      violations += (violations.empty() ? "" : "; ") + what;
      pass = false;
    }
  }

  std::string text() const {
    std::string s = detail.str();
    if (!violations.empty()) s += (s.empty() ? "" : " | ") + std::string("violated: ") + violations;
    return s;
  }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ------------------------------------------------------------------ 1

void quadrature(Outcome& o) {
  double worst = 0.0;
  bool exceeded = true;
  for (int q = 2; q <= 12; ++q) {
    const auto rule = basis::gll_rule(q);
    auto error = [&](int d) {
      const double exact = d % 2 ? 0.0 : 2.0 / (d + 1);
      return std::abs(rule.integrate([d](double x) { return std::pow(x, d); }) - exact);
    };
    for (int d = 0; d <= 2 * q - 3; ++d) worst = std::max(worst, error(d));
    exceeded = exceeded && error(2 * q - 2) > 1e-12;
  }
  o.require(worst <= 1e-12, "GLL exactness to degree 2Q-3 (max error " + sci(worst) + ")");
  o.require(exceeded, "degree 2Q-2 is not integrated exactly");

  // Oracle: smallest Q whose rule integrates every monomial up to `degree`.
  auto fewest_points = [](int degree) {
    for (int q = 2;; ++q) {
      const auto rule = basis::gll_rule(q);
      bool exact = true;
      for (int d = 0; d <= degree && exact; ++d) {
        const double ref = d % 2 ? 0.0 : 2.0 / (d + 1);
        exact = std::abs(rule.integrate([d](double x) { return std::pow(x, d); }) - ref) <= 1e-12;
      }
      if (exact) return q;
    }
  };
  int mismatches = 0, entries = 0;
  for (int P = 1; P <= 10; ++P) {
    // Table bounds P + 3/2, 3P/2 + 3/2, 2P + 3/2 for [u]^2, [u]^3, [u]^4.
    for (int power = 2; power <= 4; ++power, ++entries) {
      const double bound = power == 2 ? P + 1.5 : power == 3 ? 1.5 * P + 1.5 : 2.0 * P + 1.5;
      const int q = fewest_points(power * P);
      if (basis::dealiasing_points(P, power) != q || q != static_cast<int>(std::ceil(bound)) ||
          basis::dealiasing_bound(P, power) != bound)
        ++mismatches;
    }
    // Nonlinearity-indexed rule: integrands of order P, 3P, 4P.
    for (int m = 1; m <= 3; ++m, ++entries) {
      const int degree = (m == 1 ? 1 : m + 1) * P;
      if (basis::min_quadrature_points(P, m) != fewest_points(degree)) ++mismatches;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " point counts differ from the exactness oracle");
  o.detail << "max GLL error " << sci(worst) << ", " << entries - mismatches << "/" << entries << " point counts match";
}

// ------------------------------------------------------------------ 2

mesh::Mesh random_curved_element(std::mt19937& rng, bool quad) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  mesh::Mesh m;
  const double a = 0.4 * u(rng), s = 1.0 + 0.3 * u(rng);
  const Eigen::Matrix2d R = (Eigen::Matrix2d() << std::cos(a), -std::sin(a), std::sin(a), std::cos(a)).finished();
  const auto ref = mesh::reference_vertices(quad ? mesh::Shape::Quadrilateral : mesh::Shape::Triangle);
  for (const auto& v : ref) {
    const Eigen::Vector2d p = s * R * (v + 0.15 * Eigen::Vector2d(u(rng), u(rng)));
    m.nodes.emplace_back(p.x(), p.y(), 0.0);
  }
  mesh::Element e{quad ? mesh::Shape::Quadrilateral : mesh::Shape::Triangle, 1, {}};
  for (int i = 0; i < static_cast<int>(ref.size()); ++i) e.nodes.push_back(i);
  m.elements.push_back(e);
  m = mesh::elevate_order(m, 3);
  for (std::size_t n = ref.size(); n < m.nodes.size(); ++n) m.nodes[n] += Eigen::Vector3d(0.04 * u(rng), 0.04 * u(rng), 0);
  return m;
}

// Inverse of the ideal map by Newton iteration (exact after one step for triangles).
Eigen::Vector2d ideal_inverse(const mesh::Mesh& m, const Eigen::Vector2d& y, Eigen::Vector2d xi) {
  for (int it = 0; it < 50; ++it) {
    const Eigen::Vector2d r = mesh::ideal_map(m, 0, xi).head<2>() - y;
    if (r.norm() < 1e-15) break;
    xi -= mesh::ideal_gradient(m, 0, xi).lu().solve(r);
  }
  return xi;
}

void mapping(Outcome& o) {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(0.15, 0.7);
  double worst_fd = 0.0, worst_chain = 0.0;
  for (int k = 0; k < 50; ++k) {
    const bool quad = k % 2;
    const mesh::Mesh m = random_curved_element(rng, quad);
    for (int s = 0; s < 5; ++s) {
      Eigen::Vector2d xi(u(rng), u(rng));
      if (!quad) xi *= 0.6; // stay inside the triangle
      const Eigen::Matrix2d G = mesh::jacobian(m, 0, xi).gradient;
      const Eigen::Matrix2d GI = mesh::ideal_gradient(m, 0, xi);
      const Eigen::Matrix2d GM = G * GI.inverse();
      // Central differences of phi_M = phi o phi_I^-1 in ideal coordinates.
      const Eigen::Vector2d y = mesh::ideal_map(m, 0, xi).head<2>();
      const double h = 1e-6;
      Eigen::Matrix2d fd;
      for (int c = 0; c < 2; ++c) {
        Eigen::Vector2d dy = Eigen::Vector2d::Zero();
        dy[c] = h;
        const Eigen::Vector2d xp = ideal_inverse(m, y + dy, xi), xm = ideal_inverse(m, y - dy, xi);
        fd.col(c) = (mesh::map_physical(m, 0, xp) - mesh::map_physical(m, 0, xm)).head<2>() / (2 * h);
      }
      worst_fd = std::max(worst_fd, (fd - GM).norm() / GM.norm());
      const double det = mesh::jacobian(m, 0, xi).det;
      worst_chain = std::max(worst_chain, std::abs(det - GM.determinant() * GI.determinant()) / std::abs(det));
    }
  }
  o.require(worst_fd <= 1e-7, "grad phi_M vs finite differences (" + sci(worst_fd) + ")");
  o.require(worst_chain <= 1e-10, "det chain rule (" + sci(worst_chain) + ")");
  o.detail << "FD rel error " << sci(worst_fd) << ", chain-rule rel error " << sci(worst_chain) << " over 50 elements";
}

// ------------------------------------------------------------------ 3

mesh::Mesh curved_fixture(int order) {
  const curving::PatchSet set(geom::read_geometry(data("quarter_annulus.geom.json")));
  const mesh::Mesh linear = mesh::read_mesh(data("quarter_annulus.mesh.json"));
  const auto assigned = curving::assign_parent_surfaces(linear, set);
  const auto snapped = curving::snap_nodes(linear, assigned.associations);
  return curving::curve_boundary(snapped.mesh, set, order).mesh;
}

void variational_curving(Outcome& o) {
  const mesh::Mesh curved = curved_fixture(4);
  const int initial_invalid = mesh::count_invalid(curved);
  o.require(initial_invalid >= 1, "fixture starts with an invalid element");
  o.detail << "initial invalid " << initial_invalid << ";";
  for (auto kind : {variational::EnergyKind::LinearElasticity, variational::EnergyKind::Hyperelastic,
                    variational::EnergyKind::Winslow, variational::EnergyKind::Distortion}) {
    variational::EnergyFunctional w;
    w.kind = kind;
    variational::OptimizeOptions opts;
    opts.tolerance = 1e-6;
    const auto r = variational::optimize(curved, w, opts);
    const std::string name(variational::to_string(kind));
    const double residual = r.report.sweeps.empty() ? 1.0 : r.report.sweeps.back().residual;
    bool monotone = true;
    double prev = r.report.initial_energy;
    for (const auto& s : r.report.sweeps) {
      monotone = monotone && s.energy <= prev;
      prev = s.energy;
    }
    const int invalid = mesh::count_invalid(r.mesh);
    o.require(r.report.converged && residual < 1e-6, name + " residual < 1e-6");
    o.require(invalid == 0, name + " leaves zero invalid elements");
    o.require(monotone, name + " energy non-increasing per sweep");
    o.detail << (kind == variational::EnergyKind::LinearElasticity ? " " : ", ") << name << ": " << r.report.sweeps.size() << " sweeps, residual " << sci(residual) << ", invalid "
             << invalid;
  }
}

// ------------------------------------------------------------------ 4

void gradient_fidelity(Outcome& o) {
  // Untangled curved fixture; configurations are jittered copies of it.
  const mesh::Mesh base = variational::optimize(curved_fixture(3), variational::EnergyFunctional{}).mesh;
  const auto fixed = mesh::boundary_node_mask(base);
  std::vector<int> interior;
  for (int n = 0; n < base.num_nodes(); ++n)
    if (!fixed[n]) interior.push_back(n);
  if (interior.empty()) fail(ErrorKind::InvalidArgument, "fixture has no interior nodes");
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05); // fraction of the local edge length
  std::uniform_int_distribution<std::size_t> pick(0, interior.size() - 1);
  double worst = 0.0;
  int configs = 0;
  for (auto kind : {variational::EnergyKind::LinearElasticity, variational::EnergyKind::Hyperelastic,
                    variational::EnergyKind::Winslow, variational::EnergyKind::Distortion}) {
    variational::EnergyFunctional w;
    w.kind = kind;
    w.mu = 1.3;
    w.lambda = 0.7;
    variational::OptimizeOptions opts;
    opts.delta = 1e-3;
    for (int c = 0; c < 100; ++c, ++configs) {
      // The ideal elements come from the unperturbed mesh; only the current
      // configuration is jittered.
      variational::Problem prob(base, w, opts);
      for (int n : interior)
        prob.mesh().nodes[n] += prob.local_length(n) * Eigen::Vector3d(jitter(rng), jitter(rng), 0.0);
      const int node = interior[pick(rng)];
      const Eigen::Vector2d g = prob.gradient(node);
      double best = std::numeric_limits<double>::infinity();
      for (double h : {1e-4, 1e-5, 1e-6, 1e-7, 1e-8}) {
        Eigen::Vector2d fd;
        for (int d = 0; d < 2; ++d) {
          const double x0 = prob.mesh().nodes[node][d];
          auto at = [&](double dx) {
            prob.mesh().nodes[node][d] = x0 + dx;
            return prob.local_energy(node);
          };
          // Fourth-order central stencil.
          fd[d] = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
          prob.mesh().nodes[node][d] = x0;
        }
        best = std::min(best, (g - fd).norm() / std::max(g.norm(), 1e-300));
      }
      worst = std::max(worst, best);
    }
  }
  o.require(worst <= 1e-6, "analytic vs central-difference gradient (" + sci(worst) + ")");
  o.detail << "max rel error " << sci(worst) << " over " << configs << " configurations (4 kinds)";
}

// ------------------------------------------------------------------ 5

double distance_to_annulus_patch(int id, const Eigen::Vector3d& p) {
  switch (id) {
  case 0: return std::abs(p.head<2>().norm() - 1.0);
  case 1: return std::abs(p.head<2>().norm() - 2.0);
  case 2: return std::abs(p.y());
  default: return std::abs(p.x());
  }
}

void projection_curving(Outcome& o) {
  using curving::NodeStatus;
  using geom::Params;
  using geom::Vec3;
  // Snapped nodes lie on their parents (analytic distance).
  {
    const curving::PatchSet set(geom::read_geometry(data("quarter_annulus.geom.json")));
    mesh::Mesh m = mesh::read_mesh(data("quarter_annulus.mesh.json"));
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-4e-3, 4e-3);
    for (int n : mesh::boundary_nodes(m)) m.nodes[n] += Vec3(u(rng), u(rng), 0);
    const auto snap = curving::snap_nodes(m, curving::assign_parent_surfaces(m, set).associations);
    double worst = 0.0;
    int snapped = 0;
    for (const auto& a : snap.associations)
      if (a.status == NodeStatus::Snapped) {
        ++snapped;
        worst = std::max(worst, distance_to_annulus_patch(a.patch, snap.mesh.nodes[a.node]));
      }
    o.require(snapped > 0 && worst <= 1e-10, "snapped nodes within 1e-10 of parent (" + sci(worst) + ")");
    o.detail << snapped << " snapped, max distance " << sci(worst) << ";";
  }
  // Displacement rule: 0.2x the mean incident edge length is excluded, 0.05x is not.
  {
    const geom::Patch line(0, geom::Line{Vec3(-1, 0, 0), Vec3(1, 0, 0)}, {Params(0, 0), Params(3, 0)});
    const curving::PatchSet set(std::vector<geom::Patch>{line});
    auto fan = [](double h) {
      mesh::Mesh m;
      m.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, h, 0), Vec3(0.5, 1, 0)};
      m.elements = {{mesh::Shape::Triangle, 1, {0, 2, 3}}, {mesh::Shape::Triangle, 1, {2, 1, 3}}};
      m.boundary = {{0, 0, 0}, {1, 0, 0}, {1, 1, mesh::kFarfield}, {0, 2, mesh::kFarfield}};
      return m;
    };
    auto ratio = [&](double h) {
      const auto m = fan(h);
      return h / (((m.nodes[2] - m.nodes[0]).norm() + (m.nodes[2] - m.nodes[1]).norm() +
                   (m.nodes[2] - m.nodes[3]).norm()) / 3.0);
    };
    auto height_for = [&](double target) {
      double lo = 0.0, hi = 0.5;
      for (int it = 0; it < 100; ++it) (ratio(0.5 * (lo + hi)) < target ? lo : hi) = 0.5 * (lo + hi);
      return lo;
    };
    for (double target : {0.2, 0.05}) {
      const auto m = fan(height_for(target));
      curving::NodeAssociation a = curving::assign_point(set, m.nodes[2]);
      a.node = 2;
      const auto snap = curving::snap_nodes(m, std::vector<curving::NodeAssociation>{a});
      const auto status = snap.associations[0].status;
      if (target > 0.1)
        o.require(status == NodeStatus::ExcludedDisplacement && snap.excluded == std::vector<int>{2},
                  "0.2x displacement node excluded");
      else
        o.require(status == NodeStatus::Snapped, "0.05x displacement node snapped");
    }
  }
  // Inversion rule: a sliver that would flip is excluded.
  {
    const double h = 0.01, r = (0.25 + h * h) / (2 * h);
    const double half = std::asin(0.5 / r);
    const geom::Patch arc(0, geom::CircularArc{Vec3(0.5, h - r, 0), r},
                          {Params(pi / 2 - 2 * half, 0), Params(pi / 2 + 2 * half, 0)});
    const curving::PatchSet set(std::vector<geom::Patch>{arc});
    mesh::Mesh m;
    m.nodes = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, -0.02, 0), Vec3(0.5, 1, 0)};
    m.elements = {{mesh::Shape::Triangle, 1, {0, 2, 1}}, {mesh::Shape::Triangle, 1, {0, 1, 3}}};
    m.boundary = {{0, 0, 0}, {0, 1, 0}, {1, 1, mesh::kFarfield}, {1, 2, mesh::kFarfield}};
    curving::NodeAssociation a = curving::assign_point(set, m.nodes[2]);
    a.node = 2;
    const auto snap = curving::snap_nodes(m, std::vector<curving::NodeAssociation>{a});
    mesh::Mesh moved = m;
    moved.nodes[2] = a.target;
    o.require(!mesh::validity(moved, 0).valid, "inversion fixture really inverts when moved");
    o.require(snap.associations[0].displacement_ratio < 0.1 &&
                  snap.associations[0].status == NodeStatus::ExcludedInversion,
              "inversion-inducing node excluded");
  }
  // Parent association against projection onto every patch.
  {
    const auto patches = geom::read_geometry(data("capsule.geom.json"));
    const curving::PatchSet set(patches);
    std::mt19937 rng(2024);
    std::normal_distribution<double> noise(0.0, 2e-3);
    std::uniform_int_distribution<std::size_t> pick(0, patches.size() - 1);
    int mismatches = 0;
    for (int k = 0; k < 200; ++k) {
      const geom::Patch& src = patches[pick(rng)];
      Params s = Params::Zero();
      for (int d = 0; d < src.dimension(); ++d)
        s[d] = std::uniform_real_distribution<double>(src.domain().lo[d], src.domain().hi[d])(rng);
      const Vec3 p = src.point(s) + Vec3(noise(rng), noise(rng), noise(rng));
      int best_id = -1;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : patches) {
        double dq = std::numeric_limits<double>::infinity();
        const auto& dom = q.domain();
        for (int i = 0; i <= 5; ++i)
          for (int j = 0; j <= 5; ++j) {
            const Params seed(dom.lo[0] + (dom.hi[0] - dom.lo[0]) * i / 5.0,
                              dom.lo[1] + (dom.hi[1] - dom.lo[1]) * j / 5.0);
            try {
              dq = std::min(dq, geom::project(q, p, seed).distance);
            } catch (const Error&) {
            }
          }
        const double tie = 1e-12 * (1 + best);
        if (best_id < 0 || dq < best - tie || (std::abs(dq - best) <= tie && q.id() < best_id)) {
          best = dq;
          best_id = q.id();
        }
      }
      const auto a = curving::assign_point(set, p);
      if (a.patch != best_id || std::abs(a.distance - best) > 1e-10) ++mismatches;
    }
    o.require(mismatches == 0, std::to_string(mismatches) + "/200 parents differ from the brute-force oracle");
    o.detail << " exclusion fixtures ok; 200/200 parents match";
  }
}

// ------------------------------------------------------------------ 6

void svv_operator(Outcome& o) {
  double lap = 0.0, mode = 0.0, energy = -std::numeric_limits<double>::infinity();
  std::mt19937 rng(11);
  for (int P = 2; P <= 10; ++P) {
    const int q = svv::default_quadrature_points(P);
    const svv::Element1D el(P, 0.7, q);
    lap = std::max(lap, (el.svv(svv::unit_kernel(P), 0.3) + 0.3 * el.stiffness()).cwiseAbs().maxCoeff());

    const svv::Kernel k = svv::dg_kernel(P);
    const std::vector<double> nodes = basis::Basis::nodal_gll(P).nodes();
    for (int p = 0; p <= P; ++p) {
      Eigen::VectorXd g(P + 1);
      for (int i = 0; i <= P; ++i) g[i] = basis::legendre(p, nodes[i]);
      mode = std::max(mode, (svv::apply_kernel(g, k) - k.entries[p] * g).cwiseAbs().maxCoeff());
    }

    const svv::Grid1D grid = svv::Grid1D::uniform(0.0, 5.0, 6, P);
    const Eigen::MatrixXd S = Eigen::MatrixXd(svv::assemble_svv_operator(grid, k, 1.0, 1.0, q));
    const double scale = S.cwiseAbs().maxCoeff();
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(grid.num_dofs(), [&] {
        return std::normal_distribution<double>()(rng);
      });
      energy = std::max(energy, u.dot(S * u) / (scale * u.squaredNorm()));
    }
  }
  o.require(lap <= 1e-10, "unit kernel recovers the Laplacian (" + sci(lap) + ")");
  o.require(energy <= 1e-14, "u^T S u <= 0 (max normalised " + sci(energy) + ")");
  o.require(mode <= 1e-12, "Legendre mode p scaled by Q_p (" + sci(mode) + ")");
  o.detail << "Laplacian error " << sci(lap) << ", max u^T S u / (|S| |u|^2) " << sci(energy) << ", mode scaling error "
           << sci(mode) << " (P 2..10)";
}

// ------------------------------------------------------------------ 7

double dispersion_error(int P, std::optional<svv::Kernel> k) {
  esa::CgScheme s;
  s.order = P;
  s.kernel = std::move(k);
  const double kh = 0.3 * P * pi;
  const auto spec = esa::temporal_esa(s, {kh});
  return std::abs(spec.samples[0].physical().real() - kh) / kh;
}

void temporal_esa(Outcome& o) {
  double phase = 0.0;
  for (int P = 1; P <= 8; ++P) {
    esa::CgScheme s;
    s.order = P;
    const auto spec = esa::temporal_esa(s, {0.05});
    phase = std::max(phase, std::abs(spec.samples[0].physical().real() / 0.05 - 1.0));
  }
  o.require(phase <= 1e-6, "phase speed error at kappa h = 0.05 (" + sci(phase) + ")");

  double im = -std::numeric_limits<double>::infinity();
  for (int P = 2; P <= 8; ++P)
    for (const auto& k : {svv::dg_kernel(P), svv::power_law_kernel(P, 2.0), svv::unit_kernel(P)}) {
      esa::CgScheme s;
      s.order = P;
      s.kernel = k;
      for (const auto& sample : esa::temporal_esa(s, esa::linspace(0.0, P * pi, 120)).samples)
        for (const auto& w : sample.values) im = std::max(im, w.imag());
    }
  o.require(im <= 1e-12, "Im(omega) <= 1e-12 with nonnegative kernels (" + sci(im) + ")");

  std::vector<double> plain, dg;
  for (int P = 2; P <= 5; ++P) {
    plain.push_back(dispersion_error(P, std::nullopt));
    dg.push_back(dispersion_error(P, svv::dg_kernel(P)));
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < plain.size(); ++i) decreasing = decreasing && plain[i] < plain[i - 1];
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : " ") + sci(x);
    return s;
  };
  o.require(decreasing, "dispersion error at 30% Nyquist strictly decreasing P=2..5 (" + list(plain) + ")");
  o.detail << "phase error " << sci(phase) << ", max Im " << sci(im) << "; error at 0.3 P pi, P=2..5: " << list(plain)
           << " (DG kernel: " << list(dg) << ")";
}

// ------------------------------------------------------------------ 8

void spatial_esa(Outcome& o) {
  double worst_p = std::numeric_limits<double>::infinity(), worst_u = -std::numeric_limits<double>::infinity();
  for (int P = 2; P <= 10; ++P) {
    esa::CgScheme s;
    s.order = P;
    s.kernel = svv::dg_kernel(P);
    const auto spec = esa::spatial_esa(s, esa::linspace(0.0, P * pi, 200, false));
    for (const auto& sample : spec.samples) {
      worst_p = std::min(worst_p, sample.physical().imag());
      worst_u = std::max(worst_u, sample.unphysical().imag());
    }
  }
  o.require(worst_p >= -1e-12, "Im(kappa_p) >= -1e-12 (" + sci(worst_p) + ")");
  o.require(worst_u <= 1e-12, "Im(kappa_u) <= 1e-12 (" + sci(worst_u) + ")");
  o.detail << "min Im(kappa_p) " << sci(worst_p) << ", max Im(kappa_u) " << sci(worst_u) << " (P 2..10)";
}

// ------------------------------------------------------------------ 9

void kernel_optimization(Outcome& o) {
  const esa::KernelOptimizeOptions opts;
  for (int P = 2; P <= 6; ++P) {
    const auto a = esa::optimize_kernel(P, opts);
    const auto b = esa::optimize_kernel(P, opts);
    bool monotone = true;
    for (std::size_t i = 1; i < a.history.size(); ++i) monotone = monotone && a.history[i] <= a.history[i - 1];
    const std::string tag = "P=" + std::to_string(P);
    o.require(monotone, tag + " objective non-increasing");
    o.require(a.margin >= opts.c_min, tag + " -Im(kappa_u) >= c_min (" + sci(a.margin) + ")");
    o.require(a.kernel.entries == b.kernel.entries && a.history == b.history, tag + " bit-deterministic");
    const svv::Kernel bundled = svv::read_kernel(data("kernels/dg_P" + std::to_string(P) + ".json"));
    o.require(bundled.entries == a.kernel.entries, tag + " matches bundled kernel");
    o.detail << (P > 2 ? "; " : "") << tag << " margin " << sci(a.margin) << " mismatch " << sci(a.relative_mismatch);
  }
}

// ------------------------------------------------------------------ 10

struct Pair {
  double ratio = 0.0;
  bool on_ok = false;
};

Pair reflection_pair(const std::string& config) {
  const auto dc = cli::demo_config_from_json(nlohmann::json::parse(std::ifstream(data("demo/" + config + ".json"))));
  demo::CaseConfig off_cfg = dc.case_config;
  off_cfg.kernel = demo::KernelChoice::None;
  const demo::Case on = demo::build_case(dc.case_config), off = demo::build_case(off_cfg);
  demo::RunOptions ro;
  ro.samples = dc.samples;
  const auto r_on = demo::run(on, ro), r_off = demo::run(off, ro);
  const double t1 = std::min(r_on.state.time, r_off.state.time);
  const double t0 = t1 > on.t_c ? on.t_c : 0.0;
  Pair p;
  p.on_ok = !r_on.diverged && std::abs(r_on.state.time - dc.case_config.end_time * on.t_c) < 1e-9 &&
            r_on.state.u.allFinite();
  p.ratio = demo::mean_reflection(r_on.state.diagnostics, t0, t1) / demo::mean_reflection(r_off.state.diagnostics, t0, t1);
  return p;
}

void reflection_demo(Outcome& o) {
  const auto pinned = nlohmann::json::parse(std::ifstream(data("demo/reflection_regression.json")));
  const double threshold = pinned["threshold"], band = pinned["control_band"], tol = pinned["relative_tolerance"];
  for (const char* name : {"coarsening_p4_1d", "coarsening_p4_2d", "uniform_p4_1d", "uniform_p4_2d"}) {
    const Pair p = reflection_pair(name);
    const double ref = pinned["cases"][name]["ratio"];
    const bool control = std::string(name).rfind("uniform", 0) == 0;
    o.require(p.on_ok, std::string(name) + " SVV run finite to end time");
    if (control)
      o.require(p.ratio >= 1.0 / band && p.ratio <= band, std::string(name) + " control ratio within 2x");
    else
      o.require(p.ratio <= threshold, std::string(name) + " ratio <= 0.1");
    o.require(std::abs(p.ratio - ref) <= tol * ref, std::string(name) + " matches pinned ratio " + sci(ref));
    if (!o.detail.str().empty()) o.detail << "; ";
    o.detail << (control ? "control " : "") << name << " ratio " << sci(p.ratio);
  }
}

// ------------------------------------------------------------------ 11

void ramp(Outcome& o) {
  const auto r = demo::ramp_schedule(1e4, 1e6);
  const bool values = r.size() == 3 && r[0].value == 1e4 && r[1].value == 1e5 && r[2].value == 1e6;
  bool holds = true;
  for (const auto& s : r) holds = holds && s.hold == 2.0;
  o.require(values, "stages 1e4, 1e5, 1e6");
  o.require(holds, "2 t_c holds");
  o.detail << "stages";
  for (const auto& s : r) o.detail << ' ' << s.value << '/' << s.hold;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Outcome&)> run;
};

} // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "quadrature and dealiasing bounds", 1.0, quadrature},
      {2, "mapping gradient and Jacobian chain rule", 5.0, mapping},
      {3, "variational curving of the quarter annulus", 60.0, variational_curving},
      {4, "energy gradient fidelity", 30.0, gradient_fidelity},
      {5, "projection curving", 10.0, projection_curving},
      {6, "SVV operator", 5.0, svv_operator},
      {7, "temporal eigensolution analysis", 30.0, temporal_esa},
      {8, "spatial eigensolution sign structure", 30.0, spatial_esa},
      {9, "kernel optimisation", 300.0, kernel_optimization},
      {10, "reflection demo", 300.0, reflection_demo},
      {11, "ramp schedule", 1.0, ramp},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(t < c.budget_s, "runtime " + sci(t) + " s over budget");
    failed += !o.pass;
    std::printf("%s [%2d] %s: %s (%.2f s, budget %.0f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.text().c_str(), t, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
