#include "hoflow/variational_curving.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>

#include "hoflow/error.hpp"

namespace hoflow::variational {

namespace {

Vec4 flat(const Mat2& m) { return Vec4(m(0, 0), m(0, 1), m(1, 0), m(1, 1)); }

Mat2 unflat(const Vec4& v) {
  Mat2 m;
  m << v[0], v[1], v[2], v[3];
  return m;
}

// dJ/dF and d2J/dF2 for J = det F, row-major flattening.
Vec4 det_gradient(const Mat2& F) { return Vec4(F(1, 1), -F(1, 0), -F(0, 1), F(0, 0)); }

Mat4 det_hessian() {
  Mat4 h = Mat4::Zero();
  h(0, 3) = h(3, 0) = 1.0;
  h(1, 2) = h(2, 1) = -1.0;
  return h;
}

// Derivatives of f(a, b) with a = tr C and b = J_r.
struct Partials {
  double f, fa, fb, faa, fab, fbb;
};

Partials partials(EnergyKind kind, double mu, double lambda, double a, double b) {
  switch (kind) {
  case EnergyKind::Hyperelastic: {
    const double lb = std::log(b);
    return {0.5 * mu * (a - 2.0) - mu * lb + 0.5 * lambda * lb * lb,
            0.5 * mu,
            (-mu + lambda * lb) / b,
            0.0,
            0.0,
            (mu + lambda * (1.0 - lb)) / (b * b)};
  }
  case EnergyKind::Winslow:
    return {a / b, 1.0 / b, -a / (b * b), 0.0, -1.0 / (b * b), 2.0 * a / (b * b * b)};
  case EnergyKind::Distortion:
    return {0.5 * a / b, 0.5 / b, -0.5 * a / (b * b), 0.0, -0.5 / (b * b), a / (b * b * b)};
  case EnergyKind::LinearElasticity: break;
  }
  fail(ErrorKind::InvalidArgument, "partials: unsupported energy kind");
}

// Small-strain tensor sym(F) - I.
Mat2 strain(const Mat2& F) { return 0.5 * (F + F.transpose()) - Mat2::Identity(); }

} // namespace

std::string_view to_string(EnergyKind kind) {
  switch (kind) {
  case EnergyKind::LinearElasticity: return "linear-elasticity";
  case EnergyKind::Hyperelastic: return "hyperelastic";
  case EnergyKind::Winslow: return "winslow";
  case EnergyKind::Distortion: return "distortion";
  }
  return "unknown";
}

EnergyKind energy_kind_from_string(std::string_view name) {
  for (auto k : {EnergyKind::LinearElasticity, EnergyKind::Hyperelastic, EnergyKind::Winslow, EnergyKind::Distortion})
    if (to_string(k) == name) return k;
  fail(ErrorKind::InvalidArgument, "unknown energy functional '" + std::string(name) + "'");
}

namespace {

// (J + s) / 2 with s = sqrt(J^2 + 4 delta^2), evaluated without cancellation
// for negative J. Its derivative is b / s.
double regularize(double J, double s, double delta) {
  return J >= 0.0 ? 0.5 * (J + s) : 2.0 * delta * delta / (s - J);
}

} // namespace

double EnergyFunctional::regularized_jacobian(double J) const {
  return regularize(J, std::sqrt(J * J + 4.0 * delta * delta), delta);
}

double EnergyFunctional::density(const Mat2& F) const {
  if (kind == EnergyKind::LinearElasticity) {
    const Mat2 E = strain(F);
    const double tr = E.trace();
    return mu * (E * E).trace() + 0.5 * lambda * tr * tr;
  }
  return partials(kind, mu, lambda, F.squaredNorm(), regularized_jacobian(F.determinant())).f;
}

Vec4 EnergyFunctional::gradient(const Mat2& F) const {
  if (kind == EnergyKind::LinearElasticity) {
    const Mat2 E = strain(F);
    return flat(2.0 * mu * E + lambda * E.trace() * Mat2::Identity());
  }
  const double J = F.determinant();
  const double s = std::sqrt(J * J + 4.0 * delta * delta);
  const double b = regularize(J, s, delta);
  const double db = b / s;
  const Partials p = partials(kind, mu, lambda, F.squaredNorm(), b);
  return p.fa * 2.0 * flat(F) + p.fb * db * det_gradient(F);
}

Mat4 EnergyFunctional::hessian(const Mat2& F) const {
  if (kind == EnergyKind::LinearElasticity) {
    Mat4 h;
    for (int k = 0; k < 4; ++k) {
      Vec4 unit = Vec4::Zero();
      unit[k] = 1.0;
      const Mat2 dE = strain(unflat(unit) + Mat2::Identity());
      h.col(k) = flat(2.0 * mu * dE + lambda * dE.trace() * Mat2::Identity());
    }
    return h;
  }
  const double J = F.determinant();
  const double s = std::sqrt(J * J + 4.0 * delta * delta);
  const double b = regularize(J, s, delta);
  const double db = b / s;
  const double d2b = 2.0 * delta * delta / (s * s * s);
  const Partials p = partials(kind, mu, lambda, F.squaredNorm(), b);
  const Vec4 ga = 2.0 * flat(F);
  const Vec4 cof = det_gradient(F);
  const Vec4 gb = db * cof;
  return p.fa * 2.0 * Mat4::Identity() + p.faa * ga * ga.transpose() + p.fab * (ga * gb.transpose() + gb * ga.transpose()) +
         p.fbb * gb * gb.transpose() + p.fb * (d2b * cof * cof.transpose() + db * det_hessian());
}

basis::QuadratureRule energy_rule(int order) { return basis::gll_rule(2 * order + 3); }

double element_energy(const mesh::Mesh& m, int element, const EnergyFunctional& w, const basis::QuadratureRule& rule) {
  const auto& el = m.elements.at(element);
  const auto q = mesh::reference_quadrature(el.shape, rule);
  double sum = 0.0;
  for (std::size_t k = 0; k < q.points.size(); ++k) {
    const Mat2 gi = mesh::ideal_gradient(m, element, q.points[k]);
    const Mat2 F = mesh::jacobian(m, element, q.points[k]).gradient * gi.inverse();
    sum += q.weights[k] * gi.determinant() * w.density(F);
  }
  return sum;
}

double element_energy(const mesh::Mesh& m, int element, const EnergyFunctional& w) {
  return element_energy(m, element, w, energy_rule(m.elements.at(element).order));
}

double default_delta(const mesh::Mesh& m) {
  double min_abs = std::numeric_limits<double>::infinity();
  for (int e = 0; e < m.num_elements(); ++e) {
    if (!mesh::validity(m, e).valid) continue;
    const auto& el = m.elements[e];
    for (const auto& xi : mesh::reference_quadrature(el.shape, energy_rule(el.order)).points) {
      const double J = mesh::jacobian(m, e, xi).det / mesh::ideal_gradient(m, e, xi).determinant();
      min_abs = std::min(min_abs, std::abs(J));
    }
  }
  if (!std::isfinite(min_abs)) return 1e-8;
  return std::max(1e-2 * min_abs, 1e-8);
}

// ---------------------------------------------------------------------------

Problem::Problem(mesh::Mesh m, EnergyFunctional w, const OptimizeOptions& opts)
    : mesh_(std::move(m)), w_(w), opts_(opts) {
  for (const auto& el : mesh_.elements) mesh::require_supported(el.shape);
  const int nn = mesh_.num_nodes();
  quad_.resize(mesh_.elements.size());
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto& el = mesh_.elements[e];
    const auto& ref = mesh::ReferenceElement::get(el.shape, el.order);
    const auto q = mesh::reference_quadrature(el.shape, energy_rule(el.order));
    for (std::size_t k = 0; k < q.points.size(); ++k) {
      const Mat2 gi = mesh::ideal_gradient(mesh_, e, q.points[k]);
      const double det = gi.determinant();
      if (!(det > 0.0)) fail(ErrorKind::DegenerateGeometry, "ideal element " + std::to_string(e) + " is degenerate or inverted");
      quad_[e].push_back({q.weights[k] * det, ref.gradients(q.points[k]) * gi.inverse()});
    }
  }
  incident_ = mesh::node_to_elements(mesh_);

  // Fixed: nodes on tagged boundary sides and on any side with one neighbour.
  std::vector<bool> fixed = mesh::boundary_node_mask(mesh_);
  std::map<std::pair<int, int>, int> side_count;
  for (const auto& el : mesh_.elements) {
    const auto v = mesh::element_vertices(el);
    for (std::size_t s = 0; s < v.size(); ++s) {
      const int a = v[s], b = v[(s + 1) % v.size()];
      ++side_count[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto v = mesh::element_vertices(mesh_.elements[e]);
    for (std::size_t s = 0; s < v.size(); ++s) {
      const int a = v[s], b = v[(s + 1) % v.size()];
      if (side_count[{std::min(a, b), std::max(a, b)}] == 1)
        for (int n : mesh::element_side_nodes(mesh_, e, static_cast<int>(s))) fixed[n] = true;
    }
  }
  if (opts_.move_excluded && !mesh_.meta.empty()) {
    for (const auto& b : mesh_.boundary) {
      const auto side = mesh::element_side_nodes(mesh_, b.element, b.side);
      if (!mesh_.meta[side.front()].excluded && !mesh_.meta[side.back()].excluded) continue;
      for (int n : side)
        if (mesh_.meta[n].excluded || (n != side.front() && n != side.back())) fixed[n] = false;
    }
  }
  free_.assign(nn, false);
  for (int n = 0; n < nn; ++n) free_[n] = !fixed[n] && !incident_[n].empty();

  local_length_.assign(nn, 0.0);
  std::vector<int> count(nn, 0);
  for (int e = 0; e < mesh_.num_elements(); ++e) {
    const auto& el = mesh_.elements[e];
    const auto v = mesh::element_vertices(el);
    double len = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) len += (mesh_.nodes[v[s]] - mesh_.nodes[v[(s + 1) % v.size()]]).norm();
    len /= static_cast<double>(v.size());
    for (int n : el.nodes) {
      local_length_[n] += len;
      ++count[n];
    }
  }
  for (int n = 0; n < nn; ++n)
    if (count[n] > 0) local_length_[n] /= count[n];
}

double Problem::energy_of(int e) const {
  const auto& el = mesh_.elements[e];
  const int nb = static_cast<int>(el.nodes.size());
  Eigen::Matrix<double, Eigen::Dynamic, 2> X(nb, 2);
  for (int i = 0; i < nb; ++i) X.row(i) = mesh_.nodes[el.nodes[i]].head<2>().transpose();
  double sum = 0.0;
  for (const auto& q : quad_[e]) sum += q.weight * w_.density(X.transpose() * q.grads);
  return sum;
}

double Problem::element_energy(int element) const {
  if (element < 0 || element >= mesh_.num_elements()) fail(ErrorKind::InvalidArgument, "element index out of range");
  return energy_of(element);
}

double Problem::total_energy() const {
  double sum = 0.0;
  for (int e = 0; e < mesh_.num_elements(); ++e) sum += energy_of(e);
  return sum;
}

double Problem::local_energy(int node) const {
  double sum = 0.0;
  for (int e : incident_.at(node)) sum += energy_of(e);
  return sum;
}

void Problem::derivatives(int node, Vec2* gradient, Mat2* hessian) const {
  Vec2 g = Vec2::Zero();
  Mat2 h = Mat2::Zero();
  for (int e : incident_.at(node)) {
    const auto& el = mesh_.elements[e];
    const int nb = static_cast<int>(el.nodes.size());
    Eigen::Matrix<double, Eigen::Dynamic, 2> X(nb, 2);
    for (int i = 0; i < nb; ++i) X.row(i) = mesh_.nodes[el.nodes[i]].head<2>().transpose();
    for (int l = 0; l < nb; ++l) {
      if (el.nodes[l] != node) continue;
      for (const auto& q : quad_[e]) {
        const Mat2 F = X.transpose() * q.grads;
        const Vec2 gl = q.grads.row(l).transpose();
        if (gradient) g += q.weight * unflat(w_.gradient(F)) * gl;
        if (hessian) {
          const Mat4 H = w_.hessian(F);
          for (int i = 0; i < 2; ++i)
            for (int a = 0; a < 2; ++a)
              for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) h(i, a) += q.weight * H(2 * i + j, 2 * a + k) * gl[j] * gl[k];
        }
      }
    }
  }
  if (gradient) *gradient = g;
  if (hessian) *hessian = h;
}

Vec2 Problem::gradient(int node) const {
  Vec2 g;
  derivatives(node, &g, nullptr);
  return g;
}

Mat2 Problem::hessian(int node) const {
  Mat2 h;
  derivatives(node, nullptr, &h);
  return h;
}

Vec2 Problem::relax_node(int node, double omega) {
  if (node < 0 || node >= mesh_.num_nodes()) fail(ErrorKind::InvalidArgument, "relax_node: node index out of range");
  const Vec2 start = mesh_.nodes[node].head<2>();
  const double h = local_length_[node];
  const double initial = local_energy(node);
  double energy = initial;
  for (int it = 0; it < opts_.newton_iterations; ++it) {
    Vec2 g;
    Mat2 H;
    derivatives(node, &g, &H);
    if (!(g.norm() > 0.0)) break;
    Vec2 d;
    Eigen::LLT<Mat2> llt(H);
    if (llt.info() == Eigen::Success && H.determinant() > 0.0 && H.trace() > 0.0) {
      d = llt.solve(-g);
    } else {
      const double curv = g.dot(H * g);
      d = curv > 0.0 ? Vec2(-(g.squaredNorm() / curv) * g) : Vec2(-0.1 * h / g.norm() * g);
    }
    if (d.norm() > h) d *= h / d.norm();
    if (d.norm() <= 1e-10 * h) break;
    const double slope = g.dot(d);
    if (!(slope < 0.0)) break;

    const Vec2 x = mesh_.nodes[node].head<2>();
    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      mesh_.nodes[node].head<2>() = x + alpha * d;
      const double trial = local_energy(node);
      if (trial <= energy + 1e-4 * alpha * slope && trial < energy) {
        energy = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      mesh_.nodes[node].head<2>() = x;
      break;
    }
  }
  if (omega != 1.0) {
    const Vec2 relaxed = mesh_.nodes[node].head<2>();
    mesh_.nodes[node].head<2>() = start + omega * (relaxed - start);
    if (!(local_energy(node) <= initial)) mesh_.nodes[node].head<2>() = relaxed;
  }
  return mesh_.nodes[node].head<2>() - start;
}

// ---------------------------------------------------------------------------

void OptimizeReport::write_csv(std::ostream& out) const {
  out << "sweep,energy,residual,invalid_count\n";
  out.precision(17);
  for (const auto& r : sweeps) out << r.sweep << ',' << r.energy << ',' << r.residual << ',' << r.invalid_count << '\n';
}

void OptimizeReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
  write_csv(f);
}

OptimizeResult optimize(const mesh::Mesh& m, EnergyFunctional w, const OptimizeOptions& opts) {
  if (!(opts.tolerance > 0.0)) fail(ErrorKind::InvalidArgument, "optimize: tolerance must be > 0");
  if (opts.max_sweeps < 1) fail(ErrorKind::InvalidArgument, "optimize: max_sweeps must be >= 1");
  OptimizeReport report;
  w.delta = opts.delta > 0.0 ? opts.delta : default_delta(m);
  report.delta = w.delta;

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& x : m.nodes) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const double L = m.nodes.empty() ? 0.0 : (hi - lo).norm();
  if (!(L > 0.0)) fail(ErrorKind::DegenerateGeometry, "optimize: mesh has zero extent");
  report.characteristic_length = L;

  Problem p(m, w, opts);
  report.initial_energy = p.total_energy();
  report.initial_invalid = mesh::count_invalid(p.mesh());
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    double moved = 0.0;
    for (int n = 0; n < p.mesh().num_nodes(); ++n)
      if (p.is_free(n)) moved = std::max(moved, p.relax_node(n, opts.over_relaxation).lpNorm<Eigen::Infinity>());
    const double residual = moved / L;
    report.sweeps.push_back({sweep, p.total_energy(), residual, mesh::count_invalid(p.mesh())});
    if (residual < opts.tolerance) {
      report.converged = true;
      break;
    }
  }
  return {p.mesh(), report};
}

} // namespace hoflow::variational
