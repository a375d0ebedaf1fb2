#include "hoflow/svv.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hoflow/eigenanalysis.hpp"
#include "hoflow/error.hpp"
#include "hoflow/polybasis.hpp"

#ifndef HOFLOW_KERNEL_DIR
#define HOFLOW_KERNEL_DIR "data/kernels"
#endif

namespace hoflow::svv {

void Kernel::validate() const {
  if (order < 1) fail(ErrorKind::InvalidArgument, "kernel order must be >= 1");
  if (static_cast<int>(entries.size()) != order + 1)
    fail(ErrorKind::InvalidArgument, "kernel of order " + std::to_string(order) + " needs " +
                                         std::to_string(order + 1) + " entries, got " + std::to_string(entries.size()));
  for (double q : entries)
    if (!(q >= 0.0 && q <= 1.0)) fail(ErrorKind::InvalidArgument, "kernel entries must lie in [0, 1]");
}

Kernel unit_kernel(int order) {
  Kernel k{order, std::vector<double>(order + 1, 1.0), "unit", nlohmann::json::object()};
  k.validate();
  return k;
}

Kernel zero_kernel(int order) {
  Kernel k{order, std::vector<double>(order + 1, 0.0), "zero", nlohmann::json::object()};
  k.validate();
  return k;
}

Kernel power_law_kernel(int order, double p_svv) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "power_law_kernel: order must be >= 1");
  if (!(p_svv >= 0.0)) fail(ErrorKind::InvalidArgument, "power_law_kernel: exponent must be >= 0");
  Kernel k;
  k.order = order;
  for (int p = 0; p <= order; ++p)
    k.entries.push_back(p == 0 ? (p_svv == 0.0 ? 1.0 : 0.0) : std::pow(static_cast<double>(p) / order, p_svv));
  std::ostringstream name;
  name << "power-law(" << p_svv << ")";
  k.provenance = name.str();
  k.generator_config = {{"P_svv", p_svv}};
  return k;
}

nlohmann::json to_json(const Kernel& k) {
  return {{"P", k.order}, {"entries", k.entries}, {"provenance", k.provenance}, {"generator_config", k.generator_config}};
}

Kernel kernel_from_json(const nlohmann::json& j) {
  Kernel k;
  try {
    k.order = j.at("P").get<int>();
    k.entries = j.at("entries").get<std::vector<double>>();
    k.provenance = j.at("provenance").get<std::string>();
    k.generator_config = j.value("generator_config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("kernel: ") + e.what());
  }
  try {
    k.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ParseError, std::string("kernel: ") + e.what());
  }
  return k;
}

Kernel read_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open kernel file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return kernel_from_json(j);
}

void write_kernel(const std::filesystem::path& path, const Kernel& k) {
  k.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + tmp);
    out << to_json(k).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path default_kernel_dir() {
  if (const char* env = std::getenv("HOFLOW_KERNEL_DIR"); env && *env) return env;
  return HOFLOW_KERNEL_DIR;
}

Kernel dg_kernel(int order, const std::filesystem::path& dir) {
  if (order < 2 || order > 10) fail(ErrorKind::InvalidArgument, "dg_kernel: P must be in 2..10");
  const auto path = dir / ("dg_P" + std::to_string(order) + ".json");
  if (std::filesystem::exists(path)) {
    Kernel k = read_kernel(path);
    if (k.order != order) fail(ErrorKind::ParseError, path.string() + ": order mismatch");
    return k;
  }
  Kernel k = esa::optimize_kernel(order).kernel;
  write_kernel(path, k);
  return k;
}

double svv_coefficient(const SvvConfig& c) {
  if (!(c.pe_star > 0.0) || !(c.velocity > 0.0) || !(c.size > 0.0) || c.order < 1)
    fail(ErrorKind::InvalidArgument, "svv_coefficient: Pe*, v, h and P must be positive");
  return c.velocity * c.size / (c.order * c.pe_star);
}

Eigen::MatrixXd filter_matrix(const Kernel& k) {
  k.validate();
  const auto t = basis::modal_transform(k.order);
  const Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(k.entries.data(), k.order + 1);
  return t.inverse * q.asDiagonal() * t.forward;
}

Eigen::VectorXd apply_kernel(const Eigen::VectorXd& g, const Kernel& k) {
  if (g.size() != k.order + 1) fail(ErrorKind::InvalidArgument, "apply_kernel: coefficient length does not match kernel order");
  return filter_matrix(k) * g;
}

Eigen::MatrixXd apply_kernel(const Eigen::MatrixXd& g, const Kernel& k, int direction) {
  if (g.rows() != k.order + 1 || g.cols() != k.order + 1)
    fail(ErrorKind::InvalidArgument, "apply_kernel: coefficient block does not match kernel order");
  const Eigen::MatrixXd F = filter_matrix(k);
  if (direction == 0) return F * g;
  if (direction == 1) return g * F.transpose();
  fail(ErrorKind::InvalidArgument, "apply_kernel: direction must be 0 or 1");
}

int default_quadrature_points(int order) {
  return static_cast<int>(std::ceil(1.5 * order + 1.5)) + 1;
}

void require_quadrature(int order, int q) {
  if (q < order + 1)
    fail(ErrorKind::InvalidArgument, "quadrature with " + std::to_string(q) + " points is below the interpolation minimum " +
                                         std::to_string(order + 1) + " for P = " + std::to_string(order));
}

// ---------------------------------------------------------------------------

Element1D::Element1D(int p, double length, int q) : order(p), points(q), h(length) {
  if (p < 1) fail(ErrorKind::InvalidArgument, "Element1D: order must be >= 1");
  if (!(length > 0.0)) fail(ErrorKind::InvalidArgument, "Element1D: length must be > 0");
  require_quadrature(p, q);
  const auto nodes = basis::Basis::nodal_gll(p).nodes();
  const auto rule = basis::gll_rule(q);
  B = basis::interpolation_matrix(nodes, rule.points);
  Bd = basis::differentiation_matrix(nodes, rule.points) * (2.0 / h);
  Dn = basis::differentiation_matrix(nodes, nodes) * (2.0 / h);
  w = Eigen::Map<const Eigen::VectorXd>(rule.weights.data(), q) * (0.5 * h);
}

Eigen::MatrixXd Element1D::mass() const { return B.transpose() * w.asDiagonal() * B; }
Eigen::MatrixXd Element1D::convection() const { return B.transpose() * w.asDiagonal() * Bd; }
Eigen::MatrixXd Element1D::stiffness() const { return Bd.transpose() * w.asDiagonal() * Bd; }

Eigen::MatrixXd Element1D::svv(const Kernel& k, double nu) const {
  if (k.order != order) fail(ErrorKind::InvalidArgument, "svv: kernel order does not match element order");
  return -nu * Bd.transpose() * w.asDiagonal() * B * filter_matrix(k) * Dn;
}

Eigen::VectorXd Element1D::burgers(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd uq = B * u;
  const Eigen::VectorXd dq = Bd * u;
  return -B.transpose() * (w.array() * uq.array() * dq.array()).matrix();
}

int Grid1D::dof(int element, int local) const {
  const int d = element * order + local;
  return periodic && d == num_elements() * order ? 0 : d;
}

Eigen::VectorXd Grid1D::coordinates() const {
  const auto nodes = basis::Basis::nodal_gll(order).nodes();
  Eigen::VectorXd x(num_dofs());
  for (int e = 0; e < num_elements(); ++e)
    for (int j = 0; j <= order; ++j)
      if (!(periodic && e == num_elements() - 1 && j == order))
        x[dof(e, j)] = vertices[e] + 0.5 * (nodes[j] + 1.0) * h(e);
  return x;
}

Grid1D Grid1D::uniform(double x0, double x1, int elements, int order, bool periodic) {
  if (elements < 1 || !(x1 > x0)) fail(ErrorKind::InvalidArgument, "Grid1D::uniform: bad extent or element count");
  Grid1D g;
  g.order = order;
  g.periodic = periodic;
  for (int e = 0; e <= elements; ++e) g.vertices.push_back(x0 + (x1 - x0) * e / elements);
  return g;
}

namespace {

template <class ElementMatrix>
Eigen::SparseMatrix<double> assemble(const Grid1D& g, ElementMatrix&& local) {
  std::vector<Eigen::Triplet<double>> t;
  for (int e = 0; e < g.num_elements(); ++e) {
    const Eigen::MatrixXd m = local(e);
    for (int i = 0; i <= g.order; ++i)
      for (int j = 0; j <= g.order; ++j) t.emplace_back(g.dof(e, i), g.dof(e, j), m(i, j));
  }
  Eigen::SparseMatrix<double> out(g.num_dofs(), g.num_dofs());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

} // namespace

Eigen::SparseMatrix<double> assemble_mass(const Grid1D& g, int q) {
  return assemble(g, [&](int e) { return Element1D(g.order, g.h(e), q).mass(); });
}

Eigen::SparseMatrix<double> assemble_convection(const Grid1D& g, int q) {
  return assemble(g, [&](int e) { return Element1D(g.order, g.h(e), q).convection(); });
}

Eigen::SparseMatrix<double> assemble_stiffness(const Grid1D& g, int q) {
  return assemble(g, [&](int e) { return Element1D(g.order, g.h(e), q).stiffness(); });
}

Eigen::SparseMatrix<double> assemble_svv_operator(const Grid1D& g, const Kernel& k, double pe_star, double velocity,
                                                  int q) {
  return assemble(g, [&](int e) {
    const double nu = svv_coefficient({pe_star, velocity, g.h(e), g.order});
    return Element1D(g.order, g.h(e), q).svv(k, nu);
  });
}

Eigen::VectorXd assemble_burgers(const Grid1D& g, const Eigen::VectorXd& u, int q) {
  if (u.size() != g.num_dofs()) fail(ErrorKind::InvalidArgument, "assemble_burgers: state size mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(g.num_dofs());
  for (int e = 0; e < g.num_elements(); ++e) {
    const Element1D el(g.order, g.h(e), q);
    Eigen::VectorXd ue(g.order + 1);
    for (int j = 0; j <= g.order; ++j) ue[j] = u[g.dof(e, j)];
    const Eigen::VectorXd r = el.burgers(ue);
    for (int j = 0; j <= g.order; ++j) out[g.dof(e, j)] += r[j];
  }
  return out;
}

Eigen::MatrixXd element_mass_matrix(const mesh::Mesh& m, int element, int q) {
  const auto& el = m.elements.at(element);
  require_quadrature(el.order, q);
  const auto& ref = mesh::ReferenceElement::get(el.shape, el.order);
  const auto quad = mesh::reference_quadrature(el.shape, basis::gll_rule(q));
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ref.size(), ref.size());
  for (std::size_t k = 0; k < quad.points.size(); ++k) {
    const Eigen::VectorXd l = ref.values(quad.points[k]);
    M += quad.weights[k] * mesh::jacobian(m, element, quad.points[k]).det * (l * l.transpose());
  }
  return M;
}

} // namespace hoflow::svv
