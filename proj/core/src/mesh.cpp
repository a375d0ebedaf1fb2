#include "hoflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hoflow/error.hpp"

namespace hoflow::mesh {

std::string_view to_string(Shape shape) {
  switch (shape) {
  case Shape::Triangle: return "triangle";
  case Shape::Quadrilateral: return "quadrilateral";
  case Shape::Tetrahedron: return "tetrahedron";
  case Shape::Prism: return "prism";
  }
  return "unknown";
}

Shape shape_from_string(std::string_view name) {
  if (name == "triangle") return Shape::Triangle;
  if (name == "quadrilateral") return Shape::Quadrilateral;
  if (name == "tetrahedron") return Shape::Tetrahedron;
  if (name == "prism") return Shape::Prism;
  fail(ErrorKind::ParseError, "unknown element shape '" + std::string(name) + "'");
}

void require_supported(Shape shape) {
  if (shape != Shape::Triangle && shape != Shape::Quadrilateral)
    fail(ErrorKind::InvalidArgument, "element shape '" + std::string(to_string(shape)) + "' is not supported");
}

int vertex_count(Shape shape) {
  switch (shape) {
  case Shape::Triangle: return 3;
  case Shape::Quadrilateral: return 4;
  case Shape::Tetrahedron: return 4;
  case Shape::Prism: return 6;
  }
  return 0;
}

int node_count(Shape shape, int order) {
  require_supported(shape);
  if (order < 1) fail(ErrorKind::InvalidArgument, "element order must be >= 1");
  return shape == Shape::Triangle ? (order + 1) * (order + 2) / 2 : (order + 1) * (order + 1);
}

std::vector<Vec2> reference_vertices(Shape shape) {
  require_supported(shape);
  if (shape == Shape::Triangle) return {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  return {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
}

bool inside_reference(Shape shape, const Vec2& xi, double tol) {
  if (xi[0] < -tol || xi[1] < -tol) return false;
  if (shape == Shape::Triangle) return xi[0] + xi[1] <= 1.0 + tol;
  return xi[0] <= 1.0 + tol && xi[1] <= 1.0 + tol;
}

// ---------------------------------------------------------------------------

ReferenceElement::ReferenceElement(Shape shape, int order) : shape_(shape), order_(order) {
  require_supported(shape);
  const double h = 1.0 / order;
  const auto verts = reference_vertices(shape);
  const int nv = static_cast<int>(verts.size());
  nodes_ = verts;
  for (int k = 0; k < nv; ++k) {
    const Vec2& a = verts[k];
    const Vec2& b = verts[(k + 1) % nv];
    for (int i = 1; i < order; ++i) nodes_.push_back(a + (i * h) * (b - a));
  }
  for (int j = 1; j < order; ++j) {
    const int imax = shape == Shape::Triangle ? order - 1 - j : order - 1;
    for (int i = 1; i <= imax; ++i) nodes_.emplace_back(i * h, j * h);
  }

  for (const auto& x : nodes_) {
    const int i = static_cast<int>(std::lround(x[0] * order));
    const int j = static_cast<int>(std::lround(x[1] * order));
    lattice_.push_back(shape == Shape::Triangle ? std::array<int, 3>{order - i - j, i, j} : std::array<int, 3>{i, j, 0});
  }
}

const ReferenceElement& ReferenceElement::get(Shape shape, int order) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<ReferenceElement>> cache;
  require_supported(shape);
  if (order < 1 || order > 12) fail(ErrorKind::InvalidArgument, "element order must be in 1..12");
  std::lock_guard lock(mutex);
  auto& slot = cache[{static_cast<int>(shape), order}];
  if (!slot) slot.reset(new ReferenceElement(shape, order));
  return *slot;
}

namespace {

// Silvester factor prod_{m<n} (P t - m) / (m + 1) and its derivative in t.
std::pair<double, double> silvester(int n, int order, double t) {
  double v = 1.0, d = 0.0;
  for (int m = 0; m < n; ++m) {
    const double f = (order * t - m) / (m + 1);
    d = d * f + v * order / (m + 1);
    v *= f;
  }
  return {v, d};
}

// 1D equispaced Lagrange factor on [0,1]: prod_{m != i} (P t - m) / (i - m).
std::pair<double, double> lagrange_factor(int i, int order, double t) {
  double v = 1.0, d = 0.0;
  for (int m = 0; m <= order; ++m) {
    if (m == i) continue;
    const double f = (order * t - m) / (i - m);
    d = d * f + v * order / (i - m);
    v *= f;
  }
  return {v, d};
}

} // namespace

Eigen::VectorXd ReferenceElement::values(const Vec2& xi) const {
  Eigen::VectorXd out(size());
  for (int n = 0; n < size(); ++n) {
    const auto& k = lattice_[n];
    if (shape_ == Shape::Triangle) {
      out[n] = silvester(k[0], order_, 1.0 - xi[0] - xi[1]).first * silvester(k[1], order_, xi[0]).first *
               silvester(k[2], order_, xi[1]).first;
    } else {
      out[n] = lagrange_factor(k[0], order_, xi[0]).first * lagrange_factor(k[1], order_, xi[1]).first;
    }
  }
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> ReferenceElement::gradients(const Vec2& xi) const {
  Eigen::Matrix<double, Eigen::Dynamic, 2> out(size(), 2);
  for (int n = 0; n < size(); ++n) {
    const auto& k = lattice_[n];
    if (shape_ == Shape::Triangle) {
      const auto [a, da] = silvester(k[0], order_, 1.0 - xi[0] - xi[1]);
      const auto [b, db] = silvester(k[1], order_, xi[0]);
      const auto [c, dc] = silvester(k[2], order_, xi[1]);
      out(n, 0) = -da * b * c + a * db * c;
      out(n, 1) = -da * b * c + a * b * dc;
    } else {
      const auto [a, da] = lagrange_factor(k[0], order_, xi[0]);
      const auto [b, db] = lagrange_factor(k[1], order_, xi[1]);
      out(n, 0) = da * b;
      out(n, 1) = a * db;
    }
  }
  return out;
}

std::vector<int> ReferenceElement::side_nodes(int side) const {
  const int nv = sides();
  if (side < 0 || side >= nv) fail(ErrorKind::InvalidArgument, "side index out of range");
  std::vector<int> out{side};
  for (int i = 0; i < order_ - 1; ++i) out.push_back(nv + side * (order_ - 1) + i);
  out.push_back((side + 1) % nv);
  return out;
}

ReferenceQuadrature reference_quadrature(Shape shape, const basis::QuadratureRule& rule) {
  require_supported(shape);
  ReferenceQuadrature q;
  const int n = rule.count();
  for (int j = 0; j < n; ++j) {
    const double b = 0.5 * (rule.points[j] + 1.0);
    const double wb = 0.5 * rule.weights[j];
    for (int i = 0; i < n; ++i) {
      const double a = 0.5 * (rule.points[i] + 1.0);
      const double wa = 0.5 * rule.weights[i];
      if (shape == Shape::Quadrilateral) {
        q.points.emplace_back(a, b);
        q.weights.push_back(wa * wb);
      } else {
        q.points.emplace_back(a * (1.0 - b), b);
        q.weights.push_back(wa * wb * (1.0 - b));
      }
    }
  }
  return q;
}

// ---------------------------------------------------------------------------

namespace {

const Element& element_at(const Mesh& mesh, int e) {
  if (e < 0 || e >= mesh.num_elements()) fail(ErrorKind::InvalidArgument, "element index out of range");
  return mesh.elements[e];
}

} // namespace

std::span<const int> element_vertices(const Element& e) {
  return std::span<const int>(e.nodes.data(), static_cast<std::size_t>(vertex_count(e.shape)));
}

Vec3 map_physical(const Mesh& mesh, int element, const Vec2& xi) {
  const Element& el = element_at(mesh, element);
  if (!inside_reference(el.shape, xi))
    fail(ErrorKind::DomainError, "map_physical: reference point outside element " + std::to_string(element));
  const auto& ref = ReferenceElement::get(el.shape, el.order);
  const Eigen::VectorXd l = ref.values(xi);
  Vec3 x = Vec3::Zero();
  for (int n = 0; n < ref.size(); ++n) x += l[n] * mesh.nodes[el.nodes[n]];
  return x;
}

Vec3 ideal_map(const Mesh& mesh, int element, const Vec2& xi) {
  const Element& el = element_at(mesh, element);
  const auto v = element_vertices(el);
  const auto& p = mesh.nodes;
  if (el.shape == Shape::Triangle) return p[v[0]] + xi[0] * (p[v[1]] - p[v[0]]) + xi[1] * (p[v[2]] - p[v[0]]);
  const double s = xi[0], t = xi[1];
  return (1 - s) * (1 - t) * p[v[0]] + s * (1 - t) * p[v[1]] + s * t * p[v[2]] + (1 - s) * t * p[v[3]];
}

Mat2 ideal_gradient(const Mesh& mesh, int element, const Vec2& xi) {
  const Element& el = element_at(mesh, element);
  const auto v = element_vertices(el);
  auto xy = [&](int k) -> Vec2 { return mesh.nodes[v[k]].head<2>(); };
  Mat2 g;
  if (el.shape == Shape::Triangle) {
    g.col(0) = xy(1) - xy(0);
    g.col(1) = xy(2) - xy(0);
  } else {
    const double s = xi[0], t = xi[1];
    g.col(0) = (1 - t) * (xy(1) - xy(0)) + t * (xy(2) - xy(3));
    g.col(1) = (1 - s) * (xy(3) - xy(0)) + s * (xy(2) - xy(1));
  }
  return g;
}

JacobianEval jacobian(const Mesh& mesh, int element, const Vec2& xi) {
  const Element& el = element_at(mesh, element);
  const auto& ref = ReferenceElement::get(el.shape, el.order);
  const auto dl = ref.gradients(xi);
  JacobianEval j;
  j.gradient.setZero();
  for (int n = 0; n < ref.size(); ++n) j.gradient += mesh.nodes[el.nodes[n]].head<2>() * dl.row(n);
  j.det = j.gradient.determinant();
  return j;
}

Validity validity(const Mesh& mesh, int element, const basis::QuadratureRule& rule) {
  const Element& el = element_at(mesh, element);
  auto pts = reference_quadrature(el.shape, rule).points;
  for (const auto& v : reference_vertices(el.shape)) pts.push_back(v);
  Validity out;
  out.min_det = std::numeric_limits<double>::infinity();
  out.max_det = -std::numeric_limits<double>::infinity();
  for (const auto& xi : pts) {
    const double d = jacobian(mesh, element, xi).det;
    out.min_det = std::min(out.min_det, d);
    out.max_det = std::max(out.max_det, d);
  }
  out.valid = out.min_det > 0.0;
  out.scaled_jacobian = out.max_det != 0.0 ? out.min_det / out.max_det : 0.0;
  if (!out.valid && out.max_det <= 0.0) out.scaled_jacobian = -1.0;
  return out;
}

Validity validity(const Mesh& mesh, int element) {
  return validity(mesh, element, basis::gll_rule(element_at(mesh, element).order + 2));
}

int count_invalid(const Mesh& mesh) {
  int n = 0;
  for (int e = 0; e < mesh.num_elements(); ++e)
    if (!validity(mesh, e).valid) ++n;
  return n;
}

std::vector<int> element_side_nodes(const Mesh& mesh, int element, int side) {
  const Element& el = element_at(mesh, element);
  const auto local = ReferenceElement::get(el.shape, el.order).side_nodes(side);
  std::vector<int> out;
  out.reserve(local.size());
  for (int l : local) out.push_back(el.nodes[l]);
  return out;
}

std::vector<std::vector<int>> node_to_elements(const Mesh& mesh) {
  std::vector<std::vector<int>> out(mesh.nodes.size());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int n : mesh.elements[e].nodes) out[n].push_back(e);
  for (auto& v : out) v.erase(std::unique(v.begin(), v.end()), v.end());
  return out;
}

std::vector<bool> boundary_node_mask(const Mesh& mesh) {
  std::vector<bool> mask(mesh.nodes.size(), false);
  for (const auto& b : mesh.boundary)
    for (int n : element_side_nodes(mesh, b.element, b.side)) mask[n] = true;
  return mask;
}

std::vector<int> boundary_nodes(const Mesh& mesh) {
  const auto mask = boundary_node_mask(mesh);
  std::vector<int> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<int>(i));
  return out;
}

void check_structure(const Mesh& mesh) {
  const int nn = mesh.num_nodes();
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> sides;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Element& el = mesh.elements[e];
    require_supported(el.shape);
    if (static_cast<int>(el.nodes.size()) != node_count(el.shape, el.order))
      fail(ErrorKind::InvalidArgument, "element " + std::to_string(e) + ": wrong node count for its shape and order");
    for (int n : el.nodes)
      if (n < 0 || n >= nn) fail(ErrorKind::InvalidArgument, "element " + std::to_string(e) + ": node index out of range");
    const auto v = element_vertices(el);
    for (int s = 0; s < vertex_count(el.shape); ++s) {
      const int a = v[s], b = v[(s + 1) % v.size()];
      sides[{std::min(a, b), std::max(a, b)}].push_back({e, s});
    }
  }
  for (const auto& [key, list] : sides) {
    if (list.size() > 2)
      fail(ErrorKind::InvalidArgument, "edge (" + std::to_string(key.first) + ", " + std::to_string(key.second) +
                                           ") shared by more than two elements");
    if (list.size() == 2) {
      auto a = element_side_nodes(mesh, list[0].first, list[0].second);
      auto b = element_side_nodes(mesh, list[1].first, list[1].second);
      std::reverse(b.begin(), b.end());
      if (a != b)
        fail(ErrorKind::InvalidArgument, "non-conforming edge between elements " + std::to_string(list[0].first) +
                                             " and " + std::to_string(list[1].first));
    }
  }
  for (std::size_t i = 0; i < mesh.boundary.size(); ++i) {
    const auto& b = mesh.boundary[i];
    if (b.element < 0 || b.element >= mesh.num_elements() || b.side < 0 ||
        b.side >= vertex_count(mesh.elements[b.element].shape))
      fail(ErrorKind::InvalidArgument, "boundary entry " + std::to_string(i) + " out of range");
    const auto v = element_vertices(mesh.elements[b.element]);
    const int a = v[b.side], c = v[(b.side + 1) % v.size()];
    if (sides.at({std::min(a, c), std::max(a, c)}).size() != 1)
      fail(ErrorKind::InvalidArgument, "boundary entry " + std::to_string(i) + " is an interior edge");
  }
  if (!mesh.meta.empty() && mesh.meta.size() != mesh.nodes.size())
    fail(ErrorKind::InvalidArgument, "node metadata size does not match node count");
}

Mesh elevate_order(const Mesh& linear, int order) {
  if (order < 1) fail(ErrorKind::InvalidArgument, "elevate_order: order must be >= 1");
  Mesh out;
  out.nodes = linear.nodes;
  out.meta = linear.meta;
  out.boundary = linear.boundary;
  std::map<std::pair<int, int>, std::vector<int>> edge_nodes; // oriented from lower to higher vertex id
  for (int e = 0; e < linear.num_elements(); ++e) {
    const Element& el = linear.elements[e];
    require_supported(el.shape);
    if (el.order != 1) fail(ErrorKind::InvalidArgument, "elevate_order: input element " + std::to_string(e) + " is not linear");
    const auto& ref = ReferenceElement::get(el.shape, order);
    const int nv = vertex_count(el.shape);
    Element hi{el.shape, order, std::vector<int>(ref.size(), -1)};
    for (int k = 0; k < nv; ++k) hi.nodes[k] = el.nodes[k];
    auto add_node = [&](const Vec2& xi) {
      out.nodes.push_back(ideal_map(linear, e, xi));
      if (!out.meta.empty()) out.meta.emplace_back();
      return out.num_nodes() - 1;
    };
    for (int s = 0; s < nv; ++s) {
      const int a = el.nodes[s], b = el.nodes[(s + 1) % nv];
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = edge_nodes.find(key);
      const auto local = ref.side_nodes(s);
      if (it == edge_nodes.end()) {
        std::vector<int> ids;
        for (int i = 1; i < order; ++i) ids.push_back(add_node(ref.nodes()[local[i]]));
        if (a > b) std::reverse(ids.begin(), ids.end());
        it = edge_nodes.emplace(key, std::move(ids)).first;
      }
      std::vector<int> ids = it->second;
      if (a > b) std::reverse(ids.begin(), ids.end());
      for (int i = 1; i < order; ++i) hi.nodes[local[i]] = ids[i - 1];
    }
    for (int n = 0; n < ref.size(); ++n)
      if (hi.nodes[n] < 0) hi.nodes[n] = add_node(ref.nodes()[n]);
    out.elements.push_back(std::move(hi));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON format

namespace {

using nlohmann::json;

constexpr const char* kFormat = "hoflow-mesh";
constexpr int kVersion = 1;
constexpr const char* kOrdering = "vertices,edges,interior-rows;equispaced";

} // namespace

void write_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["node_ordering"] = kOrdering;
  json nodes = json::array();
  for (const auto& p : mesh.nodes) nodes.push_back({p.x(), p.y(), p.z()});
  j["nodes"] = std::move(nodes);
  json elems = json::array();
  for (const auto& e : mesh.elements) elems.push_back({{"shape", to_string(e.shape)}, {"order", e.order}, {"nodes", e.nodes}});
  j["elements"] = std::move(elems);
  json bnd = json::array();
  for (const auto& b : mesh.boundary) {
    json t = b.tag == kFarfield ? json("farfield") : json(b.tag);
    bnd.push_back({{"element", b.element}, {"side", b.side}, {"tag", t}});
  }
  j["boundary"] = std::move(bnd);
  json meta = json::array();
  for (std::size_t i = 0; i < mesh.meta.size(); ++i) {
    const auto& m = mesh.meta[i];
    if (m.patch < 0 && !m.excluded) continue;
    meta.push_back({{"node", i}, {"patch", m.patch}, {"params", {m.params[0], m.params[1]}}, {"excluded", m.excluded}});
  }
  j["node_meta"] = std::move(meta);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::InvalidArgument, "mesh: cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Mesh read_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "mesh: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, "mesh: " + path.string() + ": " + e.what());
  }
  std::string where = path.string();
  try {
    if (!j.is_object() || j.value("format", "") != kFormat)
      fail(ErrorKind::ParseError, "not a " + std::string(kFormat) + " file");
    if (j.at("version").get<int>() != kVersion) fail(ErrorKind::ParseError, "unsupported version");
    Mesh m;
    const auto& nodes = j.at("nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      where = path.string() + ": nodes[" + std::to_string(i) + "]";
      const auto& p = nodes[i];
      if (!p.is_array() || (p.size() != 2 && p.size() != 3)) fail(ErrorKind::ParseError, "expected [x, y, z]");
      m.nodes.emplace_back(p[0].get<double>(), p[1].get<double>(), p.size() == 3 ? p[2].get<double>() : 0.0);
    }
    const auto& elems = j.at("elements");
    for (std::size_t i = 0; i < elems.size(); ++i) {
      where = path.string() + ": elements[" + std::to_string(i) + "]";
      const auto& e = elems[i];
      Element el{shape_from_string(e.at("shape").get<std::string>()), e.at("order").get<int>(),
                 e.at("nodes").get<std::vector<int>>()};
      m.elements.push_back(std::move(el));
    }
    const auto& bnd = j.value("boundary", json::array());
    for (std::size_t i = 0; i < bnd.size(); ++i) {
      where = path.string() + ": boundary[" + std::to_string(i) + "]";
      const auto& b = bnd[i];
      const auto& t = b.at("tag");
      int tag = kFarfield;
      if (t.is_string()) {
        if (t.get<std::string>() != "farfield") fail(ErrorKind::ParseError, "tag must be a patch id or \"farfield\"");
      } else {
        tag = t.get<int>();
      }
      m.boundary.push_back({b.at("element").get<int>(), b.at("side").get<int>(), tag});
    }
    const auto& meta = j.value("node_meta", json::array());
    if (!meta.empty()) m.meta.assign(m.nodes.size(), NodeMeta{});
    for (std::size_t i = 0; i < meta.size(); ++i) {
      where = path.string() + ": node_meta[" + std::to_string(i) + "]";
      const auto& r = meta[i];
      const int n = r.at("node").get<int>();
      if (n < 0 || n >= m.num_nodes()) fail(ErrorKind::ParseError, "node index out of range");
      m.meta[n].patch = r.value("patch", -1);
      const auto p = r.value("params", std::vector<double>{0.0, 0.0});
      if (p.size() != 2) fail(ErrorKind::ParseError, "params must have two entries");
      m.meta[n].params = Vec2(p[0], p[1]);
      m.meta[n].excluded = r.value("excluded", false);
    }
    where = path.string();
    check_structure(m);
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, "mesh: " + where + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError || e.kind() == ErrorKind::InvalidArgument)
      fail(ErrorKind::ParseError, "mesh: " + where + ": " + e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Gmsh 2.2

namespace {

struct GmshType {
  int dim;
  Shape shape;
  int order;
};

std::optional<GmshType> gmsh_type(int t) {
  switch (t) {
  case 1: return GmshType{1, Shape::Triangle, 1};
  case 8: return GmshType{1, Shape::Triangle, 2};
  case 26: return GmshType{1, Shape::Triangle, 3};
  case 27: return GmshType{1, Shape::Triangle, 4};
  case 2: return GmshType{2, Shape::Triangle, 1};
  case 9: return GmshType{2, Shape::Triangle, 2};
  case 21: return GmshType{2, Shape::Triangle, 3};
  case 23: return GmshType{2, Shape::Triangle, 4};
  case 3: return GmshType{2, Shape::Quadrilateral, 1};
  case 10: return GmshType{2, Shape::Quadrilateral, 2};
  case 36: return GmshType{2, Shape::Quadrilateral, 3};
  case 37: return GmshType{2, Shape::Quadrilateral, 4};
  default: return std::nullopt;
  }
}

// Integer lattice coordinates of gmsh's recursive node ordering.
void gmsh_lattice(Shape shape, int p, int offset, std::vector<std::array<int, 2>>& out) {
  if (p == 0) {
    out.push_back({offset, offset});
    return;
  }
  std::vector<std::array<int, 2>> v;
  if (shape == Shape::Triangle) v = {{0, 0}, {p, 0}, {0, p}};
  else v = {{0, 0}, {p, 0}, {p, p}, {0, p}};
  for (const auto& c : v) out.push_back({c[0] + offset, c[1] + offset});
  const int nv = static_cast<int>(v.size());
  for (int k = 0; k < nv; ++k) {
    const auto& a = v[k];
    const auto& b = v[(k + 1) % nv];
    for (int i = 1; i < p; ++i)
      out.push_back({a[0] + (b[0] - a[0]) / p * i + offset, a[1] + (b[1] - a[1]) / p * i + offset});
  }
  const int inner = shape == Shape::Triangle ? p - 3 : p - 2;
  if (inner >= 0) gmsh_lattice(shape, inner, offset + 1, out);
}

std::vector<int> gmsh_permutation(Shape shape, int order) {
  std::vector<std::array<int, 2>> lattice;
  gmsh_lattice(shape, order, 0, lattice);
  const auto& ref = ReferenceElement::get(shape, order);
  std::vector<int> perm(lattice.size());
  for (std::size_t g = 0; g < lattice.size(); ++g) {
    int found = -1;
    for (int n = 0; n < ref.size(); ++n) {
      const Vec2 c = ref.nodes()[n] * order;
      if (std::abs(c[0] - lattice[g][0]) < 1e-9 && std::abs(c[1] - lattice[g][1]) < 1e-9) found = n;
    }
    perm[g] = found;
  }
  return perm;
}

} // namespace

Mesh read_gmsh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "gmsh: cannot open " + path.string());
  std::map<int, std::string> physical_names;
  std::map<long, int> node_id;
  Mesh m;
  struct Line {
    int a, b, tag;
  };
  std::vector<Line> lines;
  std::string line;
  int lineno = 0;
  auto err = [&](const std::string& msg) {
    fail(ErrorKind::ParseError, "gmsh: " + path.string() + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&]() {
    if (!std::getline(in, line)) err("unexpected end of file");
    ++lineno;
    return std::istringstream(line);
  };
  bool saw_format = false, saw_nodes = false, saw_elements = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("$MeshFormat", 0) == 0) {
      auto s = next();
      double version = 0;
      int file_type = -1;
      s >> version >> file_type;
      if (!s || version < 2.0 || version >= 3.0 || file_type != 0) err("only ASCII format 2.x is supported");
      saw_format = true;
    } else if (line.rfind("$PhysicalNames", 0) == 0) {
      auto s = next();
      int n = 0;
      if (!(s >> n)) err("bad physical name count");
      for (int i = 0; i < n; ++i) {
        auto r = next();
        int dim = 0, tag = 0;
        std::string name;
        if (!(r >> dim >> tag >> std::quoted(name))) err("bad physical name record");
        physical_names[tag] = name;
      }
    } else if (line.rfind("$Nodes", 0) == 0) {
      auto s = next();
      long n = 0;
      if (!(s >> n) || n < 0) err("bad node count");
      for (long i = 0; i < n; ++i) {
        auto r = next();
        long id;
        double x, y, z;
        if (!(r >> id >> x >> y >> z)) err("bad node record");
        node_id[id] = m.num_nodes();
        m.nodes.emplace_back(x, y, z);
      }
      saw_nodes = true;
    } else if (line.rfind("$Elements", 0) == 0) {
      auto s = next();
      long n = 0;
      if (!(s >> n) || n < 0) err("bad element count");
      for (long i = 0; i < n; ++i) {
        auto r = next();
        int id, type, ntags;
        if (!(r >> id >> type >> ntags)) err("bad element record");
        std::vector<int> tags(ntags);
        for (auto& t : tags)
          if (!(r >> t)) err("bad element tags");
        std::vector<int> nodes;
        long nid;
        while (r >> nid) {
          auto it = node_id.find(nid);
          if (it == node_id.end()) err("element references unknown node " + std::to_string(nid));
          nodes.push_back(it->second);
        }
        const auto gt = gmsh_type(type);
        if (!gt) {
          if (type == 15) continue; // point elements
          err("unsupported element type " + std::to_string(type));
        }
        if (gt->dim == 1) {
          if (static_cast<int>(nodes.size()) != gt->order + 1) err("wrong node count for line element");
          const int phys = tags.empty() ? 0 : tags[0];
          const auto name = physical_names.find(phys);
          const int tag = name != physical_names.end() && name->second == "farfield" ? kFarfield : phys;
          lines.push_back({nodes[0], nodes[1], tag});
          continue;
        }
        const auto perm = gmsh_permutation(gt->shape, gt->order);
        if (nodes.size() != perm.size()) err("wrong node count for element type " + std::to_string(type));
        Element el{gt->shape, gt->order, std::vector<int>(perm.size())};
        for (std::size_t g = 0; g < perm.size(); ++g) el.nodes[perm[g]] = nodes[g];
        m.elements.push_back(std::move(el));
      }
      saw_elements = true;
    }
  }
  if (!saw_format || !saw_nodes || !saw_elements) err("missing $MeshFormat, $Nodes or $Elements section");

  std::map<std::pair<int, int>, std::pair<int, int>> side_of;
  for (int e = 0; e < m.num_elements(); ++e) {
    const auto v = element_vertices(m.elements[e]);
    for (std::size_t s = 0; s < v.size(); ++s) {
      const int a = v[s], b = v[(s + 1) % v.size()];
      side_of[{std::min(a, b), std::max(a, b)}] = {e, static_cast<int>(s)};
    }
  }
  for (const auto& l : lines) {
    const auto it = side_of.find({std::min(l.a, l.b), std::max(l.a, l.b)});
    if (it == side_of.end()) err("boundary line does not match an element side");
    m.boundary.push_back({it->second.first, it->second.second, l.tag});
  }
  try {
    check_structure(m);
  } catch (const Error& e) {
    fail(ErrorKind::ParseError, "gmsh: " + path.string() + ": " + e.what());
  }
  return m;
}

Mesh load_mesh(const std::filesystem::path& path) {
  if (path.extension() == ".msh") return read_gmsh(path);
  return read_mesh(path);
}

// ---------------------------------------------------------------------------

Mesh quarter_annulus(std::span<const double> radii, int angular_divisions) {
  if (radii.size() < 2 || angular_divisions < 1)
    fail(ErrorKind::InvalidArgument, "quarter_annulus: need >= 2 radii and >= 1 angular division");
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1]) || !(radii[0] > 0))
      fail(ErrorKind::InvalidArgument, "quarter_annulus: radii must be positive and increasing");
  const int nr = static_cast<int>(radii.size());
  const int nt = angular_divisions;
  Mesh m;
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j <= nt; ++j) {
      const double t = 0.5 * std::numbers::pi * j / nt;
      m.nodes.emplace_back(radii[i] * std::cos(t), radii[i] * std::sin(t), 0.0);
    }
  }
  // Snap axis-aligned coordinates exactly.
  for (auto& p : m.nodes)
    for (int d = 0; d < 2; ++d)
      if (std::abs(p[d]) < 1e-15) p[d] = 0.0;
  auto id = [&](int i, int j) { return i * (nt + 1) + j; };
  for (int i = 0; i + 1 < nr; ++i) {
    for (int j = 0; j < nt; ++j) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      const int lower = m.num_elements();
      m.elements.push_back({Shape::Triangle, 1, {a, b, c}});
      m.elements.push_back({Shape::Triangle, 1, {a, c, d}});
      if (i == 0) m.boundary.push_back({lower + 1, 2, 0});
      if (i + 2 == nr) m.boundary.push_back({lower, 1, 1});
      if (j == 0) m.boundary.push_back({lower, 0, 2});
      if (j + 1 == nt) m.boundary.push_back({lower + 1, 1, 3});
    }
  }
  return m;
}

} // namespace hoflow::mesh
