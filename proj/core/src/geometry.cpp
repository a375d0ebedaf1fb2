#include "hoflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hoflow/error.hpp"

namespace hoflow::geom {

namespace {

template <class... Ts> struct Overloaded : Ts... { using Ts::operator()...; };
template <class... Ts> Overloaded(Ts...) -> Overloaded<Ts...>;

struct Bernstein {
  std::vector<double> b, db, ddb;
};

std::vector<double> bernstein_values(int n, double s) {
  std::vector<double> b(std::max(n, 0) + 1, 0.0);
  if (n < 0) return {};
  b[0] = 1.0;
  for (int k = 1; k <= n; ++k) {
    for (int i = k; i >= 0; --i) {
      const double left = i > 0 ? b[i - 1] : 0.0;
      b[i] = (1.0 - s) * b[i] + s * left;
    }
  }
  return b;
}

Bernstein bernstein(int n, double s) {
  Bernstein out;
  out.b = bernstein_values(n, s);
  out.db.assign(n + 1, 0.0);
  out.ddb.assign(n + 1, 0.0);
  if (n >= 1) {
    const auto lower = bernstein_values(n - 1, s);
    for (int i = 0; i <= n; ++i) {
      const double a = i >= 1 ? lower[i - 1] : 0.0;
      const double c = i <= n - 1 ? lower[i] : 0.0;
      out.db[i] = n * (a - c);
    }
  }
  if (n >= 2) {
    const auto lower = bernstein_values(n - 2, s);
    for (int i = 0; i <= n; ++i) {
      const double a = (i >= 2 && i - 2 <= n - 2) ? lower[i - 2] : 0.0;
      const double b = (i >= 1 && i - 1 <= n - 2) ? lower[i - 1] : 0.0;
      const double c = i <= n - 2 ? lower[i] : 0.0;
      out.ddb[i] = n * (n - 1) * (a - 2.0 * b + c);
    }
  }
  return out;
}

int shape_dimension(const Shape& shape) {
  return std::visit(Overloaded{
                        [](const Line&) { return 1; },
                        [](const CircularArc&) { return 1; },
                        [](const BezierCurve&) { return 1; },
                        [](const auto&) { return 2; },
                    },
                    shape);
}

PatchEval eval_shape(const Shape& shape, const Params& s) {
  PatchEval e;
  std::visit(Overloaded{
                 [&](const Line& l) {
                   e.x = l.origin + s[0] * l.direction;
                   e.d1[0] = l.direction;
                 },
                 [&](const CircularArc& a) {
                   const double c = std::cos(s[0]), sn = std::sin(s[0]);
                   e.x = a.center + a.radius * (c * a.e1 + sn * a.e2);
                   e.d1[0] = a.radius * (-sn * a.e1 + c * a.e2);
                   e.d2[0] = -a.radius * (c * a.e1 + sn * a.e2);
                 },
                 [&](const BezierCurve& bc) {
                   const int n = static_cast<int>(bc.control.size()) - 1;
                   const auto bs = bernstein(n, s[0]);
                   for (int i = 0; i <= n; ++i) {
                     e.x += bs.b[i] * bc.control[i];
                     e.d1[0] += bs.db[i] * bc.control[i];
                     e.d2[0] += bs.ddb[i] * bc.control[i];
                   }
                 },
                 [&](const Plane& p) {
                   e.x = p.origin + s[0] * p.u + s[1] * p.v;
                   e.d1 = {p.u, p.v};
                 },
                 [&](const CylinderSection& cy) {
                   const double c = std::cos(s[0]), sn = std::sin(s[0]);
                   e.x = cy.center + cy.radius * (c * cy.e1 + sn * cy.e2) + s[1] * cy.axis;
                   e.d1[0] = cy.radius * (-sn * cy.e1 + c * cy.e2);
                   e.d1[1] = cy.axis;
                   e.d2[0] = -cy.radius * (c * cy.e1 + sn * cy.e2);
                 },
                 [&](const SphereSection& sp) {
                   const double c1 = std::cos(s[0]), s1 = std::sin(s[0]);
                   const double c2 = std::cos(s[1]), s2 = std::sin(s[1]);
                   const Vec3 rho = c1 * sp.e1 + s1 * sp.e2;
                   const Vec3 drho = -s1 * sp.e1 + c1 * sp.e2;
                   const double r = sp.radius;
                   e.x = sp.center + r * (c2 * rho + s2 * sp.e3);
                   e.d1[0] = r * c2 * drho;
                   e.d1[1] = r * (-s2 * rho + c2 * sp.e3);
                   e.d2[0] = -r * c2 * rho;
                   e.d2[1] = -r * s2 * drho;
                   e.d2[2] = r * (-c2 * rho - s2 * sp.e3);
                 },
                 [&](const BezierSurface& bs) {
                   const auto bu = bernstein(bs.degree_u, s[0]);
                   const auto bv = bernstein(bs.degree_v, s[1]);
                   for (int i = 0; i <= bs.degree_u; ++i) {
                     for (int j = 0; j <= bs.degree_v; ++j) {
                       const Vec3& p = bs.control[i * (bs.degree_v + 1) + j];
                       e.x += bu.b[i] * bv.b[j] * p;
                       e.d1[0] += bu.db[i] * bv.b[j] * p;
                       e.d1[1] += bu.b[i] * bv.db[j] * p;
                       e.d2[0] += bu.ddb[i] * bv.b[j] * p;
                       e.d2[1] += bu.db[i] * bv.db[j] * p;
                       e.d2[2] += bu.b[i] * bv.ddb[j] * p;
                     }
                   }
                 },
             },
             shape);
  return e;
}

} // namespace

Patch::Patch(int id, Shape shape, ParamBox domain)
    : id_(id), shape_(std::move(shape)), domain_(domain), dimension_(shape_dimension(shape_)) {
  for (int d = 0; d < dimension_; ++d)
    if (!(domain_.lo[d] <= domain_.hi[d]))
      fail(ErrorKind::InvalidArgument, "Patch " + std::to_string(id) + ": empty parameter domain");
  if (dimension_ == 1) {
    domain_.lo[1] = 0.0;
    domain_.hi[1] = 0.0;
  }
  if (const auto* bc = std::get_if<BezierCurve>(&shape_); bc && bc->control.size() < 2)
    fail(ErrorKind::InvalidArgument, "Patch " + std::to_string(id) + ": Bezier curve needs >= 2 control points");
  if (const auto* bs = std::get_if<BezierSurface>(&shape_)) {
    if (bs->degree_u < 1 || bs->degree_v < 1 ||
        bs->control.size() != static_cast<std::size_t>((bs->degree_u + 1) * (bs->degree_v + 1)))
      fail(ErrorKind::InvalidArgument, "Patch " + std::to_string(id) + ": Bezier surface control net size mismatch");
  }
}

std::string_view Patch::kind() const {
  return std::visit(Overloaded{
                        [](const Line&) { return std::string_view("line"); },
                        [](const CircularArc&) { return std::string_view("circular_arc"); },
                        [](const BezierCurve&) { return std::string_view("bezier_curve"); },
                        [](const Plane&) { return std::string_view("plane"); },
                        [](const CylinderSection&) { return std::string_view("cylinder"); },
                        [](const SphereSection&) { return std::string_view("sphere"); },
                        [](const BezierSurface&) { return std::string_view("bezier_surface"); },
                    },
                    shape_);
}

bool Patch::contains(const Params& s, double tol) const {
  for (int d = 0; d < dimension_; ++d) {
    const double span = std::max(1.0, domain_.hi[d] - domain_.lo[d]);
    if (s[d] < domain_.lo[d] - tol * span || s[d] > domain_.hi[d] + tol * span) return false;
  }
  return true;
}

Params Patch::clamp(const Params& s) const {
  Params out = s;
  for (int d = 0; d < 2; ++d) out[d] = std::clamp(s[d], domain_.lo[d], domain_.hi[d]);
  return out;
}

PatchEval Patch::eval(const Params& s) const {
  if (!std::isfinite(s[0]) || (dimension_ == 2 && !std::isfinite(s[1])) || !contains(s)) {
    std::ostringstream msg;
    msg << "Patch " << id_ << ": parameters (" << s[0];
    if (dimension_ == 2) msg << ", " << s[1];
    msg << ") outside domain";
    fail(ErrorKind::DomainError, msg.str());
  }
  return eval_shape(shape_, clamp(s));
}

// ---------------------------------------------------------------------------
// Projection

namespace {

struct DistanceModel {
  double f = 0.0;           // 0.5 |x - p|^2
  Eigen::Vector2d g;        // J^T r
  Eigen::Matrix2d h_gn;     // J^T J
  Eigen::Matrix2d h_full;   // J^T J + r . x_ij
  Vec3 x;
};

DistanceModel distance_model(const Patch& patch, const Vec3& p, const Params& s) {
  const PatchEval e = patch.eval(s);
  DistanceModel m;
  const Vec3 r = e.x - p;
  m.x = e.x;
  m.f = 0.5 * r.squaredNorm();
  m.g.setZero();
  m.h_gn.setZero();
  m.h_full.setZero();
  const int dim = patch.dimension();
  for (int i = 0; i < dim; ++i) {
    m.g[i] = e.d1[i].dot(r);
    for (int j = 0; j < dim; ++j) m.h_gn(i, j) = e.d1[i].dot(e.d1[j]);
  }
  m.h_full = m.h_gn;
  m.h_full(0, 0) += r.dot(e.d2[0]);
  if (dim == 2) {
    m.h_full(0, 1) += r.dot(e.d2[1]);
    m.h_full(1, 0) += r.dot(e.d2[1]);
    m.h_full(1, 1) += r.dot(e.d2[2]);
  }
  return m;
}

// Components of g that are blocked by an active bound are zeroed.
std::array<bool, 2> free_mask(const Patch& patch, const Params& s, const Eigen::Vector2d& g) {
  std::array<bool, 2> mask{false, false};
  const auto& dom = patch.domain();
  for (int i = 0; i < patch.dimension(); ++i) {
    const bool at_lo = s[i] <= dom.lo[i] && g[i] > 0.0;
    const bool at_hi = s[i] >= dom.hi[i] && g[i] < 0.0;
    mask[i] = !(at_lo || at_hi);
  }
  return mask;
}

} // namespace

Projection project(const Patch& patch, const Vec3& point, const Params& initial_guess, const ProjectOptions& options) {
  if (!patch.contains(initial_guess, 1e-9))
    fail(ErrorKind::DomainError, "project: initial guess outside the domain of patch " + std::to_string(patch.id()));
  Params s = patch.clamp(initial_guess);
  const int dim = patch.dimension();

  for (int it = 0; it <= options.max_iterations; ++it) {
    const DistanceModel m = distance_model(patch, point, s);
    const auto mask = free_mask(patch, s, m.g);
    Eigen::Vector2d pg = Eigen::Vector2d::Zero();
    for (int i = 0; i < dim; ++i)
      if (mask[i]) pg[i] = m.g[i];

    const double jscale = std::max(1.0, m.h_gn.trace());
    if (pg.norm() <= options.gradient_tolerance * jscale) {
      return Projection{s, std::sqrt(2.0 * m.f), m.x, it};
    }
    if (it == options.max_iterations) break;

    // Reduced Newton system on the free variables; full Hessian when it is
    // positive definite, Gauss-Newton (lightly damped) otherwise.
    Eigen::Vector2d step = Eigen::Vector2d::Zero();
    {
      std::vector<int> free;
      for (int i = 0; i < dim; ++i)
        if (mask[i]) free.push_back(i);
      const int nf = static_cast<int>(free.size());
      Eigen::MatrixXd hf(nf, nf), hg(nf, nf);
      Eigen::VectorXd gf(nf);
      for (int a = 0; a < nf; ++a) {
        gf[a] = m.g[free[a]];
        for (int b = 0; b < nf; ++b) {
          hf(a, b) = m.h_full(free[a], free[b]);
          hg(a, b) = m.h_gn(free[a], free[b]);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(hf);
      Eigen::VectorXd sf;
      if (llt.info() == Eigen::Success && (hf.diagonal().array() > 0).all()) {
        sf = -llt.solve(gf);
      } else {
        const double damping = 1e-12 * std::max(1.0, hg.trace());
        hg.diagonal().array() += damping;
        sf = -hg.ldlt().solve(gf);
      }
      for (int a = 0; a < nf; ++a) step[free[a]] = sf[a];
    }

    // Armijo backtracking along the projected path.
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      Params trial = patch.clamp(s + alpha * step);
      const double ft = 0.5 * (patch.point(trial) - point).squaredNorm();
      const double decrease = m.g.dot(trial - s);
      if (ft <= m.f + 1e-4 * decrease) {
        accepted = (trial - s).norm() > 0.0;
        s = trial;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No representable decrease: stationary to machine precision.
      if (pg.norm() <= 1e-7 * jscale * std::max(1.0, std::sqrt(2.0 * m.f)))
        return Projection{s, std::sqrt(2.0 * m.f), m.x, it};
      break;
    }
  }
  fail(ErrorKind::ProjectionFailed, "project: no convergence onto patch " + std::to_string(patch.id()) + " after " +
                                        std::to_string(options.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Auxiliary triangulation

namespace {

Params grid_param(const ParamBox& dom, int n1, int n2, double i, double j) {
  Params s;
  s[0] = dom.lo[0] + (dom.hi[0] - dom.lo[0]) * (i / n1);
  s[1] = n2 > 0 ? dom.lo[1] + (dom.hi[1] - dom.lo[1]) * (j / n2) : 0.0;
  return s;
}

// Max midpoint chord error of edges along s1, along s2, and cell diagonals.
std::array<double, 3> chord_errors(const Patch& patch, int n1, int n2) {
  const auto& dom = patch.domain();
  std::array<double, 3> err{0.0, 0.0, 0.0};
  if (patch.dimension() == 1) {
    Vec3 prev = patch.point(grid_param(dom, n1, 0, 0, 0));
    for (int i = 0; i < n1; ++i) {
      const Vec3 next = patch.point(grid_param(dom, n1, 0, i + 1, 0));
      const Vec3 mid = patch.point(grid_param(dom, n1, 0, i + 0.5, 0));
      err[0] = std::max(err[0], (mid - 0.5 * (prev + next)).norm());
      prev = next;
    }
    return err;
  }
  std::vector<Vec3> v((n1 + 1) * (n2 + 1));
  auto at = [&](int i, int j) -> Vec3& { return v[i * (n2 + 1) + j]; };
  for (int i = 0; i <= n1; ++i)
    for (int j = 0; j <= n2; ++j) at(i, j) = patch.point(grid_param(dom, n1, n2, i, j));
  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j <= n2; ++j) {
      if (i < n1) {
        const Vec3 mid = patch.point(grid_param(dom, n1, n2, i + 0.5, j));
        err[0] = std::max(err[0], (mid - 0.5 * (at(i, j) + at(i + 1, j))).norm());
      }
      if (j < n2) {
        const Vec3 mid = patch.point(grid_param(dom, n1, n2, i, j + 0.5));
        err[1] = std::max(err[1], (mid - 0.5 * (at(i, j) + at(i, j + 1))).norm());
      }
      if (i < n1 && j < n2) {
        const Vec3 mid = patch.point(grid_param(dom, n1, n2, i + 0.5, j + 0.5));
        err[2] = std::max(err[2], (mid - 0.5 * (at(i, j) + at(i + 1, j + 1))).norm());
      }
    }
  }
  return err;
}

bool is_degenerate(const Patch& patch) {
  const auto& dom = patch.domain();
  const int n = 5;
  double scale = 0.0;
  double measure = 0.0;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= (patch.dimension() == 2 ? n : 0); ++j) {
      const PatchEval e = patch.eval(grid_param(dom, n, patch.dimension() == 2 ? n : 0, i, j));
      scale = std::max(scale, e.x.norm());
      if (patch.dimension() == 1) {
        measure = std::max(measure, e.d1[0].norm() * (dom.hi[0] - dom.lo[0]));
      } else {
        measure = std::max(measure, e.d1[0].cross(e.d1[1]).norm() * (dom.hi[0] - dom.lo[0]) * (dom.hi[1] - dom.lo[1]));
      }
    }
  }
  scale = std::max(scale, 1.0);
  const double ref = patch.dimension() == 1 ? scale : scale * scale;
  return measure <= 1e-14 * ref;
}

constexpr int kMaxGrid = 1 << 14;

} // namespace

int AuxTriangulation::nearest_vertex(const Vec3& p) const {
  if (tree_.empty()) fail(ErrorKind::InvalidArgument, "nearest_vertex: empty triangulation");
  return static_cast<int>(tree_.nearest({p.x(), p.y(), p.z()}));
}

AuxTriangulation auxiliary_triangulation(const Patch& patch, double chord_tol) {
  if (!(chord_tol > 0.0)) fail(ErrorKind::InvalidArgument, "auxiliary_triangulation: chord tolerance must be > 0");
  if (is_degenerate(patch))
    fail(ErrorKind::DegenerateGeometry, "auxiliary_triangulation: patch " + std::to_string(patch.id()) + " has zero measure");

  const bool surface = patch.dimension() == 2;
  auto ok = [&](int n1, int n2) {
    const auto e = chord_errors(patch, n1, n2);
    return e[0] <= chord_tol && e[1] <= chord_tol && e[2] <= chord_tol;
  };

  // Doubling to a feasible grid, then per-direction bisection for the smallest.
  int n1 = 1, n2 = surface ? 1 : 0;
  while (true) {
    const auto e = chord_errors(patch, n1, n2);
    if (e[0] <= chord_tol && e[1] <= chord_tol && e[2] <= chord_tol) break;
    if (n1 >= kMaxGrid && (!surface || n2 >= kMaxGrid)) break;
    if ((e[0] > chord_tol || e[2] > chord_tol) && n1 < kMaxGrid) n1 *= 2;
    if (surface && (e[1] > chord_tol || e[2] > chord_tol) && n2 < kMaxGrid) n2 *= 2;
  }
  if (ok(n1, n2)) {
    int lo = 1, hi = n1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (ok(mid, n2)) hi = mid;
      else lo = mid + 1;
    }
    n1 = hi;
    if (surface) {
      lo = 1;
      hi = n2;
      while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (ok(n1, mid)) hi = mid;
        else lo = mid + 1;
      }
      n2 = hi;
    }
  }

  AuxTriangulation tri;
  tri.patch_id = patch.id();
  tri.chord_tolerance = chord_tol;
  const auto e = chord_errors(patch, n1, n2);
  tri.max_chord_error = std::max({e[0], e[1], e[2]});
  tri.grid = {n1, std::max(n2, 1)};
  const auto& dom = patch.domain();
  const int m2 = surface ? n2 : 0;
  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j <= m2; ++j) {
      const Params s = grid_param(dom, n1, m2, i, j);
      tri.params.push_back(s);
      tri.vertices.push_back(patch.point(s));
    }
  }
  if (surface) {
    auto idx = [&](int i, int j) { return i * (n2 + 1) + j; };
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n2; ++j) {
        tri.triangles.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
        tri.triangles.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
      }
    }
  } else {
    for (int i = 0; i < n1; ++i) tri.segments.push_back({i, i + 1});
  }
  std::vector<KdTree<3>::Point> pts;
  pts.reserve(tri.vertices.size());
  for (const auto& v : tri.vertices) pts.push_back({v.x(), v.y(), v.z()});
  tri.tree_ = KdTree<3>(std::move(pts));
  return tri;
}

// ---------------------------------------------------------------------------
// Boxes and index

Box bounding_box(const Patch& patch) {
  Box box;
  box.lo.setConstant(std::numeric_limits<double>::infinity());
  box.hi.setConstant(-std::numeric_limits<double>::infinity());
  auto add = [&](const Vec3& p) {
    box.lo = box.lo.cwiseMin(p);
    box.hi = box.hi.cwiseMax(p);
  };
  const auto& shape = patch.shape();
  if (const auto* bc = std::get_if<BezierCurve>(&shape)) {
    for (const auto& p : bc->control) add(p);
    return box;
  }
  if (const auto* bs = std::get_if<BezierSurface>(&shape)) {
    for (const auto& p : bs->control) add(p);
    return box;
  }
  const auto& dom = patch.domain();
  const bool affine = std::holds_alternative<Line>(shape) || std::holds_alternative<Plane>(shape);
  const int n = affine ? 1 : 256;
  const int m = patch.dimension() == 2 ? (affine ? 1 : 128) : 0;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= m; ++j) add(patch.point(grid_param(dom, n, m, i, j)));
  return box;
}

double default_chord_tolerance(const Patch& patch) {
  const Box b = bounding_box(patch);
  return 1e-3 * (b.hi - b.lo).norm();
}

Box inflate(const Box& box, double fraction) {
  const Vec3 extent = box.hi - box.lo;
  const double largest = extent.maxCoeff();
  Box out = box;
  for (int d = 0; d < 3; ++d) {
    const double e = extent[d] > 0.0 ? extent[d] : largest;
    out.lo[d] -= fraction * e;
    out.hi[d] += fraction * e;
  }
  return out;
}

PatchIndex::PatchIndex(std::vector<int> ids, std::vector<Box> boxes) : ids_(std::move(ids)), boxes_(std::move(boxes)) {
  std::vector<KdTree<6>::Point> pts;
  pts.reserve(boxes_.size());
  for (const auto& b : boxes_) pts.push_back({b.lo.x(), b.lo.y(), b.lo.z(), b.hi.x(), b.hi.y(), b.hi.z()});
  tree_ = KdTree<6>(std::move(pts));
}

std::vector<int> PatchIndex::query(const Vec3& p) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto hits = tree_.range({-inf, -inf, -inf, p.x(), p.y(), p.z()}, {p.x(), p.y(), p.z(), inf, inf, inf});
  std::vector<int> out;
  out.reserve(hits.size());
  for (auto h : hits) out.push_back(ids_[h]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> PatchIndex::query_linear(const Vec3& p) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < boxes_.size(); ++i)
    if (boxes_[i].contains(p)) out.push_back(ids_[i]);
  std::sort(out.begin(), out.end());
  return out;
}

PatchIndex build_patch_index(std::span<const Patch> patches, double inflation) {
  if (patches.empty()) fail(ErrorKind::InvalidArgument, "build_patch_index: empty patch list");
  std::vector<int> ids;
  std::vector<Box> boxes;
  for (const auto& p : patches) {
    ids.push_back(p.id());
    boxes.push_back(inflate(bounding_box(p), inflation));
  }
  return PatchIndex(std::move(ids), std::move(boxes));
}

const Patch& find_patch(std::span<const Patch> patches, int id) {
  for (const auto& p : patches)
    if (p.id() == id) return p;
  fail(ErrorKind::InvalidArgument, "no patch with id " + std::to_string(id));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

Vec3 vec3(const json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorKind::ParseError, std::string("geometry: missing parameter '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3)
    fail(ErrorKind::ParseError, std::string("geometry: parameter '") + key + "' must be a 3-vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

double scalar(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    fail(ErrorKind::ParseError, std::string("geometry: missing numeric parameter '") + key + "'");
  return j.at(key).get<double>();
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::vector<Vec3> points(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array())
    fail(ErrorKind::ParseError, std::string("geometry: missing point list '") + key + "'");
  std::vector<Vec3> out;
  for (const auto& p : j.at(key)) {
    if (!p.is_array() || p.size() != 3) fail(ErrorKind::ParseError, "geometry: control points must be 3-vectors");
    out.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  return out;
}

void check_frame(const Vec3& a, const Vec3& b, const std::string& what) {
  if (std::abs(a.norm() - 1.0) > 1e-9 || std::abs(b.norm() - 1.0) > 1e-9 || std::abs(a.dot(b)) > 1e-9)
    fail(ErrorKind::ParseError, "geometry: " + what + " frame vectors must be orthonormal");
}

} // namespace

Patch patch_from_json(const json& j) {
  try {
    if (!j.is_object()) fail(ErrorKind::ParseError, "geometry: patch entry must be an object");
    if (!j.contains("id") || !j.contains("kind") || !j.contains("domain"))
      fail(ErrorKind::ParseError, "geometry: patch needs id, kind and domain");
    const int id = j.at("id").get<int>();
    const std::string kind = j.at("kind").get<std::string>();
    const json par = j.value("parameters", json::object());
    Shape shape;
    if (kind == "line") {
      shape = Line{vec3(par, "origin"), vec3(par, "direction")};
    } else if (kind == "circular_arc") {
      CircularArc a{vec3(par, "center"), scalar(par, "radius"), vec3(par, "e1"), vec3(par, "e2")};
      check_frame(a.e1, a.e2, "circular_arc");
      shape = a;
    } else if (kind == "bezier_curve") {
      shape = BezierCurve{points(par, "control")};
    } else if (kind == "plane") {
      shape = Plane{vec3(par, "origin"), vec3(par, "u"), vec3(par, "v")};
    } else if (kind == "cylinder") {
      CylinderSection c{vec3(par, "center"), vec3(par, "axis"), vec3(par, "e1"), vec3(par, "e2"),
                        scalar(par, "radius")};
      check_frame(c.e1, c.e2, "cylinder");
      shape = c;
    } else if (kind == "sphere") {
      SphereSection s{vec3(par, "center"), scalar(par, "radius"), vec3(par, "e1"), vec3(par, "e2"), vec3(par, "e3")};
      check_frame(s.e1, s.e2, "sphere");
      check_frame(s.e1, s.e3, "sphere");
      shape = s;
    } else if (kind == "bezier_surface") {
      BezierSurface s;
      s.degree_u = par.at("degree_u").get<int>();
      s.degree_v = par.at("degree_v").get<int>();
      s.control = points(par, "control");
      shape = s;
    } else {
      fail(ErrorKind::ParseError, "geometry: unknown patch kind '" + kind + "'");
    }
    ParamBox box;
    const json& dom = j.at("domain");
    if (shape_dimension(shape) == 1) {
      if (!dom.is_array() || dom.size() != 2 || !dom[0].is_number())
        fail(ErrorKind::ParseError, "geometry: curve domain must be [lo, hi]");
      box.lo[0] = dom[0].get<double>();
      box.hi[0] = dom[1].get<double>();
    } else {
      if (!dom.is_array() || dom.size() != 2 || !dom[0].is_array() || dom[0].size() != 2 || dom[1].size() != 2)
        fail(ErrorKind::ParseError, "geometry: surface domain must be [[lo1, hi1], [lo2, hi2]]");
      box.lo = Params(dom[0][0].get<double>(), dom[1][0].get<double>());
      box.hi = Params(dom[0][1].get<double>(), dom[1][1].get<double>());
    }
    return Patch(id, std::move(shape), box);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("geometry: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::ParseError, e.what());
    throw;
  }
}

json patch_to_json(const Patch& patch) {
  json par = json::object();
  std::visit(Overloaded{
                 [&](const Line& l) {
                   par["origin"] = to_json(l.origin);
                   par["direction"] = to_json(l.direction);
                 },
                 [&](const CircularArc& a) {
                   par["center"] = to_json(a.center);
                   par["radius"] = a.radius;
                   par["e1"] = to_json(a.e1);
                   par["e2"] = to_json(a.e2);
                 },
                 [&](const BezierCurve& b) {
                   par["control"] = json::array();
                   for (const auto& p : b.control) par["control"].push_back(to_json(p));
                 },
                 [&](const Plane& p) {
                   par["origin"] = to_json(p.origin);
                   par["u"] = to_json(p.u);
                   par["v"] = to_json(p.v);
                 },
                 [&](const CylinderSection& c) {
                   par["center"] = to_json(c.center);
                   par["axis"] = to_json(c.axis);
                   par["e1"] = to_json(c.e1);
                   par["e2"] = to_json(c.e2);
                   par["radius"] = c.radius;
                 },
                 [&](const SphereSection& s) {
                   par["center"] = to_json(s.center);
                   par["radius"] = s.radius;
                   par["e1"] = to_json(s.e1);
                   par["e2"] = to_json(s.e2);
                   par["e3"] = to_json(s.e3);
                 },
                 [&](const BezierSurface& s) {
                   par["degree_u"] = s.degree_u;
                   par["degree_v"] = s.degree_v;
                   par["control"] = json::array();
                   for (const auto& p : s.control) par["control"].push_back(to_json(p));
                 },
             },
             patch.shape());
  json j;
  j["id"] = patch.id();
  j["kind"] = std::string(patch.kind());
  j["parameters"] = par;
  const auto& d = patch.domain();
  if (patch.dimension() == 1) j["domain"] = json::array({d.lo[0], d.hi[0]});
  else j["domain"] = json::array({json::array({d.lo[0], d.hi[0]}), json::array({d.lo[1], d.hi[1]})});
  return j;
}

std::vector<Patch> read_geometry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "geometry: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, "geometry: " + path.string() + ": " + e.what());
  }
  const json& arr = j.is_object() && j.contains("patches") ? j.at("patches") : j;
  if (!arr.is_array()) fail(ErrorKind::ParseError, "geometry: " + path.string() + ": expected an array of patches");
  std::vector<Patch> patches;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    try {
      patches.push_back(patch_from_json(arr[i]));
    } catch (const Error& e) {
      fail(ErrorKind::ParseError, path.string() + ": patch record " + std::to_string(i) + ": " + e.what());
    }
  }
  if (patches.empty()) fail(ErrorKind::ParseError, "geometry: " + path.string() + " contains no patches");
  return patches;
}

void write_geometry(const std::filesystem::path& path, std::span<const Patch> patches) {
  json arr = json::array();
  for (const auto& p : patches) arr.push_back(patch_to_json(p));
  std::ofstream out(path);
  if (!out) fail(ErrorKind::InvalidArgument, "geometry: cannot write " + path.string());
  out << arr.dump(2) << '\n';
}

} // namespace hoflow::geom
