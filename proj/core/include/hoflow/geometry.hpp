#pragma once

// Parametric boundary patches (curves x(s) and surfaces x(s1, s2)) with the
// three geometric queries needed for meshing: evaluation, derivatives, and
// projection of a point. Also auxiliary triangulations used to seed
// projections and a k-d tree over inflated patch bounding boxes.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "hoflow/kdtree.hpp"

namespace hoflow::geom {

using Vec3 = Eigen::Vector3d;
/// Parameter tuple; curves use only the first component.
using Params = Eigen::Vector2d;

struct Line {
  Vec3 origin;
  Vec3 direction; // x(s) = origin + s * direction
};

struct CircularArc {
  Vec3 center;
  double radius = 1.0;
  Vec3 e1{1, 0, 0}; // x(s) = c + r (cos s e1 + sin s e2)
  Vec3 e2{0, 1, 0};
};

struct BezierCurve {
  std::vector<Vec3> control; // degree = control.size() - 1, s in [0, 1]
};

struct Plane {
  Vec3 origin;
  Vec3 u{1, 0, 0}; // x(s1, s2) = origin + s1 u + s2 v
  Vec3 v{0, 1, 0};
};

struct CylinderSection {
  Vec3 center;
  Vec3 axis{0, 0, 1}; // x = c + r (cos s1 e1 + sin s1 e2) + s2 axis
  Vec3 e1{1, 0, 0};
  Vec3 e2{0, 1, 0};
  double radius = 1.0;
};

struct SphereSection {
  Vec3 center;
  double radius = 1.0;
  Vec3 e1{1, 0, 0}; // x = c + r (cos s2 (cos s1 e1 + sin s1 e2) + sin s2 e3)
  Vec3 e2{0, 1, 0};
  Vec3 e3{0, 0, 1};
};

struct BezierSurface {
  int degree_u = 1;
  int degree_v = 1;
  std::vector<Vec3> control; // (degree_u+1) x (degree_v+1), index i*(degree_v+1)+j
};

using Shape = std::variant<Line, CircularArc, BezierCurve, Plane, CylinderSection, SphereSection, BezierSurface>;

/// Closed parameter box; only index 0 is meaningful for curves.
struct ParamBox {
  Params lo = Params::Zero();
  Params hi = Params::Zero();
};

/// Point plus first and second parametric derivatives.
/// d2 = {x_11, x_12, x_22}; entries not defined for curves are zero.
struct PatchEval {
  Vec3 x = Vec3::Zero();
  std::array<Vec3, 2> d1{Vec3::Zero(), Vec3::Zero()};
  std::array<Vec3, 3> d2{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
};

class Patch {
public:
  Patch(int id, Shape shape, ParamBox domain);

  int id() const { return id_; }
  int dimension() const { return dimension_; }
  const Shape& shape() const { return shape_; }
  const ParamBox& domain() const { return domain_; }
  std::string_view kind() const;

  bool contains(const Params& s, double tol = 1e-12) const;
  Params clamp(const Params& s) const;

  /// Point and derivatives; throws DomainError outside the parameter box.
  PatchEval eval(const Params& s) const;
  Vec3 point(const Params& s) const { return eval(s).x; }

private:
  int id_;
  Shape shape_;
  ParamBox domain_;
  int dimension_;
};

struct ProjectOptions {
  double gradient_tolerance = 1e-10;
  int max_iterations = 100;
};

struct Projection {
  Params params = Params::Zero();
  double distance = 0.0;
  Vec3 point = Vec3::Zero();
  int iterations = 0;
};

/// Closest point on the patch to `point` near `initial_guess`: Newton /
/// Gauss-Newton on the squared distance, projected onto the parameter box,
/// Armijo backtracking. Throws ProjectionFailed if not converged.
Projection project(const Patch& patch, const Vec3& point, const Params& initial_guess,
                   const ProjectOptions& options = {});

struct AuxTriangulation {
  int patch_id = -1;
  std::vector<Vec3> vertices;
  std::vector<Params> params;
  std::vector<std::array<int, 3>> triangles; // surfaces
  std::vector<std::array<int, 2>> segments;  // curves
  double chord_tolerance = 0.0;
  double max_chord_error = 0.0;
  std::array<int, 2> grid{1, 1};

  /// Index of the vertex closest to p.
  int nearest_vertex(const Vec3& p) const;

private:
  friend AuxTriangulation auxiliary_triangulation(const Patch&, double);
  KdTree<3> tree_;
};

/// Fine linearization of a patch on a uniform parameter grid, refined until
/// the midpoint chord error of every edge is <= chord_tol.
AuxTriangulation auxiliary_triangulation(const Patch& patch, double chord_tol);

/// 1e-3 of the patch bounding-box diagonal.
double default_chord_tolerance(const Patch& patch);

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool contains(const Box& b) const { return contains(b.lo) && contains(b.hi); }
};

/// Axis-aligned box of the patch (control hull for Bezier shapes, dense
/// parameter sampling for analytic shapes).
Box bounding_box(const Patch& patch);

/// Grows each direction by `fraction` of the box extent on both sides; a
/// zero-extent direction uses `fraction` of the largest extent.
Box inflate(const Box& box, double fraction = 0.05);

/// k-d tree over inflated patch boxes, each stored as the 6-d point
/// (lo, hi); containment of q becomes an orthogonal range query.
class PatchIndex {
public:
  PatchIndex() = default;
  PatchIndex(std::vector<int> ids, std::vector<Box> boxes);

  /// Ids of every patch whose stored box contains p, ascending.
  std::vector<int> query(const Vec3& p) const;
  /// Linear scan equivalent of query(), for checking.
  std::vector<int> query_linear(const Vec3& p) const;

  const std::vector<Box>& boxes() const { return boxes_; }
  const std::vector<int>& ids() const { return ids_; }

private:
  std::vector<int> ids_;
  std::vector<Box> boxes_;
  KdTree<6> tree_;
};

PatchIndex build_patch_index(std::span<const Patch> patches, double inflation = 0.05);

// JSON geometry files: array of {id, kind, parameters, domain}.
Patch patch_from_json(const nlohmann::json& j);
nlohmann::json patch_to_json(const Patch& patch);
std::vector<Patch> read_geometry(const std::filesystem::path& path);
void write_geometry(const std::filesystem::path& path, std::span<const Patch> patches);

/// Patch by id from a list; throws InvalidArgument when absent.
const Patch& find_patch(std::span<const Patch> patches, int id);

} // namespace hoflow::geom
