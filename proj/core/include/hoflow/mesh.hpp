#pragma once

// High-order 2D meshes of triangles and quadrilaterals. Nodes carry 3D
// coordinates but all mappings act on (x, y).
//
// Reference elements:
//   triangle       vertices (0,0), (1,0), (0,1)
//   quadrilateral  [0,1]^2 with vertices (0,0), (1,0), (1,1), (0,1)
// Node ordering within an element of order P: vertices, then the P-1
// interior nodes of each edge (edge k runs from vertex k to vertex k+1 mod n),
// then interior nodes row by row (xi_2 outer, xi_1 inner). Nodes are
// equispaced on the reference element.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hoflow/polybasis.hpp"

namespace hoflow::mesh {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

enum class Shape { Triangle, Quadrilateral, Tetrahedron, Prism };

std::string_view to_string(Shape shape);
Shape shape_from_string(std::string_view name);

int vertex_count(Shape shape);
int node_count(Shape shape, int order);

constexpr int kFarfield = -1;

struct Element {
  Shape shape = Shape::Triangle;
  int order = 1;
  std::vector<int> nodes;
};

struct BoundaryEdge {
  int element = 0;
  int side = 0;
  int tag = kFarfield; // parent patch id, or kFarfield
};

struct NodeMeta {
  int patch = -1;
  Vec2 params = Vec2::Zero();
  bool excluded = false;
};

struct Mesh {
  std::vector<Vec3> nodes;
  std::vector<Element> elements;
  std::vector<BoundaryEdge> boundary;
  std::vector<NodeMeta> meta; // empty or one entry per node

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
};

/// Lagrange basis of one element type on equispaced reference nodes.
class ReferenceElement {
public:
  static const ReferenceElement& get(Shape shape, int order);

  Shape shape() const { return shape_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Vec2>& nodes() const { return nodes_; }

  Eigen::VectorXd values(const Vec2& xi) const;
  /// Row n holds the reference gradient of basis function n.
  Eigen::Matrix<double, Eigen::Dynamic, 2> gradients(const Vec2& xi) const;

  /// Local node indices along side `side`, from its first to its second vertex.
  std::vector<int> side_nodes(int side) const;
  int sides() const { return vertex_count(shape_); }

private:
  ReferenceElement(Shape shape, int order);

  Shape shape_;
  int order_;
  std::vector<Vec2> nodes_;
  // Integer lattice index of each node: (i, j) for quadrilaterals,
  // barycentric (k0, k1, k2) for triangles.
  std::vector<std::array<int, 3>> lattice_;
};

bool inside_reference(Shape shape, const Vec2& xi, double tol = 1e-12);
std::vector<Vec2> reference_vertices(Shape shape);

/// Quadrature on the reference element from a 1D GLL rule mapped to [0,1]:
/// tensor product for quadrilaterals, collapsed (Duffy) product for triangles.
struct ReferenceQuadrature {
  std::vector<Vec2> points;
  std::vector<double> weights;
};
ReferenceQuadrature reference_quadrature(Shape shape, const basis::QuadratureRule& rule);

/// Physical position x = sum_n x^n l_n(xi); throws DomainError outside the
/// reference element.
Vec3 map_physical(const Mesh& mesh, int element, const Vec2& xi);

/// Straight-sided image of the reference element through the element
/// vertices: affine for triangles, bilinear for quadrilaterals.
Vec3 ideal_map(const Mesh& mesh, int element, const Vec2& xi);
Mat2 ideal_gradient(const Mesh& mesh, int element, const Vec2& xi);

struct JacobianEval {
  Mat2 gradient = Mat2::Identity(); // d(x,y)/d(xi_1,xi_2)
  double det = 1.0;
};
JacobianEval jacobian(const Mesh& mesh, int element, const Vec2& xi);

struct Validity {
  bool valid = true;
  double min_det = 0.0;
  double max_det = 0.0;
  double scaled_jacobian = 1.0;
};

/// det J sampled at the reference quadrature points of `rule` plus the
/// element vertices.
Validity validity(const Mesh& mesh, int element, const basis::QuadratureRule& rule);
/// Uses a GLL rule with order + 2 points.
Validity validity(const Mesh& mesh, int element);
int count_invalid(const Mesh& mesh);

/// Throws InvalidArgument for tetrahedra and prisms.
void require_supported(Shape shape);

/// Range checks and edge conformity; throws InvalidArgument on the first problem.
void check_structure(const Mesh& mesh);

std::vector<int> element_side_nodes(const Mesh& mesh, int element, int side);
std::vector<std::vector<int>> node_to_elements(const Mesh& mesh);
/// Nodes on tagged boundary sides, ascending.
std::vector<int> boundary_nodes(const Mesh& mesh);
std::vector<bool> boundary_node_mask(const Mesh& mesh);

/// Element vertex node ids (first vertex_count entries of the node list).
std::span<const int> element_vertices(const Element& e);

/// Raises every order-1 element to `order`, sharing new edge nodes between
/// neighbours. New nodes lie on the straight edges / faces. Node metadata is
/// carried over for existing nodes.
Mesh elevate_order(const Mesh& linear, int order);

Mesh read_mesh(const std::filesystem::path& path);
void write_mesh(const std::filesystem::path& path, const Mesh& mesh);
/// Gmsh 2.2 ASCII subset: $Nodes, $Elements (triangles and quadrilaterals
/// of order <= 4, line elements as tagged boundary edges), $PhysicalNames.
/// Physical groups named "farfield" map to kFarfield; other physical ids are
/// used as patch ids.
Mesh read_gmsh(const std::filesystem::path& path);
/// Dispatches on extension: .msh -> read_gmsh, otherwise read_mesh.
Mesh load_mesh(const std::filesystem::path& path);

/// Structured triangulation of the quarter annulus {r0 <= r <= rN, 0 <= theta <= pi/2}
/// with the given radii and angular divisions; each cell split along its
/// diagonal. Boundary tags: 0 inner arc, 1 outer arc, 2 edge on the x-axis,
/// 3 edge on the y-axis.
Mesh quarter_annulus(std::span<const double> radii, int angular_divisions);

} // namespace hoflow::mesh
