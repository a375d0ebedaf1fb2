#pragma once

// Projection curving of a linear boundary mesh onto parametric patches:
// parent-patch association, node snapping with exclusion rules, and
// placement of high-order boundary nodes.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hoflow/geometry.hpp"
#include "hoflow/mesh.hpp"

namespace hoflow::curving {

/// Patches with their bounding-box index and auxiliary triangulations.
class PatchSet {
public:
  /// chord_fraction scales default_chord_tolerance (1e-3 of the box diagonal).
  explicit PatchSet(std::vector<geom::Patch> patches, double chord_fraction = 1.0);

  const std::vector<geom::Patch>& patches() const { return patches_; }
  const geom::PatchIndex& index() const { return index_; }
  const geom::Patch& patch(int id) const;
  const geom::AuxTriangulation& aux(int id) const;
  bool has(int id) const;

  /// Projection onto patch `id` seeded by its nearest auxiliary vertex.
  geom::Projection project(int id, const geom::Vec3& p) const;

private:
  std::size_t slot(int id) const;

  std::vector<geom::Patch> patches_;
  geom::PatchIndex index_;
  std::vector<geom::AuxTriangulation> aux_;
};

enum class NodeStatus { Unprocessed, Snapped, ExcludedDisplacement, ExcludedInversion };

std::string_view to_string(NodeStatus status);

struct NodeAssociation {
  int node = -1;
  int patch = -1;
  geom::Params params = geom::Params::Zero();
  double distance = 0.0;
  geom::Vec3 target = geom::Vec3::Zero();
  NodeStatus status = NodeStatus::Unprocessed;
  double displacement_ratio = 0.0;
  int candidates = 0;
};

struct AssignOptions {
  int max_candidates = 8;
  double tie_tolerance = 1e-12;
  int threads = 1; // nodes are assigned independently
};

struct AssignResult {
  std::vector<NodeAssociation> associations; // ascending node index
  std::vector<std::string> warnings;
};

/// Parent patch of a single point: candidates from the box index (at most
/// max_candidates, nearest auxiliary vertex first), minimum projection
/// distance, ties to the lowest id. Throws UnassignedNode when no box
/// contains the point.
NodeAssociation assign_point(const PatchSet& set, const geom::Vec3& p, const AssignOptions& opts = {},
                             std::vector<std::string>* warnings = nullptr);

/// Parents for every vertex on a non-farfield boundary side of a linear mesh.
AssignResult assign_parent_surfaces(const mesh::Mesh& mesh, const PatchSet& set, const AssignOptions& opts = {});

struct SnapResult {
  mesh::Mesh mesh;
  std::vector<NodeAssociation> associations;
  std::vector<int> excluded;
};

/// Moves each associated node to its projection, in ascending node order,
/// unless (a) the move exceeds max_rel_disp times the mean length of the
/// linear edges incident to the node, or (b) the move leaves an incident
/// element invalid that was valid before. Rule (a) is checked first. Node
/// metadata records parent, parameters and exclusion.
SnapResult snap_nodes(const mesh::Mesh& mesh, std::span<const NodeAssociation> associations, double max_rel_disp = 0.10);

struct DemotedEdge {
  int element = -1;
  int side = -1;
  std::string reason;
};

struct CurveResult {
  mesh::Mesh mesh;
  int curved_edges = 0;
  int straight_edges = 0;
  std::vector<DemotedEdge> demoted;
};

/// Raises the snapped linear mesh to `order` and places the P-1 interior
/// nodes of each boundary side by projecting equispaced chord points onto the
/// side's parent patch (its tag). Sides touching an excluded node, farfield
/// sides and interior sides stay straight.
CurveResult curve_boundary(const mesh::Mesh& snapped, const PatchSet& set, int order);

nlohmann::json exclusion_report(std::span<const NodeAssociation> associations);

} // namespace hoflow::curving
