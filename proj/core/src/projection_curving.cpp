#include "hoflow/projection_curving.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "hoflow/error.hpp"
#include "hoflow/parallel.hpp"

namespace hoflow::curving {

using geom::Vec3;

PatchSet::PatchSet(std::vector<geom::Patch> patches, double chord_fraction) : patches_(std::move(patches)) {
  if (patches_.empty()) fail(ErrorKind::InvalidArgument, "PatchSet: no patches");
  if (!(chord_fraction > 0.0)) fail(ErrorKind::InvalidArgument, "PatchSet: chord fraction must be > 0");
  std::set<int> ids;
  for (const auto& p : patches_)
    if (!ids.insert(p.id()).second) fail(ErrorKind::InvalidArgument, "PatchSet: duplicate patch id " + std::to_string(p.id()));
  index_ = geom::build_patch_index(patches_);
  aux_.reserve(patches_.size());
  for (const auto& p : patches_) aux_.push_back(geom::auxiliary_triangulation(p, chord_fraction * geom::default_chord_tolerance(p)));
}

std::size_t PatchSet::slot(int id) const {
  for (std::size_t i = 0; i < patches_.size(); ++i)
    if (patches_[i].id() == id) return i;
  fail(ErrorKind::InvalidArgument, "no patch with id " + std::to_string(id));
}

bool PatchSet::has(int id) const {
  return std::any_of(patches_.begin(), patches_.end(), [&](const auto& p) { return p.id() == id; });
}

const geom::Patch& PatchSet::patch(int id) const { return patches_[slot(id)]; }
const geom::AuxTriangulation& PatchSet::aux(int id) const { return aux_[slot(id)]; }

geom::Projection PatchSet::project(int id, const Vec3& p) const {
  const std::size_t i = slot(id);
  const auto& aux = aux_[i];
  return geom::project(patches_[i], p, aux.params[aux.nearest_vertex(p)]);
}

std::string_view to_string(NodeStatus status) {
  switch (status) {
  case NodeStatus::Unprocessed: return "unprocessed";
  case NodeStatus::Snapped: return "snapped";
  case NodeStatus::ExcludedDisplacement: return "displacement";
  case NodeStatus::ExcludedInversion: return "inversion";
  }
  return "unknown";
}

NodeAssociation assign_point(const PatchSet& set, const Vec3& p, const AssignOptions& opts,
                             std::vector<std::string>* warnings) {
  auto ids = set.index().query(p);
  if (ids.empty()) fail(ErrorKind::UnassignedNode, "no candidate patch for point");

  std::vector<std::pair<double, int>> ranked;
  for (int id : ids) {
    const auto& aux = set.aux(id);
    ranked.push_back({(aux.vertices[aux.nearest_vertex(p)] - p).norm(), id});
  }
  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) > opts.max_candidates) {
    if (warnings)
      warnings->push_back("point has " + std::to_string(ranked.size()) + " candidate patches; keeping the " +
                          std::to_string(opts.max_candidates) + " nearest");
    ranked.resize(opts.max_candidates);
  }

  NodeAssociation best;
  best.candidates = static_cast<int>(ranked.size());
  bool found = false;
  for (const auto& [_, id] : ranked) {
    geom::Projection pr;
    try {
      pr = set.project(id, p);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ProjectionFailed) throw;
      if (warnings) warnings->push_back(std::string("projection onto patch ") + std::to_string(id) + " failed");
      continue;
    }
    const double tol = opts.tie_tolerance * (1.0 + pr.distance);
    const bool better = !found || pr.distance < best.distance - tol ||
                        (std::abs(pr.distance - best.distance) <= tol && id < best.patch);
    if (better) {
      best.patch = id;
      best.params = pr.params;
      best.distance = pr.distance;
      best.target = pr.point;
      found = true;
    }
  }
  if (!found) fail(ErrorKind::UnassignedNode, "projection failed onto every candidate patch");
  return best;
}

AssignResult assign_parent_surfaces(const mesh::Mesh& m, const PatchSet& set, const AssignOptions& opts) {
  std::set<int> nodes;
  for (const auto& b : m.boundary) {
    if (b.tag == mesh::kFarfield) continue;
    const auto side = mesh::element_side_nodes(m, b.element, b.side);
    nodes.insert(side.front());
    nodes.insert(side.back());
  }
  const std::vector<int> list(nodes.begin(), nodes.end());
  const int n = static_cast<int>(list.size());
  std::vector<NodeAssociation> found(n);
  std::vector<std::vector<std::string>> notes(n);
  std::vector<char> missing(n, 0);
  parallel_for(n, opts.threads, [&](int i) {
    try {
      found[i] = assign_point(set, m.nodes[list[i]], opts, &notes[i]);
      found[i].node = list[i];
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::UnassignedNode) throw;
      missing[i] = 1;
    }
  });
  AssignResult out;
  std::vector<int> unassigned;
  for (int i = 0; i < n; ++i) {
    out.warnings.insert(out.warnings.end(), notes[i].begin(), notes[i].end());
    if (missing[i])
      unassigned.push_back(list[i]);
    else
      out.associations.push_back(found[i]);
  }
  if (!unassigned.empty()) {
    std::string list;
    for (int n : unassigned) list += (list.empty() ? "" : ", ") + std::to_string(n);
    fail(ErrorKind::UnassignedNode, "unassigned boundary nodes: " + list);
  }
  return out;
}

SnapResult snap_nodes(const mesh::Mesh& m, std::span<const NodeAssociation> associations, double max_rel_disp) {
  SnapResult out;
  out.mesh = m;
  if (out.mesh.meta.empty()) out.mesh.meta.assign(m.nodes.size(), mesh::NodeMeta{});
  const auto incident = mesh::node_to_elements(m);

  // Linear edge lengths incident to each vertex.
  std::vector<double> length_sum(m.nodes.size(), 0.0);
  std::vector<int> length_count(m.nodes.size(), 0);
  std::set<std::pair<int, int>> edges;
  for (const auto& e : m.elements) {
    const auto v = mesh::element_vertices(e);
    for (std::size_t s = 0; s < v.size(); ++s) {
      const int a = v[s], b = v[(s + 1) % v.size()];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  for (const auto& [a, b] : edges) {
    const double len = (m.nodes[a] - m.nodes[b]).norm();
    length_sum[a] += len;
    length_sum[b] += len;
    ++length_count[a];
    ++length_count[b];
  }

  out.associations.assign(associations.begin(), associations.end());
  std::sort(out.associations.begin(), out.associations.end(),
            [](const auto& a, const auto& b) { return a.node < b.node; });
  for (auto& a : out.associations) {
    if (a.node < 0 || a.node >= m.num_nodes()) fail(ErrorKind::InvalidArgument, "snap_nodes: node index out of range");
    auto& meta = out.mesh.meta[a.node];
    meta.patch = a.patch;
    meta.params = a.params;
    const double local = length_count[a.node] > 0 ? length_sum[a.node] / length_count[a.node] : 0.0;
    const Vec3 old = out.mesh.nodes[a.node];
    const double disp = (a.target - old).norm();
    a.displacement_ratio = local > 0.0 ? disp / local : (disp > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (a.displacement_ratio > max_rel_disp) {
      a.status = NodeStatus::ExcludedDisplacement;
    } else {
      std::vector<bool> was_valid;
      for (int e : incident[a.node]) was_valid.push_back(mesh::validity(out.mesh, e).valid);
      out.mesh.nodes[a.node] = a.target;
      a.status = NodeStatus::Snapped;
      for (std::size_t k = 0; k < incident[a.node].size(); ++k) {
        if (was_valid[k] && !mesh::validity(out.mesh, incident[a.node][k]).valid) {
          out.mesh.nodes[a.node] = old;
          a.status = NodeStatus::ExcludedInversion;
          break;
        }
      }
    }
    meta.excluded = a.status != NodeStatus::Snapped;
    if (meta.excluded) out.excluded.push_back(a.node);
  }
  return out;
}

CurveResult curve_boundary(const mesh::Mesh& snapped, const PatchSet& set, int order) {
  CurveResult out;
  out.mesh = mesh::elevate_order(snapped, order);
  auto& m = out.mesh;
  if (m.meta.empty()) m.meta.assign(m.nodes.size(), mesh::NodeMeta{});
  for (const auto& b : m.boundary) {
    if (b.tag == mesh::kFarfield) continue;
    const auto side = mesh::element_side_nodes(m, b.element, b.side);
    if (m.meta[side.front()].excluded || m.meta[side.back()].excluded) {
      ++out.straight_edges;
      continue;
    }
    if (!set.has(b.tag)) {
      ++out.straight_edges;
      out.demoted.push_back({b.element, b.side, "unknown patch id " + std::to_string(b.tag)});
      continue;
    }
    std::vector<Vec3> chord;
    for (std::size_t k = 1; k + 1 < side.size(); ++k) chord.push_back(m.nodes[side[k]]);
    bool ok = true;
    std::vector<geom::Projection> placed;
    for (const auto& x : chord) {
      try {
        placed.push_back(set.project(b.tag, x));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ProjectionFailed) throw;
        out.demoted.push_back({b.element, b.side, e.what()});
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++out.straight_edges;
      continue;
    }
    for (std::size_t k = 0; k < placed.size(); ++k) {
      const int n = side[k + 1];
      m.nodes[n] = placed[k].point;
      m.meta[n].patch = b.tag;
      m.meta[n].params = placed[k].params;
      m.meta[n].excluded = false;
    }
    ++out.curved_edges;
  }
  return out;
}

nlohmann::json exclusion_report(std::span<const NodeAssociation> associations) {
  nlohmann::json excluded = nlohmann::json::array();
  int snapped = 0;
  for (const auto& a : associations) {
    if (a.status == NodeStatus::Snapped) {
      ++snapped;
      continue;
    }
    excluded.push_back({{"node", a.node},
                        {"reason", to_string(a.status)},
                        {"displacement_ratio", a.displacement_ratio},
                        {"patch", a.patch}});
  }
  return {{"snapped", snapped}, {"excluded", excluded}};
}

} // namespace hoflow::curving
