#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hoflow/error.hpp"
#include "hoflow/mesh.hpp"

using namespace hoflow;
using namespace hoflow::mesh;

namespace {

Mesh single(Shape shape, int order, std::vector<Vec3> vertices) {
  Mesh m;
  m.nodes = std::move(vertices);
  Element e{shape, 1, {}};
  for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) e.nodes.push_back(i);
  m.elements.push_back(e);
  return order == 1 ? m : elevate_order(m, order);
}

Mesh unit_triangle(int order = 1) { return single(Shape::Triangle, order, {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}); }

// Displaces every non-vertex node of element 0 by a random amount.
void perturb(Mesh& m, std::mt19937& rng, double amp) {
  std::uniform_real_distribution<double> u(-amp, amp);
  const int nv = vertex_count(m.elements[0].shape);
  for (std::size_t i = nv; i < m.elements[0].nodes.size(); ++i) {
    auto& p = m.nodes[m.elements[0].nodes[i]];
    p += Vec3(u(rng), u(rng), 0.0);
  }
}

double lagrange_1d(int order, int k, double x) {
  double v = 1.0;
  for (int j = 0; j <= order; ++j)
    if (j != k) v *= (x - double(j) / order) / (double(k - j) / order);
  return v;
}

// Derivative at t = 0 of the degree <= n polynomial through samples f(t_k),
// t_k = (k - n/2) h; exact for polynomials of degree <= n.
template <class F> Vec2 poly_derivative(F&& f, int n, double h) {
  std::vector<double> t(n + 1);
  for (int k = 0; k <= n; ++k) t[k] = (k - 0.5 * n) * h;
  Vec2 d = Vec2::Zero();
  for (int k = 0; k <= n; ++k) {
    double w = 0.0; // l_k'(0)
    for (int m = 0; m <= n; ++m) {
      if (m == k) continue;
      double term = 1.0 / (t[k] - t[m]);
      for (int j = 0; j <= n; ++j)
        if (j != k && j != m) term *= (0.0 - t[j]) / (t[k] - t[j]);
      w += term;
    }
    d += w * f(t[k]);
  }
  return d;
}

std::filesystem::path data(const char* name) { return std::filesystem::path(HOFLOW_DATA_DIR) / name; }

} // namespace

TEST(ReferenceElement, NodeCountsAndCardinality) {
  for (Shape s : {Shape::Triangle, Shape::Quadrilateral}) {
    for (int p = 1; p <= 6; ++p) {
      const auto& ref = ReferenceElement::get(s, p);
      ASSERT_EQ(ref.size(), node_count(s, p));
      for (int i = 0; i < ref.size(); ++i) {
        const auto l = ref.values(ref.nodes()[i]);
        for (int j = 0; j < ref.size(); ++j) EXPECT_NEAR(l[j], i == j ? 1.0 : 0.0, 1e-10);
        EXPECT_TRUE(inside_reference(s, ref.nodes()[i]));
      }
      EXPECT_NEAR(ref.values(Vec2(0.2, 0.3)).sum(), 1.0, 1e-11);
      EXPECT_LE(ref.gradients(Vec2(0.2, 0.3)).colwise().sum().norm(), 1e-9);
    }
  }
}

TEST(ReferenceElement, UnsupportedShapesRejected) {
  EXPECT_THROW(ReferenceElement::get(Shape::Tetrahedron, 2), Error);
  EXPECT_THROW(ReferenceElement::get(Shape::Prism, 1), Error);
}

TEST(ReferenceQuadrature, IntegratesMonomials) {
  // Oracle: int_T x^a y^b = a! b! / (a + b + 2)!, int_[0,1]^2 x^a y^b = 1/((a+1)(b+1)).
  const auto rule = basis::gll_rule(6);
  const auto tri = reference_quadrature(Shape::Triangle, rule);
  const auto quad = reference_quadrature(Shape::Quadrilateral, rule);
  for (int a = 0; a <= 4; ++a) {
    for (int b = 0; a + b <= 4; ++b) {
      double st = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < tri.points.size(); ++i)
        st += tri.weights[i] * std::pow(tri.points[i][0], a) * std::pow(tri.points[i][1], b);
      for (std::size_t i = 0; i < quad.points.size(); ++i)
        sq += quad.weights[i] * std::pow(quad.points[i][0], a) * std::pow(quad.points[i][1], b);
      EXPECT_NEAR(st, std::tgamma(a + 1) * std::tgamma(b + 1) / std::tgamma(a + b + 3), 1e-14);
      EXPECT_NEAR(sq, 1.0 / ((a + 1) * (b + 1)), 1e-14);
    }
  }
}

TEST(MapPhysical, StraightTriangleVertices) {
  const Mesh m = unit_triangle(1);
  EXPECT_EQ(map_physical(m, 0, Vec2(0, 0)), Vec3(0, 0, 0));
  EXPECT_EQ(map_physical(m, 0, Vec2(1, 0)), Vec3(1, 0, 0));
  EXPECT_EQ(map_physical(m, 0, Vec2(0, 1)), Vec3(0, 1, 0));
  EXPECT_THROW(map_physical(m, 0, Vec2(0.8, 0.8)), Error);
}

TEST(MapPhysical, DisplacedEdgeMidpoint) {
  Mesh m = unit_triangle(2);
  const int mid = element_side_nodes(m, 0, 0)[1];
  m.nodes[mid] += Vec3(0, 0.1, 0);
  EXPECT_LE((map_physical(m, 0, Vec2(0.5, 0)) - Vec3(0.5, 0.1, 0)).norm(), 1e-14);
}

TEST(MapPhysical, QuadMatchesTensorLagrange) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int p = 4;
  Mesh m = single(Shape::Quadrilateral, p, {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(2.2, 1.5, 0), Vec3(-0.1, 1.2, 0)});
  perturb(m, rng, 0.05);
  const auto& ref = ReferenceElement::get(Shape::Quadrilateral, p);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec2 xi(u(rng), u(rng));
    Vec3 naive = Vec3::Zero();
    for (int n = 0; n < ref.size(); ++n) {
      const int i = static_cast<int>(std::lround(ref.nodes()[n][0] * p));
      const int j = static_cast<int>(std::lround(ref.nodes()[n][1] * p));
      naive += lagrange_1d(p, i, xi[0]) * lagrange_1d(p, j, xi[1]) * m.nodes[m.elements[0].nodes[n]];
    }
    EXPECT_LE((map_physical(m, 0, xi) - naive).norm(), 1e-12);
  }
}

TEST(MapPhysical, ReproducesVerticesExactly) {
  std::mt19937 rng(12);
  for (Shape s : {Shape::Triangle, Shape::Quadrilateral}) {
    for (int p = 1; p <= 5; ++p) {
      Mesh m = s == Shape::Triangle ? single(s, p, {Vec3(0.1, 0.2, 0), Vec3(1.3, -0.1, 0), Vec3(0.3, 0.9, 0)})
                                    : single(s, p, {Vec3(0, 0, 0), Vec3(1, 0.1, 0), Vec3(1.1, 1, 0), Vec3(0, 0.8, 0)});
      perturb(m, rng, 0.05);
      const auto rv = reference_vertices(s);
      for (std::size_t k = 0; k < rv.size(); ++k)
        EXPECT_LE((map_physical(m, 0, rv[k]) - m.nodes[m.elements[0].nodes[k]]).norm(), 1e-13);
    }
  }
}

TEST(IdealMap, Examples) {
  const Mesh m = single(Shape::Triangle, 3, {Vec3(1, 1, 0), Vec3(3, 1.5, 0), Vec3(1.5, 4, 0)});
  EXPECT_EQ(ideal_map(m, 0, Vec2(0, 0)), Vec3(1, 1, 0));
  EXPECT_EQ(ideal_map(m, 0, Vec2(1, 0)), Vec3(3, 1.5, 0));
  const Vec3 mean = (Vec3(1, 1, 0) + Vec3(3, 1.5, 0) + Vec3(1.5, 4, 0)) / 3.0;
  EXPECT_LE((ideal_map(m, 0, Vec2(1.0 / 3, 1.0 / 3)) - mean).norm(), 1e-15);
  const Mat2 g = ideal_gradient(m, 0, Vec2(0.2, 0.1));
  EXPECT_LE((g - ideal_gradient(m, 0, Vec2(0.6, 0.3))).norm(), 0.0);
}

TEST(IdealMap, ParallelogramQuadIsAffine) {
  const Mesh m = single(Shape::Quadrilateral, 2, {Vec3(0, 0, 0), Vec3(2, 0.5, 0), Vec3(2.5, 2.5, 0), Vec3(0.5, 2, 0)});
  const Mat2 g0 = ideal_gradient(m, 0, Vec2(0, 0));
  EXPECT_LE((g0 - ideal_gradient(m, 0, Vec2(0.7, 0.4))).norm(), 1e-15);
  EXPECT_LE((ideal_map(m, 0, Vec2(1, 1)) - Vec3(2.5, 2.5, 0)).norm(), 1e-15);
}

TEST(Jacobian, IdentityAndInverted) {
  const Mesh m = unit_triangle(1);
  for (const Vec2& xi : {Vec2(0, 0), Vec2(0.3, 0.3), Vec2(0, 1)}) EXPECT_NEAR(jacobian(m, 0, xi).det, 1.0, 1e-14);
  const Mesh inv = single(Shape::Triangle, 1, {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)});
  EXPECT_LT(jacobian(inv, 0, Vec2(0.2, 0.2)).det, 0.0);
}

TEST(Jacobian, MatchesFiniteDifferencesOnCurvedElements) {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.05, 0.45);
  const double h = 1e-5;
  for (Shape s : {Shape::Triangle, Shape::Quadrilateral}) {
    for (int p : {2, 3, 4}) {
      Mesh m = s == Shape::Triangle ? single(s, p, {Vec3(0, 0, 0), Vec3(1, 0.1, 0), Vec3(0.2, 1, 0)})
                                    : single(s, p, {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1.2, 1, 0), Vec3(0, 1.1, 0)});
      perturb(m, rng, 0.08);
      for (int trial = 0; trial < 10; ++trial) {
        const Vec2 xi(u(rng), u(rng));
        const Mat2 g = jacobian(m, 0, xi).gradient;
        for (int d = 0; d < 2; ++d) {
          Vec2 e = Vec2::Zero();
          e[d] = h;
          const Vec2 fd = (map_physical(m, 0, xi + e) - map_physical(m, 0, xi - e)).head<2>() / (2 * h);
          EXPECT_LE((g.col(d) - fd).norm() / fd.norm(), 1e-7);
        }
      }
    }
  }
}

TEST(Jacobian, ChainRuleMatchesCompositeMap) {
  // phi = phi_M o phi_I^-1 is a polynomial of degree P in y for affine phi_I,
  // so its gradient is recovered exactly from P+1 samples per direction.
  std::mt19937 rng(5);
  const int p = 4;
  for (int trial = 0; trial < 10; ++trial) {
    Mesh m = single(Shape::Triangle, p, {Vec3(0.2, 0.1, 0), Vec3(1.4, 0.3, 0), Vec3(0.5, 1.3, 0)});
    perturb(m, rng, 0.06);
    const Mat2 gi = ideal_gradient(m, 0, Vec2::Zero());
    const Vec2 y0 = ideal_map(m, 0, Vec2::Zero()).head<2>();
    const Vec2 xi(0.3, 0.35);
    const Vec2 y = y0 + gi * xi;
    auto phi = [&](const Vec2& yy) -> Vec2 { return map_physical(m, 0, gi.inverse() * (yy - y0)).head<2>(); };
    Mat2 direct;
    for (int d = 0; d < 2; ++d) {
      Vec2 e = Vec2::Zero();
      e[d] = 1.0;
      direct.col(d) = poly_derivative([&](double t) { return phi(y + t * e); }, p, 0.02);
    }
    const double chain = jacobian(m, 0, xi).det * gi.inverse().determinant();
    EXPECT_NEAR(chain, direct.determinant(), 1e-10);
  }
}

TEST(Validity, StraightAndInverted) {
  const auto v = validity(unit_triangle(1), 0);
  EXPECT_TRUE(v.valid);
  EXPECT_NEAR(v.scaled_jacobian, 1.0, 1e-14);
  const Mesh inv = single(Shape::Triangle, 1, {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)});
  EXPECT_FALSE(validity(inv, 0).valid);
}

TEST(Validity, CurvedEdgePastOppositeVertex) {
  Mesh m = unit_triangle(2);
  m.nodes[element_side_nodes(m, 0, 1)[1]] = Vec3(-0.2, -0.2, 0);
  EXPECT_FALSE(validity(m, 0).valid);
  EXPECT_FALSE(validity(m, 0, basis::gll_rule(7)).valid);
  double dense_min = 1e300;
  for (int i = 0; i <= 50; ++i)
    for (int j = 0; i + j <= 50; ++j) dense_min = std::min(dense_min, jacobian(m, 0, Vec2(i / 50.0, j / 50.0)).det);
  EXPECT_LT(dense_min, 0.0);
}

TEST(Validity, MildCurvatureStaysValidUnderDenseSampling) {
  Mesh m = unit_triangle(3);
  const auto side = element_side_nodes(m, 0, 1);
  for (std::size_t k = 1; k + 1 < side.size(); ++k) m.nodes[side[k]] += Vec3(0.05, 0.05, 0);
  const auto v = validity(m, 0);
  EXPECT_TRUE(v.valid);
  EXPECT_LT(v.scaled_jacobian, 1.0);
  for (int i = 0; i <= 50; ++i)
    for (int j = 0; i + j <= 50; ++j) EXPECT_GT(jacobian(m, 0, Vec2(i / 50.0, j / 50.0)).det, 0.0);
}

TEST(ElevateOrder, SharesEdgeNodes) {
  const std::vector<double> radii{1.0, 1.5, 2.0};
  const Mesh lin = quarter_annulus(radii, 3);
  for (int p = 1; p <= 5; ++p) {
    const Mesh m = elevate_order(lin, p);
    EXPECT_NO_THROW(check_structure(m));
    // V - E + F = 1 for a disk: nodes = V + (p-1) E + interior per triangle.
    const int v = lin.num_nodes(), f = lin.num_elements(), e = v + f - 1;
    EXPECT_EQ(m.num_nodes(), v + (p - 1) * e + f * (p - 1) * (p - 2) / 2);
    EXPECT_EQ(count_invalid(m), 0);
  }
}

TEST(MeshStructure, DetectsNonConformingEdge) {
  Mesh m = elevate_order(quarter_annulus(std::vector<double>{1.0, 2.0}, 2), 3);
  m.nodes.push_back(Vec3(5, 5, 0));
  m.elements[0].nodes[ReferenceElement::get(Shape::Triangle, 3).side_nodes(2)[1]] = m.num_nodes() - 1;
  EXPECT_THROW(check_structure(m), Error);
}

TEST(MeshIo, RoundTripRandomMesh) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  Mesh m = elevate_order(quarter_annulus(std::vector<double>{1.0, 1.3, 2.0}, 3), 3);
  for (auto& p : m.nodes) p += Vec3(u(rng), u(rng), u(rng));
  m.meta.assign(m.nodes.size(), NodeMeta{});
  m.meta[2] = {1, Vec2(0.25, 0.0), false};
  m.meta[5] = {-1, Vec2::Zero(), true};
  m.boundary.back().tag = kFarfield;
  const auto path = std::filesystem::temp_directory_path() / "hoflow_mesh_roundtrip.json";
  write_mesh(path, m);
  const Mesh r = read_mesh(path);
  ASSERT_EQ(r.num_nodes(), m.num_nodes());
  for (int i = 0; i < m.num_nodes(); ++i) EXPECT_LE((r.nodes[i] - m.nodes[i]).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_EQ(r.num_elements(), m.num_elements());
  for (int e = 0; e < m.num_elements(); ++e) {
    EXPECT_EQ(r.elements[e].nodes, m.elements[e].nodes);
    EXPECT_EQ(r.elements[e].order, m.elements[e].order);
    EXPECT_EQ(r.elements[e].shape, m.elements[e].shape);
  }
  ASSERT_EQ(r.boundary.size(), m.boundary.size());
  for (std::size_t i = 0; i < m.boundary.size(); ++i) {
    EXPECT_EQ(r.boundary[i].element, m.boundary[i].element);
    EXPECT_EQ(r.boundary[i].side, m.boundary[i].side);
    EXPECT_EQ(r.boundary[i].tag, m.boundary[i].tag);
  }
  ASSERT_EQ(r.meta.size(), m.meta.size());
  EXPECT_EQ(r.meta[2].patch, 1);
  EXPECT_EQ(r.meta[2].params, Vec2(0.25, 0.0));
  EXPECT_TRUE(r.meta[5].excluded);
  std::filesystem::remove(path);
}

TEST(MeshIo, TruncatedFileIsParseError) {
  const auto path = std::filesystem::temp_directory_path() / "hoflow_mesh_truncated.json";
  write_mesh(path, quarter_annulus(std::vector<double>{1.0, 2.0}, 2));
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(path) << text.substr(0, text.size() / 2);
  try {
    read_mesh(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
  }
  std::ofstream(path) << R"({"format": "hoflow-mesh", "version": 1, "nodes": [[0,0,0]],
    "elements": [{"shape": "triangle", "order": 1, "nodes": [0, 1, 2]}]})";
  try {
    read_mesh(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("out of range"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(MeshIo, BundledQuarterAnnulus) {
  const Mesh m = read_mesh(data("quarter_annulus.mesh.json"));
  EXPECT_EQ(m.num_nodes(), 30);
  EXPECT_EQ(m.num_elements(), 40);
  EXPECT_EQ(m.boundary.size(), 18u);
  EXPECT_EQ(count_invalid(m), 0);
}

TEST(MeshIo, GmshHighOrderQuadAndTriangle) {
  // One P=2 quad [0,2]x[0,1] and one P=3 triangle on top of it, with gmsh's
  // node ordering written explicitly.
  const auto path = std::filesystem::temp_directory_path() / "hoflow_gmsh.msh";
  std::ofstream(path) << R"($MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 7 "wall"
1 9 "farfield"
$EndPhysicalNames
$Nodes
9
1 0 0 0
2 2 0 0
3 2 1 0
4 0 1 0
5 1 0 0
6 2 0.5 0
7 1 1 0
8 0 0.5 0
9 1 0.5 0
$EndNodes
$Elements
3
1 10 2 0 1 1 2 3 4 5 6 7 8 9
2 8 2 7 1 1 2 5
3 8 2 9 1 2 3 6
$EndElements
)";
  const Mesh m = read_gmsh(path);
  ASSERT_EQ(m.num_elements(), 1);
  EXPECT_EQ(m.elements[0].order, 2);
  EXPECT_EQ(m.elements[0].shape, Shape::Quadrilateral);
  // Centre node is local index 8; edge 1 midpoint is local 5.
  EXPECT_EQ(m.nodes[m.elements[0].nodes[8]], Vec3(1, 0.5, 0));
  EXPECT_EQ(m.nodes[m.elements[0].nodes[5]], Vec3(2, 0.5, 0));
  ASSERT_EQ(m.boundary.size(), 2u);
  EXPECT_EQ(m.boundary[0].tag, 7);
  EXPECT_EQ(m.boundary[1].tag, kFarfield);
  EXPECT_EQ(m.boundary[1].side, 1);
  for (const Vec2& xi : {Vec2(0.3, 0.7), Vec2(0.9, 0.1)})
    EXPECT_LE((map_physical(m, 0, xi) - Vec3(2 * xi[0], xi[1], 0)).norm(), 1e-14);
  std::filesystem::remove(path);
}

TEST(MeshIo, GmshP4QuadInteriorOrdering) {
  // Nodes written in gmsh order for a P=4 quad on [0,4]^2 (integer lattice).
  const std::vector<std::array<int, 2>> lattice{
      {0, 0}, {4, 0}, {4, 4}, {0, 4}, {1, 0}, {2, 0}, {3, 0}, {4, 1}, {4, 2}, {4, 3}, {3, 4}, {2, 4}, {1, 4},
      {0, 3}, {0, 2}, {0, 1}, {1, 1}, {3, 1}, {3, 3}, {1, 3}, {2, 1}, {3, 2}, {2, 3}, {1, 2}, {2, 2}};
  const auto path = std::filesystem::temp_directory_path() / "hoflow_gmsh4.msh";
  {
    std::ofstream out(path);
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n25\n";
    for (std::size_t i = 0; i < lattice.size(); ++i) out << i + 1 << ' ' << lattice[i][0] << ' ' << lattice[i][1] << " 0\n";
    out << "$EndNodes\n$Elements\n1\n1 37 2 0 1";
    for (std::size_t i = 0; i < lattice.size(); ++i) out << ' ' << i + 1;
    out << "\n$EndElements\n";
  }
  const Mesh m = read_gmsh(path);
  const auto& ref = ReferenceElement::get(Shape::Quadrilateral, 4);
  for (int n = 0; n < ref.size(); ++n)
    EXPECT_LE((m.nodes[m.elements[0].nodes[n]].head<2>() - 4.0 * ref.nodes()[n]).norm(), 1e-14) << n;
  std::filesystem::remove(path);
}

TEST(MeshIo, GmshMalformed) {
  const auto path = std::filesystem::temp_directory_path() / "hoflow_gmsh_bad.msh";
  std::ofstream(path) << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n3\n1 0 0 0\n2 1 0\n";
  EXPECT_THROW(read_gmsh(path), Error);
  std::filesystem::remove(path);
}
