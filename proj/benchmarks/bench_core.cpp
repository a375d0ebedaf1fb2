#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "hoflow/demo_solver.hpp"
#include "hoflow/eigenanalysis.hpp"
#include "hoflow/geometry.hpp"
#include "hoflow/mesh.hpp"
#include "hoflow/polybasis.hpp"
#include "hoflow/projection_curving.hpp"
#include "hoflow/svv.hpp"
#include "hoflow/variational_curving.hpp"

using namespace hoflow;

namespace {

std::filesystem::path data(const char* name) { return std::filesystem::path(HOFLOW_DATA_DIR) / name; }

mesh::Mesh curved_annulus(int order) {
  const curving::PatchSet set(geom::read_geometry(data("quarter_annulus.geom.json")));
  const mesh::Mesh linear = mesh::read_mesh(data("quarter_annulus.mesh.json"));
  const auto snapped = curving::snap_nodes(linear, curving::assign_parent_surfaces(linear, set).associations);
  return curving::curve_boundary(snapped.mesh, set, order).mesh;
}

} // namespace

static void BM_GllRule(benchmark::State& state) {
  const int q = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(basis::gll_rule(q));
}
BENCHMARK(BM_GllRule)->Arg(4)->Arg(12)->Arg(24);

static void BM_MeshValidity(benchmark::State& state) {
  const mesh::Mesh m = curved_annulus(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mesh::count_invalid(m));
  state.SetItemsProcessed(state.iterations() * m.num_elements());
}
BENCHMARK(BM_MeshValidity)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

static void BM_RelaxSweep(benchmark::State& state) {
  const mesh::Mesh m = curved_annulus(4);
  variational::EnergyFunctional w;
  w.kind = static_cast<variational::EnergyKind>(state.range(0));
  variational::Problem prob(m, w);
  for (auto _ : state)
    for (int n = 0; n < prob.mesh().num_nodes(); ++n)
      if (prob.is_free(n)) benchmark::DoNotOptimize(prob.relax_node(n));
  state.SetLabel(std::string(variational::to_string(w.kind)));
}
BENCHMARK(BM_RelaxSweep)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

static void BM_AssignPoint(benchmark::State& state) {
  const curving::PatchSet set(geom::read_geometry(data("capsule.geom.json")));
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1.2, 1.2), z(-1.0, 3.0);
  std::vector<geom::Vec3> pts;
  for (int i = 0; i < 256; ++i) pts.emplace_back(u(rng), u(rng), z(rng));
  std::size_t i = 0;
  for (auto _ : state) {
    try {
      benchmark::DoNotOptimize(curving::assign_point(set, pts[i++ % pts.size()]));
    } catch (const std::exception&) {
    }
  }
}
BENCHMARK(BM_AssignPoint)->Unit(benchmark::kMicrosecond);

static void BM_TemporalEsa(benchmark::State& state) {
  esa::CgScheme s;
  s.order = static_cast<int>(state.range(0));
  s.kernel = svv::dg_kernel(s.order);
  const auto kh = esa::linspace(0.0, s.order * 3.141592653589793, 200);
  for (auto _ : state) benchmark::DoNotOptimize(esa::temporal_esa(s, kh));
}
BENCHMARK(BM_TemporalEsa)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_SpatialEsa(benchmark::State& state) {
  esa::CgScheme s;
  s.order = static_cast<int>(state.range(0));
  s.kernel = svv::dg_kernel(s.order);
  const auto wh = esa::linspace(0.0, s.order * 3.141592653589793, 200, false);
  for (auto _ : state) benchmark::DoNotOptimize(esa::spatial_esa(s, wh));
}
BENCHMARK(BM_SpatialEsa)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_DemoStep(benchmark::State& state) {
  demo::CaseConfig cfg;
  cfg.dimension = static_cast<int>(state.range(0));
  const demo::Case c = demo::build_case(cfg);
  demo::SolverState s = demo::initial_state(c);
  const double dt = 0.5 * demo::cfl_limit(c);
  for (auto _ : state) demo::step(c, s, dt);
  state.SetItemsProcessed(state.iterations() * c.nx() * c.ny());
}
BENCHMARK(BM_DemoStep)->Arg(1)->Arg(2)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
