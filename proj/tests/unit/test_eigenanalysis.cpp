#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "hoflow/eigenanalysis.hpp"
#include "hoflow/error.hpp"
#include "hoflow/svv.hpp"

using namespace hoflow;
using namespace hoflow::esa;
using std::numbers::pi;

namespace {

CgScheme plain(int P) { return {P, std::nullopt, 1.0, 0}; }
CgScheme with_kernel(const svv::Kernel& k) { return {k.order, k, 1.0, 0}; }

double dispersion_error(int P, double kh) {
  const auto s = temporal_esa(plain(P), {kh});
  return std::abs(s.samples[0].physical().real() - kh) / kh;
}

} // namespace

TEST(Linspace, Endpoints) {
  const auto a = linspace(0.0, 1.0, 5);
  ASSERT_EQ(a.size(), 5u);
  EXPECT_DOUBLE_EQ(a.front(), 0.0);
  EXPECT_DOUBLE_EQ(a.back(), 1.0);
  const auto b = linspace(0.0, 1.0, 4, false);
  EXPECT_DOUBLE_EQ(b.front(), 0.25);
  EXPECT_DOUBLE_EQ(b.back(), 1.0);
}

TEST(Temporal, ConstantModeHasZeroFrequency) {
  for (int P = 1; P <= 8; ++P) {
    EXPECT_LE(std::abs(temporal_esa(plain(P), {0.0}).samples[0].physical()), 1e-10) << P;
    EXPECT_LE(std::abs(temporal_esa(with_kernel(svv::dg_kernel(std::max(P, 2))), {0.0}).samples[0].physical()), 1e-10);
  }
}

TEST(Temporal, OneValuePerModeAndOnePhysical) {
  const auto s = temporal_esa(plain(4), linspace(-4 * pi, 4 * pi, 17));
  for (const auto& smp : s.samples) {
    EXPECT_EQ(smp.values.size(), 4u);
    EXPECT_EQ(std::count(smp.labels.begin(), smp.labels.end(), Label::Physical), 1);
  }
}

TEST(Temporal, PhaseSpeedAtLowWavenumber) {
  for (int P = 1; P <= 8; ++P) EXPECT_LE(dispersion_error(P, 0.05), 1e-6) << P;
  EXPECT_LE(dispersion_error(3, 0.1), 1e-6);
}

TEST(Temporal, PlainCgIsNeutral) {
  const auto s = temporal_esa(plain(5), linspace(0.0, 5 * pi, 50));
  for (const auto& smp : s.samples)
    for (auto w : smp.values) EXPECT_LE(std::abs(w.imag()), 1e-10);
}

TEST(Temporal, NonnegativeKernelsDissipate) {
  std::vector<svv::Kernel> kernels;
  for (int P = 2; P <= 10; ++P) {
    kernels.push_back(svv::dg_kernel(P));
    kernels.push_back(svv::power_law_kernel(P, 2.0));
    kernels.push_back(svv::unit_kernel(P));
  }
  for (const auto& k : kernels) {
    const auto s = temporal_esa(with_kernel(k), linspace(-k.order * pi, k.order * pi, 41));
    for (const auto& smp : s.samples)
      for (auto w : smp.values) EXPECT_LE(w.imag(), 1e-12) << k.provenance << " P=" << k.order << " kh=" << smp.x;
  }
}

TEST(Temporal, ConjugateSymmetric) {
  const auto k = svv::dg_kernel(4);
  const auto kh = linspace(0.1, 3.9 * pi, 20);
  std::vector<double> neg;
  for (double x : kh) neg.push_back(-x);
  const auto a = temporal_esa(with_kernel(k), kh);
  const auto b = temporal_esa(with_kernel(k), neg);
  for (std::size_t i = 0; i < kh.size(); ++i) {
    const cplx wa = a.samples[i].physical();
    const cplx wb = b.samples[i].physical();
    EXPECT_NEAR(wb.real(), -wa.real(), 1e-10);
    EXPECT_NEAR(wb.imag(), wa.imag(), 1e-10);
  }
}

TEST(Temporal, MatchesPeriodicGridSpectrum) {
  for (int P : {2, 3, 5}) {
    const int N = 12;
    const int q = svv::default_quadrature_points(P);
    const auto k = svv::dg_kernel(P);
    const auto g = svv::Grid1D::uniform(0.0, N, N, P, true);
    const Eigen::MatrixXd M(svv::assemble_mass(g, q));
    const Eigen::MatrixXd L =
        -Eigen::MatrixXd(svv::assemble_convection(g, q)) + Eigen::MatrixXd(svv::assemble_svv_operator(g, k, 1.0, 1.0, q));
    const Eigen::EigenSolver<Eigen::MatrixXd> es(M.lu().solve(L));
    std::vector<cplx> full;
    for (int i = 0; i < es.eigenvalues().size(); ++i) full.push_back(cplx(0.0, 1.0) * es.eigenvalues()[i]);
    for (int m = 0; m < N; ++m) {
      const auto s = temporal_esa(with_kernel(k), {2.0 * pi * m / N});
      for (cplx w : s.samples[0].values) {
        double best = std::numeric_limits<double>::infinity();
        for (cplx f : full) best = std::min(best, std::abs(f - w));
        EXPECT_LE(best, 1e-10) << P << " " << m;
      }
    }
  }
}

TEST(Temporal, CollocatedHigherOrderResolvesBetterAtFixedDof) {
  double prev = std::numeric_limits<double>::infinity();
  for (int P = 2; P <= 5; ++P) {
    const double kh = 0.3 * P * pi;
    const double e = std::abs(temporal_esa({P, std::nullopt, 1.0, P + 1}, {kh}).samples[0].physical().real() - kh) / kh;
    EXPECT_LT(e, prev) << P;
    prev = e;
  }
}

TEST(Temporal, ConsistentMassBandEdgeAtOddOrder) {
  // kappa h = 0.9 pi sits next to the element Brillouin edge, where the
  // P = 3 physical eigencurve bends away from the exact relation.
  EXPECT_GT(dispersion_error(3, 0.9 * pi), dispersion_error(2, 0.6 * pi));
  EXPECT_LT(dispersion_error(3, 0.75 * pi), dispersion_error(2, 0.5 * pi));
}

TEST(Temporal, QuadratureBelowMinimumRejected) {
  EXPECT_THROW(temporal_esa({4, std::nullopt, 1.0, 3}, {0.1}), Error);
}

TEST(DgReference, FirstOrderUpwindClosedForm) {
  for (double kh : linspace(-pi, pi, 33)) {
    const cplx w = dg_upwind_reference(0, {kh}).samples[0].physical();
    EXPECT_NEAR(w.real(), std::sin(kh), 1e-12) << kh;
    EXPECT_NEAR(w.imag(), -(1.0 - std::cos(kh)), 1e-12) << kh;
  }
}

TEST(DgReference, ModeCountAndZeroAtOrigin) {
  for (int P = 0; P <= 6; ++P) {
    const auto s = dg_upwind_reference(P, {0.0});
    EXPECT_EQ(s.samples[0].values.size(), static_cast<std::size_t>(P + 1));
    EXPECT_LE(std::abs(s.samples[0].physical()), 1e-10);
    EXPECT_TRUE(s.upwind);
  }
}

TEST(DgReference, Dissipative) {
  for (int P = 0; P <= 6; ++P) {
    const auto s = dg_upwind_reference(P, linspace(0.0, pi, 25, false));
    for (const auto& smp : s.samples) {
      for (auto w : smp.values) EXPECT_LE(w.imag(), 1e-12);
      // Dissipation scales like (kappa h)^(2P+2); only test where it exceeds roundoff.
      if (smp.x < pi && (smp.x >= 2.0 || (P <= 2 && smp.x >= 0.1))) EXPECT_LT(smp.physical().imag(), 0.0) << P << " " << smp.x;
    }
  }
}

TEST(DgReference, LowWavenumberAccuracy) {
  EXPECT_LE(std::abs(dg_upwind_reference(1, {0.05}).samples[0].physical() - 0.05) / 0.05, 1e-5);
  for (int P = 2; P <= 5; ++P) {
    const cplx w = dg_upwind_reference(P, {0.05}).samples[0].physical();
    EXPECT_LE(std::abs(w - cplx(0.05, 0.0)) / 0.05, 1e-6) << P;
  }
}

TEST(DgReference, DissipationOrder) {
  for (int P = 0; P <= 2; ++P) {
    const double a = dg_upwind_reference(P, {0.1}).samples[0].physical().imag();
    const double b = dg_upwind_reference(P, {0.05}).samples[0].physical().imag();
    EXPECT_NEAR(std::log2(a / b), 2 * P + 2, 0.05) << P;
  }
}

TEST(Spatial, ZeroFrequencyGivesZeroWavenumber) {
  // Even orders have a double root z = 1 at omega = 0, resolved to sqrt(eps).
  for (int P = 1; P <= 6; ++P) {
    const auto s = spatial_esa(plain(P), {0.0});
    EXPECT_LE(std::abs(s.samples[0].physical()), P % 2 ? 1e-10 : 1e-7) << P;
  }
}

TEST(Spatial, PhysicalModeTravelsForward) {
  for (int P = 1; P <= 8; ++P) {
    const auto s = spatial_esa(plain(P), linspace(0.0, 0.5, 11, false));
    for (const auto& smp : s.samples) EXPECT_NEAR(smp.physical().real(), smp.x, 0.01 * smp.x) << P << " " << smp.x;
  }
}

TEST(Spatial, RootsSatisfyBlochDeterminant) {
  const auto k = svv::dg_kernel(4);
  const svv::Element1D el(4, 1.0, svv::default_quadrature_points(4));
  const Eigen::MatrixXd L = -el.convection() + el.svv(k, svv::svv_coefficient({1.0, 1.0, 1.0, 4}));
  for (double wh : {0.3, 2.0, 7.0}) {
    const auto s = spatial_esa(with_kernel(k), {wh});
    for (cplx kappa : s.samples[0].values) {
      const cplx z = std::exp(cplx(0.0, 1.0) * kappa);
      const Eigen::MatrixXcd E = cplx(0.0, -wh) * el.mass().cast<cplx>() - L.cast<cplx>();
      Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(4, 4);
      for (int i = 0; i <= 4; ++i)
        for (int j = 0; j <= 4; ++j) A(i % 4, j % 4) += E(i, j) * (j == 4 ? z : 1.0) / (i == 4 ? z : 1.0);
      const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
      EXPECT_LE(svd.singularValues().minCoeff() / svd.singularValues().maxCoeff(), 1e-10) << wh;
    }
  }
}

TEST(Spatial, PhysicalAndUnphysicalPresent) {
  const auto s = spatial_esa(plain(3), linspace(0.0, 3 * pi, 30, false));
  for (const auto& smp : s.samples) {
    EXPECT_EQ(std::count(smp.labels.begin(), smp.labels.end(), Label::Physical), 1);
    EXPECT_EQ(std::count(smp.labels.begin(), smp.labels.end(), Label::Unphysical), 1);
  }
}

TEST(Spatial, SignStructureForDgKernels) {
  for (int P = 2; P <= 10; ++P) {
    const auto s = spatial_esa(with_kernel(svv::dg_kernel(P)), linspace(0.0, P * pi, 40, false));
    for (const auto& smp : s.samples) {
      EXPECT_GE(smp.physical().imag(), -1e-12) << P << " " << smp.x;
      EXPECT_LE(smp.unphysical().imag(), 1e-12) << P << " " << smp.x;
    }
  }
}

TEST(Spatial, InvertsTemporalAtLowFrequency) {
  for (int P = 2; P <= 6; ++P) {
    for (bool kernel : {false, true}) {
      const CgScheme sc = kernel ? with_kernel(svv::dg_kernel(P)) : plain(P);
      const cplx kp = spatial_esa(sc, {0.1}).samples[0].physical();
      ASSERT_LT(std::abs(kp.imag()), 1e-3);
      const cplx w = temporal_esa(sc, {kp.real()}).samples[0].physical();
      EXPECT_LE(std::abs(w.real() - 0.1) / 0.1, 1e-4) << P << " " << kernel;
    }
  }
}

TEST(Spatial, MarginIsMinimumReflectedDamping) {
  const auto s = spatial_esa(with_kernel(svv::dg_kernel(4)), linspace(0.0, 4 * pi, 40, false));
  double m = std::numeric_limits<double>::infinity();
  for (const auto& smp : s.samples) m = std::min(m, -smp.unphysical().imag());
  EXPECT_DOUBLE_EQ(reflected_margin(s), m);
  EXPECT_THROW(reflected_margin(temporal_esa(plain(2), {0.1})), Error);
}

TEST(SpectrumCsv, LongFormatAndFamilies) {
  const auto s = spatial_esa(plain(2), {0.5, 1.0});
  std::ostringstream all;
  s.write_csv(all);
  std::istringstream in(all.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sample,Re,Im,label");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(s.samples[0].values.size() + s.samples[1].values.size()));

  std::ostringstream phys;
  s.write_csv(phys, Label::Physical);
  const std::string text = phys.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);

  const auto dir = std::filesystem::temp_directory_path() / "hoflow_esa_csv";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto files = s.write_csv_files(dir / "spec");
  ASSERT_GE(files.size(), 2u);
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  EXPECT_TRUE(std::filesystem::exists(dir / "spec_physical.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "spec_unphysical.csv"));
  std::filesystem::remove_all(dir);
}

TEST(OptimizeKernel, HistoryNonIncreasingAndConstraintMet) {
  const auto r = optimize_kernel(4);
  ASSERT_FALSE(r.history.empty());
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1]) << i;
  EXPECT_GE(r.margin, 0.1);
  EXPECT_EQ(r.kernel.entries.front(), 0.0);
  EXPECT_EQ(r.kernel.entries.back(), 1.0);
  for (double q : r.kernel.entries) {
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
  }
  EXPECT_LT(r.relative_mismatch, 0.2);
  EXPECT_LE(r.evaluations, 2000 + 8);
}

TEST(OptimizeKernel, MismatchAgainstIndependentReference) {
  const auto r = optimize_kernel(4);
  const auto kh = linspace(0.0, 0.8 * 4 * pi, 60, false);
  const auto cg = temporal_esa(with_kernel(r.kernel), kh);
  const auto dg = dg_upwind_reference(3, kh);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < kh.size(); ++i) {
    num += std::pow(cg.samples[i].physical().imag() - dg.samples[i].physical().imag(), 2);
    den += std::pow(dg.samples[i].physical().imag(), 2);
  }
  EXPECT_NEAR(std::sqrt(num / den), r.relative_mismatch, 1e-12);
  EXPECT_LT(std::sqrt(num / den), 0.2);
}

TEST(OptimizeKernel, SanityLimitReturnsZeroKernel) {
  KernelOptimizeOptions o;
  o.target_cg_without_svv = true;
  o.c_min = 0.0;
  for (int P : {2, 4}) {
    const auto r = optimize_kernel(P, o);
    for (int p = 0; p < P; ++p) EXPECT_LE(r.kernel.entries[p], 1e-3) << P << " " << p;
  }
}

TEST(OptimizeKernel, BitDeterministic) {
  const auto a = optimize_kernel(3);
  const auto b = optimize_kernel(3);
  EXPECT_EQ(a.kernel.entries, b.kernel.entries);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(OptimizeKernel, InfeasibleReportsMargin) {
  KernelOptimizeOptions o;
  o.c_min = 1e3;
  o.max_evaluations = 60;
  try {
    optimize_kernel(2, o);
    FAIL() << "expected Infeasible";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    EXPECT_NE(std::string(e.what()).find("best margin"), std::string::npos);
  }
}

TEST(OptimizeKernel, UnsupportedOrder) {
  EXPECT_THROW(optimize_kernel(1), Error);
  EXPECT_THROW(optimize_kernel(11), Error);
}

TEST(TemporalEsa, ThreadCountDoesNotChangeResult) {
  CgScheme s;
  s.order = 5;
  s.kernel = svv::dg_kernel(5);
  const auto k = linspace(0.0, 5 * std::numbers::pi, 97);
  const Spectrum a = temporal_esa(s, k, 1), b = temporal_esa(s, k, 4);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].values, b.samples[i].values);
    EXPECT_EQ(a.samples[i].labels, b.samples[i].labels);
  }
}
