#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "hoflow/eigenanalysis.hpp"
#include "hoflow/error.hpp"
#include "hoflow/geometry.hpp"
#include "hoflow/parallel.hpp"
#include "hoflow/projection_curving.hpp"
#include "hoflow/svv.hpp"
#include "hoflow/variational_curving.hpp"

#ifndef HOFLOW_VERSION
#define HOFLOW_VERSION "0.0.0"
#endif

namespace hoflow::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  fs::path out_dir;
  std::optional<unsigned> seed;
  int threads = 1;
};

// Thrown for quality or regression failures after outputs are written.
struct QualityFailure {
  std::string kind;
  std::string message;
};

int exit_code(ErrorKind k) {
  return k == ErrorKind::ParseError || k == ErrorKind::InvalidArgument ? kExitUsage : kExitFailure;
}

void print_error(std::string_view kind, std::string_view message, int code) {
  const json j = {{"error", {{"kind", kind}, {"message", message}}}, {"exit_code", code}};
  std::cerr << j.dump() << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::ParseError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::InvalidArgument, "cannot write " + path.string());
  out << text;
}

void require_keys(const json& j, const std::set<std::string>& allowed, std::string_view what) {
  if (!j.is_object()) fail(ErrorKind::ParseError, std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) fail(ErrorKind::ParseError, std::string(what) + ": unknown key '" + key + "'");
}

template <class T> T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("key '") + key + "': " + e.what());
  }
}

fs::path prepare_out_dir(const Context& ctx) {
  fs::create_directories(ctx.out_dir);
  return ctx.out_dir;
}

// ---------------------------------------------------------------- mesh curve

struct CurveArgs {
  fs::path geometry, mesh, config;
  int order = 4;
  std::string functional = "winslow";
};

int cmd_mesh_curve(const Context& ctx, const CurveArgs& a) {
  const json file = a.config.empty() ? json::object() : read_json_file(a.config);
  require_keys(file,
               {"max_rel_disp", "chord_fraction", "tolerance", "max_sweeps", "over_relaxation", "delta", "mu", "lambda",
                "move_excluded", "optimize"},
               "mesh curve config");
  if (a.order < 1) fail(ErrorKind::InvalidArgument, "--order must be >= 1");
  variational::EnergyFunctional w;
  w.kind = variational::energy_kind_from_string(a.functional);
  w.mu = get_or(file, "mu", 1.0);
  w.lambda = get_or(file, "lambda", 1.0);
  variational::OptimizeOptions oo;
  oo.tolerance = get_or(file, "tolerance", oo.tolerance);
  oo.max_sweeps = get_or(file, "max_sweeps", oo.max_sweeps);
  oo.over_relaxation = get_or(file, "over_relaxation", oo.over_relaxation);
  oo.delta = get_or(file, "delta", oo.delta);
  oo.move_excluded = get_or(file, "move_excluded", oo.move_excluded);
  const double max_rel_disp = get_or(file, "max_rel_disp", 0.10);
  const double chord_fraction = get_or(file, "chord_fraction", 1.0);
  const bool do_optimize = get_or(file, "optimize", true);

  Manifest man("mesh curve", ctx.out_dir);
  man.set_config({{"order", a.order},
                  {"functional", variational::to_string(w.kind)},
                  {"mu", w.mu},
                  {"lambda", w.lambda},
                  {"tolerance", oo.tolerance},
                  {"max_sweeps", oo.max_sweeps},
                  {"over_relaxation", oo.over_relaxation},
                  {"delta", oo.delta},
                  {"move_excluded", oo.move_excluded},
                  {"max_rel_disp", max_rel_disp},
                  {"chord_fraction", chord_fraction},
                  {"optimize", do_optimize}});
  man.add_input(a.geometry);
  man.add_input(a.mesh);

  auto patches = geom::read_geometry(a.geometry);
  const mesh::Mesh input = mesh::load_mesh(a.mesh);
  mesh::check_structure(input);

  mesh::Mesh out = input;
  json report = curving::exclusion_report({});
  variational::OptimizeReport opt;
  bool converged = true;
  if (a.order > 1) {
    const curving::PatchSet set(std::move(patches), chord_fraction);
    curving::AssignOptions ao;
    ao.threads = ctx.threads;
    const auto assigned = curving::assign_parent_surfaces(input, set, ao);
    const auto snapped = curving::snap_nodes(input, assigned.associations, max_rel_disp);
    const auto curved = curving::curve_boundary(snapped.mesh, set, a.order);
    report = curving::exclusion_report(snapped.associations);
    report["warnings"] = assigned.warnings;
    report["curved_edges"] = curved.curved_edges;
    report["straight_edges"] = curved.straight_edges;
    json demoted = json::array();
    for (const auto& d : curved.demoted) demoted.push_back({{"element", d.element}, {"side", d.side}, {"reason", d.reason}});
    report["demoted_edges"] = demoted;
    out = curved.mesh;
    if (do_optimize) {
      auto result = variational::optimize(curved.mesh, w, oo);
      out = std::move(result.mesh);
      opt = std::move(result.report);
      converged = opt.converged;
    }
  }

  const fs::path dir = prepare_out_dir(ctx);
  const fs::path mesh_path = dir / "curved.mesh.json", excl_path = dir / "exclusions.json",
                 csv_path = dir / "convergence.csv", summary_path = dir / "summary.json";
  mesh::write_mesh(mesh_path, out);
  write_text(excl_path, report.dump(2) + "\n");
  opt.write_csv(csv_path);
  const int invalid = mesh::count_invalid(out);
  const json summary = {{"converged", converged},
                        {"invalid_count", invalid},
                        {"initial_invalid", opt.initial_invalid},
                        {"sweeps", opt.sweeps.size()},
                        {"final_residual", opt.sweeps.empty() ? 0.0 : opt.sweeps.back().residual},
                        {"excluded", report["excluded"].size()}};
  write_text(summary_path, summary.dump(2) + "\n");
  for (const auto& p : {mesh_path, excl_path, csv_path, summary_path}) man.add_output(p);
  man.write();
  std::cout << summary.dump() << '\n';
  if (!converged) throw QualityFailure{"NotConverged", "variational optimisation did not reach the tolerance"};
  if (invalid > 0) throw QualityFailure{"InvalidElements", std::to_string(invalid) + " invalid elements remain"};
  return kExitOk;
}

// ---------------------------------------------------------------- mesh check

int cmd_mesh_check(const Context& ctx, const fs::path& path, bool as_json) {
  const mesh::Mesh m = mesh::load_mesh(path);
  mesh::check_structure(m);
  const CheckSummary s = check_mesh(m, ctx.threads);
  if (as_json) {
    std::cout << s.to_json().dump(2) << '\n';
  } else {
    std::cout << "elements " << s.elements << "\ninvalid " << s.invalid.size() << "\nmin_scaled_jacobian "
              << s.min_scaled_jacobian << "\nscaled_jacobian_histogram\n";
    for (int b = 0; b < 10; ++b)
      std::cout << "  [" << std::fixed << std::setprecision(1) << b / 10.0 << ", " << (b + 1) / 10.0
                << (b == 9 ? "] " : ") ") << s.histogram[b] << '\n';
    std::cout.unsetf(std::ios::floatfield);
    if (!s.invalid.empty()) {
      std::cout << "invalid_elements";
      for (int e : s.invalid) std::cout << ' ' << e;
      std::cout << '\n';
    }
  }
  return s.invalid.empty() ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- esa

struct EsaArgs {
  std::string mode = "temporal";
  int order = 4;
  std::string kernel = "none";
  double exponent = 2.0;
  fs::path kernel_file;
  double pe_star = 1.0;
  int samples = 200;
  double max_fraction = 1.0;
  int quadrature = 0;
  bool dg_reference = false;
};

std::optional<svv::Kernel> resolve_kernel(const std::string& name, int order, double exponent, const fs::path& file,
                                          Manifest& man) {
  if (!file.empty()) {
    man.add_input(file);
    svv::Kernel k = svv::read_kernel(file);
    if (k.order != order)
      fail(ErrorKind::InvalidArgument, "kernel file has order " + std::to_string(k.order) + ", expected " +
                                           std::to_string(order));
    return k;
  }
  switch (demo::kernel_choice_from_string(name)) {
  case demo::KernelChoice::None: return std::nullopt;
  case demo::KernelChoice::Unit: return svv::unit_kernel(order);
  case demo::KernelChoice::PowerLaw: return svv::power_law_kernel(order, exponent);
  case demo::KernelChoice::Dg: return svv::dg_kernel(order);
  }
  return std::nullopt;
}

int cmd_esa(const Context& ctx, const EsaArgs& a) {
  if (a.mode != "temporal" && a.mode != "spatial") fail(ErrorKind::InvalidArgument, "--mode must be temporal or spatial");
  if (a.order < 1) fail(ErrorKind::InvalidArgument, "--order must be >= 1");
  if (a.samples < 2) fail(ErrorKind::InvalidArgument, "--samples must be >= 2");
  if (!(a.max_fraction > 0.0)) fail(ErrorKind::InvalidArgument, "--max-fraction must be > 0");
  Manifest man("esa", ctx.out_dir);
  esa::CgScheme scheme;
  scheme.order = a.order;
  scheme.pe_star = a.pe_star;
  scheme.quadrature = a.quadrature;
  scheme.kernel = resolve_kernel(a.kernel, a.order, a.exponent, a.kernel_file, man);
  const std::string label = a.kernel_file.empty() ? a.kernel : "file";
  json cfg = {{"mode", a.mode},       {"order", a.order},       {"kernel", label},
              {"pe_star", a.pe_star}, {"samples", a.samples},   {"max_fraction", a.max_fraction},
              {"quadrature", a.quadrature}, {"dg_reference", a.dg_reference}};
  if (a.kernel == "power-law") cfg["exponent"] = a.exponent;
  if (scheme.kernel) cfg["kernel_entries"] = scheme.kernel->entries;
  man.set_config(cfg);

  const double hi = a.max_fraction * a.order * std::numbers::pi;
  const bool temporal = a.mode == "temporal";
  const auto xs = esa::linspace(0.0, hi, a.samples, temporal);
  const esa::Spectrum spec = temporal ? esa::temporal_esa(scheme, xs, ctx.threads) : esa::spatial_esa(scheme, xs);

  const fs::path dir = prepare_out_dir(ctx);
  const std::string stem = "esa_" + a.mode + "_P" + std::to_string(a.order) + "_" + label;
  std::vector<fs::path> written = spec.write_csv_files(dir / stem);
  if (a.dg_reference && a.order >= 2) {
    const auto ref = esa::dg_upwind_reference(a.order - 1, temporal ? xs : esa::linspace(0.0, hi, a.samples));
    const auto more = ref.write_csv_files(dir / ("dg_reference_P" + std::to_string(a.order - 1)));
    written.insert(written.end(), more.begin(), more.end());
  }
  json files = json::array();
  for (const auto& p : written) {
    man.add_output(p);
    files.push_back(p.filename().string());
  }
  int flagged = 0;
  for (const auto& s : spec.samples) flagged += s.flagged;
  json summary = {{"files", files}, {"samples", spec.samples.size()}, {"flagged", flagged}};
  if (!temporal) summary["reflected_margin"] = esa::reflected_margin(spec);
  man.write();
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- demo

json run_json(const demo::RunResult& r) {
  return {{"diverged", r.diverged}, {"message", r.message}, {"steps", r.steps}, {"dt", r.dt},
          {"final_time", r.state.time}};
}

int cmd_demo_coarsening(const Context& ctx, const fs::path& config_path, std::optional<int> snapshots) {
  DemoConfig dc = demo_config_from_json(read_json_file(config_path));
  if (ctx.seed) dc.case_config.inflow.seed = *ctx.seed;
  if (snapshots) dc.snapshots = *snapshots;
  Manifest man("demo coarsening", ctx.out_dir);
  man.add_input(config_path);
  man.set_config(to_json(dc));

  std::vector<std::string> warnings;
  const demo::Case on = demo::build_case(dc.case_config, &warnings);
  demo::CaseConfig off_cfg = dc.case_config;
  off_cfg.kernel = demo::KernelChoice::None;
  const demo::Case off = demo::build_case(off_cfg);

  const fs::path dir = prepare_out_dir(ctx);
  demo::RunOptions ro;
  ro.samples = dc.samples;
  ro.snapshots = dc.snapshots;
  if (dc.snapshots > 0) ro.snapshot_dir = dir / "snapshots_svv";
  const demo::RunResult r_on = demo::run(on, ro);
  if (dc.snapshots > 0) ro.snapshot_dir = dir / "snapshots_nosvv";
  const demo::RunResult r_off = demo::run(off, ro);

  // Compare over the window both runs reached.
  const double t1 = std::min(r_on.state.time, r_off.state.time);
  const double t0 = t1 > on.t_c ? on.t_c : 0.0;
  const double m_on = demo::mean_reflection(r_on.state.diagnostics, t0, t1);
  const double m_off = demo::mean_reflection(r_off.state.diagnostics, t0, t1);
  const double ratio = m_off > 0.0 ? m_on / m_off : std::numeric_limits<double>::quiet_NaN();

  const fs::path csv_on = dir / "diagnostics_svv.csv", csv_off = dir / "diagnostics_nosvv.csv",
                 summary_path = dir / "summary.json";
  demo::write_diagnostics_csv(csv_on, r_on.state.diagnostics);
  demo::write_diagnostics_csv(csv_off, r_off.state.diagnostics);

  const bool regression = on.has_interface && !r_on.diverged && ratio > dc.regression_threshold;
  json summary = {{"has_interface", on.has_interface},
                  {"interface_x", on.has_interface ? json(on.interface_x) : json(nullptr)},
                  {"kernel", demo::to_string(dc.case_config.kernel)},
                  {"t_c", on.t_c},
                  {"window", {t0, t1}},
                  {"reflection_svv", m_on},
                  {"reflection_nosvv", m_off},
                  {"reflection_ratio", std::isnan(ratio) ? json(nullptr) : json(ratio)},
                  {"regression_threshold", dc.regression_threshold},
                  {"svv", run_json(r_on)},
                  {"nosvv", run_json(r_off)},
                  {"warnings", warnings}};
  if (!on.has_interface) summary["note"] = "no interface";
  summary["passed"] = !r_on.diverged && !regression;
  write_text(summary_path, summary.dump(2) + "\n");
  for (const auto& p : {csv_on, csv_off, summary_path}) man.add_output(p);
  for (const char* sub : {"snapshots_svv", "snapshots_nosvv"})
    if (fs::exists(dir / sub)) {
      std::vector<fs::path> snaps;
      for (const auto& e : fs::directory_iterator(dir / sub)) snaps.push_back(e.path());
      std::sort(snaps.begin(), snaps.end());
      for (const auto& p : snaps) man.add_output(p);
    }
  man.write();
  std::cout << summary.dump() << '\n';
  if (r_on.diverged) throw QualityFailure{"Divergence", "SVV run diverged: " + r_on.message};
  if (regression)
    throw QualityFailure{"Regression", "reflection ratio " + std::to_string(ratio) + " exceeds " +
                                           std::to_string(dc.regression_threshold)};
  return kExitOk;
}

int cmd_demo_ramp(const Context& ctx, double start, double target, double factor, double hold) {
  const auto stages = demo::ramp_schedule(start, target, factor, hold);
  json arr = json::array();
  for (const auto& s : stages) arr.push_back({{"value", s.value}, {"hold", s.hold}});
  Manifest man("demo ramp", ctx.out_dir);
  man.set_config({{"start", start}, {"target", target}, {"factor", factor}, {"hold", hold}});
  const fs::path path = prepare_out_dir(ctx) / "ramp.json";
  write_text(path, arr.dump(2) + "\n");
  man.add_output(path);
  man.write();
  std::cout << arr.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- svv kernel

struct KernelArgs {
  int order = 4;
  std::string type = "dg";
  double exponent = 2.0;
  bool regenerate = false;
  double c_min = 0.1;
  int max_evaluations = 2000;
};

int cmd_svv_kernel(const Context& ctx, const KernelArgs& a) {
  Manifest man("svv kernel", ctx.out_dir);
  json cfg = {{"order", a.order}, {"type", a.type}};
  svv::Kernel k;
  std::optional<esa::KernelOptimizeResult> opt;
  if (a.type == "dg") {
    cfg["regenerate"] = a.regenerate;
    if (a.regenerate) {
      esa::KernelOptimizeOptions o;
      o.c_min = a.c_min;
      o.max_evaluations = a.max_evaluations;
      o.seed = ctx.seed.value_or(0);
      cfg["c_min"] = o.c_min;
      cfg["max_evaluations"] = o.max_evaluations;
      cfg["seed"] = o.seed;
      man.set_config(cfg);
      opt = esa::optimize_kernel(a.order, o);
      k = opt->kernel;
    } else {
      man.set_config(cfg);
      k = svv::dg_kernel(a.order);
    }
  } else if (a.type == "power-law") {
    cfg["exponent"] = a.exponent;
    man.set_config(cfg);
    k = svv::power_law_kernel(a.order, a.exponent);
  } else if (a.type == "unit") {
    man.set_config(cfg);
    k = svv::unit_kernel(a.order);
  } else {
    fail(ErrorKind::InvalidArgument, "--type must be dg, power-law or unit");
  }
  const fs::path dir = prepare_out_dir(ctx);
  const fs::path kpath = dir / ("kernel_P" + std::to_string(a.order) + ".json");
  svv::write_kernel(kpath, k);
  man.add_output(kpath);
  json summary = {{"kernel", svv::to_json(k)}};
  if (opt) {
    const fs::path hpath = dir / "optimization_history.csv";
    std::ostringstream h;
    h.precision(17);
    h << "iteration,objective\n";
    for (std::size_t i = 0; i < opt->history.size(); ++i) h << i << ',' << opt->history[i] << '\n';
    write_text(hpath, h.str());
    man.add_output(hpath);
    summary["objective"] = opt->objective;
    summary["relative_mismatch"] = opt->relative_mismatch;
    summary["margin"] = opt->margin;
    summary["evaluations"] = opt->evaluations;
  }
  man.write();
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- fixtures

int cmd_fixtures(const Context& ctx) {
  Manifest man("fixtures", ctx.out_dir);
  man.set_config(json::object());
  for (const auto& p : write_fixtures(prepare_out_dir(ctx))) {
    man.add_output(p);
    std::cout << p.string() << '\n';
  }
  man.write();
  return kExitOk;
}

std::string default_out_dir() {
  const char* env = std::getenv("HOFLOW_OUT_DIR");
  return env && *env ? env : "hoflow-out";
}

} // namespace

// ---------------------------------------------------------------- public helpers

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    fail(ErrorKind::NumericalError, "sha256 failed");
  std::ostringstream out;
  for (unsigned i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return out.str();
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

Manifest::Manifest(std::string command, fs::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {}

void Manifest::set_config(json config) { config_ = std::move(config); }

void Manifest::add_input(const fs::path& path) { inputs_.emplace_back(path.string(), file_sha256(path)); }

void Manifest::add_output(const fs::path& path) {
  outputs_.emplace_back(fs::relative(path, out_dir_).generic_string(), file_sha256(path));
}

std::string Manifest::digest() const {
  json inputs = json::array();
  for (const auto& [path, sha] : inputs_) inputs.push_back(sha);
  return sha256_hex(json{{"command", command_}, {"config", config_}, {"inputs", inputs}}.dump());
}

json Manifest::to_json() const {
  json in = json::array(), out = json::array();
  for (const auto& [path, sha] : inputs_) in.push_back({{"path", path}, {"sha256", sha}});
  for (const auto& [path, sha] : outputs_) out.push_back({{"path", path}, {"sha256", sha}});
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  return {{"command", command_}, {"config", config_},      {"config_digest", digest()},
          {"inputs", in},        {"outputs", out},         {"tool_version", HOFLOW_VERSION},
          {"wall_time_s", wall}};
}

fs::path Manifest::write() const {
  fs::create_directories(out_dir_);
  const fs::path path = out_dir_ / "manifest.json", tmp = out_dir_ / "manifest.json.tmp";
  write_text(tmp, to_json().dump(2) + "\n");
  fs::rename(tmp, path);
  return path;
}

json CheckSummary::to_json() const {
  return {{"elements", elements},
          {"invalid", invalid},
          {"histogram", histogram},
          {"min_scaled_jacobian", min_scaled_jacobian}};
}

CheckSummary check_mesh(const mesh::Mesh& m, int threads) {
  const int n = m.num_elements();
  std::vector<mesh::Validity> v(n);
  parallel_for(n, threads, [&](int e) { v[e] = mesh::validity(m, e); });
  CheckSummary s;
  s.elements = n;
  for (int e = 0; e < n; ++e) {
    s.min_scaled_jacobian = std::min(s.min_scaled_jacobian, v[e].scaled_jacobian);
    if (!v[e].valid) {
      s.invalid.push_back(e);
      continue;
    }
    s.histogram[std::clamp(static_cast<int>(v[e].scaled_jacobian * 10.0), 0, 9)]++;
  }
  return s;
}

DemoConfig demo_config_from_json(const json& j) {
  require_keys(j,
               {"dimension", "upstream_length", "downstream_length", "width", "h", "coarsening", "order", "kernel",
                "power_law_exponent", "pe_star", "viscosity", "velocity", "burgers", "cfl", "end_time", "quadrature",
                "inflow", "samples", "snapshots", "regression_threshold"},
               "demo config");
  DemoConfig d;
  auto& c = d.case_config;
  c.dimension = get_or(j, "dimension", c.dimension);
  c.upstream_length = get_or(j, "upstream_length", c.upstream_length);
  c.downstream_length = get_or(j, "downstream_length", c.downstream_length);
  c.width = get_or(j, "width", c.width);
  c.h = get_or(j, "h", c.h);
  c.coarsening = get_or(j, "coarsening", c.coarsening);
  c.order = get_or(j, "order", c.order);
  c.kernel = demo::kernel_choice_from_string(get_or(j, "kernel", std::string(demo::to_string(c.kernel))));
  c.power_law_exponent = get_or(j, "power_law_exponent", c.power_law_exponent);
  c.pe_star = get_or(j, "pe_star", c.pe_star);
  c.viscosity = get_or(j, "viscosity", c.viscosity);
  c.velocity = get_or(j, "velocity", c.velocity);
  c.burgers = get_or(j, "burgers", c.burgers);
  c.cfl = get_or(j, "cfl", c.cfl);
  c.end_time = get_or(j, "end_time", c.end_time);
  c.quadrature = get_or(j, "quadrature", c.quadrature);
  if (j.contains("inflow")) {
    const json& in = j.at("inflow");
    require_keys(in, {"components", "min_fraction", "max_fraction", "amplitude", "ramp_time", "seed"}, "demo inflow");
    auto& f = c.inflow;
    f.components = get_or(in, "components", f.components);
    f.min_fraction = get_or(in, "min_fraction", f.min_fraction);
    f.max_fraction = get_or(in, "max_fraction", f.max_fraction);
    f.amplitude = get_or(in, "amplitude", f.amplitude);
    f.ramp_time = get_or(in, "ramp_time", f.ramp_time);
    f.seed = get_or(in, "seed", f.seed);
  }
  d.samples = get_or(j, "samples", d.samples);
  d.snapshots = get_or(j, "snapshots", d.snapshots);
  d.regression_threshold = get_or(j, "regression_threshold", d.regression_threshold);
  if (d.samples < 1 || d.snapshots < 0) fail(ErrorKind::InvalidArgument, "demo config: samples >= 1, snapshots >= 0");
  c.validate();
  return d;
}

json to_json(const DemoConfig& d) {
  const auto& c = d.case_config;
  const auto& f = c.inflow;
  return {{"dimension", c.dimension},
          {"upstream_length", c.upstream_length},
          {"downstream_length", c.downstream_length},
          {"width", c.width},
          {"h", c.h},
          {"coarsening", c.coarsening},
          {"order", c.order},
          {"kernel", demo::to_string(c.kernel)},
          {"power_law_exponent", c.power_law_exponent},
          {"pe_star", c.pe_star},
          {"viscosity", c.viscosity},
          {"velocity", c.velocity},
          {"burgers", c.burgers},
          {"cfl", c.cfl},
          {"end_time", c.end_time},
          {"quadrature", c.quadrature},
          {"inflow",
           {{"components", f.components},
            {"min_fraction", f.min_fraction},
            {"max_fraction", f.max_fraction},
            {"amplitude", f.amplitude},
            {"ramp_time", f.ramp_time},
            {"seed", f.seed}}},
          {"samples", d.samples},
          {"snapshots", d.snapshots},
          {"regression_threshold", d.regression_threshold}};
}

std::vector<fs::path> write_fixtures(const fs::path& dir) {
  using geom::Vec3;
  using geom::Params;
  fs::create_directories(dir / "demo");
  std::vector<fs::path> out;

  const double quarter = std::numbers::pi / 2;
  const std::vector<geom::Patch> patches{
      geom::Patch(0, geom::CircularArc{Vec3::Zero(), 1.0}, {Params(0, 0), Params(quarter, 0)}),
      geom::Patch(1, geom::CircularArc{Vec3::Zero(), 2.0}, {Params(0, 0), Params(quarter, 0)}),
      geom::Patch(2, geom::Line{Vec3(1, 0, 0), Vec3(1, 0, 0)}, {Params(0, 0), Params(1, 0)}),
      geom::Patch(3, geom::Line{Vec3(0, 1, 0), Vec3(0, 1, 0)}, {Params(0, 0), Params(1, 0)}),
  };
  out.push_back(dir / "quarter_annulus.geom.json");
  geom::write_geometry(out.back(), patches);

  // A thin first layer so that the curved inner arc tangles its neighbours.
  const std::vector<double> radii{1.0, 1.01, 1.1, 1.3, 1.6, 2.0};
  const mesh::Mesh annulus = mesh::quarter_annulus(radii, 4);
  out.push_back(dir / "quarter_annulus.mesh.json");
  mesh::write_mesh(out.back(), annulus);

  // Cubic copy with the bubble node of interior element 21 pushed past a
  // vertex; no other element references that node.
  mesh::Mesh inverted = mesh::elevate_order(annulus, 3);
  {
    const auto& nodes = inverted.elements[21].nodes;
    const Vec3 v0 = inverted.nodes[nodes[0]];
    const Vec3 c = (v0 + inverted.nodes[nodes[1]] + inverted.nodes[nodes[2]]) / 3.0;
    inverted.nodes[nodes[9]] = c + 3.0 * (v0 - c);
  }
  out.push_back(dir / "quarter_annulus_inverted.mesh.json");
  mesh::write_mesh(out.back(), inverted);

  DemoConfig d;
  d.case_config.order = 4;
  out.push_back(dir / "demo" / "coarsening_p4_1d.json");
  write_text(out.back(), to_json(d).dump(2) + "\n");

  DemoConfig d2 = d;
  d2.case_config.dimension = 2;
  d2.samples = 200;
  out.push_back(dir / "demo" / "coarsening_p4_2d.json");
  write_text(out.back(), to_json(d2).dump(2) + "\n");

  DemoConfig u = d;
  u.case_config.coarsening = 1.0;
  u.case_config.inflow.max_fraction = 0.2;
  out.push_back(dir / "demo" / "uniform_p4_1d.json");
  write_text(out.back(), to_json(u).dump(2) + "\n");

  DemoConfig u2 = d2;
  u2.case_config.coarsening = 1.0;
  u2.case_config.inflow.max_fraction = 0.2;
  out.push_back(dir / "demo" / "uniform_p4_2d.json");
  write_text(out.back(), to_json(u2).dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------- entry point

int run(int argc, const char* const* argv) {
  CLI::App app{"hoflow: high-order mesh curving and SVV stabilisation toolkit"};
  app.set_version_flag("--version", HOFLOW_VERSION);
  app.require_subcommand(1);

  std::string out_dir = default_out_dir();
  std::optional<unsigned> seed;
  int threads = 0;
  app.add_option("--out-dir", out_dir, "Output directory (default $HOFLOW_OUT_DIR or ./hoflow-out)");
  app.add_option("--seed", seed, "Random seed overriding the config");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  auto* mesh_cmd = app.add_subcommand("mesh", "Mesh curving and validity checks")->require_subcommand(1);
  CurveArgs curve;
  auto* curve_cmd = mesh_cmd->add_subcommand("curve", "Projection curving followed by variational untangling");
  curve_cmd->add_option("--geometry", curve.geometry, "Geometry JSON")->required()->check(CLI::ExistingFile);
  curve_cmd->add_option("--mesh", curve.mesh, "Linear mesh (.json or .msh)")->required()->check(CLI::ExistingFile);
  curve_cmd->add_option("--order", curve.order, "Target polynomial order")->capture_default_str();
  curve_cmd->add_option("--functional", curve.functional,
                        "linear-elasticity | hyperelastic | winslow | distortion")
      ->capture_default_str();
  curve_cmd->add_option("--config", curve.config, "JSON with curving and optimisation settings")
      ->check(CLI::ExistingFile);

  fs::path check_path;
  bool check_json = false;
  auto* check_cmd = mesh_cmd->add_subcommand("check", "Per-element validity summary");
  check_cmd->add_option("mesh", check_path, "Mesh file")->required()->check(CLI::ExistingFile);
  check_cmd->add_flag("--json", check_json, "Print JSON instead of text");

  EsaArgs esa_args;
  auto* esa_cmd = app.add_subcommand("esa", "Temporal or spatial eigensolution analysis");
  esa_cmd->add_option("--mode", esa_args.mode, "temporal | spatial")->capture_default_str();
  esa_cmd->add_option("--order", esa_args.order, "Polynomial order P")->capture_default_str();
  esa_cmd->add_option("--kernel", esa_args.kernel, "none | unit | dg | power-law")->capture_default_str();
  esa_cmd->add_option("--exponent", esa_args.exponent, "Power-law exponent")->capture_default_str();
  esa_cmd->add_option("--kernel-file", esa_args.kernel_file, "Kernel JSON (overrides --kernel)")
      ->check(CLI::ExistingFile);
  esa_cmd->add_option("--pe-star", esa_args.pe_star, "Reference Peclet number")->capture_default_str();
  esa_cmd->add_option("--samples", esa_args.samples, "Number of sweep samples")->capture_default_str();
  esa_cmd->add_option("--max-fraction", esa_args.max_fraction, "Sweep end as a fraction of P pi")
      ->capture_default_str();
  esa_cmd->add_option("--quadrature", esa_args.quadrature, "GLL points per element (0 = default)");
  esa_cmd->add_flag("--dg-reference", esa_args.dg_reference, "Also write the upwind DG (order P-1) spectrum");

  auto* demo_cmd = app.add_subcommand("demo", "Reflection demo solver")->require_subcommand(1);
  fs::path demo_config;
  std::optional<int> demo_snapshots;
  auto* coarse_cmd = demo_cmd->add_subcommand("coarsening", "Paired SVV / no-SVV runs across a coarsening interface");
  coarse_cmd->add_option("config", demo_config, "Demo config JSON")->required();
  coarse_cmd->add_option("--snapshots", demo_snapshots, "Snapshots per run");
  double ramp_start = 1e4, ramp_target = 1e6, ramp_factor = 10.0, ramp_hold = 2.0;
  auto* ramp_cmd = demo_cmd->add_subcommand("ramp", "Parameter ramp schedule");
  ramp_cmd->add_option("--start", ramp_start)->capture_default_str();
  ramp_cmd->add_option("--target", ramp_target)->capture_default_str();
  ramp_cmd->add_option("--factor", ramp_factor)->capture_default_str();
  ramp_cmd->add_option("--hold", ramp_hold, "Hold per stage in convective time units")->capture_default_str();

  auto* svv_cmd = app.add_subcommand("svv", "SVV kernels")->require_subcommand(1);
  KernelArgs kargs;
  auto* kernel_cmd = svv_cmd->add_subcommand("kernel", "Write a kernel file, optionally re-optimising it");
  kernel_cmd->add_option("--order", kargs.order, "Polynomial order P")->capture_default_str();
  kernel_cmd->add_option("--type", kargs.type, "dg | power-law | unit")->capture_default_str();
  kernel_cmd->add_option("--exponent", kargs.exponent, "Power-law exponent")->capture_default_str();
  kernel_cmd->add_flag("--regenerate", kargs.regenerate, "Re-run the DG-matching optimisation");
  kernel_cmd->add_option("--c-min", kargs.c_min, "Reflected-mode damping floor")->capture_default_str();
  kernel_cmd->add_option("--max-evaluations", kargs.max_evaluations)->capture_default_str();

  auto* fixtures_cmd = app.add_subcommand("fixtures", "Write the bundled test fixtures");

  for (auto* sub : {mesh_cmd, curve_cmd, check_cmd, esa_cmd, demo_cmd, coarse_cmd, ramp_cmd, svv_cmd, kernel_cmd,
                    fixtures_cmd})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what(), kExitUsage);
    return kExitUsage;
  }

  Context ctx{out_dir, seed, resolve_threads(threads)};
  try {
    if (*curve_cmd) return cmd_mesh_curve(ctx, curve);
    if (*check_cmd) return cmd_mesh_check(ctx, check_path, check_json);
    if (*esa_cmd) return cmd_esa(ctx, esa_args);
    if (*coarse_cmd) return cmd_demo_coarsening(ctx, demo_config, demo_snapshots);
    if (*ramp_cmd) return cmd_demo_ramp(ctx, ramp_start, ramp_target, ramp_factor, ramp_hold);
    if (*kernel_cmd) return cmd_svv_kernel(ctx, kargs);
    if (*fixtures_cmd) return cmd_fixtures(ctx);
  } catch (const QualityFailure& q) {
    print_error(q.kind, q.message, kExitFailure);
    return kExitFailure;
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    print_error(to_string(e.kind()), e.what(), code);
    return code;
  } catch (const fs::filesystem_error& e) {
    print_error("IoError", e.what(), kExitUsage);
    return kExitUsage;
  }
  return kExitUsage;
}

} // namespace hoflow::cli
