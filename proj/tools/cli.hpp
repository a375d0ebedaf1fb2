#pragma once

// Batch front end: `mesh curve`, `mesh check`, `esa`, `demo coarsening`,
// `demo ramp`, `svv kernel`, `fixtures`. Exit codes: 0 success, 1 quality or
// regression failure, 2 usage or parse error.

#include <array>
#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hoflow/demo_solver.hpp"
#include "hoflow/mesh.hpp"

namespace hoflow::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

/// Run record written to <out-dir>/manifest.json at the end of a command.
class Manifest {
public:
  Manifest(std::string command, std::filesystem::path out_dir);

  void set_config(nlohmann::json config);
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);

  /// SHA-256 of the canonical config JSON together with the input digests.
  std::string digest() const;
  nlohmann::json to_json() const;
  /// Writes manifest.json via a temporary file and rename.
  std::filesystem::path write() const;

private:
  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

struct CheckSummary {
  int elements = 0;
  std::vector<int> invalid;
  std::array<int, 10> histogram{}; // scaled Jacobian of valid elements, bins of width 0.1
  double min_scaled_jacobian = 1.0;

  nlohmann::json to_json() const;
};

CheckSummary check_mesh(const mesh::Mesh& m, int threads = 1);

/// Demo configuration file: CaseConfig fields, an "inflow" object, and the
/// run keys "samples", "snapshots", "regression_threshold". Unknown keys are
/// rejected.
struct DemoConfig {
  demo::CaseConfig case_config;
  int samples = 400;
  int snapshots = 0;
  double regression_threshold = 0.1;
};

DemoConfig demo_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DemoConfig& c);

/// Writes the bundled fixtures (quarter-annulus geometry and meshes, demo
/// configs) under `dir` and returns their paths.
std::vector<std::filesystem::path> write_fixtures(const std::filesystem::path& dir);

} // namespace hoflow::cli
