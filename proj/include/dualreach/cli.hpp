// Command implementations behind the `dualreach` executable. Each command
// reads a config, writes its artifacts into an output directory and throws
// on failure; run() maps parse errors to exit code 1 and failures to 2.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "dualreach/digrad.hpp"
#include "dualreach/environment.hpp"
#include "dualreach/kinematics.hpp"

namespace dualreach::cli {

namespace fs = std::filesystem;

// Robot, environment and training settings from one config file; an empty
// path selects the planar defaults.
struct Setup {
  RobotModel model;
  EnvConfig env;
  TrainConfig train;
};

Setup load_setup(const fs::path& config);

struct RunManifest {
  std::string command;
  fs::path config;
  std::uint64_t seed = 0;
  fs::path out;
};

void write_manifest(const RunManifest& m);

// checkpoint.bin, scores.csv, scores.svg
void cmd_train(const fs::path& config, std::uint64_t seed, const fs::path& out,
               std::optional<int> episodes, std::ostream* progress = nullptr);

// trajectory.csv, end_effectors.csv, flags.json, scene.ini
void cmd_rollout(const fs::path& checkpoint, const fs::path& config, std::uint64_t seed,
                 const fs::path& out);

// smoothed.csv, smoothed_dense.csv, smoothing_report.csv, smoothing_q<j>.svg,
// smoothing_ee.svg
void cmd_smooth(const fs::path& trajectory, const fs::path& config, const fs::path& scene,
                const fs::path& out, double precision);

// metrics.json; episode i is seeded with seed ^ i.
nlohmann::json cmd_eval(const fs::path& checkpoint, const fs::path& config, int episodes,
                        std::uint64_t seed, const fs::path& out);

int run(int argc, char** argv);

}  // namespace dualreach::cli
