#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amodal/engine/config.hpp"
#include "amodal/engine/dataset.hpp"
#include "amodal/engine/pipeline.hpp"
#include "amodal/metrics/report.hpp"
#include "amodal/splat/gaussians.hpp"

namespace amodal::cli {

// Subcommand bodies. Each writes only below its output directory and
// returns normally on success; failures surface as amodal::Error. Warnings
// go to `log`.

// Reads a scene spec JSON and writes the dataset (with gt/) to `out`.
void cmd_synth(const std::filesystem::path& spec_file, const std::filesystem::path& out, std::ostream& log);

// Completes the dataset into out/outputs and writes out/manifest.json.
engine::SequenceResult cmd_complete(const std::filesystem::path& dataset, const std::filesystem::path& out,
                                    const engine::RunConfig& cfg, std::ostream& log);

// Frames of a completion run: `dir` may be the run directory or its
// outputs/ subdirectory; %06d.txf is preferred over %06d.png.
std::vector<FeatureMap> load_outputs(const std::filesystem::path& dir);

// Metric suite against the gt/ subtree of `gt_root`. Writes
// out/report.json and out/report.txt when `out` is given.
MetricReport cmd_evaluate(const std::filesystem::path& outputs, const std::filesystem::path& gt_root,
                          const engine::RunConfig& cfg, const std::optional<std::filesystem::path>& out,
                          std::ostream& log);

// Same metrics from in-memory frames.
MetricReport evaluate_frames(std::span<const FeatureMap> frames, const engine::Dataset& gt, const engine::RunConfig& cfg,
                             std::ostream& log);

struct ReconstructOptions {
  int iterations = 2000;
  int gaussians = 500;
  int canvas = 0;  // recentred canvas side, px; 0 keeps the frame size
  std::uint64_t seed = 0;
  splat::Optimizer optimizer = splat::Optimizer::Adam;
};

struct ReconstructResult {
  splat::GaussianSet gaussians;
  splat::OptState state;
  std::vector<FeatureMap> renders;
  std::vector<double> psnr_m;
  std::vector<double> ssim_m;
};

// Object-pose JSON: an array of {"R": [9], "t": [3]}; errors name the frame.
std::vector<PoseSE3> read_poses(const std::filesystem::path& path);

// Segments each completed frame, crops and recentres it (shifting the
// principal point to match) and fits a Gaussian set. Writes
// out/gaussians.txf, out/renders/%06d.png and out/reconstruct.json.
ReconstructResult cmd_reconstruct(const std::filesystem::path& outputs, const std::filesystem::path& poses_file,
                                  const std::filesystem::path& camera_file, const std::filesystem::path& out,
                                  const engine::RunConfig& cfg, const ReconstructOptions& options, std::ostream& log);

struct AblationRow {
  std::string name;
  bool warp = true;
  bool attention = true;
  int window = 7;
  std::vector<double> warp_err;  // x1e3, one per seed
  std::vector<double> iou;       // mean sequence IoU, one per seed
  double mean_warp_err = 0.0;
  double mean_iou = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> grid;    // full, no warp, no attention, neither
  std::vector<AblationRow> window;  // n = 1, 3, 7
  std::vector<std::uint64_t> seeds;

  const AblationRow& row(const std::string& name) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

// {warp on/off} x {attention on/off} at cfg.window and the n = 1, 3, 7
// sweep, each run once per cfg.seeds entry. Needs gt flows and amodal masks.
AblationResult run_ablation(const engine::Dataset& dataset, const engine::RunConfig& cfg, std::ostream& log);

AblationResult cmd_ablate(const std::filesystem::path& dataset, const std::filesystem::path& out,
                          const engine::RunConfig& cfg, std::ostream& log);

// default < config file < command-line overlay; the result is validated.
engine::RunConfig layered_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overlay);

// Entry point used by the executable; returns the process exit code.
int run(int argc, char** argv);

}  // namespace amodal::cli
