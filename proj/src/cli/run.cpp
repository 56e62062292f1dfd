#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "amodal/cli/commands.hpp"
#include "amodal/error.hpp"

namespace amodal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

engine::RunConfig layered_config(const std::optional<fs::path>& file, const json& overlay) {
  engine::RunConfig cfg;
  if (file) cfg = engine::load_config(*file, cfg);
  return engine::apply_config(overlay, cfg);
}

namespace {

struct GlobalFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> backends;
  std::optional<int> window;
  std::optional<int> dilation_px;
  std::optional<double> guidance;
  std::optional<double> strength;
  std::optional<std::string> alpha;
  std::vector<double> ratio_band;
  std::vector<std::uint64_t> seeds;
  bool no_warp = false;
  bool no_attention = false;
  bool keep_requests = false;

  json overlay() const {
    json j = json::object();
    if (seed) j["seed"] = *seed;
    if (workers) j["workers"] = *workers;
    if (window) j["window"] = *window;
    if (dilation_px) j["dilation_px"] = *dilation_px;
    if (guidance) j["guidance"] = *guidance;
    if (strength) j["strength"] = *strength;
    if (alpha) {
      if (*alpha == "auto") {
        j["alpha"] = "auto";
      } else {
        try {
          j["alpha"] = std::stod(*alpha);
        } catch (const std::exception&) {
          throw Error(ErrorCode::InvalidArgument, fmt::format("--alpha: expected a number or 'auto', got '{}'", *alpha));
        }
      }
    }
    if (!ratio_band.empty()) j["ratio_band"] = ratio_band;
    if (!seeds.empty()) j["seeds"] = seeds;
    if (no_warp) j["warp"] = false;
    if (no_attention) j["attention"] = false;
    if (keep_requests) j["keep_requests"] = true;
    for (const auto& b : backends) {
      const auto eq = b.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == b.size()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("--backend: expected role=locator, got '{}'", b));
      }
      j["backends"][b.substr(0, eq)] = b.substr(eq + 1);
    }
    return j;
  }
};

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Temporally consistent amodal completion"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "Inpainting seed");
  app.add_option("--workers", g.workers, "Worker threads");
  app.add_option("--backend", g.backends, "role=locator (repeatable)");
  app.add_option("--window", g.window, "Support half-width n");
  app.add_option("--dilation-px", g.dilation_px, "Occlusion mask dilation");
  app.add_option("--guidance", g.guidance, "Guidance scale passed to the inpainter");
  app.add_option("--strength", g.strength, "Denoising strength in [0, 1]");
  app.add_option("--alpha", g.alpha, "Concave hull alpha or 'auto'");
  app.add_option("--ratio-band", g.ratio_band, "Occlusion ratio band LO HI")->expected(2);
  app.add_option("--seeds", g.seeds, "Ablation seeds");
  app.add_flag("--no-warp", g.no_warp, "Fuse unwarped neighbour latents");
  app.add_flag("--no-attention", g.no_attention, "Average neighbours instead of attending");
  app.add_flag("--keep-requests", g.keep_requests, "Keep backend request directories");

  std::string spec, dataset, outputs, gt, poses, camera, out;
  ReconstructOptions ro;
  bool gd = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset from a scene spec");
  synth->add_option("spec", spec, "Scene spec JSON")->required();
  synth->add_option("-o,--out", out, "Dataset directory")->required();

  auto* complete = app.add_subcommand("complete", "Complete every frame of a dataset");
  complete->add_option("dataset", dataset, "Dataset directory")->required();
  complete->add_option("-o,--out", out, "Run directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score completed frames against ground truth");
  evaluate->add_option("outputs", outputs, "Run or outputs directory")->required();
  evaluate->add_option("--gt", gt, "Dataset directory holding gt/")->required();
  evaluate->add_option("-o,--out", out, "Report directory");

  auto* reconstruct = app.add_subcommand("reconstruct", "Fit Gaussians to completed frames");
  reconstruct->add_option("outputs", outputs, "Run or outputs directory")->required();
  reconstruct->add_option("--poses", poses, "Object pose JSON")->required();
  reconstruct->add_option("--camera", camera, "Camera JSON")->required();
  reconstruct->add_option("-o,--out", out, "Output directory")->required();
  reconstruct->add_option("--iterations", ro.iterations, "Optimizer steps");
  reconstruct->add_option("--gaussians", ro.gaussians, "Number of Gaussians");
  reconstruct->add_option("--canvas", ro.canvas, "Recentred canvas side; 0 keeps the frame size");
  reconstruct->add_flag("--gradient-descent", gd, "Plain gradient descent instead of Adam");

  auto* ablate = app.add_subcommand("ablate", "Warp/attention grid and window sweep");
  ablate->add_option("dataset", dataset, "Dataset directory with gt/")->required();
  ablate->add_option("-o,--out", out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::optional<fs::path> cfg_file = g.config ? std::optional<fs::path>(*g.config) : std::nullopt;
    const engine::RunConfig cfg = layered_config(cfg_file, g.overlay());
    if (synth->parsed()) {
      cmd_synth(spec, out, std::cerr);
    } else if (complete->parsed()) {
      cmd_complete(dataset, out, cfg, std::cerr);
    } else if (evaluate->parsed()) {
      const auto report = cmd_evaluate(outputs, gt, cfg, out.empty() ? std::nullopt : std::optional<fs::path>(out),
                                       std::cerr);
      std::cout << report.to_table();
    } else if (reconstruct->parsed()) {
      ro.seed = cfg.seed;
      if (gd) ro.optimizer = splat::Optimizer::GradientDescent;
      cmd_reconstruct(outputs, poses, camera, out, cfg, ro, std::cerr);
    } else if (ablate->parsed()) {
      std::cout << cmd_ablate(dataset, out, cfg, std::cerr).to_table();
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace amodal::cli
