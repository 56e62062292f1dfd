#include "amodal/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>

#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/metrics/metrics.hpp"
#include "amodal/synth/scene.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
  out << text;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

void cmd_synth(const fs::path& spec_file, const fs::path& out, std::ostream& log) {
  const synth::SceneSpec spec = synth::scene_from_json(read_json(spec_file));
  const synth::SceneBundle bundle = synth::generate_scene(spec);
  synth::write_dataset(spec, bundle, out);
  log << fmt::format("synth: {} frames {}x{} -> {}\n", spec.frames, spec.height, spec.width, out.string());
}

engine::SequenceResult cmd_complete(const fs::path& dataset, const fs::path& out, const engine::RunConfig& cfg,
                                    std::ostream& log) {
  cfg.validate();
  const engine::Dataset d = engine::load_dataset(dataset);
  fs::create_directories(out);
  const fs::path workdir = cfg.keep_requests ? out / "requests" : fs::path{};
  engine::BackendSet backends = engine::make_backends(cfg, &d, {"flow", "encoder", "inpaint"}, workdir);
  auto result = engine::complete_sequence(d, cfg, backends, out);
  const auto& s = result.manifest["summary"];
  log << fmt::format("complete: {} completed, {} passthrough, {} failed -> {}\n", s["completed"].get<int>(),
                     s["passthrough"].get<int>(), s["failed"].get<int>(), out.string());
  return result;
}

std::vector<FeatureMap> load_outputs(const fs::path& dir) {
  fs::path root = dir;
  if (fs::is_directory(dir / "outputs")) root = dir / "outputs";
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, fmt::format("{} is not a directory", dir.string()));
  std::vector<FeatureMap> frames;
  for (int t = 0;; ++t) {
    const fs::path txf = root / fmt::format("{:06d}.txf", t);
    const fs::path png = root / fmt::format("{:06d}.png", t);
    if (fs::exists(txf)) {
      frames.push_back(read_feature_map(txf));
    } else if (fs::exists(png)) {
      frames.push_back(read_png_rgb(png));
    } else {
      break;
    }
  }
  if (frames.empty()) throw Error(ErrorCode::Io, fmt::format("{}: no 000000.txf or 000000.png", root.string()));
  return frames;
}

MetricReport evaluate_frames(std::span<const FeatureMap> frames, const engine::Dataset& gt,
                             const engine::RunConfig& cfg, std::ostream& log) {
  if (!gt.gt) throw Error(ErrorCode::MissingCapability, fmt::format("{}: no gt/ subtree", gt.root.string()));
  const auto& truth = *gt.gt;
  if (frames.size() != truth.amodal.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("evaluate: {} output frames vs {} ground-truth frames", frames.size(), truth.amodal.size()));
  }
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].height() != truth.amodal[t].height() || frames[t].width() != truth.amodal[t].width()) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("evaluate: frame {} dims differ from ground truth", t));
    }
  }

  engine::BackendSet backends = engine::make_backends(cfg, &gt, {"segment", "embed"});
  MetricReport report;
  report.config = engine::to_json(cfg);
  report.config["segment"] = backends.info.at("segment").description;
  report.config["embed"] = backends.info.at("embed").description;
  const int n = static_cast<int>(frames.size());
  auto warn = [&](const std::string& note) {
    report.notes.push_back(note);
    log << "warning: " << note << "\n";
  };

  {
    std::vector<int> idx;
    std::vector<double> vals;
    for (int t = 0; t < n; ++t) {
      const BinaryMask seg = backends.segment->segment(frames[static_cast<std::size_t>(t)]);
      if (seg.count() == 0 && truth.amodal[static_cast<std::size_t>(t)].count() == 0) {
        warn(fmt::format("IoU undefined for frame {}: both masks empty", t));
        continue;
      }
      idx.push_back(t);
      vals.push_back(iou(seg, truth.amodal[static_cast<std::size_t>(t)]));
    }
    if (!idx.empty()) report.add(kMetricIoU, idx, vals);
  }

  try {
    std::vector<double> per_frame;
    clip_style_score(frames, gt.prompt, *backends.embed, truth.amodal, &per_frame);
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) idx[static_cast<std::size_t>(t)] = t;
    report.add(kMetricClip, idx, per_frame);
  } catch (const Error& e) {
    warn(fmt::format("{} omitted: {}", kMetricClip, e.what()));
  }

  if (truth.flows.empty()) {
    warn(fmt::format("{} omitted: no ground-truth flows", kMetricWarp));
  } else if (n < 2) {
    warn(fmt::format("{} omitted: needs two frames", kMetricWarp));
  } else {
    try {
      const WarpErrorResult w = flow_warping_error(frames, truth.flows, truth.amodal);
      std::vector<int> idx;
      std::vector<double> vals;
      for (std::size_t k = 0; k < w.per_pair.size(); ++k) {
        if (!w.pair_used[k]) continue;
        idx.push_back(static_cast<int>(k) + 1);
        vals.push_back(w.per_pair[k] * 1e3);
      }
      report.add(kMetricWarp, idx, vals);
    } catch (const Error& e) {
      warn(fmt::format("{} omitted: {}", kMetricWarp, e.what()));
    }
  }

  if (n < 2) {
    warn(fmt::format("{} omitted: needs two frames", kMetricTC));
  } else {
    try {
      std::vector<double> per_pair;
      tc_score(frames, *backends.embed, &per_pair);
      std::vector<int> idx;
      for (int t = 1; t < n; ++t) idx.push_back(t);
      report.add(kMetricTC, idx, per_pair);
    } catch (const Error& e) {
      warn(fmt::format("{} omitted: {}", kMetricTC, e.what()));
    }
  }

  {
    std::vector<int> idx;
    std::vector<double> p, s;
    bool ssim_ok = true;
    for (int t = 0; t < n; ++t) {
      const auto& mask = truth.amodal[static_cast<std::size_t>(t)];
      if (mask.count() == 0) {
        warn(fmt::format("{}/{} skip frame {}: empty amodal mask", kMetricPsnr, kMetricSsim, t));
        continue;
      }
      const auto& pred = frames[static_cast<std::size_t>(t)];
      const auto& ref = truth.complete[static_cast<std::size_t>(t)];
      idx.push_back(t);
      p.push_back(psnr_masked(pred, ref, mask));
      if (ssim_ok) {
        try {
          s.push_back(ssim_masked(pred, ref, mask));
        } catch (const Error& e) {
          ssim_ok = false;
          warn(fmt::format("{} omitted: frame {}: {}", kMetricSsim, t, e.what()));
        }
      }
    }
    if (!idx.empty()) {
      report.add(kMetricPsnr, idx, p);
      if (ssim_ok) report.add(kMetricSsim, idx, s);
    }
  }
  report.notes.push_back("warp error: mean absolute difference inside the ground-truth amodal mask");
  report.notes.push_back("LPIPS not computed");
  return report;
}

MetricReport cmd_evaluate(const fs::path& outputs, const fs::path& gt_root, const engine::RunConfig& cfg,
                          const std::optional<fs::path>& out, std::ostream& log) {
  cfg.validate();
  const std::vector<FeatureMap> frames = load_outputs(outputs);
  const engine::Dataset gt = engine::load_dataset(gt_root);
  MetricReport report = evaluate_frames(frames, gt, cfg, log);
  if (out) {
    fs::create_directories(*out);
    write_json(*out / "report.json", report.to_json());
    write_text(*out / "report.txt", report.to_table());
  }
  return report;
}

std::vector<PoseSE3> read_poses(const fs::path& path) {
  const json j = read_json(path);
  if (!j.is_array()) throw Error(ErrorCode::Schema, fmt::format("{}: expected an array of poses", path.string()));
  std::vector<PoseSE3> poses;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      if (!j[i].is_object()) throw Error(ErrorCode::Schema, "not an object");
      poses.push_back(pose_from_json(j[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::Schema, fmt::format("{} frame {}: {}", path.filename().string(), i, e.what()));
    }
  }
  return poses;
}

ReconstructResult cmd_reconstruct(const fs::path& outputs, const fs::path& poses_file, const fs::path& camera_file,
                                  const fs::path& out, const engine::RunConfig& cfg, const ReconstructOptions& options,
                                  std::ostream& log) {
  cfg.validate();
  if (options.iterations < 0 || options.gaussians < 1 || options.canvas < 0) {
    throw Error(ErrorCode::InvalidArgument, "reconstruct: iterations >= 0, gaussians >= 1 and canvas >= 0 required");
  }
  const std::vector<FeatureMap> frames = load_outputs(outputs);
  const std::vector<PoseSE3> poses = read_poses(poses_file);
  if (poses.size() != frames.size()) {
    throw Error(ErrorCode::Schema,
                fmt::format("{}: {} poses for {} frames", poses_file.filename().string(), poses.size(), frames.size()));
  }
  const CameraModel camera = camera_from_json(read_json(camera_file));
  engine::BackendSet backends = engine::make_backends(cfg, nullptr, {"segment"});

  std::vector<FeatureMap> targets;
  std::vector<BinaryMask> masks;
  std::vector<CameraModel> cams;
  std::vector<double> extents;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const BinaryMask seg = backends.segment->segment(frames[t]);
    if (seg.count() == 0) throw Error(ErrorCode::EmptyMask, fmt::format("reconstruct: frame {} has no object pixels", t));
    const int h = options.canvas > 0 ? options.canvas : frames[t].height();
    const int w = options.canvas > 0 ? options.canvas : frames[t].width();
    splat::Recentred r = splat::crop_recenter(frames[t], seg, h, w);
    CameraModel c = camera;
    c.cx += r.dx;
    c.cy += r.dy;
    const BBox box = tight_bbox(seg, 1.0);
    const double z = camera.extrinsics.compose(poses[t]).translation.z();
    if (z > 0.0) extents.push_back(std::max(box.width(), box.height()) * z / camera.fx);
    targets.push_back(std::move(r.image));
    masks.push_back(std::move(r.mask));
    cams.push_back(c);
  }
  // A cube's silhouette spans between one and sqrt(3) edges.
  const double edge = extents.empty() ? 1.0 : mean(extents) / 1.5;

  splat::OptimizeOptions opt;
  opt.iterations = options.iterations;
  opt.optimizer = options.optimizer;
  splat::OptState state;
  splat::OptResult fit = splat::optimize(splat::init_on_cube(options.gaussians, edge, options.seed), targets, cams,
                                         poses, opt, &state);
  for (const auto& w : fit.state.warnings) log << "warning: " << w << "\n";

  ReconstructResult result;
  result.gaussians = std::move(fit.gaussians);
  result.state = std::move(fit.state);
  fs::create_directories(out / "renders");
  splat::write_gaussians(result.gaussians, out / "gaussians.txf");
  json frames_j = json::array();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    FeatureMap img = splat::render(result.gaussians, cams[t], poses[t], targets[t].height(), targets[t].width(),
                                   opt.background, opt.render);
    write_png(img, out / "renders" / fmt::format("{:06d}.png", t));
    const double p = psnr_masked(img, targets[t], masks[t]);
    double s = std::nan("");
    try {
      s = ssim_masked(img, targets[t], masks[t]);
    } catch (const Error&) {
    }
    result.psnr_m.push_back(p);
    result.ssim_m.push_back(s);
    frames_j.push_back({{"index", t}, {"psnr_m", p}, {"ssim_m", std::isnan(s) ? json(nullptr) : json(s)}});
    result.renders.push_back(std::move(img));
  }

  json j;
  j["gaussians"] = result.gaussians.size();
  j["init_edge"] = edge;
  j["seed"] = options.seed;
  j["iterations"] = result.state.iterations;
  j["optimizer"] = result.state.optimizer;
  j["ssim_gradient"] = result.state.ssim_gradient;
  j["steps"] = {{"position", result.state.steps.position},
                {"color", result.state.steps.color},
                {"opacity", result.state.steps.opacity},
                {"scale", result.state.steps.scale}};
  j["loss_history"] = result.state.loss_history;
  j["best_loss"] = result.state.best_loss;
  j["best_iteration"] = result.state.best_iteration;
  j["warnings"] = result.state.warnings;
  j["frames"] = frames_j;
  j["psnr_m_mean"] = mean(result.psnr_m);
  write_json(out / "reconstruct.json", j);
  log << fmt::format("reconstruct: {} Gaussians, loss {:.4g} -> {:.4g}, PSNR-M {:.2f} dB\n", result.gaussians.size(),
                     result.state.loss_history.empty() ? 0.0 : result.state.loss_history.front(),
                     result.state.best_loss, mean(result.psnr_m));
  return result;
}

namespace {

// Shares flow answers across the runs of an ablation; every run sees the
// same frames so (source, target) identifies the answer.
class CachedFlow : public FlowBackend {
 public:
  explicit CachedFlow(std::shared_ptr<FlowBackend> inner) : inner_(std::move(inner)) {}

  FlowField flow(const FlowQuery& q) override {
    const auto key = std::make_pair(q.source, q.target);
    {
      std::lock_guard lock(mutex_);
      if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    FlowField f = inner_->flow(q);
    std::lock_guard lock(mutex_);
    return cache_.emplace(key, std::move(f)).first->second;
  }

  std::string describe() const override { return inner_->describe(); }

 private:
  std::shared_ptr<FlowBackend> inner_;
  std::mutex mutex_;
  std::map<std::pair<int, int>, FlowField> cache_;
};

json row_json(const AblationRow& r) {
  return {{"name", r.name},       {"warp", r.warp},         {"attention", r.attention},
          {"window", r.window},   {"warp_err_x1e3", r.warp_err}, {"iou", r.iou},
          {"mean_warp_err_x1e3", r.mean_warp_err}, {"mean_iou", r.mean_iou}};
}

}  // namespace

const AblationRow& AblationResult::row(const std::string& name) const {
  for (const auto* rows : {&grid, &window}) {
    for (const auto& r : *rows) {
      if (r.name == name) return r;
    }
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("ablation: no row '{}'", name));
}

json AblationResult::to_json() const {
  json j;
  j["seeds"] = seeds;
  j["grid"] = json::array();
  for (const auto& r : grid) j["grid"].push_back(row_json(r));
  j["window"] = json::array();
  for (const auto& r : window) j["window"].push_back(row_json(r));
  return j;
}

std::string AblationResult::to_table() const {
  std::string s = fmt::format("{:<14} {:>5} {:>9} {:>6} {:>14} {:>8}\n", "variant", "warp", "attention", "n",
                              "Warp-err x1e3", "IoU");
  auto line = [&](const AblationRow& r) {
    s += fmt::format("{:<14} {:>5} {:>9} {:>6} {:>14.4f} {:>8.4f}\n", r.name, r.warp ? "on" : "off",
                     r.attention ? "on" : "off", r.window, r.mean_warp_err, r.mean_iou);
  };
  for (const auto& r : grid) line(r);
  s += "\n";
  for (const auto& r : window) line(r);
  return s;
}

AblationResult run_ablation(const engine::Dataset& d, const engine::RunConfig& base, std::ostream& log) {
  base.validate();
  if (!d.gt || d.gt->flows.empty()) {
    throw Error(ErrorCode::MissingCapability, "ablation: needs ground-truth flows and amodal masks");
  }
  if (base.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "ablation: no seeds");
  engine::BackendSet backends = engine::make_backends(base, &d, {"flow", "encoder", "inpaint", "segment"});
  backends.flow = std::make_shared<CachedFlow>(backends.flow);

  AblationResult result;
  result.seeds = base.seeds;
  auto make_row = [](std::string name, bool warp, bool attention, int window) {
    AblationRow r;
    r.name = std::move(name);
    r.warp = warp;
    r.attention = attention;
    r.window = window;
    return r;
  };
  result.grid = {make_row("full", true, true, base.window), make_row("no-warp", false, true, base.window),
                 make_row("no-attention", true, false, base.window), make_row("neither", false, false, base.window)};
  for (int n : {1, 3, 7}) result.window.push_back(make_row(fmt::format("n={}", n), true, true, n));

  auto run_row = [&](AblationRow& row) {
    if (&row != &result.grid.front() && row.warp && row.attention && row.window == base.window) {
      const auto& full = result.grid.front();
      row.warp_err = full.warp_err;
      row.iou = full.iou;
    } else {
      for (std::uint64_t seed : base.seeds) {
        engine::RunConfig cfg = base;
        cfg.seed = seed;
        cfg.warp = row.warp;
        cfg.attention = row.attention;
        cfg.window = row.window;
        const auto seq = engine::complete_sequence(d, cfg, backends);
        row.warp_err.push_back(flow_warping_error(seq.outputs, d.gt->flows, d.gt->amodal).value * 1e3);
        double acc = 0.0;
        int counted = 0;
        for (int t = 0; t < d.size(); ++t) {
          const auto& gt_mask = d.gt->amodal[static_cast<std::size_t>(t)];
          const BinaryMask seg = backends.segment->segment(seq.outputs[static_cast<std::size_t>(t)]);
          if (seg.count() == 0 && gt_mask.count() == 0) continue;
          acc += iou(seg, gt_mask);
          ++counted;
        }
        row.iou.push_back(counted ? acc / counted : 0.0);
      }
    }
    row.mean_warp_err = mean(row.warp_err);
    row.mean_iou = mean(row.iou);
    log << fmt::format("ablate: {:<14} warp-err x1e3 {:.4f}\n", row.name, row.mean_warp_err);
  };
  for (auto& r : result.grid) run_row(r);
  for (auto& r : result.window) run_row(r);
  return result;
}

AblationResult cmd_ablate(const fs::path& dataset, const fs::path& out, const engine::RunConfig& cfg,
                          std::ostream& log) {
  const engine::Dataset d = engine::load_dataset(dataset);
  AblationResult r = run_ablation(d, cfg, log);
  fs::create_directories(out);
  json j = r.to_json();
  j["config"] = engine::to_json(cfg);
  write_json(out / "ablation.json", j);
  write_text(out / "ablation.txt", r.to_table());
  return r;
}

}  // namespace amodal::cli
