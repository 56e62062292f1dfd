#include "amodal/splat/gaussians.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/metrics/metrics.hpp"
#include "amodal/occlusion/masks.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::splat {

void Gaussian3D::validate() const {
  if (!position.allFinite()) throw Error(ErrorCode::InvalidArgument, "gaussian position is not finite");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "gaussian scale must be > 0");
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gaussian opacity outside [0,1]");
  for (int c = 0; c < 3; ++c) {
    if (!(color(c) >= 0.0 && color(c) <= 1.0)) throw Error(ErrorCode::InvalidArgument, "gaussian color outside [0,1]");
  }
}

void write_gaussians(const GaussianSet& set, const std::filesystem::path& path) {
  Tensor t;
  t.dtype = TxfDtype::F32;
  t.dims = {set.size(), 8};
  t.values.reserve(set.size() * 8);
  for (const auto& g : set) {
    for (double v : {g.position.x(), g.position.y(), g.position.z(), g.scale, g.color.x(), g.color.y(), g.color.z(),
                     g.opacity}) {
      t.values.push_back(v);
    }
  }
  write_tensor(t, path);
}

GaussianSet read_gaussians(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dims.size() != 2 || t.dims[1] != 8) {
    throw Error(ErrorCode::Schema, fmt::format("{}: gaussian set must be N x 8", path.string()));
  }
  GaussianSet set(t.dims[0]);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double* r = t.values.data() + 8 * i;
    set[i].position = {r[0], r[1], r[2]};
    set[i].scale = r[3];
    set[i].color = {r[4], r[5], r[6]};
    set[i].opacity = r[7];
    set[i].validate();
  }
  return set;
}

namespace {

struct Projected {
  Eigen::Vector3d camera;  // camera-frame centre
  double u = 0.0;
  double v = 0.0;
  double sigma = 0.0;
};

struct Entry {
  int gaussian;
  double g;  // footprint value
  double a;  // opacity * footprint
  Eigen::Vector3d behind;
};

// Per-pixel splat lists, front to back, with the colour composited behind
// each entry.
struct Trace {
  std::vector<Projected> proj;
  std::vector<std::size_t> offsets;
  std::vector<Entry> entries;
};

FeatureMap render_traced(const GaussianSet& set, const CameraModel& cam, const PoseSE3& pose, int height, int width,
                         const Eigen::Vector3d& background, const RenderOptions& options, Trace& tr) {
  if (height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "render: image dims must be >= 1");
  pose.validate();
  cam.validate();
  const PoseSE3 full = cam.extrinsics.compose(pose);

  tr.proj.assign(set.size(), {});
  std::vector<int> order;
  for (std::size_t i = 0; i < set.size(); ++i) {
    set[i].validate();
    Projected& p = tr.proj[i];
    p.camera = full.apply(set[i].position);
    const double z = p.camera.z();
    if (z <= kMinDepth) continue;
    p.u = cam.fx * p.camera.x() / z + cam.cx;
    p.v = cam.fy * p.camera.y() / z + cam.cy;
    p.sigma = cam.fx * set[i].scale / z;
    order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return tr.proj[static_cast<std::size_t>(a)].camera.z() < tr.proj[static_cast<std::size_t>(b)].camera.z();
  });

  const std::size_t npix = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  struct Span {
    int x0, x1, y0, y1;
    double r2;
  };
  std::vector<Span> spans(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Projected& p = tr.proj[static_cast<std::size_t>(order[k])];
    if (options.cutoff_sigmas > 0.0) {
      const double r = options.cutoff_sigmas * p.sigma;
      spans[k] = {std::max(0, static_cast<int>(std::ceil(p.u - r))), std::min(width - 1, static_cast<int>(std::floor(p.u + r))),
                  std::max(0, static_cast<int>(std::ceil(p.v - r))), std::min(height - 1, static_cast<int>(std::floor(p.v + r))),
                  r * r};
    } else {
      spans[k] = {0, width - 1, 0, height - 1, std::numeric_limits<double>::infinity()};
    }
  }
  auto inside = [](const Projected& p, const Span& s, int x, int y) {
    const double dx = x - p.u;
    const double dy = y - p.v;
    return dx * dx + dy * dy <= s.r2;
  };

  tr.offsets.assign(npix + 1, 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Projected& p = tr.proj[static_cast<std::size_t>(order[k])];
    const Span& s = spans[k];
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        if (inside(p, s, x, y)) ++tr.offsets[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x) + 1];
      }
    }
  }
  std::partial_sum(tr.offsets.begin(), tr.offsets.end(), tr.offsets.begin());
  tr.entries.resize(tr.offsets.back());
  std::vector<std::size_t> fill(tr.offsets.begin(), tr.offsets.end() - 1);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int gi = order[k];
    const Projected& p = tr.proj[static_cast<std::size_t>(gi)];
    const Span& s = spans[k];
    const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
    const double alpha = set[static_cast<std::size_t>(gi)].opacity;
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        if (!inside(p, s, x, y)) continue;
        const double dx = x - p.u;
        const double dy = y - p.v;
        const double g = std::exp(-(dx * dx + dy * dy) * inv);
        auto& slot = fill[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
        tr.entries[slot++] = {gi, g, alpha * g, Eigen::Vector3d::Zero()};
      }
    }
  }

  FeatureMap out(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      Eigen::Vector3d c = background;
      for (std::size_t e = tr.offsets[pix + 1]; e-- > tr.offsets[pix];) {
        Entry& en = tr.entries[e];
        en.behind = c;
        c = en.a * set[static_cast<std::size_t>(en.gaussian)].color + (1.0 - en.a) * c;
      }
      for (int k = 0; k < 3; ++k) out.at(y, x, k) = c(k);
    }
  }
  return out;
}

void require_same(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch, fmt::format("{}: {}x{}x{} vs {}x{}x{}", what, a.height(), a.width(),
                                                          a.channels(), b.height(), b.width(), b.channels()));
  }
}

}  // namespace

FeatureMap render(const GaussianSet& set, const CameraModel& cam, const PoseSE3& pose, int height, int width,
                  const Eigen::Vector3d& background, const RenderOptions& options) {
  Trace tr;
  return render_traced(set, cam, pose, height, width, background, options, tr);
}

double photometric_loss(const FeatureMap& rendered, const FeatureMap& target, double lambda) {
  require_same(rendered, target, "photometric_loss");
  double l1 = 0.0;
  const auto a = rendered.data();
  const auto b = target.data();
  for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
  l1 /= static_cast<double>(a.size());
  if (lambda == 0.0) return l1;
  return l1 + lambda * (1.0 - ssim(rendered, target));
}

double loss_and_gradients(const GaussianSet& set, const CameraModel& cam, const PoseSE3& pose, const FeatureMap& target,
                          const Eigen::Vector3d& background, double lambda, const RenderOptions& options,
                          std::vector<GaussianGrad>& grads) {
  if (target.channels() != 3) throw Error(ErrorCode::DimensionMismatch, "loss_and_gradients: target must be RGB");
  if (grads.empty()) grads.resize(set.size());
  if (grads.size() != set.size()) throw Error(ErrorCode::DimensionMismatch, "loss_and_gradients: gradient size");
  Trace tr;
  const FeatureMap img = render_traced(set, cam, pose, target.height(), target.width(), background, options, tr);

  // dL/dI
  const auto r = img.data();
  const auto t = target.data();
  const double inv_n = 1.0 / static_cast<double>(r.size());
  double l1 = 0.0;
  FeatureMap dimg(img.height(), img.width(), 3);
  auto d = dimg.data();
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double diff = r[i] - t[i];
    l1 += std::abs(diff);
    d[i] = (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) * inv_n;
  }
  double loss = l1 * inv_n;
  if (lambda != 0.0) {
    FeatureMap gs;
    const double s = ssim_with_gradient(img, target, gs);
    loss += lambda * (1.0 - s);
    const auto g = gs.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= lambda * g[i];
  }

  // Back through the compositing, front to back.
  std::vector<double> du(set.size(), 0.0), dv(set.size(), 0.0), dsig(set.size(), 0.0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width()) + static_cast<std::size_t>(x);
      const Eigen::Vector3d g(dimg.at(y, x, 0), dimg.at(y, x, 1), dimg.at(y, x, 2));
      double T = 1.0;
      for (std::size_t e = tr.offsets[pix]; e < tr.offsets[pix + 1]; ++e) {
        const Entry& en = tr.entries[e];
        const auto gi = static_cast<std::size_t>(en.gaussian);
        const Gaussian3D& G = set[gi];
        grads[gi].color += (en.a * T) * g;
        const double da = T * g.dot(G.color - en.behind);
        grads[gi].opacity += en.g * da;
        const double dgv = G.opacity * da;  // dL/d(footprint)
        const Projected& p = tr.proj[gi];
        const double s2 = p.sigma * p.sigma;
        const double dx = x - p.u;
        const double dy = y - p.v;
        du[gi] += dgv * en.g * dx / s2;
        dv[gi] += dgv * en.g * dy / s2;
        dsig[gi] += dgv * en.g * (dx * dx + dy * dy) / (s2 * p.sigma);
        T *= 1.0 - en.a;
      }
    }
  }

  const PoseSE3 full = cam.extrinsics.compose(pose);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (du[i] == 0.0 && dv[i] == 0.0 && dsig[i] == 0.0) continue;
    const Projected& p = tr.proj[i];
    const double z = p.camera.z();
    const double X = p.camera.x();
    const double Y = p.camera.y();
    const Eigen::Vector3d dcam(du[i] * cam.fx / z, dv[i] * cam.fy / z,
                               -du[i] * cam.fx * X / (z * z) - dv[i] * cam.fy * Y / (z * z) -
                                   dsig[i] * cam.fx * set[i].scale / (z * z));
    grads[i].position += full.rotation.transpose() * dcam;
    grads[i].scale += dsig[i] * cam.fx / z;
  }
  return loss;
}

OptResult optimize(const GaussianSet& init, std::span<const FeatureMap> frames, std::span<const CameraModel> cams,
                   std::span<const PoseSE3> poses, const OptimizeOptions& o, OptState* state_out) {
  if (frames.empty() || frames.size() != cams.size() || frames.size() != poses.size()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("optimize: {} frames, {} cameras, {} poses", frames.size(), cams.size(), poses.size()));
  }
  if (o.iterations < 1) throw Error(ErrorCode::InvalidArgument, "optimize: iterations must be >= 1");
  for (const auto& g : init) g.validate();

  OptResult res;
  OptState& st = res.state;
  st.steps = o.steps;
  st.optimizer = o.optimizer == Optimizer::Adam ? "adam" : "gradient-descent";
  if (frames.size() == 1) st.warnings.push_back("single view: geometry along the viewing ray is underconstrained");

  GaussianSet cur = init;
  res.gaussians = init;
  const std::size_t n = init.size();
  constexpr int kParams = 8;
  std::vector<double> m(n * kParams, 0.0), v(n * kParams, 0.0);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double views = static_cast<double>(frames.size());

  auto evaluate = [&](std::vector<GaussianGrad>& grads) {
    grads.assign(n, {});
    double total = 0.0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      total += loss_and_gradients(cur, cams[f], poses[f], frames[f], o.background, o.lambda, o.render, grads);
    }
    return total / views;
  };
  auto record = [&](double loss, int it) {
    if (!std::isfinite(loss)) {
      if (state_out) *state_out = st;
      throw Error(ErrorCode::Divergence, fmt::format("optimize: loss became non-finite at iteration {}", it));
    }
    st.loss_history.push_back(loss);
    if (st.loss_history.size() == 1 || loss < st.best_loss) {
      st.best_loss = loss;
      st.best_iteration = it;
      res.gaussians = cur;
    }
  };

  std::vector<GaussianGrad> grads;
  for (int it = 0; it < o.iterations; ++it) {
    const double loss = evaluate(grads);
    record(loss, it);
    const double bc1 = 1.0 - std::pow(b1, it + 1);
    const double bc2 = 1.0 - std::pow(b2, it + 1);
    for (std::size_t i = 0; i < n; ++i) {
      Gaussian3D& g = cur[i];
      const GaussianGrad& gr = grads[i];
      const double grad[kParams] = {gr.position.x() / views, gr.position.y() / views, gr.position.z() / views,
                                    gr.scale / views,        gr.color.x() / views,    gr.color.y() / views,
                                    gr.color.z() / views,    gr.opacity / views};
      const double lr[kParams] = {o.steps.position, o.steps.position, o.steps.position, o.steps.scale,
                                  o.steps.color,    o.steps.color,    o.steps.color,    o.steps.opacity};
      double* param[kParams] = {&g.position.x(), &g.position.y(), &g.position.z(), &g.scale,
                                &g.color.x(),    &g.color.y(),    &g.color.z(),    &g.opacity};
      for (int k = 0; k < kParams; ++k) {
        double step = grad[k];
        if (o.optimizer == Optimizer::Adam) {
          double& mk = m[i * kParams + static_cast<std::size_t>(k)];
          double& vk = v[i * kParams + static_cast<std::size_t>(k)];
          mk = b1 * mk + (1.0 - b1) * grad[k];
          vk = b2 * vk + (1.0 - b2) * grad[k] * grad[k];
          step = (mk / bc1) / (std::sqrt(vk / bc2) + eps);
        }
        *param[k] -= lr[k] * step;
      }
      g.opacity = std::clamp(g.opacity, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) g.color(c) = std::clamp(g.color(c), 0.0, 1.0);
      g.scale = std::max(g.scale, 1e-4);
    }
  }
  record(evaluate(grads), o.iterations);
  st.iterations = o.iterations;
  if (state_out) *state_out = st;
  return res;
}

Recentred crop_recenter(const FeatureMap& image, const BinaryMask& mask, int height, int width,
                        const Eigen::Vector3d& background) {
  if (mask.height() != image.height() || mask.width() != image.width()) {
    throw Error(ErrorCode::DimensionMismatch, "crop_recenter: mask and image dims differ");
  }
  if (image.channels() != 3) throw Error(ErrorCode::DimensionMismatch, "crop_recenter: image must be RGB");
  const BBox box = tight_bbox(mask, 1.0);
  Recentred out{FeatureMap(height, width, 3), BinaryMask(height, width)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = background(c);
    }
  }
  const int ox = (width - box.width()) / 2 - box.x0;
  const int oy = (height - box.height()) / 2 - box.y0;
  out.dx = ox;
  out.dy = oy;
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      const int ty = y + oy;
      const int tx = x + ox;
      if (ty < 0 || ty >= height || tx < 0 || tx >= width) continue;
      for (int c = 0; c < 3; ++c) out.image.at(ty, tx, c) = image.at(y, x, c);
      out.mask.set(ty, tx, mask(y, x));
    }
  }
  return out;
}

CubeScene make_cube_scene(const CubeSpec& s) {
  if (s.size < 8 || s.frames < 1 || s.supersample < 1 || !(s.edge > 0.0) || !(s.depth > s.edge)) {
    throw Error(ErrorCode::InvalidArgument, "make_cube_scene: invalid spec");
  }
  static const Eigen::Vector3d face_color[6] = {{0.9, 0.2, 0.2}, {0.2, 0.75, 0.3}, {0.2, 0.35, 0.9},
                                                {0.9, 0.8, 0.2}, {0.8, 0.3, 0.8}, {0.2, 0.8, 0.8}};
  CameraModel cam;
  cam.fx = cam.fy = s.focal;
  cam.cx = cam.cy = (s.size - 1) / 2.0;
  const double h = s.edge / 2.0;
  CubeScene scene;
  for (int t = 0; t < s.frames; ++t) {
    PoseSE3 pose;
    pose.rotation = (Eigen::AngleAxisd(s.pitch, Eigen::Vector3d::UnitX()) *
                     Eigen::AngleAxisd(s.yaw_step * t + 0.4, Eigen::Vector3d::UnitY()))
                        .toRotationMatrix();
    pose.translation = {0.0, 0.0, s.depth};
    const Eigen::Matrix3d rt = pose.rotation.transpose();
    const Eigen::Vector3d origin = -rt * pose.translation;
    FeatureMap img(s.size, s.size, 3);
    BinaryMask mask(s.size, s.size);
    const int ss = s.supersample;
    for (int y = 0; y < s.size; ++y) {
      for (int x = 0; x < s.size; ++x) {
        Eigen::Vector3d acc = Eigen::Vector3d::Zero();
        int hits = 0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const double px = x - 0.5 + (sx + 0.5) / ss;
            const double py = y - 0.5 + (sy + 0.5) / ss;
            const Eigen::Vector3d dir = rt * Eigen::Vector3d((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
            double tmin = -std::numeric_limits<double>::infinity();
            double tmax = std::numeric_limits<double>::infinity();
            int face = -1;
            for (int k = 0; k < 3; ++k) {
              if (dir(k) == 0.0) {
                if (std::abs(origin(k)) > h) tmax = -1.0;
                continue;
              }
              double t0 = (-h - origin(k)) / dir(k);
              double t1 = (h - origin(k)) / dir(k);
              if (t0 > t1) std::swap(t0, t1);
              if (t0 > tmin) {
                tmin = t0;
                face = 2 * k + (dir(k) > 0.0 ? 1 : 0);  // entering through -k side when moving +k
              }
              tmax = std::min(tmax, t1);
            }
            if (face >= 0 && tmin <= tmax && tmin > 0.0) {
              acc += face_color[face];
              ++hits;
            } else {
              acc += s.background;
            }
          }
        }
        acc /= ss * ss;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = acc(c);
        mask.set(y, x, 2 * hits >= ss * ss);
      }
    }
    scene.frames.push_back(std::move(img));
    scene.masks.push_back(std::move(mask));
    scene.cams.push_back(cam);
    scene.poses.push_back(pose);
  }
  return scene;
}

GaussianSet init_on_cube(int count, double edge, std::uint64_t seed) {
  if (count < 0 || !(edge > 0.0)) throw Error(ErrorCode::InvalidArgument, "init_on_cube: invalid arguments");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> side(-edge / 2.0, edge / 2.0);
  std::uniform_int_distribution<int> face(0, 5);
  std::normal_distribution<double> jitter(0.0, 0.02 * edge);
  GaussianSet set(static_cast<std::size_t>(count));
  for (auto& g : set) {
    const int f = face(rng);
    Eigen::Vector3d p(side(rng), side(rng), side(rng));
    p(f / 2) = (f % 2 ? 1.0 : -1.0) * edge / 2.0;
    for (int k = 0; k < 3; ++k) p(k) += jitter(rng);
    g.position = p;
    g.scale = edge / 16.0;
    g.color = {0.5, 0.5, 0.5};
    g.opacity = 0.5;
  }
  return set;
}

}  // namespace amodal::splat
