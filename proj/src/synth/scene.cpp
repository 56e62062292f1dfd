#include "amodal/synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "amodal/error.hpp"
#include "amodal/tensor/image_io.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal::synth {

CameraModel SceneSpec::camera() const {
  CameraModel cam;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

// ---------------------------------------------------------------- JSON

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      throw Error(ErrorCode::Schema, fmt::format("scene spec: unknown field '{}{}'", where, it.key()));
    }
  }
}

double number(const json& j, const std::string& where, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) {
    throw Error(ErrorCode::Schema, fmt::format("scene spec: field '{}{}' must be a finite number", where, key));
  }
  return v.get<double>();
}

int integer(const json& j, const std::string& where, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::Schema, fmt::format("scene spec: field '{}{}' must be an integer", where, key));
  }
  return v.get<int>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const std::string& where, const char* key,
                                const Eigen::Matrix<double, N, 1>& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != N || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); })) {
    throw Error(ErrorCode::Schema, fmt::format("scene spec: field '{}{}' must be an array of {} numbers", where, key, N));
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out(i) = v[static_cast<std::size_t>(i)].get<double>();
  return out;
}

const json& object_field(const json& j, const std::string& where, const char* key) {
  if (!j.at(key).is_object()) throw Error(ErrorCode::Schema, fmt::format("scene spec: field '{}{}' must be an object", where, key));
  return j.at(key);
}

Trajectory trajectory_from(const json& j, const std::string& where) {
  reject_unknown(j, where, {"start", "velocity", "angle", "spin"});
  Trajectory t;
  t.start = vec<2>(j, where, "start", t.start);
  t.velocity = vec<2>(j, where, "velocity", t.velocity);
  t.angle = number(j, where, "angle", 0.0);
  t.spin = number(j, where, "spin", 0.0);
  return t;
}

json to_json(const Trajectory& t) {
  return {{"start", {t.start.x(), t.start.y()}},
          {"velocity", {t.velocity.x(), t.velocity.y()}},
          {"angle", t.angle},
          {"spin", t.spin}};
}

json rgb(const Eigen::Vector3d& c) { return {c.x(), c.y(), c.z()}; }

void check_color(const Eigen::Vector3d& c, const std::string& field) {
  if ((c.array() < 0.0).any() || (c.array() > 1.0).any()) {
    throw Error(ErrorCode::Schema, fmt::format("scene spec: field '{}' must lie in [0,1]", field));
  }
}

}  // namespace

SceneSpec scene_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, "scene spec: top level must be an object");
  reject_unknown(j, "", {"height", "width", "frames", "seed", "focal", "points", "prompt", "object", "occluder"});
  SceneSpec s;
  s.height = integer(j, "", "height", s.height);
  s.width = integer(j, "", "width", s.width);
  s.frames = integer(j, "", "frames", s.frames);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0)) {
      throw Error(ErrorCode::Schema, "scene spec: field 'seed' must be a non-negative integer");
    }
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  s.focal = number(j, "", "focal", s.focal);
  s.points = integer(j, "", "points", s.points);
  if (j.contains("prompt")) {
    if (!j.at("prompt").is_string()) throw Error(ErrorCode::Schema, "scene spec: field 'prompt' must be a string");
    s.prompt = j.at("prompt").get<std::string>();
  }
  if (s.height < 1) throw Error(ErrorCode::Schema, "scene spec: field 'height' must be >= 1");
  if (s.width < 1) throw Error(ErrorCode::Schema, "scene spec: field 'width' must be >= 1");
  if (s.frames < 1) throw Error(ErrorCode::Schema, "scene spec: field 'frames' must be >= 1");
  if (!(s.focal > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'focal' must be > 0");
  if (s.points < 3) throw Error(ErrorCode::Schema, "scene spec: field 'points' must be >= 3");

  if (j.contains("object")) {
    const json& o = object_field(j, "", "object");
    reject_unknown(o, "object.", {"shape", "width", "height", "depth", "thickness", "color", "texture", "motion"});
    auto& obj = s.object;
    if (o.contains("shape")) {
      const std::string shape = o.at("shape").is_string() ? o.at("shape").get<std::string>() : "";
      if (shape == "rect") obj.shape = ObjectShape::Rect;
      else if (shape == "disc") obj.shape = ObjectShape::Disc;
      else if (shape == "L") obj.shape = ObjectShape::LShape;
      else throw Error(ErrorCode::Schema, "scene spec: field 'object.shape' must be one of rect, disc, L");
    }
    obj.width = number(o, "object.", "width", obj.width);
    obj.height = number(o, "object.", "height", obj.height);
    obj.depth = number(o, "object.", "depth", obj.depth);
    obj.thickness = number(o, "object.", "thickness", obj.thickness);
    obj.color = vec<3>(o, "object.", "color", obj.color);
    obj.texture = number(o, "object.", "texture", obj.texture);
    if (o.contains("motion")) obj.motion = trajectory_from(object_field(o, "object.", "motion"), "object.motion.");
    if (!(obj.width > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'object.width' must be > 0");
    if (!(obj.height > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'object.height' must be > 0");
    if (!(obj.depth > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'object.depth' must be > 0");
    if (obj.thickness < 0) throw Error(ErrorCode::Schema, "scene spec: field 'object.thickness' must be >= 0");
    if (obj.texture < 0 || obj.texture > 1) throw Error(ErrorCode::Schema, "scene spec: field 'object.texture' must lie in [0,1]");
    check_color(obj.color, "object.color");
  }

  if (j.contains("occluder")) {
    if (j.at("occluder").is_null()) {
      s.has_occluder = false;
    } else {
      const json& o = object_field(j, "", "occluder");
      reject_unknown(o, "occluder.", {"shape", "width", "height", "color", "texture", "bend", "bend_rate", "motion"});
      auto& occ = s.occluder;
      if (o.contains("shape")) {
        const std::string shape = o.at("shape").is_string() ? o.at("shape").get<std::string>() : "";
        if (shape == "rect") occ.shape = OccluderShape::Rect;
        else if (shape == "disc") occ.shape = OccluderShape::Disc;
        else if (shape == "limb") occ.shape = OccluderShape::Limb;
        else throw Error(ErrorCode::Schema, "scene spec: field 'occluder.shape' must be one of rect, disc, limb");
      }
      occ.width = number(o, "occluder.", "width", occ.width);
      occ.height = number(o, "occluder.", "height", occ.height);
      occ.color = vec<3>(o, "occluder.", "color", occ.color);
      occ.texture = number(o, "occluder.", "texture", occ.texture);
      occ.bend = number(o, "occluder.", "bend", occ.bend);
      occ.bend_rate = number(o, "occluder.", "bend_rate", occ.bend_rate);
      if (o.contains("motion")) occ.motion = trajectory_from(object_field(o, "occluder.", "motion"), "occluder.motion.");
      if (!(occ.width > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'occluder.width' must be > 0");
      if (!(occ.height > 0)) throw Error(ErrorCode::Schema, "scene spec: field 'occluder.height' must be > 0");
      if (occ.texture < 0 || occ.texture > 1) throw Error(ErrorCode::Schema, "scene spec: field 'occluder.texture' must lie in [0,1]");
      check_color(occ.color, "occluder.color");
    }
  }
  return s;
}

json to_json(const SceneSpec& s) {
  static const char* object_names[] = {"rect", "disc", "L"};
  static const char* occluder_names[] = {"rect", "disc", "limb"};
  json j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["frames"] = s.frames;
  j["seed"] = s.seed;
  j["focal"] = s.focal;
  j["points"] = s.points;
  j["prompt"] = s.prompt;
  const auto& o = s.object;
  j["object"] = {{"shape", object_names[static_cast<int>(o.shape)]},
                 {"width", o.width},
                 {"height", o.height},
                 {"depth", o.depth},
                 {"thickness", o.thickness},
                 {"color", rgb(o.color)},
                 {"texture", o.texture},
                 {"motion", to_json(o.motion)}};
  if (s.has_occluder) {
    const auto& c = s.occluder;
    j["occluder"] = {{"shape", occluder_names[static_cast<int>(c.shape)]},
                     {"width", c.width},
                     {"height", c.height},
                     {"color", rgb(c.color)},
                     {"texture", c.texture},
                     {"bend", c.bend},
                     {"bend_rate", c.bend_rate},
                     {"motion", to_json(c.motion)}};
  } else {
    j["occluder"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------- geometry

namespace {

struct Box2 {
  double x0, x1, y0, y1;
};

struct Phases {
  std::array<double, 8> v{};
};

Phases phases_for(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Phases p;
  for (double& x : p.v) x = u(rng);
  return p;
}

double pattern(double u, double v, double a, double b) {
  return 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (1.3 * u + a)) * std::cos(2.0 * std::numbers::pi * (0.9 * v + b));
}

// Object placement for one frame, in camera metres.
struct Placement {
  double scale;  // metres per pixel at the front depth
  double half_w, half_h;
  Eigen::Vector2d centre;
  double angle;
  Eigen::Matrix2d rot;
  std::vector<Box2> boxes;  // empty for discs
};

Placement place(const SceneSpec& spec, int t) {
  const ObjectSpec& o = spec.object;
  const CameraModel cam = spec.camera();
  Placement p;
  p.scale = o.depth / spec.focal;
  p.half_w = 0.5 * o.width * p.scale;
  p.half_h = 0.5 * o.height * p.scale;
  const Eigen::Vector2d c = o.motion.centre(t);
  p.centre = {(c.x() - cam.cx) * p.scale, (c.y() - cam.cy) * p.scale};
  p.angle = o.motion.angle_at(t);
  p.rot = Eigen::Rotation2Dd(p.angle).toRotationMatrix();
  const double w = p.half_w, h = p.half_h;
  switch (o.shape) {
    case ObjectShape::Rect:
      p.boxes = {{-w, w, -h, h}};
      break;
    case ObjectShape::LShape:
      p.boxes = {{-w, -w + 0.8 * w, -h, h}, {-w, w, h - 0.8 * h, h}};
      break;
    case ObjectShape::Disc:
      break;
  }
  return p;
}

bool inside(const Placement& p, const SceneSpec& spec, const Eigen::Vector2d& q) {
  if (spec.object.shape == ObjectShape::Disc) return q.squaredNorm() <= p.half_w * p.half_w;
  for (const auto& b : p.boxes) {
    if (q.x() >= b.x0 && q.x() <= b.x1 && q.y() >= b.y0 && q.y() <= b.y1) return true;
  }
  return false;
}

// Interval of z where lo <= z*a - b <= hi.
std::optional<std::pair<double, double>> slab(double a, double b, double lo, double hi) {
  if (a == 0.0) {
    if (-b < lo || -b > hi) return std::nullopt;
    return std::pair{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  double z0 = (lo + b) / a, z1 = (hi + b) / a;
  if (z0 > z1) std::swap(z0, z1);
  return std::pair{z0, z1};
}

struct Hit {
  double z;
  Eigen::Vector2d local;
  bool front;
};

std::optional<Hit> cast(const Placement& p, const SceneSpec& spec, double px, double py) {
  const CameraModel cam = spec.camera();
  const Eigen::Vector2d dir{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy};
  const Eigen::Vector2d a = p.rot.transpose() * dir;
  const Eigen::Vector2d b = p.rot.transpose() * p.centre;
  const double zf = spec.object.depth;
  const double zb = zf + spec.object.thickness;
  const Eigen::Vector2d front = zf * a - b;
  if (inside(p, spec, front)) return Hit{zf, front, true};
  if (spec.object.thickness <= 0.0) return std::nullopt;

  double best = std::numeric_limits<double>::infinity();
  if (spec.object.shape == ObjectShape::Disc) {
    const double qa = a.squaredNorm(), qb = a.dot(b), qc = b.squaredNorm() - p.half_w * p.half_w;
    const double disc = qb * qb - qa * qc;
    if (qa > 0 && disc >= 0) {
      const double lo = (qb - std::sqrt(disc)) / qa, hi = (qb + std::sqrt(disc)) / qa;
      const double z = std::max(lo, zf);
      if (z <= std::min(hi, zb)) best = z;
    }
  } else {
    for (const auto& box : p.boxes) {
      const auto sx = slab(a.x(), b.x(), box.x0, box.x1);
      const auto sy = slab(a.y(), b.y(), box.y0, box.y1);
      if (!sx || !sy) continue;
      const double lo = std::max({sx->first, sy->first, zf});
      const double hi = std::min({sx->second, sy->second, zb});
      if (lo <= hi) best = std::min(best, lo);
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  return Hit{best, best * a - b, false};
}

Eigen::Vector3d object_color(const SceneSpec& spec, const Placement& p, const Hit& h, const Phases& ph) {
  const ObjectSpec& o = spec.object;
  const double u = h.local.x() / (2.0 * p.half_w);
  const double v = h.local.y() / (2.0 * p.half_h);
  const double depth = o.thickness > 0 ? (h.z - o.depth) / o.thickness : 0.0;
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) {
    const double pat = pattern(u + 0.7 * depth, v, ph.v[static_cast<std::size_t>(k)], ph.v[static_cast<std::size_t>(k + 3)]);
    c(k) = o.color(k) * (1.0 - o.texture + o.texture * pat);
  }
  return h.front ? c : 0.7 * c;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

bool occluder_covers(const OccluderSpec& o, int t, const Eigen::Vector2d& p) {
  const Eigen::Vector2d c = o.motion.centre(t);
  const double th = o.motion.angle_at(t);
  switch (o.shape) {
    case OccluderShape::Rect: {
      const Eigen::Vector2d q = Eigen::Rotation2Dd(-th) * (p - c);
      return std::abs(q.x()) <= 0.5 * o.width && std::abs(q.y()) <= 0.5 * o.height;
    }
    case OccluderShape::Disc:
      return (p - c).norm() <= 0.5 * o.width;
    case OccluderShape::Limb: {
      const Eigen::Vector2d p1 = c + o.height * Eigen::Vector2d(std::cos(th), std::sin(th));
      const double th2 = th + o.bend + o.bend_rate * t;
      const Eigen::Vector2d p2 = p1 + o.height * Eigen::Vector2d(std::cos(th2), std::sin(th2));
      return segment_distance(p, c, p1) <= 0.5 * o.width || segment_distance(p, p1, p2) <= 0.5 * o.width;
    }
  }
  return false;
}

Eigen::Vector3d occluder_color(const OccluderSpec& o, int t, const Eigen::Vector2d& p, const Phases& ph) {
  const Eigen::Vector2d q = p - o.motion.centre(t);
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) c(k) = o.color(k) * (1.0 - o.texture + o.texture * pattern(q.x() / 9.0, q.y() / 7.0, ph.v[6], ph.v[7]));
  return c;
}

Eigen::Vector3d background(int x, int y, const Phases& ph) {
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) {
    c(k) = 0.35 + 0.25 * std::sin(2.0 * std::numbers::pi * (x / (17.0 + 4 * k) + ph.v[static_cast<std::size_t>(k)])) *
                      std::sin(2.0 * std::numbers::pi * (y / (23.0 - 3 * k) + ph.v[static_cast<std::size_t>(k + 4)]));
  }
  return c;
}

// Outline of the cross-section, counter-clockwise in local coordinates.
std::vector<Eigen::Vector2d> outline(const SceneSpec& spec, const Placement& p) {
  const double w = p.half_w, h = p.half_h;
  switch (spec.object.shape) {
    case ObjectShape::Rect:
      return {{-w, -h}, {w, -h}, {w, h}, {-w, h}};
    case ObjectShape::LShape:
      return {{-w, -h}, {-w + 0.8 * w, -h}, {-w + 0.8 * w, h - 0.8 * h}, {w, h - 0.8 * h}, {w, h}, {-w, h}};
    case ObjectShape::Disc: {
      std::vector<Eigen::Vector2d> ring;
      for (int i = 0; i < 256; ++i) {
        const double a = 2.0 * std::numbers::pi * i / 256.0;
        ring.emplace_back(w * std::cos(a), w * std::sin(a));
      }
      return ring;
    }
  }
  return {};
}

PointCloud sample_surface(const SceneSpec& spec, const Placement& p, int t) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(t), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ObjectSpec& o = spec.object;
  const auto ring = outline(spec, p);
  std::vector<double> edge_len;
  double perimeter = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    edge_len.push_back((ring[(i + 1) % ring.size()] - ring[i]).norm());
    perimeter += edge_len.back();
  }
  double face_area = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const auto& a = ring[i];
    const auto& b = ring[(i + 1) % ring.size()];
    face_area += 0.5 * (a.x() * b.y() - b.x() * a.y());
  }
  const double side_area = perimeter * o.thickness;
  const double faces = o.thickness > 0 ? 2.0 * face_area : face_area;
  const double p_side = side_area / (side_area + faces);

  auto to_camera = [&](const Eigen::Vector2d& q, double z) {
    const Eigen::Vector2d xy = p.rot * q + p.centre;
    return Eigen::Vector3d(xy.x(), xy.y(), z);
  };

  PointCloud cloud;
  cloud.reserve(static_cast<std::size_t>(spec.points));
  while (static_cast<int>(cloud.size()) < spec.points) {
    if (u(rng) < p_side) {
      double s = u(rng) * perimeter;
      std::size_t e = 0;
      while (e + 1 < edge_len.size() && s > edge_len[e]) s -= edge_len[e++];
      const auto& a = ring[e];
      const auto& b = ring[(e + 1) % ring.size()];
      const Eigen::Vector2d q = a + (b - a) * (s / edge_len[e]);
      cloud.push_back(to_camera(q, o.depth + u(rng) * o.thickness));
    } else {
      Eigen::Vector2d q;
      do {
        q = {(2.0 * u(rng) - 1.0) * p.half_w, (2.0 * u(rng) - 1.0) * p.half_h};
      } while (!inside(p, spec, q));
      const bool back = o.thickness > 0 && u(rng) < 0.5;
      cloud.push_back(to_camera(q, back ? o.depth + o.thickness : o.depth));
    }
  }
  return cloud;
}

}  // namespace

ObjectRender render_object(const SceneSpec& spec, int t) {
  const Placement p = place(spec, t);
  const Phases ph = phases_for(spec.seed);
  ObjectRender r{FeatureMap(spec.height, spec.width, 3), BinaryMask(spec.height, spec.width)};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const auto hit = cast(p, spec, x, y);
      if (!hit) continue;
      r.mask.set(y, x, true);
      const Eigen::Vector3d c = object_color(spec, p, *hit, ph);
      for (int k = 0; k < 3; ++k) r.color.at(y, x, k) = c(k);
    }
  }
  return r;
}

std::optional<Eigen::Vector2d> correspond(const SceneSpec& spec, int tau, int t, double x, double y) {
  if (t < 0 || t >= spec.frames || tau < 0 || tau >= spec.frames) {
    throw Error(ErrorCode::OutOfRange, fmt::format("correspond: frames ({}, {}) outside [0, {})", tau, t, spec.frames));
  }
  const Placement from = place(spec, t);
  const auto hit = cast(from, spec, x, y);
  if (!hit) return std::nullopt;
  const Placement to = place(spec, tau);
  const CameraModel cam = spec.camera();
  const Eigen::Vector2d xy = to.rot * hit->local + to.centre;
  return Eigen::Vector2d(cam.fx * xy.x() / hit->z + cam.cx, cam.fy * xy.y() / hit->z + cam.cy);
}

FlowField gt_flow(const SceneSpec& spec, int tau, int t) {
  if (t < 0 || t >= spec.frames || tau < 0 || tau >= spec.frames) {
    throw Error(ErrorCode::OutOfRange, fmt::format("gt_flow: frames ({}, {}) outside [0, {})", tau, t, spec.frames));
  }
  FlowField flow(spec.height, spec.width);
  if (tau == t) return flow;
  const Placement from = place(spec, t);
  const Placement to = place(spec, tau);
  const CameraModel cam = spec.camera();
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const auto hit = cast(from, spec, x, y);
      if (!hit) continue;
      const Eigen::Vector2d xy = to.rot * hit->local + to.centre;
      flow.u(y, x) = cam.fx * xy.x() / hit->z + cam.cx - x;
      flow.v(y, x) = cam.fy * xy.y() / hit->z + cam.cy - y;
    }
  }
  return flow;
}

SceneBundle generate_scene(const SceneSpec& spec) {
  SceneBundle b;
  b.camera = spec.camera();
  const Phases ph = phases_for(spec.seed);
  for (int t = 0; t < spec.frames; ++t) {
    ObjectRender obj = render_object(spec, t);
    if (obj.mask.none()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("generate_scene: object is entirely off-canvas in frame {}", t));
    }
    FeatureMap frame(spec.height, spec.width, 3);
    BinaryMask occ(spec.height, spec.width);
    BinaryMask vis(spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const Eigen::Vector2d p(x, y);
        Eigen::Vector3d c;
        if (spec.has_occluder && occluder_covers(spec.occluder, t, p)) {
          occ.set(y, x, true);
          c = occluder_color(spec.occluder, t, p, ph);
        } else if (obj.mask(y, x)) {
          vis.set(y, x, true);
          c = {obj.color.at(y, x, 0), obj.color.at(y, x, 1), obj.color.at(y, x, 2)};
        } else {
          c = background(x, y, ph);
        }
        for (int k = 0; k < 3; ++k) frame.at(y, x, k) = c(k);
      }
    }
    const Placement p = place(spec, t);
    b.frames.push_back(std::move(frame));
    b.complete.push_back(std::move(obj.color));
    b.amodal.push_back(std::move(obj.mask));
    b.visible.push_back(std::move(vis));
    b.occluder.push_back(std::move(occ));
    b.clouds.push_back(sample_surface(spec, p, t));
    PoseSE3 pose;
    pose.rotation.topLeftCorner<2, 2>() = p.rot;
    pose.translation = {p.centre.x(), p.centre.y(), spec.object.depth};
    b.poses.push_back(pose);
    if (t > 0) b.flows.push_back(gt_flow(spec, t - 1, t));
  }
  return b;
}

BlockMatch block_matching_flow(const FeatureMap& target, const FeatureMap& source, int radius) {
  if (!target.same_shape(source)) throw Error(ErrorCode::DimensionMismatch, "block_matching_flow: image dims differ");
  if (radius < 1) throw Error(ErrorCode::InvalidArgument, "block_matching_flow: radius must be >= 1");
  const int h = target.height(), w = target.width(), ch = target.channels();
  constexpr int half = 2;
  constexpr double flat = 1e-10;
  auto clamp_y = [h](int y) { return std::clamp(y, 0, h - 1); };
  auto clamp_x = [w](int x) { return std::clamp(x, 0, w - 1); };
  BlockMatch r{FlowField(h, w), BinaryMask(h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double mean = 0.0, sq = 0.0;
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          for (int c = 0; c < ch; ++c) {
            const double v = target.at(clamp_y(y + dy), clamp_x(x + dx), c);
            mean += v;
            sq += v * v;
          }
        }
      }
      const double n = 25.0 * ch;
      const double variance = sq / n - (mean / n) * (mean / n);

      double best = std::numeric_limits<double>::infinity();
      int best_u = 0, best_v = 0, ties = 0;
      // Visit displacements by increasing magnitude so ties resolve to the smallest motion.
      for (int ring = 0; ring <= radius; ++ring) {
        for (int v = -ring; v <= ring; ++v) {
          for (int u = -ring; u <= ring; ++u) {
            if (std::max(std::abs(u), std::abs(v)) != ring) continue;
            double ssd = 0.0;
            for (int dy = -half; dy <= half && ssd <= best; ++dy) {
              for (int dx = -half; dx <= half; ++dx) {
                for (int c = 0; c < ch; ++c) {
                  const double d = target.at(clamp_y(y + dy), clamp_x(x + dx), c) -
                                   source.at(clamp_y(y + v + dy), clamp_x(x + u + dx), c);
                  ssd += d * d;
                }
              }
            }
            if (ssd < best) {
              best = ssd;
              best_u = u;
              best_v = v;
              ties = 0;
            } else if (ssd == best) {
              ++ties;
            }
          }
        }
      }
      r.flow.u(y, x) = best_u;
      r.flow.v(y, x) = best_v;
      r.low_confidence.set(y, x, variance < flat || ties > 0);
    }
  }
  return r;
}

void write_dataset(const SceneSpec& spec, const SceneBundle& b, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const char* sub : {"frames", "masks/visible", "masks/occluder", "points", "gt/complete", "gt/amodal", "gt/flows"}) {
    fs::create_directories(root / sub);
  }
  auto name = [](int t, const char* ext) { return fmt::format("{:06d}.{}", t, ext); };
  for (int t = 0; t < static_cast<int>(b.frames.size()); ++t) {
    const auto i = static_cast<std::size_t>(t);
    write_png(b.frames[i], root / "frames" / name(t, "png"));
    write_png(b.visible[i], root / "masks/visible" / name(t, "png"));
    write_png(b.occluder[i], root / "masks/occluder" / name(t, "png"));
    write_png(b.complete[i], root / "gt/complete" / name(t, "png"));
    write_png(b.amodal[i], root / "gt/amodal" / name(t, "png"));
    Tensor cloud;
    cloud.dtype = TxfDtype::F32;
    cloud.dims = {b.clouds[i].size(), 3};
    for (const auto& pt : b.clouds[i]) {
      for (int k = 0; k < 3; ++k) cloud.values.push_back(pt(k));
    }
    write_tensor(cloud, root / "points" / name(t, "txf"));
    if (t > 0) write_txf(b.flows[i - 1], root / "gt/flows" / name(t, "txf"));
  }
  auto dump = [](const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
    out << j.dump(2) << "\n";
  };
  dump(root / "camera.json", to_json(b.camera));
  dump(root / "gt/scene.json", to_json(spec));
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& p : b.poses) poses.push_back(to_json(p));
  dump(root / "gt/poses.json", poses);
  std::ofstream(root / "prompt.txt") << spec.prompt << "\n";
}

}  // namespace amodal::synth
