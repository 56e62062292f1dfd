#include "amodal/occlusion/hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

double signed_area(std::span<const Point2> ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point2& a = ring[i];
    const Point2& b = ring[(i + 1) % ring.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * twice;
}

double Polygon2D::area() const {
  double total = 0.0;
  for (const auto& ring : rings) total += signed_area(ring);
  return total;
}

double circumradius(const Point2& a, const Point2& b, const Point2& c) {
  const double ab = std::hypot(b.x - a.x, b.y - a.y);
  const double bc = std::hypot(c.x - b.x, c.y - b.y);
  const double ca = std::hypot(a.x - c.x, a.y - c.y);
  const double twice_area = std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
  if (twice_area == 0.0) return std::numeric_limits<double>::infinity();
  return ab * bc * ca / (2.0 * twice_area);
}

namespace {

__extension__ using i128 = __int128;

struct IPoint {
  std::int64_t x;
  std::int64_t y;
};

i128 orient(const IPoint& a, const IPoint& b, const IPoint& c) {
  return static_cast<i128>(b.x - a.x) * (c.y - a.y) - static_cast<i128>(b.y - a.y) * (c.x - a.x);
}

// > 0 when d lies strictly inside the circle through counter-clockwise a, b, c.
i128 incircle(const IPoint& a, const IPoint& b, const IPoint& c, const IPoint& d) {
  const i128 adx = a.x - d.x, ady = a.y - d.y;
  const i128 bdx = b.x - d.x, bdy = b.y - d.y;
  const i128 cdx = c.x - d.x, cdy = c.y - d.y;
  const i128 alift = adx * adx + ady * ady;
  const i128 blift = bdx * bdx + bdy * bdy;
  const i128 clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) + clift * (adx * bdy - bdx * ady);
}

constexpr double kSnapRange = 16777216.0;  // 2^24

class Builder {
 public:
  explicit Builder(std::vector<IPoint> pts) : pts_(std::move(pts)) {}

  void sweep() {
    const int n = static_cast<int>(pts_.size());
    int k = 2;
    while (k < n && orient(pts_[0], pts_[1], pts_[static_cast<std::size_t>(k)]) == 0) ++k;
    if (k == n) throw Error(ErrorCode::DegenerateGeometry, "concave_hull: all points are collinear");

    const bool left = orient(pts_[0], pts_[1], pts_[static_cast<std::size_t>(k)]) > 0;
    for (int i = 0; i + 1 < k; ++i) {
      if (left) add_triangle(i, i + 1, k);
      else add_triangle(i + 1, i, k);
    }
    if (left) {
      for (int i = 0; i <= k; ++i) hull_.push_back(i);
    } else {
      hull_.push_back(0);
      hull_.push_back(k);
      for (int i = k - 1; i >= 1; --i) hull_.push_back(i);
    }
    for (int p = k + 1; p < n; ++p) insert_outside(p);
  }

  void link() {
    std::unordered_map<std::uint64_t, std::pair<int, int>> edges;
    edges.reserve(tris_.size() * 3);
    nbrs_.assign(tris_.size(), {-1, -1, -1});
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
      for (int i = 0; i < 3; ++i) {
        const int a = tris_[static_cast<std::size_t>(t)][static_cast<std::size_t>((i + 1) % 3)];
        const int b = tris_[static_cast<std::size_t>(t)][static_cast<std::size_t>((i + 2) % 3)];
        const auto it = edges.find(key(b, a));
        if (it != edges.end()) {
          nbrs_[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = it->second.first;
          nbrs_[static_cast<std::size_t>(it->second.first)][static_cast<std::size_t>(it->second.second)] = t;
          edges.erase(it);
        } else {
          edges.emplace(key(a, b), std::make_pair(t, i));
        }
      }
    }
  }

  void legalize() {
    std::vector<std::pair<int, int>> stack;
    for (int t = 0; t < static_cast<int>(tris_.size()); ++t) {
      for (int i = 0; i < 3; ++i) stack.emplace_back(t, i);
    }
    while (!stack.empty()) {
      const auto [ta, ia] = stack.back();
      stack.pop_back();
      const int tb = nbrs_[static_cast<std::size_t>(ta)][static_cast<std::size_t>(ia)];
      if (tb < 0) continue;
      auto& A = tris_[static_cast<std::size_t>(ta)];
      auto& B = tris_[static_cast<std::size_t>(tb)];
      const int a = A[static_cast<std::size_t>(ia)];
      const int b = A[static_cast<std::size_t>((ia + 1) % 3)];
      const int c = A[static_cast<std::size_t>((ia + 2) % 3)];
      int jb = 0;
      while (B[static_cast<std::size_t>(jb)] == b || B[static_cast<std::size_t>(jb)] == c) ++jb;
      const int d = B[static_cast<std::size_t>(jb)];
      if (incircle(pts_[static_cast<std::size_t>(a)], pts_[static_cast<std::size_t>(b)],
                   pts_[static_cast<std::size_t>(c)], pts_[static_cast<std::size_t>(d)]) <= 0) {
        continue;
      }
      const int n_ca = nbrs_[static_cast<std::size_t>(ta)][static_cast<std::size_t>((ia + 1) % 3)];
      const int n_ab = nbrs_[static_cast<std::size_t>(ta)][static_cast<std::size_t>((ia + 2) % 3)];
      const int n_bd = nbrs_[static_cast<std::size_t>(tb)][static_cast<std::size_t>((jb + 1) % 3)];
      const int n_dc = nbrs_[static_cast<std::size_t>(tb)][static_cast<std::size_t>((jb + 2) % 3)];

      A = {a, b, d};
      B = {a, d, c};
      nbrs_[static_cast<std::size_t>(ta)] = {n_bd, tb, n_ab};
      nbrs_[static_cast<std::size_t>(tb)] = {n_dc, n_ca, ta};
      repoint(n_bd, tb, ta);
      repoint(n_ca, ta, tb);
      for (int i = 0; i < 3; ++i) {
        stack.emplace_back(ta, i);
        stack.emplace_back(tb, i);
      }
    }
  }

  std::vector<std::array<int, 3>> tris_;
  std::vector<std::array<int, 3>> nbrs_;

 private:
  static std::uint64_t key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  }

  void add_triangle(int a, int b, int c) { tris_.push_back({a, b, c}); }

  void repoint(int t, int from, int to) {
    if (t < 0) return;
    for (auto& n : nbrs_[static_cast<std::size_t>(t)]) {
      if (n == from) {
        n = to;
        return;
      }
    }
  }

  // p lies strictly outside the current hull: it is lexicographically
  // larger than every vertex inserted so far.
  void insert_outside(int p) {
    const int h = static_cast<int>(hull_.size());
    auto visible = [&](int i) {
      const int a = hull_[static_cast<std::size_t>(i % h)];
      const int b = hull_[static_cast<std::size_t>((i + 1) % h)];
      return orient(pts_[static_cast<std::size_t>(a)], pts_[static_cast<std::size_t>(b)], pts_[static_cast<std::size_t>(p)]) < 0;
    };
    int seed = -1;
    for (int i = 0; i < h; ++i) {
      if (visible(i)) {
        seed = i;
        break;
      }
    }
    if (seed < 0) throw Error(ErrorCode::DegenerateGeometry, "delaunay: point not outside hull");
    int first = seed;
    while (visible((first - 1 + h) % h) && (first - 1 + h) % h != seed) first = (first - 1 + h) % h;
    int count = 0;
    while (count < h && visible((first + count) % h)) ++count;

    for (int e = 0; e < count; ++e) {
      const int a = hull_[static_cast<std::size_t>((first + e) % h)];
      const int b = hull_[static_cast<std::size_t>((first + e + 1) % h)];
      add_triangle(b, a, p);
    }
    // Keep hull_[first] and hull_[first + count]; drop the vertices between.
    std::vector<int> next;
    next.reserve(static_cast<std::size_t>(h - count + 2));
    for (int i = 0; i <= h - count; ++i) next.push_back(hull_[static_cast<std::size_t>((first + count + i) % h)]);
    next.push_back(p);
    hull_ = std::move(next);
  }

  std::vector<IPoint> pts_;
  std::vector<int> hull_;
};

}  // namespace

Triangulation delaunay(std::span<const Point2> points) {
  if (points.size() < 3) throw Error(ErrorCode::DegenerateGeometry, "concave_hull: fewer than 3 points");
  double minx = std::numeric_limits<double>::infinity(), miny = minx;
  double maxx = -minx, maxy = -minx;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::NonFinite, "concave_hull: non-finite point");
    minx = std::min(minx, p.x);
    miny = std::min(miny, p.y);
    maxx = std::max(maxx, p.x);
    maxy = std::max(maxy, p.y);
  }
  const double extent = std::max(maxx - minx, maxy - miny);
  if (extent <= 0.0) throw Error(ErrorCode::DegenerateGeometry, "concave_hull: all points coincide");
  const double scale = kSnapRange / extent;

  std::vector<IPoint> snapped(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    snapped[i] = {std::llround((points[i].x - minx) * scale), std::llround((points[i].y - miny) * scale)};
  }
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& pa = snapped[static_cast<std::size_t>(a)];
    const auto& pb = snapped[static_cast<std::size_t>(b)];
    return pa.x != pb.x ? pa.x < pb.x : pa.y < pb.y;
  });

  Triangulation tri;
  tri.point_to_vertex.assign(points.size(), -1);
  std::vector<IPoint> unique;
  for (int idx : order) {
    const auto& s = snapped[static_cast<std::size_t>(idx)];
    if (unique.empty() || unique.back().x != s.x || unique.back().y != s.y) {
      unique.push_back(s);
      tri.vertices.push_back(points[static_cast<std::size_t>(idx)]);
    }
    tri.point_to_vertex[static_cast<std::size_t>(idx)] = static_cast<int>(unique.size()) - 1;
  }
  if (unique.size() < 3) throw Error(ErrorCode::DegenerateGeometry, "concave_hull: fewer than 3 distinct points");

  Builder builder(std::move(unique));
  builder.sweep();
  builder.link();
  builder.legalize();
  tri.triangles = std::move(builder.tris_);
  tri.neighbors = std::move(builder.nbrs_);
  return tri;
}

std::vector<Point2> convex_hull(std::span<const Point2> input) {
  std::vector<Point2> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw Error(ErrorCode::DegenerateGeometry, "convex_hull: fewer than 3 distinct points");
  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw Error(ErrorCode::DegenerateGeometry, "convex_hull: points are collinear");
  return hull;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      parent_[static_cast<std::size_t>(x)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(x)])];
      x = parent_[static_cast<std::size_t>(x)];
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    return true;
  }

 private:
  std::vector<int> parent_;
};

// Boundary loops of the kept triangles, each oriented with the region on its
// left. At vertices where several loops meet, the outgoing edge with the
// smallest clockwise turn from the reversed incoming edge is taken.
Polygon2D trace_boundary(const Triangulation& tri, const std::vector<char>& kept) {
  struct Edge {
    int from;
    int to;
  };
  std::vector<Edge> edges;
  std::unordered_map<int, std::vector<int>> outgoing;
  for (std::size_t t = 0; t < tri.triangles.size(); ++t) {
    if (!kept[t]) continue;
    for (int i = 0; i < 3; ++i) {
      const int n = tri.neighbors[t][static_cast<std::size_t>(i)];
      if (n >= 0 && kept[static_cast<std::size_t>(n)]) continue;
      const int a = tri.triangles[t][static_cast<std::size_t>((i + 1) % 3)];
      const int b = tri.triangles[t][static_cast<std::size_t>((i + 2) % 3)];
      outgoing[a].push_back(static_cast<int>(edges.size()));
      edges.push_back({a, b});
    }
  }
  std::vector<char> used(edges.size(), 0);
  auto angle = [&](int from, int to) {
    const Point2& p = tri.vertices[static_cast<std::size_t>(from)];
    const Point2& q = tri.vertices[static_cast<std::size_t>(to)];
    return std::atan2(q.y - p.y, q.x - p.x);
  };

  Polygon2D poly;
  for (std::size_t start = 0; start < edges.size(); ++start) {
    if (used[start]) continue;
    std::vector<Point2> ring;
    int e = static_cast<int>(start);
    while (true) {
      used[static_cast<std::size_t>(e)] = 1;
      const Edge cur = edges[static_cast<std::size_t>(e)];
      ring.push_back(tri.vertices[static_cast<std::size_t>(cur.from)]);
      const auto& candidates = outgoing[cur.to];
      const double back = angle(cur.to, cur.from);
      int best = -1;
      double best_turn = std::numeric_limits<double>::infinity();
      for (int cand : candidates) {
        if (used[static_cast<std::size_t>(cand)]) continue;
        double turn = back - angle(cur.to, edges[static_cast<std::size_t>(cand)].to);
        while (turn <= 0.0) turn += 2.0 * std::numbers::pi;
        while (turn > 2.0 * std::numbers::pi) turn -= 2.0 * std::numbers::pi;
        if (turn < best_turn) {
          best_turn = turn;
          best = cand;
        }
      }
      if (best < 0) break;
      e = best;
    }
    if (ring.size() >= 3) poly.rings.push_back(std::move(ring));
  }
  return poly;
}

HullResult convex_result(std::span<const Point2> points) {
  HullResult r;
  r.polygon.rings.push_back(convex_hull(points));
  r.alpha = 0.0;
  r.convex_fallback = true;
  return r;
}

}  // namespace

HullResult concave_hull(std::span<const Point2> points, std::optional<double> alpha, double min_coverage) {
  const Triangulation tri = delaunay(points);
  if (alpha && *alpha < 0.0) throw Error(ErrorCode::InvalidArgument, "concave_hull: alpha must be >= 0");
  if (alpha && *alpha == 0.0) {
    HullResult r = convex_result(points);
    r.convex_fallback = false;
    return r;
  }

  const std::size_t nt = tri.triangles.size();
  std::vector<double> radius(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& v = tri.triangles[t];
    radius[t] = circumradius(tri.vertices[static_cast<std::size_t>(v[0])], tri.vertices[static_cast<std::size_t>(v[1])],
                             tri.vertices[static_cast<std::size_t>(v[2])]);
  }

  if (alpha) {
    const double r_max = 1.0 / *alpha;
    std::vector<char> kept(nt, 0);
    bool any = false;
    for (std::size_t t = 0; t < nt; ++t) {
      kept[t] = radius[t] <= r_max;
      any = any || kept[t];
    }
    if (!any) return convex_result(points);
    return {trace_boundary(tri, kept), *alpha, false};
  }

  // Grow the shape by increasing circumradius; the first state meeting the
  // acceptance rule is the largest admissible alpha.
  std::vector<int> order(nt);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return radius[static_cast<std::size_t>(a)] < radius[static_cast<std::size_t>(b)];
  });

  std::vector<std::size_t> weight(tri.vertices.size(), 0);
  for (int v : tri.point_to_vertex) ++weight[static_cast<std::size_t>(v)];
  const double needed = min_coverage * static_cast<double>(points.size());

  std::vector<char> kept(nt, 0);
  std::vector<char> touched(tri.vertices.size(), 0);
  std::vector<int> boundary_degree(tri.vertices.size(), 0);
  DisjointSets sets(nt);
  std::size_t covered = 0;
  long components = 0;
  long crowded = 0;  // vertices with more than two boundary edges
  long faces = 0;
  long boundary_edges = 0;
  long vertices = 0;

  auto bump = [&](int v, int delta) {
    int& d = boundary_degree[static_cast<std::size_t>(v)];
    const bool was = d > 2;
    d += delta;
    const bool now = d > 2;
    crowded += static_cast<long>(now) - static_cast<long>(was);
  };

  for (std::size_t i = 0; i < nt;) {
    const double r = radius[static_cast<std::size_t>(order[i])];
    for (; i < nt && radius[static_cast<std::size_t>(order[i])] == r; ++i) {
      const int t = order[i];
      kept[static_cast<std::size_t>(t)] = 1;
      ++components;
      ++faces;
      for (int k = 0; k < 3; ++k) {
        const int v = tri.triangles[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
        if (!touched[static_cast<std::size_t>(v)]) {
          touched[static_cast<std::size_t>(v)] = 1;
          covered += weight[static_cast<std::size_t>(v)];
          ++vertices;
        }
        const int a = tri.triangles[static_cast<std::size_t>(t)][static_cast<std::size_t>((k + 1) % 3)];
        const int b = tri.triangles[static_cast<std::size_t>(t)][static_cast<std::size_t>((k + 2) % 3)];
        const int n = tri.neighbors[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
        if (n >= 0 && kept[static_cast<std::size_t>(n)]) {
          bump(a, -1);
          bump(b, -1);
          --boundary_edges;
          if (sets.unite(t, n)) --components;
        } else {
          bump(a, +1);
          bump(b, +1);
          ++boundary_edges;
        }
      }
    }
    // Euler characteristic of a connected region: V - E + F = 1 - holes.
    const long edges = (3 * faces + boundary_edges) / 2;
    const long holes = 1 - (vertices - edges + faces);
    if (components == 1 && crowded == 0 && holes == 0 && static_cast<double>(covered) >= needed) {
      if (i == nt) return convex_result(points);
      return {trace_boundary(tri, kept), 1.0 / r, false};
    }
  }
  return convex_result(points);
}

bool point_in_polygon(const Polygon2D& polygon, const Point2& p) {
  bool inside = false;
  for (const auto& ring : polygon.rings) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Point2& a = ring[i];
      const Point2& b = ring[(i + 1) % ring.size()];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (p.x < xc) inside = !inside;
      }
    }
  }
  return inside || distance_to_boundary(polygon, p) <= 1e-9;
}

double distance_to_boundary(const Polygon2D& polygon, const Point2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ring : polygon.rings) {
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Point2& a = ring[i];
      const Point2& b = ring[(i + 1) % ring.size()];
      const double dx = b.x - a.x, dy = b.y - a.y;
      const double len2 = dx * dx + dy * dy;
      double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      best = std::min(best, std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y));
    }
  }
  return best;
}

}  // namespace amodal
