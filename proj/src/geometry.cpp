#include "cathnav/geometry.hpp"

#include <algorithm>

namespace cathnav {

double wrap_deg(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) w += 360.0;
  if (w > 180.0) w -= 360.0;
  return w;
}

double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 <= 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + ab * t;
}

double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) { return distance(p, closest_on_segment(p, a, b)); }

double polyline_length(std::span<const Vec2> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

std::vector<double> cumulative_length(std::span<const Vec2> pts) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + distance(pts[i - 1], pts[i]);
  return s;
}

namespace {

// Index i of the segment [i, i+1] containing arc length s, and the local parameter.
std::pair<std::size_t, double> locate(std::span<const Vec2> pts, double s) {
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    if (s <= acc + seg || i + 1 == pts.size()) {
      const double t = seg > 0.0 ? std::clamp((s - acc) / seg, 0.0, 1.0) : 0.0;
      return {i - 1, t};
    }
    acc += seg;
  }
  return {0, 0.0};
}

}  // namespace

Vec2 point_at(std::span<const Vec2> pts, double s) {
  if (pts.empty()) return {};
  if (pts.size() == 1 || s <= 0.0) return pts.front();
  const auto [i, t] = locate(pts, s);
  return pts[i] + (pts[i + 1] - pts[i]) * t;
}

Vec2 tangent_at(std::span<const Vec2> pts, double s) {
  if (pts.size() < 2) return {1.0, 0.0};
  auto [i, t] = locate(pts, std::max(s, 0.0));
  // skip zero-length segments
  while (i + 1 < pts.size() - 1 && distance(pts[i], pts[i + 1]) == 0.0) ++i;
  return (pts[i + 1] - pts[i]).normalized();
}

Polyline2 truncate(std::span<const Vec2> pts, double s) {
  Polyline2 out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  if (s <= 0.0) return out;
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    if (acc + seg >= s) {
      const double t = seg > 0.0 ? (s - acc) / seg : 0.0;
      out.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * t);
      return out;
    }
    out.push_back(pts[i]);
    acc += seg;
  }
  return out;
}

Polyline2 densify(std::span<const Vec2> pts, double max_spacing) {
  Polyline2 out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    const int n = std::max(1, static_cast<int>(std::ceil(seg / max_spacing)));
    for (int j = 1; j <= n; ++j) out.push_back(pts[i - 1] + (pts[i] - pts[i - 1]) * (double(j) / n));
  }
  return out;
}

Vec2 line_direction(double k) { return Vec2{1.0, k}.normalized(); }

Vec2 positive_normal(Vec2 tangent) {
  Vec2 d = tangent.normalized();
  // orient like AB: increasing x, or increasing y for a vertical line
  if (d.x < 0.0 || (d.x == 0.0 && d.y < 0.0)) d = d * -1.0;
  return {-d.y, d.x};
}

}  // namespace cathnav
