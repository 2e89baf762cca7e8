#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cathnav {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wraps an angle in degrees into (-180, 180].
double wrap_deg(double deg);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const { const double n = norm(); return n > 0.0 ? Vec2{x / n, y / n} : Vec2{}; }
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(Vec3 o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(Vec3 o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(Vec3 o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

using Polyline2 = std::vector<Vec2>;

double distance(Vec2 a, Vec2 b);

// Closest point on segment [a, b] to p.
Vec2 closest_on_segment(Vec2 p, Vec2 a, Vec2 b);
double distance_to_segment(Vec2 p, Vec2 a, Vec2 b);

double polyline_length(std::span<const Vec2> pts);

// Cumulative arc length, same size as pts, first entry 0.
std::vector<double> cumulative_length(std::span<const Vec2> pts);

// Point and unit tangent at arc length s (clamped to [0, length]).
Vec2 point_at(std::span<const Vec2> pts, double s);
Vec2 tangent_at(std::span<const Vec2> pts, double s);

// Sub-polyline covering arc lengths [0, s].
Polyline2 truncate(std::span<const Vec2> pts, double s);

// Resample at roughly uniform spacing, keeping the original vertices.
Polyline2 densify(std::span<const Vec2> pts, double max_spacing);

// Direction of the line y = kx + b oriented with increasing x, i.e. parallel
// to AB with A = (0, b), B = (1, k + b).
Vec2 line_direction(double k);

// Lateral unit normal n with cross(line_direction, n) > 0. For a shaft with
// tangent t this is the side on which signed image distances are positive.
Vec2 positive_normal(Vec2 tangent);

}  // namespace cathnav
