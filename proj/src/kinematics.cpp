#include "cathnav/kinematics.hpp"

#include <algorithm>
#include <string>

namespace cathnav::kinematics {

double CatheterConfig::d_max_px() const {
  const double phi = deg2rad(distal_bend_angle_deg);
  return bend_radius_mm() * (1.0 - std::cos(phi)) * px_per_mm;
}

double CatheterConfig::arc_forward_px() const {
  const double phi = deg2rad(distal_bend_angle_deg);
  return bend_radius_mm() * std::sin(phi) * px_per_mm;
}

void CatheterConfig::validate() const {
  if (!(total_length_mm > 0 && distal_bend_angle_deg > 0 && distal_segment_mm > 0 && tube_radius_px > 0 &&
        px_per_mm > 0))
    throw KinematicsError("catheter config values must be positive");
  if (!(distal_segment_mm < total_length_mm)) throw KinematicsError("distal segment must be shorter than the catheter");
  if (distal_bend_angle_deg >= 180.0) throw KinematicsError("bend angle must be below 180 degrees");
  if (arc_samples < 3) throw KinematicsError("arc_samples must be >= 3");
  if (!(d_max_px() > 0.0)) throw KinematicsError("D_max must be positive");
}

TipFrame canonical_tip(const CatheterConfig& cfg) {
  return {{cfg.arc_forward_px(), cfg.d_max_px(), 0.0}};
}

TipFrame rotate_about_shaft(const TipFrame& tip, double theta_deg) {
  const double c = std::cos(deg2rad(theta_deg));
  const double s = std::sin(deg2rad(theta_deg));
  return {{tip.p.x, tip.p.y * c - tip.p.z * s, tip.p.y * s + tip.p.z * c}};
}

double rotated_offset(const TipFrame& tip, double theta_deg) {
  const double t = deg2rad(theta_deg);
  return std::abs(tip.p.y * std::cos(t) - tip.p.z * std::sin(t));
}

std::vector<double> curvature(std::span<const Vec3> pts) {
  const std::size_t n = pts.size();
  if (n < 3) throw KinematicsError("curvature needs at least 3 points");
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double h = (pts[i] - pts[i - 1]).norm();
    if (h <= 0.0) throw KinematicsError("curvature: repeated point at index " + std::to_string(i));
    s[i] = s[i - 1] + h;
  }
  std::vector<double> kappa(n);
  for (std::size_t i = 0; i < n; ++i) {
    // three-point stencil on (j0, j1, j2), evaluated at parameter s[i]
    const std::size_t j0 = i == 0 ? 0 : (i == n - 1 ? n - 3 : i - 1);
    const Vec3 p0 = pts[j0], p1 = pts[j0 + 1], p2 = pts[j0 + 2];
    const double t0 = s[j0], t1 = s[j0 + 1], t2 = s[j0 + 2], t = s[i];
    // derivatives of the Lagrange basis through (t0, t1, t2)
    const double d0 = (t0 - t1) * (t0 - t2), d1 = (t1 - t0) * (t1 - t2), d2 = (t2 - t0) * (t2 - t1);
    const Vec3 g1 = p0 * ((2 * t - t1 - t2) / d0) + p1 * ((2 * t - t0 - t2) / d1) + p2 * ((2 * t - t0 - t1) / d2);
    const Vec3 g2 = p0 * (2.0 / d0) + p1 * (2.0 / d1) + p2 * (2.0 / d2);
    const double speed = g1.norm();
    kappa[i] = g1.cross(g2).norm() / (speed * speed * speed);
  }
  return kappa;
}

std::vector<double> curvature(std::span<const Vec2> pts) {
  std::vector<Vec3> p3;
  p3.reserve(pts.size());
  for (auto p : pts) p3.push_back({p.x, p.y, 0.0});
  return curvature(std::span<const Vec3>(p3));
}

CatheterBody body_polyline(const CatheterConfig& cfg, double insertion_mm, double roll_deg,
                           std::span<const Vec2> route) {
  if (route.empty()) throw KinematicsError("empty route");
  if (insertion_mm < 0.0) throw KinematicsError("negative insertion");
  if (insertion_mm > cfg.total_length_mm) throw KinematicsError("insertion exceeds catheter length");

  const double insertion_px = insertion_mm * cfg.px_per_mm;
  const double arc_px = std::min(insertion_px, cfg.distal_segment_px());
  const double s_base = insertion_px - arc_px;
  const double route_len = polyline_length(route);
  if (s_base > route_len + 1e-9) throw KinematicsError("insertion exceeds route length");

  CatheterBody body;
  body.arc_length_px = arc_px;
  Polyline2 shaft = densify(truncate(route, s_base), cfg.shaft_spacing_px);
  body.base = shaft.back();
  body.shaft_tangent = tangent_at(route, std::min(s_base, route_len));
  const Vec2 h = body.shaft_tangent;
  const Vec2 n = positive_normal(h);

  for (std::size_t i = 0; i + 1 < shaft.size(); ++i) {
    body.body2d.push_back(shaft[i]);
    body.body3d.push_back({shaft[i].x, shaft[i].y, 0.0});
  }
  body.arc_begin = body.body2d.size();

  const double radius = cfg.bend_radius_mm() * cfg.px_per_mm;
  const double c = std::cos(deg2rad(roll_deg));
  const double sn = std::sin(deg2rad(roll_deg));
  const int samples = arc_px > 0.0 ? cfg.arc_samples : 0;
  for (int j = 0; j <= samples; ++j) {
    const double u = samples ? arc_px * j / samples : 0.0;
    const double fwd = radius * std::sin(u / radius);
    const double lat = radius * (1.0 - std::cos(u / radius));
    const Vec2 in_plane = body.base + h * fwd + n * (lat * c);
    body.body2d.push_back(in_plane);
    body.body3d.push_back({in_plane.x, in_plane.y, lat * sn});
  }
  const double end_angle = arc_px / radius;
  body.tip_direction = (h * std::cos(end_angle) + n * (std::sin(end_angle) * c)).normalized();
  body.in_plane_offset_px = (body.body2d.back() - body.base).dot(n);
  return body;
}

PitchEstimate pitch_from_distance(double d_signed_px, double d_max_px) {
  PitchEstimate out;
  double r = d_signed_px / d_max_px;
  if (r > 1.0 || r < -1.0) {
    out.clamped = true;
    r = std::clamp(r, -1.0, 1.0);
  }
  out.theta_deg = rad2deg(std::acos(r));
  return out;
}

double actuator_command(double theta_pitch_deg, double current_roll_deg) {
  return wrap_deg(theta_pitch_deg - current_roll_deg);
}

double alignment_pitch(Vec2 shaft_tangent, Vec2 branch_tangent) {
  const Vec2 h = shaft_tangent.normalized();
  const Vec2 d = branch_tangent.normalized();
  const Vec2 n = positive_normal(h);
  const double beta = rad2deg(std::atan2(n.dot(d), h.dot(d)));
  return beta >= 0.0 ? beta : 180.0 + beta;
}

}  // namespace cathnav::kinematics
