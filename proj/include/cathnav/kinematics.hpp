#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "cathnav/geometry.hpp"

namespace cathnav::kinematics {

class KinematicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Catheter with a straight shaft and a constant-curvature distal bend.
struct CatheterConfig {
  double total_length_mm = 1000.0;
  double distal_bend_angle_deg = 30.0;
  double distal_segment_mm = 15.0;
  double tube_radius_px = 3.0;
  double px_per_mm = 215.0 / 25.0;
  int arc_samples = 24;
  double shaft_spacing_px = 2.0;

  double bend_radius_mm() const { return distal_segment_mm / deg2rad(distal_bend_angle_deg); }
  // Lateral tip offset of the fully inserted bend, i.e. the largest |D|.
  double d_max_px() const;
  // Distance the tip sits ahead of the arc base along the shaft axis.
  double arc_forward_px() const;
  double distal_segment_px() const { return distal_segment_mm * px_per_mm; }

  void validate() const;
};

// Tip endpoint in the canonical shaft frame: x along the shaft, (y, z) lateral.
struct TipFrame {
  Vec3 p;
};

// Canonical frame of a fully inserted bend at zero roll: z = 0, y = D_max.
TipFrame canonical_tip(const CatheterConfig& cfg);

// Rotate about the shaft (x) axis.
TipFrame rotate_about_shaft(const TipFrame& tip, double theta_deg);

// |y cos(theta) - z sin(theta)|: in-plane distance of the rotated tip from the axis.
double rotated_offset(const TipFrame& tip, double theta_deg);

// Per-point curvature |g' x g''| / |g'|^3 with chord-length parameterisation,
// central differences inside and one-sided three-point stencils at the ends.
// Throws KinematicsError for fewer than 3 points or repeated points.
std::vector<double> curvature(std::span<const Vec3> pts);
std::vector<double> curvature(std::span<const Vec2> pts);

struct CatheterBody {
  std::vector<Vec3> body3d;  // px, z out of the image plane
  Polyline2 body2d;          // projection, starts at the route origin
  Vec2 base;                 // start of the distal arc
  Vec2 shaft_tangent;        // route tangent at the arc base
  Vec2 tip_direction;        // projected unit tangent at the tip
  double arc_length_px = 0.0;
  // Signed offset of the tip from the shaft line through the base; this is
  // D_max * cos(roll) for a fully inserted bend.
  double in_plane_offset_px = 0.0;
  std::size_t arc_begin = 0;  // index of the arc base in body2d
};

// Shaft follows the route centerline; the distal arc leaves it at
// insertion - distal_segment and is rolled by roll_deg about the local axis.
// Throws KinematicsError when the shaft would run past the route end.
CatheterBody body_polyline(const CatheterConfig& cfg, double insertion_mm, double roll_deg,
                           std::span<const Vec2> route);

struct PitchEstimate {
  double theta_deg = 0.0;  // in [0, 180]
  bool clamped = false;
};

// Inverse of D = D_max cos(theta).
PitchEstimate pitch_from_distance(double d_signed_px, double d_max_px);

// Smallest signed roll increment, in (-180, 180], taking current roll to the pitch.
double actuator_command(double theta_pitch_deg, double current_roll_deg);

// Pitch in [0, 180] whose bend points the tip along branch_tangent when the
// shaft runs along shaft_tangent: the signed branch angle toward the positive
// normal for branches on that side, 180 minus its magnitude otherwise.
double alignment_pitch(Vec2 shaft_tangent, Vec2 branch_tangent);

}  // namespace cathnav::kinematics
