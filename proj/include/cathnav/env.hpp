#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cathnav/geometry.hpp"
#include "cathnav/imaging.hpp"
#include "cathnav/kinematics.hpp"
#include "cathnav/vessel_map.hpp"

namespace cathnav {

class EnvError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Termination { None, Success, PushLimit, StepLimit, OutOfBounds };
std::string to_string(Termination t);

struct EnvConfig {
  int canvas_width = 960;
  int canvas_height = 720;
  kinematics::CatheterConfig catheter;
  double push_mm_per_step = 10.0;
  double roll_deg_per_step = 30.0;
  double initial_insertion_mm = 20.0;
  double reset_roll_jitter_deg = 0.0;  // uniform +- jitter on the reset roll
  int max_steps = 20;
  double push_limit_mm = 500.0;
  double oob_x_min = 10.0;
  double oob_x_max = 900.0;
  double success_reward = 100.0;
  double failure_reward = -150.0;
  double w_d = 1.0;
  double w_rot = 0.5;
  double c_step = 0.1;
  double trigger_radius_px = 70.0;

  void validate() const;
};

constexpr int kObsDim = 8;
constexpr int kActDim = 2;
using Observation = std::array<double, kObsDim>;

struct Action {
  double push = 0.0;
  double roll = 0.0;
};

struct CatheterState {
  double insertion_mm = 0.0;
  double roll_deg = 0.0;
  Polyline2 body;          // projected, lumen-clipped
  Vec2 tip;
  Vec2 base;               // start of the distal arc
  Vec2 shaft_tangent;
  double d_px = 0.0;       // signed tip offset from the shaft line at the base
  int step_count = 0;
  double push_total_mm = 0.0;
  std::vector<int> path;   // committed edges from the entry
  std::vector<char> fired; // per bifurcation: event already raised
  bool done = false;
  Termination cause = Termination::None;
};

struct StepOutcome {
  Observation obs{};
  double reward = 0.0;
  bool done = false;
  Termination cause = Termination::None;
};

struct BifurcationEvent {
  int bifurcation = 0;  // index into VesselMap::bifurcations
  int node = 0;
  double distance_px = 0.0;
  std::vector<int> daughters;
};

// Agent steps count against the step budget; expert correction steps do not.
enum class StepKind { Agent, Expert };

class CatheterEnv {
 public:
  CatheterEnv(VesselMap map, EnvConfig cfg = {});

  const VesselMap& map() const { return map_; }
  const EnvConfig& config() const { return cfg_; }
  const std::vector<int>& route() const { return route_; }
  const CatheterState& state() const { return state_; }
  double d_max_px() const { return cfg_.catheter.d_max_px(); }
  double dist_at_reset() const { return dist_at_reset_; }
  imaging::EntrySide entry_side() const { return entry_side_; }

  Observation reset(std::uint64_t seed);
  StepOutcome step(const Action& a, StepKind kind = StepKind::Agent);

  // Places the catheter directly (used by the oracle and by tests); the
  // episode counters are left untouched.
  void set_pose(double insertion_mm, double roll_deg);

  Observation observe() const;
  imaging::BinaryImage render_mask() const;
  std::optional<BifurcationEvent> detect_bifurcation();
  // Same test without consuming the event.
  std::optional<BifurcationEvent> peek_bifurcation() const;

  // Shaped reward of the current non-terminal state.
  double shaped_reward() const;
  // Roll error toward the alignment pitch of the next route bifurcation not
  // yet passed; 0 when none remains.
  double rotation_error_deg() const;
  // Map index of the first route bifurcation the arc base has not crossed,
  // or -1.
  int next_route_bifurcation() const;
  // Alignment pitch for the route daughter at a route bifurcation.
  double alignment_pitch_at(int bifurcation) const;

  // Arc length along the route to a node, and the route polyline.
  double route_arclength_to_node(int node) const;
  const Polyline2& route_polyline() const { return route_poly_; }

  // Geometry of a hypothetical (insertion, roll) along a committed path
  // without touching the env state.
  struct Pose {
    Polyline2 body;
    Vec2 tip;
    Vec2 base;
    Vec2 shaft_tangent;
    Vec2 tip_direction;
    double d_px = 0.0;
    std::vector<int> path;
    double insertion_mm = 0.0;
  };
  Pose solve(double insertion_mm, double roll_deg, std::vector<int> path) const;

  imaging::BinaryImage render(const Polyline2& body) const;

 private:
  Polyline2 path_polyline(const std::vector<int>& path) const;
  void apply_pose(const Pose& p);

  VesselMap map_;
  EnvConfig cfg_;
  std::vector<int> route_;
  Polyline2 route_poly_;
  CatheterState state_;
  double dist_at_reset_ = 1.0;
  imaging::EntrySide entry_side_ = imaging::EntrySide::Right;
};

// Nearest canvas edge to a point.
imaging::EntrySide nearest_side(Vec2 p, int width, int height);

}  // namespace cathnav
