#include "cathnav/env.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace cathnav {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::None: return "none";
    case Termination::Success: return "success";
    case Termination::PushLimit: return "push_limit";
    case Termination::StepLimit: return "step_limit";
    case Termination::OutOfBounds: return "out_of_bounds";
  }
  return "none";
}

void EnvConfig::validate() const {
  catheter.validate();
  if (canvas_width <= 0 || canvas_height <= 0) throw EnvError("canvas dimensions must be positive");
  if (!(push_mm_per_step > 0 && roll_deg_per_step > 0)) throw EnvError("action scales must be positive");
  if (initial_insertion_mm < 0) throw EnvError("initial insertion must be >= 0");
  if (max_steps <= 0) throw EnvError("max_steps must be positive");
  if (!(trigger_radius_px > 0)) throw EnvError("trigger radius must be positive");
  if (!(oob_x_min < oob_x_max)) throw EnvError("out-of-bounds limits are inverted");
}

imaging::EntrySide nearest_side(Vec2 p, int width, int height) {
  const double d[4] = {p.x, (width - 1) - p.x, p.y, (height - 1) - p.y};
  const imaging::EntrySide sides[4] = {imaging::EntrySide::Left, imaging::EntrySide::Right, imaging::EntrySide::Top,
                                       imaging::EntrySide::Bottom};
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (d[i] < d[best]) best = i;
  return sides[best];
}

CatheterEnv::CatheterEnv(VesselMap map, EnvConfig cfg) : map_(std::move(map)), cfg_(cfg) {
  cfg_.validate();
  validate(map_);
  route_ = plan_route(map_);
  route_poly_ = path_polyline(route_);
  entry_side_ = nearest_side(map_.nodes[map_.entry], cfg_.canvas_width, cfg_.canvas_height);
  state_.path = {route_.front()};
  state_.fired.assign(map_.bifurcations.size(), 0);
  apply_pose(solve(cfg_.initial_insertion_mm, 0.0, state_.path));
}

Polyline2 CatheterEnv::path_polyline(const std::vector<int>& path) const {
  Polyline2 out;
  for (int e : path) {
    const auto& pl = map_.edges[e].polyline;
    out.insert(out.end(), out.empty() ? pl.begin() : pl.begin() + 1, pl.end());
  }
  return out;
}

CatheterEnv::Pose CatheterEnv::solve(double insertion_mm, double roll_deg, std::vector<int> path) const {
  const auto& cat = cfg_.catheter;
  const double arc_px_full = cat.distal_segment_px();
  insertion_mm = std::clamp(insertion_mm, 0.0, cat.total_length_mm);
  auto base_of = [&](double ins_mm) {
    const double px = ins_mm * cat.px_per_mm;
    return px - std::min(px, arc_px_full);
  };

  Polyline2 poly = path_polyline(path);
  double s_base = base_of(insertion_mm);

  // retracting the arc base behind a node releases the committed daughter
  auto prefix_len = [&]() {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) len += polyline_length(map_.edges[path[i]].polyline);
    return len;
  };
  bool popped = false;
  while (path.size() > 1 && s_base <= prefix_len()) {
    path.pop_back();
    popped = true;
  }
  if (popped) poly = path_polyline(path);

  // crossing a node commits to the daughter the tip points along
  double len = polyline_length(poly);
  while (s_base > len) {
    const int node = map_.edges[path.back()].to;
    const auto outs = map_.outgoing(node);
    if (outs.empty()) break;
    const double ins_at_node = (len + arc_px_full) / cat.px_per_mm;
    const auto at_node = kinematics::body_polyline(cat, ins_at_node, roll_deg, poly);
    int best = outs.front();
    double best_dot = -2.0;
    for (int e : outs) {
      const double d = tangent_at(map_.edges[e].polyline, 0.0).dot(at_node.tip_direction);
      if (d > best_dot) {
        best_dot = d;
        best = e;
      }
    }
    path.push_back(best);
    poly = path_polyline(path);
    len = polyline_length(poly);
  }

  // dead end: the tip stops at the vessel end
  if (map_.outgoing(map_.edges[path.back()].to).empty()) {
    const double s_max = std::max(0.0, len - cat.arc_forward_px());
    if (s_base > s_max) {
      s_base = s_max;
      insertion_mm = (s_max + arc_px_full) / cat.px_per_mm;
    }
  }

  const auto body = kinematics::body_polyline(cat, insertion_mm, roll_deg, poly);
  Pose p;
  p.insertion_mm = insertion_mm;
  p.path = std::move(path);
  p.base = body.base;
  p.shaft_tangent = body.shaft_tangent;
  p.tip_direction = body.tip_direction;
  p.body.reserve(body.body2d.size());
  for (auto v : body.body2d) p.body.push_back(map_.project_into_lumen(v));
  p.tip = p.body.back();
  p.d_px = (p.tip - p.base).dot(positive_normal(p.shaft_tangent));
  return p;
}

void CatheterEnv::apply_pose(const Pose& p) {
  state_.insertion_mm = p.insertion_mm;
  state_.body = p.body;
  state_.tip = p.tip;
  state_.base = p.base;
  state_.shaft_tangent = p.shaft_tangent;
  state_.d_px = p.d_px;
  state_.path = p.path;
}

Observation CatheterEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double roll = 0.0;
  if (cfg_.reset_roll_jitter_deg > 0.0) {
    std::uniform_real_distribution<double> u(-cfg_.reset_roll_jitter_deg, cfg_.reset_roll_jitter_deg);
    roll = u(rng);
  }
  state_ = CatheterState{};
  state_.roll_deg = wrap_deg(roll);
  state_.fired.assign(map_.bifurcations.size(), 0);
  apply_pose(solve(cfg_.initial_insertion_mm, state_.roll_deg, {route_.front()}));
  dist_at_reset_ = std::max(distance(state_.tip, map_.target.center), 1.0);
  return observe();
}

void CatheterEnv::set_pose(double insertion_mm, double roll_deg) {
  state_.roll_deg = wrap_deg(roll_deg);
  apply_pose(solve(insertion_mm, state_.roll_deg, state_.path));
}

StepOutcome CatheterEnv::step(const Action& a, StepKind kind) {
  if (state_.done) throw EnvError("step called on a terminal state");
  const double push = std::clamp(a.push, -1.0, 1.0);
  const double roll = std::clamp(a.roll, -1.0, 1.0);
  const double push_mm = push * cfg_.push_mm_per_step;

  state_.push_total_mm += std::abs(push_mm);
  state_.roll_deg = wrap_deg(state_.roll_deg + roll * cfg_.roll_deg_per_step);
  apply_pose(solve(state_.insertion_mm + push_mm, state_.roll_deg, state_.path));
  if (kind == StepKind::Agent) ++state_.step_count;

  StepOutcome out;
  Termination cause = Termination::None;
  if (state_.push_total_mm > cfg_.push_limit_mm)
    cause = Termination::PushLimit;
  else if (state_.tip.x < cfg_.oob_x_min || state_.tip.x > cfg_.oob_x_max)
    cause = Termination::OutOfBounds;
  else if (state_.step_count > cfg_.max_steps)
    cause = Termination::StepLimit;
  else if (distance(state_.tip, map_.target.center) <= map_.target.radius)
    cause = Termination::Success;

  state_.cause = cause;
  state_.done = cause != Termination::None;
  out.cause = cause;
  out.done = state_.done;
  if (cause == Termination::Success)
    out.reward = cfg_.success_reward;
  else if (state_.done)
    out.reward = cfg_.failure_reward;
  else
    out.reward = shaped_reward();
  out.obs = observe();
  return out;
}

int CatheterEnv::next_route_bifurcation() const {
  for (std::size_t i = 0; i + 1 < route_.size(); ++i) {
    const int node = map_.edges[route_[i]].to;
    const int b = map_.bifurcation_index(node);
    if (b < 0) continue;
    if (state_.path.size() > i + 1) continue;  // base already past this node
    return b;
  }
  return -1;
}

double CatheterEnv::alignment_pitch_at(int bifurcation) const {
  const auto& b = map_.bifurcations.at(bifurcation);
  const auto daughter = route_daughter(map_, route_, b.node);
  if (!daughter) throw EnvError("route does not pass bifurcation " + std::to_string(bifurcation));
  const auto& parent = map_.edges[b.parent_edge].polyline;
  const Vec2 h = tangent_at(parent, polyline_length(parent));
  const Vec2 d = tangent_at(map_.edges[*daughter].polyline, 0.0);
  return kinematics::alignment_pitch(h, d);
}

double CatheterEnv::rotation_error_deg() const {
  const int b = next_route_bifurcation();
  if (b < 0) return 0.0;
  // roll and -roll project to the same planar shape
  return std::abs(std::abs(wrap_deg(state_.roll_deg)) - alignment_pitch_at(b));
}

double CatheterEnv::shaped_reward() const {
  const double dist = distance(state_.tip, map_.target.center) / dist_at_reset_;
  return -cfg_.w_d * dist - cfg_.w_rot * rotation_error_deg() / 90.0 - cfg_.c_step;
}

double CatheterEnv::route_arclength_to_node(int node) const {
  double s = 0.0;
  for (int e : route_) {
    s += polyline_length(map_.edges[e].polyline);
    if (map_.edges[e].to == node) return s;
  }
  throw EnvError("node " + std::to_string(node) + " is not on the route");
}

Observation CatheterEnv::observe() const {
  Observation o{};
  const double w = cfg_.canvas_width, h = cfg_.canvas_height;
  o[0] = state_.tip.x / w;
  o[1] = state_.tip.y / h;
  o[2] = state_.d_px / d_max_px();
  const Vec2 to_target = map_.target.center - state_.tip;
  const Vec2 u = to_target.normalized();
  o[3] = u.x;
  o[4] = u.y;
  o[5] = to_target.norm() / dist_at_reset_;
  const int b = next_route_bifurcation();
  const double diag = std::hypot(w, h);
  o[6] = b < 0 ? 1.0 : std::min(distance(state_.tip, map_.nodes[map_.bifurcations[b].node]) / diag, 1.0);
  o[7] = state_.insertion_mm * cfg_.catheter.px_per_mm / polyline_length(route_poly_);
  return o;
}

imaging::BinaryImage CatheterEnv::render(const Polyline2& body) const {
  imaging::BinaryImage img(cfg_.canvas_width, cfg_.canvas_height);
  const double r = cfg_.catheter.tube_radius_px;
  auto paint = [&](Vec2 a, Vec2 b) {
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r)));
    const int c1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r)));
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r)));
    const int r1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r)));
    for (int row = r0; row <= r1; ++row)
      for (int col = c0; col <= c1; ++col)
        if (distance_to_segment({double(col), double(row)}, a, b) <= r) img.set(col, row, 1);
  };
  if (body.size() == 1) paint(body[0], body[0]);
  for (std::size_t i = 1; i < body.size(); ++i) paint(body[i - 1], body[i]);
  return img;
}

imaging::BinaryImage CatheterEnv::render_mask() const { return render(state_.body); }

std::optional<BifurcationEvent> CatheterEnv::peek_bifurcation() const {
  for (int b = 0; b < static_cast<int>(map_.bifurcations.size()); ++b) {
    if (state_.fired[b]) continue;
    const auto& bf = map_.bifurcations[b];
    if (!route_daughter(map_, route_, bf.node)) continue;
    const double d = distance(state_.tip, map_.nodes[bf.node]);
    if (d <= cfg_.trigger_radius_px) return BifurcationEvent{b, bf.node, d, bf.daughters};
  }
  return std::nullopt;
}

std::optional<BifurcationEvent> CatheterEnv::detect_bifurcation() {
  auto ev = peek_bifurcation();
  if (ev) state_.fired[ev->bifurcation] = 1;
  return ev;
}

}  // namespace cathnav
