#include "cathnav/correction.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace cathnav {

imaging::PipelineConfig pipeline_for(const CatheterEnv& env, imaging::PipelineConfig base) {
  base.entry_side = env.entry_side();
  return base;
}

fuzzy::MeasuredPose measure_pose(const CatheterEnv& env, const imaging::PipelineConfig& pipeline) {
  const auto pose = imaging::estimate_tip_pose(env.render_mask(), pipeline);
  return {pose.tip, pose.d};
}

EnvPlant::EnvPlant(CatheterEnv& env, imaging::PipelineConfig pipeline) : env_(env), pipeline_(pipeline) {}

fuzzy::MeasuredPose EnvPlant::measure() {
  measured_.push_back(measure_pose(env_, pipeline_));
  return measured_.back();
}

bool EnvPlant::actuate(double push, double roll) {
  if (env_.state().done) return false;
  Applied rec;
  rec.s = env_.observe();
  // record what the env executes
  rec.a = {std::clamp(push, -1.0, 1.0), std::clamp(roll, -1.0, 1.0)};
  rec.out = env_.step(rec.a, StepKind::Expert);
  applied_.push_back(rec);
  return !rec.out.done;
}

fuzzy::CorrectionTarget correction_target(const expert::TargetPose& t) {
  return {t.d_target_px, t.p_target, t.advance_direction};
}

double pose_error_px(const fuzzy::MeasuredPose& m, const expert::TargetPose& t) {
  return distance(m.tip, t.p_target) + std::abs(t.d_target_px - m.d_px);
}

std::vector<CorrectionTrial> correction_trials(const VesselMap& map, int trials, std::uint64_t seed,
                                               double max_trans_mm, double max_rot_deg, const fuzzy::Controller& ctl,
                                               const fuzzy::Tolerances& tol) {
  CatheterEnv env(map);
  env.reset(0);
  std::optional<BifurcationEvent> ev;
  while (!(ev = env.detect_bifurcation())) {
    if (env.state().done) throw EnvError("the route reaches no bifurcation");
    env.step({1.0, 0.0});
  }
  const expert::ExpertConfig ecfg;
  const auto target = expert::oracle_target_pose(env, *ev, ecfg);
  const double pitch = expert::oracle_roll_deg(env, *ev);
  const auto& cat = env.config().catheter;
  const double s_node = env.route_arclength_to_node(ev->node);
  const double s_base = std::max(0.0, s_node - cat.arc_forward_px() + ecfg.advance_mm * cat.px_per_mm);
  const double target_mm = (s_base + cat.distal_segment_px()) / cat.px_per_mm;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<CorrectionTrial> out;
  for (int i = 0; i < trials; ++i) {
    CorrectionTrial t;
    t.start_trans_mm = u(rng) * max_trans_mm;
    t.start_rot_deg = u(rng) * max_rot_deg;
    env.reset(0);
    env.set_pose(target_mm + t.start_trans_mm, pitch + t.start_rot_deg);
    EnvPlant plant(env, pipeline_for(env));
    t.result = fuzzy::run_correction_loop(plant, correction_target(target), ctl, tol, env.d_max_px());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace cathnav
