#include "cathnav/fuzzy.hpp"

#include <algorithm>
#include <cmath>

namespace cathnav::fuzzy {

namespace {
constexpr std::array<std::string_view, kLabels> kNames = {"NL", "NS", "Z", "PS", "PL"};
}

std::string_view to_string(Label l) { return kNames[static_cast<int>(l)]; }

Label parse_label(std::string_view s) {
  for (int i = 0; i < kLabels; ++i)
    if (kNames[i] == s) return static_cast<Label>(i);
  throw FuzzyError("unknown fuzzy label '" + std::string(s) + "'");
}

Family make_family(const std::array<double, kLabels>& centers, double half_width) {
  Family f;
  for (int i = 0; i < kLabels; ++i) f[i] = {static_cast<Label>(i), centers[i], half_width};
  validate(f);
  return f;
}

Family translation_family() { return make_family({-2.0, -1.0, 0.0, 1.0, 2.0}, 1.0); }
Family rotation_family() { return make_family({-60.0, -30.0, 0.0, 30.0, 60.0}, 30.0); }

void validate(const Family& f) {
  for (int i = 0; i < kLabels; ++i) {
    if (!(f[i].half_width > 0.0)) throw FuzzyError("fuzzy set " + std::string(to_string(f[i].label)) + ": half-width must be positive");
    if (f[i].label != static_cast<Label>(i)) throw FuzzyError("fuzzy family labels must be NL, NS, Z, PS, PL in order");
    if (i > 0 && !(f[i].center > f[i - 1].center)) throw FuzzyError("fuzzy centres must be strictly increasing");
  }
}

double membership(double e, const FuzzySet& set) {
  const double d = std::abs(e - set.center);
  if (d >= set.half_width) return 0.0;
  return 1.0 - d / set.half_width;
}

Memberships fuzzify(double e, const Family& family) {
  Memberships mu{};
  for (int i = 0; i < kLabels; ++i) mu[i] = membership(e, family[i]);
  return mu;
}

RuleBase RuleBase::diagonal() {
  RuleBase rb;
  for (int t = 0; t < kLabels; ++t)
    for (int r = 0; r < kLabels; ++r) rb.table[t][r] = {static_cast<Label>(t), static_cast<Label>(r)};
  return rb;
}

Inference infer(const Memberships& mu_trans, const Memberships& mu_rot, const RuleBase& rules) {
  Inference out;
  for (int t = 0; t < kLabels; ++t) {
    for (int r = 0; r < kLabels; ++r) {
      const double w = std::min(mu_trans[t], mu_rot[r]);
      if (w <= 0.0) continue;
      const auto& c = rules.table[t][r];
      auto& p = out.push[static_cast<int>(c.push)];
      auto& q = out.roll[static_cast<int>(c.roll)];
      p = std::max(p, w);
      q = std::max(q, w);
    }
  }
  return out;
}

std::optional<double> defuzzify(const Memberships& mu, const Family& out) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < kLabels; ++i) {
    num += mu[i] * out[i].center;
    den += mu[i];
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

Controller::Output Controller::evaluate(double e_trans_cm, double e_rot_deg) const {
  if (saturate_inputs) {
    e_trans_cm = std::clamp(e_trans_cm, trans_in.front().center, trans_in.back().center);
    e_rot_deg = std::clamp(e_rot_deg, rot_in.front().center, rot_in.back().center);
  }
  const Memberships mt = fuzzify(e_trans_cm, trans_in);
  const Memberships mr = fuzzify(e_rot_deg, rot_in);
  const Inference inf = infer(mt, mr, rules);
  return {defuzzify(inf.push, rules.push_out), defuzzify(inf.roll, rules.roll_out)};
}

PoseError pose_error(const MeasuredPose& current, const CorrectionTarget& target, double d_max_px,
                     const imaging::Calibration& cal) {
  PoseError e;
  const Vec2 delta = target.p_target - current.tip;
  const double sign = delta.dot(target.advance_direction) >= 0.0 ? 1.0 : -1.0;
  e.e_trans_cm = sign * delta.norm() * cal.cm_per_px();
  const double full_deg = cal.e_px_range * cal.deg_per_px;
  e.e_rot_deg = (target.d_target_px - current.d_px) * full_deg / d_max_px;
  return e;
}

CorrectionCommand correction_step(const Controller& ctl, const PoseError& err, double current_roll_deg,
                                  const ActionScale& scale) {
  const auto out = ctl.evaluate(err.e_trans_cm, err.e_rot_deg);
  CorrectionCommand cmd;
  if (!out.push_cm || !out.roll_deg) {
    cmd.no_action = true;
    return cmd;
  }
  const double push_mm = *out.push_cm * 10.0;
  const double roll = wrap_deg(current_roll_deg);
  const double side = (roll >= 0.0 && roll <= 180.0) ? 1.0 : -1.0;
  const double roll_inc = -side * *out.roll_deg;
  cmd.push = std::clamp(push_mm / scale.push_mm_per_step, -1.0, 1.0);
  cmd.roll = std::clamp(roll_inc / scale.roll_deg_per_step, -1.0, 1.0);
  return cmd;
}

CorrectionResult run_correction_loop(CorrectionPlant& plant, const CorrectionTarget& target, const Controller& ctl,
                                     const Tolerances& tol, double d_max_px, const ActionScale& scale,
                                     const imaging::Calibration& cal) {
  CorrectionResult res;
  auto within = [&](const PoseError& e) {
    return std::abs(e.e_trans_cm) < tol.trans_cm && std::abs(e.e_rot_deg) < tol.rot_deg;
  };
  MeasuredPose pose = plant.measure();
  PoseError err = pose_error(pose, target, d_max_px, cal);
  res.trace.push_back(err);
  while (!within(err) && res.iterations < tol.max_iters) {
    const auto cmd = correction_step(ctl, err, plant.roll_deg(), scale);
    if (cmd.no_action) break;
    ++res.iterations;
    if (!plant.actuate(cmd.push, cmd.roll)) {
      res.plant_stopped = true;
      break;
    }
    pose = plant.measure();
    err = pose_error(pose, target, d_max_px, cal);
    res.trace.push_back(err);
  }
  res.final_pose = pose;
  res.converged = within(err);
  return res;
}

}  // namespace cathnav::fuzzy
