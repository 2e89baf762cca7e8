#pragma once

#include <cstdint>
#include <vector>

#include "cathnav/env.hpp"
#include "cathnav/expert.hpp"
#include "cathnav/fuzzy.hpp"

namespace cathnav {

// Drives the env with expert steps and measures the pose from the rendered
// mask, recording every (observation, action) pair it applies.
class EnvPlant : public fuzzy::CorrectionPlant {
 public:
  EnvPlant(CatheterEnv& env, imaging::PipelineConfig pipeline);

  fuzzy::MeasuredPose measure() override;
  double roll_deg() const override { return env_.state().roll_deg; }
  bool actuate(double push, double roll) override;

  struct Applied {
    Observation s{};
    Action a;
    StepOutcome out;
  };
  const std::vector<Applied>& applied() const { return applied_; }
  const std::vector<fuzzy::MeasuredPose>& measured() const { return measured_; }

 private:
  CatheterEnv& env_;
  imaging::PipelineConfig pipeline_;
  std::vector<Applied> applied_;
  std::vector<fuzzy::MeasuredPose> measured_;
};

// Pipeline settings matched to the env's canvas entry side.
imaging::PipelineConfig pipeline_for(const CatheterEnv& env, imaging::PipelineConfig base = {});

// Pose measured from the current mask.
fuzzy::MeasuredPose measure_pose(const CatheterEnv& env, const imaging::PipelineConfig& pipeline);

fuzzy::CorrectionTarget correction_target(const expert::TargetPose& t);

// Pose error in pixels used by the accuracy metric: |P_t - P| + |D_t - D|.
double pose_error_px(const fuzzy::MeasuredPose& m, const expert::TargetPose& t);

// Correction runs from random starts around the oracle target of the first
// bifurcation: insertion offset uniform in +-max_trans_mm, roll offset
// uniform in +-max_rot_deg.
struct CorrectionTrial {
  double start_trans_mm = 0.0;
  double start_rot_deg = 0.0;
  fuzzy::CorrectionResult result;
};
std::vector<CorrectionTrial> correction_trials(const VesselMap& map, int trials, std::uint64_t seed,
                                               double max_trans_mm = 15.0, double max_rot_deg = 40.0,
                                               const fuzzy::Controller& ctl = {}, const fuzzy::Tolerances& tol = {});

}  // namespace cathnav
