#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cathnav/geometry.hpp"
#include "cathnav/imaging.hpp"

namespace cathnav::fuzzy {

class FuzzyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label : int { NL = 0, NS, Z, PS, PL };
constexpr int kLabels = 5;

std::string_view to_string(Label l);
Label parse_label(std::string_view s);

struct FuzzySet {
  Label label = Label::Z;
  double center = 0.0;
  double half_width = 1.0;
};

using Family = std::array<FuzzySet, kLabels>;
using Memberships = std::array<double, kLabels>;

// Five triangular sets NL..PL at the given centres sharing one half-width.
Family make_family(const std::array<double, kLabels>& centers, double half_width);
Family translation_family();  // cm
Family rotation_family();     // degrees
void validate(const Family& f);

// Triangular membership: 1 at the centre, 0 at and beyond centre +- half-width.
double membership(double e, const FuzzySet& set);
Memberships fuzzify(double e, const Family& family);

struct Consequent {
  Label push = Label::Z;
  Label roll = Label::Z;
};

struct RuleBase {
  // table[translation label][rotation label]
  std::array<std::array<Consequent, kLabels>, kLabels> table{};
  Family push_out = translation_family();
  Family roll_out = rotation_family();

  // Decoupled proportional table: push follows the translation label, roll
  // follows the rotation label.
  static RuleBase diagonal();
};

struct Inference {
  Memberships push{};
  Memberships roll{};
};

// Rule strength = min of the antecedents; each output set takes the max
// strength over the rules that fire into it.
Inference infer(const Memberships& mu_trans, const Memberships& mu_rot, const RuleBase& rules);

// Centroid sum(mu m) / sum(mu). nullopt when every membership is zero.
std::optional<double> defuzzify(const Memberships& mu, const Family& out);

struct Controller {
  Family trans_in = translation_family();
  Family rot_in = rotation_family();
  RuleBase rules = RuleBase::diagonal();
  // Clamp crisp inputs to the span of the input centres so large errors
  // saturate instead of falling off the outermost sets.
  bool saturate_inputs = true;

  struct Output {
    std::optional<double> push_cm;
    std::optional<double> roll_deg;
  };
  Output evaluate(double e_trans_cm, double e_rot_deg) const;
};

struct PoseError {
  double e_trans_cm = 0.0;
  double e_rot_deg = 0.0;
};

struct MeasuredPose {
  Vec2 tip;
  double d_px = 0.0;
};

struct CorrectionTarget {
  double d_target_px = 0.0;
  Vec2 p_target;
  // Unit direction of travel; e_trans is positive when the target lies ahead.
  Vec2 advance_direction{1.0, 0.0};
};

// e_trans = |P_t - P_c| in cm, signed by the advance direction;
// e_rot = (D_t - D_c) mapped onto the [0, 90] degree span of the calibration
// with D_max playing the role of the full pixel range.
PoseError pose_error(const MeasuredPose& current, const CorrectionTarget& target, double d_max_px,
                     const imaging::Calibration& cal = {});

struct ActionScale {
  double push_mm_per_step = 10.0;
  double roll_deg_per_step = 30.0;
};

struct CorrectionCommand {
  double push = 0.0;  // normalized action in [-1, 1]
  double roll = 0.0;
  bool no_action = false;
};

// One controller evaluation mapped onto normalized env actions. The roll
// sign depends on the side of the roll circle: on [0, 180] raising D means
// lowering roll.
CorrectionCommand correction_step(const Controller& ctl, const PoseError& err, double current_roll_deg,
                                  const ActionScale& scale = {});

// Anything that can be measured and actuated by the loop; the env adapter
// renders and re-estimates the pose in measure().
class CorrectionPlant {
 public:
  virtual ~CorrectionPlant() = default;
  virtual MeasuredPose measure() = 0;
  virtual double roll_deg() const = 0;
  // Applies a normalized action; returns false once the plant can no longer
  // be driven (episode ended).
  virtual bool actuate(double push, double roll) = 0;
};

struct Tolerances {
  double trans_cm = 0.2;
  double rot_deg = 5.0;
  int max_iters = 50;
};

struct CorrectionResult {
  MeasuredPose final_pose;
  int iterations = 0;
  bool converged = false;
  bool plant_stopped = false;
  std::vector<PoseError> trace;  // error before each iteration, plus the final one
};

CorrectionResult run_correction_loop(CorrectionPlant& plant, const CorrectionTarget& target, const Controller& ctl,
                                     const Tolerances& tol, double d_max_px, const ActionScale& scale = {},
                                     const imaging::Calibration& cal = {});

}  // namespace cathnav::fuzzy
