#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "cathnav/env.hpp"
#include "cathnav/expert.hpp"

using namespace cathnav;

namespace {

double local_clearance(const VesselMap& m, Vec2 p) { return m.lumen_clearance(p); }

double distance_to_polyline(Vec2 p, const Polyline2& pl) {
  double best = 1e300;
  for (std::size_t i = 1; i < pl.size(); ++i) best = std::min(best, distance_to_segment(p, pl[i - 1], pl[i]));
  return best;
}

}  // namespace

TEST_CASE("reset is deterministic and well formed") {
  for (const char* name : {"straight", "y_bifurcation", "renal_two_level"}) {
    CatheterEnv env(make_fixture(name));
    const Observation a = env.reset(7);
    const Observation b = env.reset(7);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(a)) == 0);
    CHECK(env.state().step_count == 0);
    CHECK_FALSE(env.state().done);
    CHECK(env.state().roll_deg == 0.0);
    CHECK(env.state().insertion_mm == env.config().initial_insertion_mm);
    const auto& parent = env.map().edges[env.route().front()];
    CHECK(distance_to_polyline(env.state().tip, parent.polyline) <= 0.5 * parent.radius);
    for (double v : a) CHECK(std::isfinite(v));
  }
}

TEST_CASE("trajectories are bit identical for a fixed seed and action sequence") {
  EnvConfig cfg;
  cfg.reset_roll_jitter_deg = 180.0;
  auto run = [&] {
    CatheterEnv env(make_fixture("renal_two_level"), cfg);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> trace;
    env.reset(11);
    while (!env.state().done) {
      const auto o = env.step({u(rng), u(rng)});
      trace.push_back(o.reward);
      trace.insert(trace.end(), o.obs.begin(), o.obs.end());
      const auto img = env.render_mask();
      trace.push_back(static_cast<double>(img.count()));
    }
    return trace;
  };
  const auto a = run(), b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("push limit terminates with the failure reward") {
  CatheterEnv env(make_fixture("straight"));
  env.reset(0);
  for (int i = 0; i < 49; ++i) env.step({i % 2 == 0 ? 1.0 : -1.0, 0.0}, StepKind::Expert);
  env.step({0.9, 0.0}, StepKind::Expert);
  CHECK(env.state().push_total_mm == doctest::Approx(499.0));
  CHECK(env.state().step_count == 0);
  const auto o = env.step({0.2, 0.0});
  CHECK(o.done);
  CHECK(o.cause == Termination::PushLimit);
  CHECK(o.reward == -150.0);
  CHECK_THROWS_AS(env.step({0.0, 0.0}), EnvError);
}

TEST_CASE("zero action leaves the geometry and charges the step cost") {
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  env.step({1.0, 0.5});
  const auto before = env.state();
  const auto o = env.step({0.0, 0.0});
  CHECK(env.state().step_count == before.step_count + 1);
  CHECK(env.state().tip.x == before.tip.x);
  CHECK(env.state().tip.y == before.tip.y);
  CHECK(env.state().body.size() == before.body.size());
  CHECK(o.reward < 0.0);
  CHECK(o.reward == doctest::Approx(env.shaped_reward()));
}

TEST_CASE("shaped reward formula") {
  CatheterEnv env(make_fixture("straight"));
  env.reset(0);
  const double d0 = distance(env.state().tip, env.map().target.center);
  CHECK(env.dist_at_reset() == doctest::Approx(d0));
  CHECK(env.shaped_reward() == doctest::Approx(-1.0 - 0.1));
  // no bifurcation on the straight tube, so e_rot = 0; push until about half way
  const auto& cat = env.config().catheter;
  env.set_pose(env.state().insertion_mm + 0.5 * d0 / cat.px_per_mm, 0.0);
  const double frac = distance(env.state().tip, env.map().target.center) / d0;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.02));
  CHECK(env.shaped_reward() == doctest::Approx(-frac - 0.1));
}

TEST_CASE("episodes end with exactly one cause and bounded rewards") {
  EnvConfig cfg;
  cfg.reset_roll_jitter_deg = 180.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int causes[5] = {0, 0, 0, 0, 0};
  for (const char* name : {"straight", "y_bifurcation", "renal_two_level"}) {
    CatheterEnv env(make_fixture(name), cfg);
    for (int ep = 0; ep < 30; ++ep) {
      env.reset(ep);
      StepOutcome o;
      while (!env.state().done) {
        const bool push = ep % 3 == 0;
        o = env.step({push ? 1.0 : u(rng), u(rng)});
        CHECK(o.done == (o.cause != Termination::None));
        CHECK(env.state().step_count <= env.config().max_steps + 1);
        if (!o.done) {
          CHECK(env.state().step_count <= env.config().max_steps);
          CHECK(std::isfinite(o.reward));
          CHECK(o.reward <= 0.0);
          const double diag = std::hypot(cfg.canvas_width, cfg.canvas_height);
          CHECK(o.reward >= -(cfg.w_d * diag / env.dist_at_reset() + cfg.w_rot * 2.0 + cfg.c_step));
          CHECK(local_clearance(env.map(), env.state().tip) <= 1e-6);
        }
      }
      ++causes[static_cast<int>(o.cause)];
      if (o.cause == Termination::Success)
        CHECK(o.reward == 100.0);
      else
        CHECK(o.reward == -150.0);
    }
  }
  CHECK(causes[0] == 0);
  CHECK(causes[static_cast<int>(Termination::StepLimit)] > 0);
}

TEST_CASE("oracle action reaches the target on every fixture") {
  for (const char* name : {"straight", "y_bifurcation", "renal_two_level"}) {
    CatheterEnv env(make_fixture(name));
    env.reset(0);
    while (!env.state().done) env.step(expert::oracle_action(env));
    INFO(name);
    CHECK(env.state().cause == Termination::Success);
  }
}

TEST_CASE("bifurcation events fire once per episode") {
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  CHECK_FALSE(env.detect_bifurcation().has_value());
  std::optional<BifurcationEvent> ev;
  while (!(ev = env.detect_bifurcation())) env.step({1.0, 0.0});
  CHECK(ev->bifurcation == 0);
  CHECK(ev->distance_px <= env.config().trigger_radius_px);
  CHECK(ev->daughters == std::vector<int>{1, 2});
  CHECK_FALSE(env.detect_bifurcation().has_value());
  CHECK_FALSE(env.peek_bifurcation().has_value());
  env.reset(0);
  env.step({1.0, 0.0});
  CHECK_FALSE(env.peek_bifurcation().has_value());
  while (!env.peek_bifurcation()) env.step({1.0, 0.0});
  const auto at = env.peek_bifurcation();
  CHECK(at->distance_px == doctest::Approx(distance(env.state().tip, env.map().nodes[at->node])));
}

TEST_CASE("zero insertion renders only the entry stub") {
  CatheterEnv env(make_fixture("straight"));
  env.reset(0);
  env.set_pose(0.0, 0.0);
  const auto img = env.render_mask();
  CHECK(img.count() < 40);
}

TEST_CASE("configuration validation") {
  EnvConfig cfg;
  cfg.max_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), EnvError);
  EnvConfig ok;
  CHECK_NOTHROW(ok.validate());
  CHECK(to_string(Termination::PushLimit) == "push_limit");
  CHECK(to_string(Termination::OutOfBounds) == "out_of_bounds");
}
