#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cathnav/harness.hpp"

namespace fs = std::filesystem;
using namespace cathnav;

namespace {

harness::ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    harness::ExperimentConfig cfg;
    cfg.fixture = "y_bifurcation";
    return cfg;
  }
  return harness::load_config(path);
}

void apply_overrides(harness::ExperimentConfig& cfg, const std::string& mode, const std::vector<std::uint64_t>& seeds,
                     const std::string& out) {
  if (!mode.empty()) cfg.modes = {train::parse_mode(mode)};
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!out.empty()) cfg.output_dir = out;
}

int run_eval(const harness::ExperimentConfig& cfg, const fs::path& checkpoint, int episodes, std::uint64_t seed,
             const fs::path& out) {
  const auto nets = nn::load_checkpoint(checkpoint);
  const nn::Mlp* actor = nullptr;
  for (const auto& [name, net] : nets)
    if (name == "actor") actor = &net;
  if (!actor) throw std::runtime_error(checkpoint.string() + " holds no actor network");
  CatheterEnv env(harness::load_map(cfg), cfg.env);
  fs::create_directories(out);
  std::ofstream csv(out / "eval.csv");
  csv << "episode,seed,steps,cumulative_reward,success,termination_cause\n";
  int wins = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    const auto s = train::episode_seed(seed, ep);
    Observation obs = env.reset(s);
    double total = 0.0;
    while (!env.state().done) {
      const auto a = nn::mean_action(*actor, obs);
      const auto o = env.step({a[0], a[1]});
      obs = o.obs;
      total += o.reward;
    }
    const bool ok = env.state().cause == Termination::Success;
    wins += ok;
    csv << ep << "," << s << "," << env.state().step_count << "," << total << "," << ok << ","
        << to_string(env.state().cause) << "\n";
  }
  std::printf("eval: %d/%d successful episodes\n", wins, episodes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Catheter steering at vascular bifurcations: training, evaluation and experiment tools"};
  app.require_subcommand(1);

  std::string config, mode, out;
  std::vector<std::uint64_t> seeds;

  auto* train_cmd = app.add_subcommand("train", "Train one (mode, seed) run");
  auto* eval_cmd = app.add_subcommand("eval", "Run a saved policy deterministically");
  auto* suite_cmd = app.add_subcommand("suite", "Train every configured mode and seed and summarise");
  auto* fixture_cmd = app.add_subcommand("fixture", "Write a built-in phantom");
  auto* fuzzy_cmd = app.add_subcommand("fuzzy", "Evaluate the fuzzy correction controller");

  for (auto* c : {train_cmd, eval_cmd, suite_cmd}) {
    c->add_option("--config", config, "Experiment config (JSON)");
    c->add_option("--out", out, "Output directory");
  }
  for (auto* c : {train_cmd, eval_cmd, suite_cmd}) c->add_option("--mode", mode, "sac, sac-gail, sac-eil or sac-eil-gail");
  train_cmd->add_option("--seed", seeds, "Seed (repeatable)");
  suite_cmd->add_option("--seed", seeds, "Seed (repeatable)");

  std::string checkpoint;
  int eval_episodes = 20;
  std::uint64_t eval_seed = 1000;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint written by train")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Episodes to run");
  eval_cmd->add_option("--seed", eval_seed, "Seed of the evaluation resets");

  std::string fixture_name, fixture_out;
  fixture_cmd->add_option("name", fixture_name, "straight, y_bifurcation or renal_two_level")->required();
  fixture_cmd->add_option("--out", fixture_out, "Output file (default <name>.phantom)");

  double e_trans = 0.0, e_rot = 0.0;
  fuzzy_cmd->add_option("--config", config, "Experiment config (JSON) for the fuzzy section");
  fuzzy_cmd->add_option("--e-trans", e_trans, "Translation error in cm");
  fuzzy_cmd->add_option("--e-rot", e_rot, "Rotation error in degrees");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fixture_cmd) {
      const fs::path path = fixture_out.empty() ? fs::path(fixture_name + ".phantom") : fs::path(fixture_out);
      harness::write_fixture(fixture_name, path);
      std::printf("wrote %s\n", path.string().c_str());
      return 0;
    }
    if (*fuzzy_cmd) {
      const auto cfg = load_or_default(config);
      const auto o = cfg.trainer.controller.evaluate(e_trans, e_rot);
      auto show = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("none"); };
      std::printf("push_cm %s\nroll_deg %s\n", show(o.push_cm).c_str(), show(o.roll_deg).c_str());
      return 0;
    }
    auto cfg = load_or_default(config);
    apply_overrides(cfg, mode, seeds, out);
    if (*eval_cmd) return run_eval(cfg, checkpoint, eval_episodes, eval_seed, cfg.output_dir);
    if (*train_cmd) {
      if (cfg.modes.size() != 1 || cfg.seeds.size() != 1)
        throw std::runtime_error("train needs exactly one mode and one seed; use suite for sweeps");
      const auto r = harness::run_training(cfg, harness::load_map(cfg), cfg.modes[0], cfg.seeds[0], cfg.output_dir);
      std::cout << harness::format_report(r.metrics);
      return 0;
    }
    const auto suite = harness::run_suite(cfg, [](const std::string& s) { std::printf("%s\n", s.c_str()); });
    std::cout << harness::format_summary(suite.summary);
    for (const auto& r : suite.runs)
      if (r.aborted) return 2;
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
