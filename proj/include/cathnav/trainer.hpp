#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cathnav/correction.hpp"
#include "cathnav/env.hpp"
#include "cathnav/expert.hpp"
#include "cathnav/fuzzy.hpp"
#include "cathnav/nn.hpp"

namespace cathnav::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Sac, SacGail, SacEil, SacEilGail };
std::string to_string(Mode m);
Mode parse_mode(const std::string& s);
bool uses_gail(Mode m);
bool uses_eil(Mode m);

struct ScheduleParams {
  int T = 300;
  double k = 0.05;
  double delta = 0.05;
  int warmup = 50;
};

struct Weights {
  double w_sac = 1.0;
  double w_gail = 0.0;
  double alpha = 0.0;  // schedule sigmoid
};

// alpha(t) = 1 / (1 + exp(-k (t - T/2))), w_sac = 1 - alpha/2, w_gail = alpha/2.
Weights schedule_weights(double t, const ScheduleParams& p);

constexpr double kDiscClamp = 1e-6;
// -log(1 - D) with D clamped to [1e-6, 1 - 1e-6].
double gail_reward(double d);
double gail_reward(const nn::Mlp& disc, const Observation& s, const std::array<double, kActDim>& a);

// w_sac(t) r_sac + w_gail(t) r_gail + U(-delta, delta).
double blended_reward(double r_sac, double r_gail, double t, const ScheduleParams& p, std::mt19937_64& rng);

struct Transition {
  Observation s{};
  std::array<double, kActDim> a{};
  double r_env = 0.0;
  Observation s2{};
  bool done = false;
  int episode = 0;
  int step = 0;
  bool expert = false;
  // blend fixed when the transition is stored; r_gail is recomputed at sample time
  double w_sac = 1.0;
  double w_gail = 0.0;
  double noise = 0.0;
  std::uint64_t tag = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 50000);

  void push(Transition t);  // assigns the tag
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const;
  std::uint64_t pushed() const { return next_tag_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::uint64_t next_tag_ = 0;
  std::vector<Transition> data_;
};

struct TrainerConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  std::size_t batch = 128;
  std::size_t replay_capacity = 50000;
  int updates_per_step = 1;
  int disc_updates_per_step = 1;
  int hidden = 64;
  double init_alpha = 0.2;
  bool auto_alpha = true;
  double target_entropy = -static_cast<double>(kActDim);
  double reward_scale = 1.0;
  int random_steps = 0;  // uniform random actions before the policy takes over
  ScheduleParams schedule;
  int demo_episodes = 20;
  double demo_roll_jitter_deg = 30.0;
  fuzzy::Controller controller;
  fuzzy::Tolerances tolerances;
  imaging::PipelineConfig pipeline;
  expert::ExpertConfig expert;
};

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;  // -mean log pi
};

struct DiscLosses {
  double loss = 0.0;
  double demo_mean = 0.0;
  double agent_mean = 0.0;
};

using SaPair = std::pair<Observation, std::array<double, kActDim>>;

class Trainer {
 public:
  Trainer(TrainerConfig cfg, Mode mode, std::uint64_t seed);

  const TrainerConfig& config() const { return cfg_; }
  Mode mode() const { return mode_; }
  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& rng() { return rng_; }

  Action act(const Observation& s, bool deterministic = false);

  // Reward fed to the critics: the stored blend with a fresh r_gail, scaled.
  double training_reward(const Transition& t) const;

  SacLosses sac_update(const std::vector<const Transition*>& batch);
  DiscLosses discriminator_update(const std::vector<SaPair>& agent, const std::vector<SaPair>& demo);

  // One round of updates after an env step, when the buffers allow it.
  void update_after_step(int episode);

  double alpha() const { return std::exp(log_alpha_); }
  long disc_evaluations() const { return disc_evals_; }

  nn::Mlp actor, q1, q2, q1_targ, q2_targ, disc;
  ReplayBuffer replay;
  expert::DemoStore demos;
  long total_steps = 0;

 private:
  double disc_prob(const Observation& s, const std::array<double, kActDim>& a) const;

  TrainerConfig cfg_;
  Mode mode_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  double log_alpha_;
  nn::Adam actor_opt_, q1_opt_, q2_opt_, disc_opt_, alpha_opt_;
  mutable long disc_evals_ = 0;
};

struct CorrectionSegment {
  int bifurcation = -1;
  expert::Source source = expert::Source::Oracle;
  Vec2 p_target;
  double d_target_px = 0.0;
  int iterations = 0;
  bool converged = false;
  bool corrected = false;  // false when only measured (non-EIL episode)
  double pose_error_px = 0.0;
};

struct EpisodeLog {
  int episode = 0;
  Mode mode = Mode::Sac;
  std::uint64_t seed = 0;
  int steps = 0;
  double cumulative_reward = 0.0;
  bool success = false;
  Termination cause = Termination::None;
  double pose_error_px = 0.0;  // mean over segments; NaN when no bifurcation event
  double wallclock_s = 0.0;
  double w_sac = 1.0;
  double w_gail = 0.0;
  std::vector<CorrectionSegment> segments;
};

// Reset seed of an episode in a run.
std::uint64_t episode_seed(std::uint64_t run_seed, int episode);

EpisodeLog run_episode(Trainer& trainer, CatheterEnv& env, expert::Gateway& gateway, int episode);

// Pre-generates oracle demonstrations when the mode uses GAIL.
void seed_demonstrations(Trainer& trainer, const VesselMap& map, const EnvConfig& env_cfg);

using EpisodeCallback = std::function<void(const EpisodeLog&)>;
std::vector<EpisodeLog> train(Trainer& trainer, CatheterEnv& env, expert::Gateway& gateway,
                              const EpisodeCallback& on_episode = {});

void save_trainer_checkpoint(const Trainer& trainer, const std::filesystem::path& path);

std::string metrics_header();
std::string metrics_row(const EpisodeLog& log);

}  // namespace cathnav::train
