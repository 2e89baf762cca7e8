#include "cathnav/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cathnav::train {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::Sac: return "sac";
    case Mode::SacGail: return "sac-gail";
    case Mode::SacEil: return "sac-eil";
    case Mode::SacEilGail: return "sac-eil-gail";
  }
  return "sac";
}

Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Sac, Mode::SacGail, Mode::SacEil, Mode::SacEilGail})
    if (to_string(m) == s) return m;
  throw TrainError("unknown mode '" + s + "' (expected sac, sac-gail, sac-eil, sac-eil-gail)");
}

bool uses_gail(Mode m) { return m == Mode::SacGail || m == Mode::SacEilGail; }
bool uses_eil(Mode m) { return m == Mode::SacEil || m == Mode::SacEilGail; }

Weights schedule_weights(double t, const ScheduleParams& p) {
  Weights w;
  w.alpha = 1.0 / (1.0 + std::exp(-p.k * (t - p.T / 2.0)));
  w.w_gail = 0.5 * w.alpha;
  w.w_sac = 1.0 - w.w_gail;
  return w;
}

double gail_reward(double d) {
  d = std::clamp(d, kDiscClamp, 1.0 - kDiscClamp);
  return -std::log(1.0 - d);
}

namespace {

std::array<double, kObsDim + kActDim> concat(const Observation& s, const std::array<double, kActDim>& a) {
  std::array<double, kObsDim + kActDim> x{};
  std::copy(s.begin(), s.end(), x.begin());
  std::copy(a.begin(), a.end(), x.begin() + kObsDim);
  return x;
}

std::array<double, kActDim> to_array(const std::vector<double>& v) {
  std::array<double, kActDim> a{};
  std::copy_n(v.begin(), kActDim, a.begin());
  return a;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainError(std::string("non-finite ") + what + " during update");
}

}  // namespace

double gail_reward(const nn::Mlp& disc, const Observation& s, const std::array<double, kActDim>& a) {
  const auto x = concat(s, a);
  return gail_reward(nn::sigmoid(disc.forward(x)[0]));
}

double blended_reward(double r_sac, double r_gail, double t, const ScheduleParams& p, std::mt19937_64& rng) {
  const Weights w = schedule_weights(t, p);
  double eps = 0.0;
  if (p.delta > 0.0) eps = std::uniform_real_distribution<double>(-p.delta, p.delta)(rng);
  return w.w_sac * r_sac + w.w_gail * r_gail + eps;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw TrainError("replay capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::push(Transition t) {
  t.tag = next_tag_++;
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw TrainError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> u(0, data_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &data_[u(rng)];
  return out;
}

Trainer::Trainer(TrainerConfig cfg, Mode mode, std::uint64_t seed)
    : replay(cfg.replay_capacity), cfg_(cfg), mode_(mode), seed_(seed), rng_(seed) {
  const int h = cfg_.hidden;
  actor = nn::Mlp({kObsDim, h, h, 2 * kActDim});
  q1 = nn::Mlp({kObsDim + kActDim, h, h, 1});
  q2 = nn::Mlp({kObsDim + kActDim, h, h, 1});
  disc = nn::Mlp({kObsDim + kActDim, h, h, 1});
  actor.init(rng_);
  q1.init(rng_);
  q2.init(rng_);
  disc.init(rng_);
  q1_targ = q1;
  q2_targ = q2;
  const nn::AdamParams hp{cfg_.lr};
  actor_opt_ = nn::Adam(actor.param_count(), hp);
  q1_opt_ = nn::Adam(q1.param_count(), hp);
  q2_opt_ = nn::Adam(q2.param_count(), hp);
  disc_opt_ = nn::Adam(disc.param_count(), hp);
  alpha_opt_ = nn::Adam(1, hp);
  if (!(cfg_.init_alpha > 0.0)) throw TrainError("init_alpha must be positive");
  log_alpha_ = std::log(cfg_.init_alpha);
}

Action Trainer::act(const Observation& s, bool deterministic) {
  if (deterministic) {
    const auto a = nn::mean_action(actor, s);
    return {a[0], a[1]};
  }
  std::normal_distribution<double> n(0.0, 1.0);
  const auto head = actor.forward(s);
  std::array<double, kActDim> xi{};
  for (auto& v : xi) v = n(rng_);
  const auto pol = nn::squashed_gaussian(head, xi);
  return {pol.action[0], pol.action[1]};
}

double Trainer::disc_prob(const Observation& s, const std::array<double, kActDim>& a) const {
  ++disc_evals_;
  return nn::sigmoid(disc.forward(concat(s, a))[0]);
}

double Trainer::training_reward(const Transition& t) const {
  double r = t.w_sac * t.r_env + t.noise;
  if (t.w_gail > 0.0) r += t.w_gail * gail_reward(disc_prob(t.s, t.a));
  return r * cfg_.reward_scale;
}

SacLosses Trainer::sac_update(const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw TrainError("empty SAC batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double alpha = std::exp(log_alpha_);
  std::normal_distribution<double> normal(0.0, 1.0);
  SacLosses losses;

  // critics
  std::vector<double> g1(q1.param_count(), 0.0), g2(q2.param_count(), 0.0);
  nn::Mlp::Tape ta, tb;
  for (const Transition* t : batch) {
    double y = training_reward(*t);
    if (!t->done) {
      const auto head = actor.forward(t->s2);
      std::array<double, kActDim> xi{};
      for (auto& v : xi) v = normal(rng_);
      const auto pol = nn::squashed_gaussian(head, xi);
      const auto x2 = concat(t->s2, to_array(pol.action));
      const double qa = q1_targ.forward(x2)[0];
      const double qb = q2_targ.forward(x2)[0];
      y += cfg_.gamma * (std::min(qa, qb) - alpha * pol.log_prob);
    }
    const auto x = concat(t->s, t->a);
    const double v1 = q1.forward(x, ta)[0];
    const double v2 = q2.forward(x, tb)[0];
    const double d1 = (v1 - y) * inv_b, d2 = (v2 - y) * inv_b;
    q1.backward(ta, std::array{d1}, g1);
    q2.backward(tb, std::array{d2}, g2);
    losses.critic1 += 0.5 * (v1 - y) * (v1 - y) * inv_b;
    losses.critic2 += 0.5 * (v2 - y) * (v2 - y) * inv_b;
  }
  check_finite(losses.critic1, "critic loss");
  check_finite(losses.critic2, "critic loss");
  q1_opt_.step(q1.params, g1);
  q2_opt_.step(q2.params, g2);

  // actor: minimise alpha log pi - min Q through the reparameterised sample
  std::vector<double> ga(actor.param_count(), 0.0);
  std::vector<double> scratch;
  double g_log_alpha = 0.0;
  nn::Mlp::Tape tp, t1, t2;
  for (const Transition* t : batch) {
    const auto head = actor.forward(t->s, tp);
    std::array<double, kActDim> xi{};
    for (auto& v : xi) v = normal(rng_);
    const auto pol = nn::squashed_gaussian(head, xi);
    const auto x = concat(t->s, to_array(pol.action));
    const double v1 = q1.forward(x, t1)[0];
    const double v2 = q2.forward(x, t2)[0];
    const bool first = v1 <= v2;
    scratch.assign(first ? q1.param_count() : q2.param_count(), 0.0);
    const auto dx = first ? q1.backward(t1, std::array{1.0}, scratch) : q2.backward(t2, std::array{1.0}, scratch);
    losses.actor += (alpha * pol.log_prob - std::min(v1, v2)) * inv_b;
    losses.entropy -= pol.log_prob * inv_b;

    std::array<double, 2 * kActDim> dhead{};
    for (int i = 0; i < kActDim; ++i) {
      const double a = pol.action[i];
      const double u = pol.pre_squash[i];
      const double dqda = dx[kObsDim + i];
      const double dl_du = -dqda * std::exp(nn::log1m_tanh_sq(u)) + alpha * 2.0 * a;
      dhead[i] = dl_du * inv_b;
      const double sigma = std::exp(pol.log_std[i]);
      dhead[kActDim + i] = pol.log_std_clamped[i] ? 0.0 : (dl_du * sigma * xi[i] - alpha) * inv_b;
    }
    actor.backward(tp, dhead, ga);
    g_log_alpha -= (pol.log_prob + cfg_.target_entropy) * inv_b;
  }
  check_finite(losses.actor, "actor loss");
  actor_opt_.step(actor.params, ga);

  if (cfg_.auto_alpha) {
    std::vector<double> la{log_alpha_};
    alpha_opt_.step(la, {g_log_alpha});
    log_alpha_ = la[0];
  }
  losses.alpha = std::exp(log_alpha_);

  for (auto [net, targ] : {std::pair{&q1, &q1_targ}, std::pair{&q2, &q2_targ}})
    for (std::size_t i = 0; i < net->params.size(); ++i)
      targ->params[i] = (1.0 - cfg_.tau) * targ->params[i] + cfg_.tau * net->params[i];
  return losses;
}

DiscLosses Trainer::discriminator_update(const std::vector<SaPair>& agent, const std::vector<SaPair>& demo) {
  if (agent.empty() || demo.empty()) throw TrainError("discriminator update needs both batches");
  std::vector<double> g(disc.param_count(), 0.0);
  DiscLosses out;
  nn::Mlp::Tape tape;
  const double inv_d = 1.0 / static_cast<double>(demo.size());
  const double inv_a = 1.0 / static_cast<double>(agent.size());
  for (const auto& [s, a] : demo) {
    const double z = disc.forward(concat(s, a), tape)[0];
    const double p = nn::sigmoid(z);
    ++disc_evals_;
    out.loss -= std::log(std::max(p, 1e-300)) * inv_d;
    out.demo_mean += p * inv_d;
    disc.backward(tape, std::array{(p - 1.0) * inv_d}, g);
  }
  for (const auto& [s, a] : agent) {
    const double z = disc.forward(concat(s, a), tape)[0];
    const double p = nn::sigmoid(z);
    ++disc_evals_;
    out.loss -= std::log(std::max(1.0 - p, 1e-300)) * inv_a;
    out.agent_mean += p * inv_a;
    disc.backward(tape, std::array{p * inv_a}, g);
  }
  check_finite(out.loss, "discriminator loss");
  disc_opt_.step(disc.params, g);
  return out;
}

void Trainer::update_after_step(int episode) {
  if (replay.size() < cfg_.batch) return;
  if (uses_gail(mode_) && episode >= cfg_.schedule.warmup && !demos.empty()) {
    for (int k = 0; k < cfg_.disc_updates_per_step; ++k) {
      std::vector<SaPair> agent, demo;
      std::uniform_int_distribution<std::size_t> ur(0, replay.size() - 1);
      std::uniform_int_distribution<std::size_t> ud(0, demos.size() - 1);
      for (std::size_t i = 0; i < cfg_.batch; ++i) {
        // agent data only; expert correction steps are resampled a few times
        const Transition* t = &replay.at(ur(rng_));
        for (int tries = 0; t->expert && tries < 4; ++tries) t = &replay.at(ur(rng_));
        agent.emplace_back(t->s, t->a);
        const auto& d = demos.records()[ud(rng_)];
        demo.emplace_back(d.s, d.a);
      }
      discriminator_update(agent, demo);
    }
  }
  for (int k = 0; k < cfg_.updates_per_step; ++k) sac_update(replay.sample(cfg_.batch, rng_));
}

std::uint64_t episode_seed(std::uint64_t run_seed, int episode) {
  // splitmix64 finaliser over (run, episode)
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(episode) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

bool committed_past(const CatheterEnv& env, int node) {
  const auto& route = env.route();
  for (std::size_t i = 0; i < route.size(); ++i)
    if (env.map().edges[route[i]].to == node) return env.state().path.size() > i + 1;
  return true;
}

}  // namespace

EpisodeLog run_episode(Trainer& trainer, CatheterEnv& env, expert::Gateway& gateway, int episode) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = trainer.config();
  const Mode mode = trainer.mode();
  const bool after_warmup = episode >= cfg.schedule.warmup;
  const bool gail = uses_gail(mode) && after_warmup;
  const bool eil = uses_eil(mode) && after_warmup;

  EpisodeLog log;
  log.episode = episode;
  log.mode = mode;
  log.seed = trainer.seed();
  const Weights w = gail ? schedule_weights(episode, cfg.schedule) : Weights{};
  log.w_sac = w.w_sac;
  log.w_gail = w.w_gail;

  auto blend = [&](Transition& t) {
    t.w_sac = w.w_sac;
    t.w_gail = w.w_gail;
    if (gail && cfg.schedule.delta > 0.0)
      t.noise = std::uniform_real_distribution<double>(-cfg.schedule.delta, cfg.schedule.delta)(trainer.rng());
  };

  env.reset(episode_seed(trainer.seed(), episode));
  const auto pipeline = pipeline_for(env, cfg.pipeline);
  expert::OracleGateway oracle(cfg.expert);
  const fuzzy::ActionScale scale{env.config().push_mm_per_step, env.config().roll_deg_per_step};

  struct Active {
    std::size_t segment;
    int node;
    expert::TargetPose target;
  };
  std::optional<Active> active;
  auto track = [&]() {
    if (!active) return;
    if (env.state().done || committed_past(env, active->node)) {
      active.reset();
      return;
    }
    auto& seg = log.segments[active->segment];
    try {
      seg.pose_error_px = std::min(seg.pose_error_px, pose_error_px(measure_pose(env, pipeline), active->target));
    } catch (const imaging::ImagingError&) {
      // a retracted catheter can leave too little of the body to measure
    }
  };

  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  while (!env.state().done) {
    if (auto ev = env.detect_bifurcation()) {
      const expert::TargetPose target =
          eil ? gateway.request_target_pose(env, *ev, episode) : oracle.request_target_pose(env, *ev, episode);
      CorrectionSegment seg;
      seg.bifurcation = ev->bifurcation;
      seg.source = target.source;
      seg.p_target = target.p_target;
      seg.d_target_px = target.d_target_px;
      seg.pose_error_px = pose_error_px(measure_pose(env, pipeline), target);
      if (eil) {
        EnvPlant plant(env, pipeline);
        fuzzy::CorrectionResult res;
        try {
          res = fuzzy::run_correction_loop(plant, correction_target(target), cfg.controller, cfg.tolerances,
                                           env.d_max_px(), scale);
        } catch (const imaging::ImagingError&) {
          res.iterations = static_cast<int>(plant.applied().size());  // measurement lost; keep what was applied
        }
        for (const auto& m : plant.measured()) seg.pose_error_px = std::min(seg.pose_error_px, pose_error_px(m, target));
        for (const auto& ap : plant.applied()) {
          Transition tr;
          tr.s = ap.s;
          tr.a = {ap.a.push, ap.a.roll};
          tr.r_env = ap.out.reward;
          tr.s2 = ap.out.obs;
          tr.done = ap.out.done;
          tr.episode = episode;
          tr.step = env.state().step_count;
          tr.expert = true;
          blend(tr);
          trainer.replay.push(tr);
          trainer.demos.append(expert::DemoRecord{ap.s, tr.a, target.source, episode});
        }
        seg.iterations = res.iterations;
        seg.converged = res.converged;
        seg.corrected = true;
      }
      log.segments.push_back(seg);
      active = Active{log.segments.size() - 1, ev->node, target};
      if (env.state().done) break;
    }

    const Observation s = env.observe();
    Action a;
    if (trainer.total_steps < cfg.random_steps)
      a = {uniform(trainer.rng()), uniform(trainer.rng())};
    else
      a = trainer.act(s);
    const StepOutcome out = env.step(a);
    log.cumulative_reward += out.reward;

    Transition tr;
    tr.s = s;
    tr.a = {a.push, a.roll};
    tr.r_env = out.reward;
    tr.s2 = out.obs;
    tr.done = out.done;
    tr.episode = episode;
    tr.step = env.state().step_count;
    blend(tr);
    trainer.replay.push(tr);
    ++trainer.total_steps;
    trainer.update_after_step(episode);
    track();
  }

  log.steps = env.state().step_count;
  log.cause = env.state().cause;
  log.success = log.cause == Termination::Success;
  if (log.segments.empty()) {
    log.pose_error_px = std::numeric_limits<double>::quiet_NaN();
  } else {
    double sum = 0.0;
    for (const auto& s : log.segments) sum += s.pose_error_px;
    log.pose_error_px = sum / static_cast<double>(log.segments.size());
  }
  log.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

void seed_demonstrations(Trainer& trainer, const VesselMap& map, const EnvConfig& env_cfg) {
  if (!uses_gail(trainer.mode()) || trainer.config().demo_episodes <= 0) return;
  EnvConfig c = env_cfg;
  c.reset_roll_jitter_deg = trainer.config().demo_roll_jitter_deg;
  trainer.demos.append(expert::generate_oracle_demos(map, c, trainer.config().demo_episodes,
                                                     episode_seed(trainer.seed() ^ 0xD3A0ULL, 0)));
}

std::vector<EpisodeLog> train(Trainer& trainer, CatheterEnv& env, expert::Gateway& gateway,
                              const EpisodeCallback& on_episode) {
  std::vector<EpisodeLog> logs;
  for (int ep = 0; ep < trainer.config().schedule.T; ++ep) {
    logs.push_back(run_episode(trainer, env, gateway, ep));
    if (on_episode) on_episode(logs.back());
  }
  return logs;
}

void save_trainer_checkpoint(const Trainer& t, const std::filesystem::path& path) {
  nn::save_checkpoint(path, {{"actor", &t.actor},
                             {"q1", &t.q1},
                             {"q2", &t.q2},
                             {"q1_target", &t.q1_targ},
                             {"q2_target", &t.q2_targ},
                             {"discriminator", &t.disc}});
}

std::string metrics_header() {
  return "episode,mode,seed,steps,cumulative_reward,success,termination_cause,bifurcation_pose_error_px,wallclock_s,"
         "w_sac,w_gail";
}

std::string metrics_row(const EpisodeLog& l) {
  char err[64];
  if (std::isnan(l.pose_error_px))
    std::snprintf(err, sizeof(err), "nan");
  else
    std::snprintf(err, sizeof(err), "%.6f", l.pose_error_px);
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%s,%llu,%d,%.6f,%d,%s,%s,%.6f,%.6f,%.6f", l.episode, to_string(l.mode).c_str(),
                static_cast<unsigned long long>(l.seed), l.steps, l.cumulative_reward, l.success ? 1 : 0,
                cathnav::to_string(l.cause).c_str(), err, l.wallclock_s, l.w_sac, l.w_gail);
  return buf;
}

}  // namespace cathnav::train
