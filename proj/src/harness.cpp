#include "cathnav/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cathnav::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads optional keys from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), name_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + name_ + "." + k);
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::string fmt_double(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (phantom.empty() == fixture.empty()) throw ConfigError("set exactly one of phantom or fixture");
  if (!phantom.empty() && !fs::exists(phantom)) throw ConfigError("phantom file not found: " + phantom.string());
  if (modes.empty()) throw ConfigError("modes must not be empty");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (trainer.schedule.T <= 0) throw ConfigError("T must be positive");
  if (trainer.schedule.warmup < 0) throw ConfigError("warmup must be non-negative");
  if (trainer.batch == 0) throw ConfigError("batch must be positive");
  env.validate();
  fuzzy::validate(trainer.controller.trans_in);
  fuzzy::validate(trainer.controller.rot_in);
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section root(j, "config");
  std::string phantom, out_dir = cfg.output_dir.string();
  root.get("phantom", phantom);
  root.get("fixture", cfg.fixture);
  if (!phantom.empty()) cfg.phantom = fs::path(phantom).is_absolute() ? fs::path(phantom) : base_dir / phantom;
  std::vector<std::string> modes;
  root.get("modes", modes);
  if (!modes.empty()) {
    cfg.modes.clear();
    for (const auto& m : modes) {
      try {
        cfg.modes.push_back(train::parse_mode(m));
      } catch (const train::TrainError& e) {
        throw ConfigError(e.what());
      }
    }
  }
  root.get("seeds", cfg.seeds);
  root.get("output_dir", out_dir);
  cfg.output_dir = fs::path(out_dir).is_absolute() ? fs::path(out_dir) : base_dir / out_dir;
  root.get("save_checkpoints", cfg.save_checkpoints);
  auto& sched = cfg.trainer.schedule;
  root.get("T", sched.T);
  root.get("warmup", sched.warmup);

  if (auto s = root.child("env")) {
    auto& e = cfg.env;
    s->get("canvas_width", e.canvas_width);
    s->get("canvas_height", e.canvas_height);
    s->get("push_mm_per_step", e.push_mm_per_step);
    s->get("roll_deg_per_step", e.roll_deg_per_step);
    s->get("initial_insertion_mm", e.initial_insertion_mm);
    s->get("reset_roll_jitter_deg", e.reset_roll_jitter_deg);
    s->get("max_steps", e.max_steps);
    s->get("push_limit_mm", e.push_limit_mm);
    s->get("oob_x_min", e.oob_x_min);
    s->get("oob_x_max", e.oob_x_max);
    s->get("success_reward", e.success_reward);
    s->get("failure_reward", e.failure_reward);
    s->get("w_d", e.w_d);
    s->get("w_rot", e.w_rot);
    s->get("c_step", e.c_step);
    s->get("trigger_radius_px", e.trigger_radius_px);
    if (auto c = s->child("catheter")) {
      auto& k = e.catheter;
      c->get("total_length_mm", k.total_length_mm);
      c->get("distal_bend_angle_deg", k.distal_bend_angle_deg);
      c->get("distal_segment_mm", k.distal_segment_mm);
      c->get("tube_radius_px", k.tube_radius_px);
      c->get("px_per_mm", k.px_per_mm);
      c->get("arc_samples", k.arc_samples);
      c->get("shaft_spacing_px", k.shaft_spacing_px);
      c->finish();
    }
    s->finish();
  }
  if (auto s = root.child("sac")) {
    auto& t = cfg.trainer;
    s->get("gamma", t.gamma);
    s->get("tau", t.tau);
    s->get("lr", t.lr);
    s->get("batch", t.batch);
    s->get("replay_capacity", t.replay_capacity);
    s->get("updates_per_step", t.updates_per_step);
    s->get("hidden", t.hidden);
    s->get("init_alpha", t.init_alpha);
    s->get("auto_alpha", t.auto_alpha);
    s->get("target_entropy", t.target_entropy);
    s->get("reward_scale", t.reward_scale);
    s->get("random_steps", t.random_steps);
    s->finish();
  }
  if (auto s = root.child("gail")) {
    s->get("k", sched.k);
    s->get("delta", sched.delta);
    s->get("disc_updates_per_step", cfg.trainer.disc_updates_per_step);
    s->get("demo_episodes", cfg.trainer.demo_episodes);
    s->get("demo_roll_jitter_deg", cfg.trainer.demo_roll_jitter_deg);
    s->finish();
  }
  if (auto s = root.child("fuzzy")) {
    double ts = 2.0, tw = 1.0, rs = 60.0, rw = 30.0;
    s->get("trans_span_cm", ts);
    s->get("trans_half_width_cm", tw);
    s->get("rot_span_deg", rs);
    s->get("rot_half_width_deg", rw);
    auto& c = cfg.trainer.controller;
    c.trans_in = fuzzy::make_family({-ts, -ts / 2, 0.0, ts / 2, ts}, tw);
    c.rot_in = fuzzy::make_family({-rs, -rs / 2, 0.0, rs / 2, rs}, rw);
    c.rules.push_out = c.trans_in;
    c.rules.roll_out = c.rot_in;
    s->get("saturate_inputs", c.saturate_inputs);
    auto& tol = cfg.trainer.tolerances;
    s->get("trans_tol_cm", tol.trans_cm);
    s->get("rot_tol_deg", tol.rot_deg);
    s->get("max_iters", tol.max_iters);
    s->finish();
  }
  if (auto s = root.child("pipeline")) {
    auto& p = cfg.trainer.pipeline;
    s->get("sg_window", p.sg_window);
    s->get("sg_order", p.sg_order);
    s->get("proximal_fraction", p.proximal_fraction);
    s->get("refine_tip", p.refine_tip);
    s->finish();
  }
  if (auto s = root.child("expert")) {
    s->get("advance_mm", cfg.trainer.expert.advance_mm);
    s->finish();
  }
  if (auto s = root.child("gateway")) {
    std::string kind = to_string(cfg.gateway.kind);
    s->get("kind", kind);
    try {
      cfg.gateway.kind = parse_gateway_kind(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    s->get("port", cfg.gateway.port);
    s->get("deadline_ms", cfg.gateway.deadline_ms);
    s->get("heartbeat_ms", cfg.gateway.heartbeat_ms);
    s->finish();
  }
  root.finish();
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

VesselMap load_map(const ExperimentConfig& cfg) {
  return cfg.fixture.empty() ? load_vessel_map(cfg.phantom) : make_fixture(cfg.fixture);
}

std::vector<bool> stable_successes(const std::vector<bool>& raw) {
  const int n = static_cast<int>(raw.size());
  std::vector<bool> out(raw.size(), false);
  // length of the raw-success run ending at each index
  std::vector<int> run(raw.size(), 0);
  for (int i = 0; i < n; ++i) run[i] = raw[i] ? (i > 0 ? run[i - 1] : 0) + 1 : 0;
  for (int e = kFlank; e + kFlank < n; ++e) out[e] = run[e + kFlank] >= kConvergenceRun;
  return out;
}

std::optional<int> convergence_episode(const std::vector<bool>& raw) {
  int run = 0;
  for (int i = 0; i < static_cast<int>(raw.size()); ++i) {
    run = raw[i] ? run + 1 : 0;
    if (run == kConvergenceRun) return i - kConvergenceRun + 1;
  }
  return std::nullopt;
}

MetricsReport compute_metrics(const std::vector<train::EpisodeLog>& log) {
  if (log.empty()) throw ConfigError("cannot compute metrics of an empty log");
  MetricsReport m;
  m.episodes = static_cast<int>(log.size());
  std::vector<bool> raw;
  raw.reserve(log.size());
  for (const auto& l : log) raw.push_back(l.success);
  const auto stable = stable_successes(raw);
  m.raw_successes = static_cast<int>(std::count(raw.begin(), raw.end(), true));
  m.stable_successes = static_cast<int>(std::count(stable.begin(), stable.end(), true));
  m.success_rate = static_cast<double>(m.stable_successes) / m.episodes;
  m.raw_success_rate = static_cast<double>(m.raw_successes) / m.episodes;
  m.convergence_episode = convergence_episode(raw);

  double steps = 0.0, time = 0.0, err = 0.0;
  int n_err = 0;
  for (const auto& l : log) {
    time += l.wallclock_s;
    if (!l.success) continue;
    steps += l.steps;
    if (!std::isnan(l.pose_error_px)) {
      err += l.pose_error_px;
      ++n_err;
    }
  }
  m.avg_steps = m.raw_successes ? steps / m.raw_successes : std::numeric_limits<double>::quiet_NaN();
  m.avg_time_s = time / m.episodes;
  m.avg_error_px = n_err ? err / n_err : std::numeric_limits<double>::quiet_NaN();
  const int until = m.convergence_episode ? *m.convergence_episode + 1 : m.episodes;
  double t_conv = 0.0;
  for (int i = 0; i < until; ++i) t_conv += log[i].wallclock_s;
  m.avg_time_to_convergence_s = t_conv / until;
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string format_report(const MetricsReport& m) {
  std::ostringstream s;
  s << "episodes " << m.episodes << "\n"
    << "raw_successes " << m.raw_successes << "\n"
    << "stable_successes " << m.stable_successes << "\n"
    << "success_rate " << fmt_double(m.success_rate) << "\n"
    << "raw_success_rate " << fmt_double(m.raw_success_rate) << "\n"
    << "avg_steps " << fmt_double(m.avg_steps) << "\n"
    << "avg_error_px " << fmt_double(m.avg_error_px) << "\n"
    << "convergence_episode " << (m.convergence_episode ? std::to_string(*m.convergence_episode) : "none") << "\n"
    << "avg_time_s " << fmt_double(m.avg_time_s) << "\n"
    << "avg_time_to_convergence_s " << fmt_double(m.avg_time_to_convergence_s) << "\n";
  return s.str();
}

RunResult run_training(const ExperimentConfig& cfg, const VesselMap& map, train::Mode mode, std::uint64_t seed,
                       const fs::path& dir, expert::Gateway* gateway) {
  RunResult r;
  r.mode = mode;
  r.seed = seed;
  r.dir = dir;
  fs::create_directories(dir);
  std::unique_ptr<expert::Gateway> owned;
  if (!gateway) {
    owned = make_gateway(cfg.gateway, cfg.trainer.expert);
    gateway = owned.get();
  }
  std::ofstream csv(dir / "metrics.csv", std::ios::trunc);
  if (!csv) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
  csv << train::metrics_header() << "\n";

  CatheterEnv env(map, cfg.env);
  train::Trainer trainer(cfg.trainer, mode, seed);
  const fs::path demo_file = dir / "demos.jsonl";
  fs::remove(demo_file);
  trainer.demos = expert::DemoStore(demo_file);
  train::seed_demonstrations(trainer, map, cfg.env);
  r.log = train::train(trainer, env, *gateway, [&](const train::EpisodeLog& l) {
    csv << train::metrics_row(l) << "\n";
    csv.flush();
  });
  if (cfg.save_checkpoints) train::save_trainer_checkpoint(trainer, dir / "model.bin");
  r.metrics = compute_metrics(r.log);
  std::ofstream(dir / "report.txt") << format_report(r.metrics);
  return r;
}

SuiteResult run_suite(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  const VesselMap map = load_map(cfg);
  fs::create_directories(cfg.output_dir);
  std::unique_ptr<expert::Gateway> gateway = make_gateway(cfg.gateway, cfg.trainer.expert);
  SuiteResult suite;
  for (auto mode : cfg.modes) {
    const std::string name = train::to_string(mode);
    std::ofstream mode_csv(cfg.output_dir / (name + ".csv"), std::ios::trunc);
    mode_csv << train::metrics_header() << "\n";
    ModeSummary ms;
    ms.mode = mode;
    std::vector<double> conv, rate, raw_rate, steps, err, time;
    for (auto seed : cfg.seeds) {
      const fs::path dir = cfg.output_dir / name / ("seed_" + std::to_string(seed));
      RunResult r;
      try {
        r = run_training(cfg, map, mode, seed, dir, gateway.get());
      } catch (const std::exception& e) {
        r.mode = mode;
        r.seed = seed;
        r.dir = dir;
        r.aborted = true;
        r.error = e.what();
        fs::create_directories(dir);
        std::ofstream(dir / "error.txt") << r.error << "\n";
      }
      ++ms.runs;
      if (r.aborted) {
        ++ms.aborted;
        if (progress) progress(name + " seed " + std::to_string(seed) + " aborted: " + r.error);
      } else {
        for (const auto& l : r.log) mode_csv << train::metrics_row(l) << "\n";
        const auto& m = r.metrics;
        if (m.convergence_episode) ++ms.converged;
        // a run that never converges counts as converging at T
        conv.push_back(m.convergence_episode ? *m.convergence_episode : cfg.trainer.schedule.T);
        rate.push_back(m.success_rate);
        raw_rate.push_back(m.raw_success_rate);
        if (!std::isnan(m.avg_steps)) steps.push_back(m.avg_steps);
        if (!std::isnan(m.avg_error_px)) err.push_back(m.avg_error_px);
        time.push_back(m.avg_time_s);
        if (progress)
          progress(name + " seed " + std::to_string(seed) + ": convergence " +
                   (m.convergence_episode ? std::to_string(*m.convergence_episode) : "none") + ", success " +
                   fmt_double(m.success_rate, 4) + ", error " + fmt_double(m.avg_error_px, 2) + " px");
      }
      suite.runs.push_back(std::move(r));
    }
    ms.median_convergence_episode = median(conv);
    ms.median_success_rate = median(rate);
    ms.median_raw_success_rate = median(raw_rate);
    ms.median_avg_steps = median(steps);
    ms.median_avg_error_px = median(err);
    ms.median_avg_time_s = median(time);
    suite.summary.push_back(ms);
  }

  std::ofstream sum_csv(cfg.output_dir / "summary.csv", std::ios::trunc);
  sum_csv << "mode,runs,aborted,converged,median_convergence_episode,median_success_rate,median_raw_success_rate,"
             "median_avg_steps,median_avg_error_px\n";
  for (const auto& s : suite.summary)
    sum_csv << train::to_string(s.mode) << "," << s.runs << "," << s.aborted << "," << s.converged << ","
            << fmt_double(s.median_convergence_episode) << "," << fmt_double(s.median_success_rate) << ","
            << fmt_double(s.median_raw_success_rate) << "," << fmt_double(s.median_avg_steps) << ","
            << fmt_double(s.median_avg_error_px) << "\n";
  std::ofstream(cfg.output_dir / "summary.txt") << format_summary(suite.summary);
  return suite;
}

std::string format_summary(const std::vector<ModeSummary>& summary) {
  std::ostringstream s;
  s << "mode          runs conv  median_conv_ep  success  raw_success  avg_steps  avg_error_px  avg_time_s\n";
  for (const auto& m : summary) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-13s %4d %4d  %14s  %7s  %11s  %9s  %12s  %10s\n",
                  train::to_string(m.mode).c_str(), m.runs, m.converged,
                  fmt_double(m.median_convergence_episode, 1).c_str(), fmt_double(m.median_success_rate, 4).c_str(),
                  fmt_double(m.median_raw_success_rate, 4).c_str(), fmt_double(m.median_avg_steps, 2).c_str(),
                  fmt_double(m.median_avg_error_px, 2).c_str(), fmt_double(m.median_avg_time_s, 3).c_str());
    s << line;
  }
  return s.str();
}

std::vector<train::EpisodeLog> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != train::metrics_header())
    throw ConfigError(path.string() + ": unexpected header");
  std::vector<train::EpisodeLog> out;
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw ConfigError(path.string() + ":" + std::to_string(no) + ": expected 11 fields");
    try {
      train::EpisodeLog l;
      l.episode = std::stoi(f[0]);
      l.mode = train::parse_mode(f[1]);
      l.seed = std::stoull(f[2]);
      l.steps = std::stoi(f[3]);
      l.cumulative_reward = std::stod(f[4]);
      l.success = f[5] == "1";
      l.pose_error_px = f[7] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[7]);
      l.wallclock_s = std::stod(f[8]);
      l.w_sac = std::stod(f[9]);
      l.w_gail = std::stod(f[10]);
      for (auto t : {Termination::None, Termination::Success, Termination::PushLimit, Termination::StepLimit,
                     Termination::OutOfBounds})
        if (to_string(t) == f[6]) l.cause = t;
      out.push_back(l);
    } catch (const std::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

void write_fixture(const std::string& name, const fs::path& path) {
  const std::string text = serialize_vessel_map(make_fixture(name));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace cathnav::harness
