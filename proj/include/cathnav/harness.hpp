#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cathnav/env.hpp"
#include "cathnav/gateway.hpp"
#include "cathnav/trainer.hpp"
#include "cathnav/vessel_map.hpp"

namespace cathnav::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // exactly one of phantom (path) or fixture (built-in name)
  std::filesystem::path phantom;
  std::string fixture;
  std::vector<train::Mode> modes{train::Mode::Sac};
  std::vector<std::uint64_t> seeds{0};
  EnvConfig env;
  train::TrainerConfig trainer;
  GatewayConfig gateway;
  std::filesystem::path output_dir = "out";
  bool save_checkpoints = true;

  void validate() const;
};

// Relative paths in the file resolve against the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
VesselMap load_map(const ExperimentConfig& cfg);

struct MetricsReport {
  int episodes = 0;
  int raw_successes = 0;
  int stable_successes = 0;
  double success_rate = 0.0;      // flanked rule
  double raw_success_rate = 0.0;
  double avg_steps = 0.0;         // successful episodes
  double avg_time_s = 0.0;        // all episodes
  double avg_time_to_convergence_s = 0.0;
  double avg_error_px = 0.0;      // successful episodes with a bifurcation event; NaN if none
  std::optional<int> convergence_episode;
};

constexpr int kFlank = 5;
constexpr int kConvergenceRun = 2 * kFlank + 1;

std::vector<bool> stable_successes(const std::vector<bool>& raw);
std::optional<int> convergence_episode(const std::vector<bool>& raw);
MetricsReport compute_metrics(const std::vector<train::EpisodeLog>& log);

struct RunResult {
  train::Mode mode = train::Mode::Sac;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool aborted = false;
  std::string error;
  std::vector<train::EpisodeLog> log;
  MetricsReport metrics;
};

// One training run; writes metrics.csv, report.txt and the checkpoint into dir.
RunResult run_training(const ExperimentConfig& cfg, const VesselMap& map, train::Mode mode, std::uint64_t seed,
                       const std::filesystem::path& dir, expert::Gateway* gateway = nullptr);

struct ModeSummary {
  train::Mode mode = train::Mode::Sac;
  int runs = 0;
  int aborted = 0;
  int converged = 0;
  double median_convergence_episode = 0.0;  // a run that never converges counts as T
  double median_success_rate = 0.0;
  double median_raw_success_rate = 0.0;
  double median_avg_steps = 0.0;
  double median_avg_error_px = 0.0;
  double median_avg_time_s = 0.0;
};

struct SuiteResult {
  std::vector<RunResult> runs;
  std::vector<ModeSummary> summary;
};

double median(std::vector<double> v);

// Every (mode, seed) pair under output_dir/<mode>/seed_<n>, per-mode CSV and
// summary.txt / summary.csv at the top. A failed run is recorded and skipped.
SuiteResult run_suite(const ExperimentConfig& cfg, const std::function<void(const std::string&)>& progress = {});

std::string format_report(const MetricsReport& m);
std::string format_summary(const std::vector<ModeSummary>& s);

// Recomputes the report from a metrics.csv written by run_training.
std::vector<train::EpisodeLog> read_metrics_csv(const std::filesystem::path& path);

void write_fixture(const std::string& name, const std::filesystem::path& path);

}  // namespace cathnav::harness
