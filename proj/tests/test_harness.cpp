#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cathnav/harness.hpp"
#include "oracles.hpp"

using namespace cathnav;
using namespace cathnav::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Drops the wallclock column from a metrics CSV.
std::string without_wallclock(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  int col = -1;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (col < 0)
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == "wallclock_s") col = static_cast<int>(i);
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (static_cast<int>(i) != col) out += cells[i] + ",";
    out += "\n";
  }
  return out;
}

ExperimentConfig smoke_config(const fs::path& out) {
  ExperimentConfig cfg = parse_config(R"({
    "fixture": "y_bifurcation",
    "modes": ["sac", "sac-eil-gail"],
    "seeds": [0, 1],
    "T": 10,
    "warmup": 4,
    "save_checkpoints": false,
    "sac": {"batch": 16, "hidden": 16},
    "gail": {"demo_episodes": 2}
  })");
  cfg.output_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("flanking rule matches brute force on random strings") {
  std::mt19937_64 rng(123);
  for (int k = 0; k < 1000; ++k) {
    std::bernoulli_distribution b(0.3 + 0.65 * (k % 10) / 9.0);
    std::vector<bool> raw(300);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = b(rng);
    REQUIRE(stable_successes(raw) == oracle::flanked(raw));
  }
}

TEST_CASE("flanking rule examples") {
  std::vector<bool> all(300, true);
  const auto s = stable_successes(all);
  CHECK(std::count(s.begin(), s.end(), true) == 290);
  CHECK_FALSE(s[4]);
  CHECK(s[5]);
  CHECK(s[294]);
  CHECK_FALSE(s[295]);

  std::vector<bool> alt(300);
  for (int i = 0; i < 300; ++i) alt[i] = i % 2 == 0;
  const auto a = stable_successes(alt);
  CHECK(std::count(a.begin(), a.end(), true) == 0);
  CHECK_FALSE(convergence_episode(alt).has_value());

  std::vector<bool> hole(300, true);
  hole[100] = false;
  const auto h = stable_successes(hole);
  CHECK(std::count(h.begin(), h.end(), true) == 290 - 11);
  for (int e = 95; e <= 105; ++e) CHECK_FALSE(h[e]);
  CHECK(h[94]);
  CHECK(h[106]);
}

TEST_CASE("convergence is the start of the first run of eleven") {
  std::vector<bool> raw(50, false);
  for (int i = 20; i < 30; ++i) raw[i] = true;  // ten only
  CHECK_FALSE(convergence_episode(raw).has_value());
  for (int i = 33; i < 44; ++i) raw[i] = true;
  CHECK(convergence_episode(raw) == 33);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("metrics use the documented populations") {
  std::vector<train::EpisodeLog> log(20);
  for (int i = 0; i < 20; ++i) {
    log[i].episode = i;
    log[i].success = i >= 5;
    log[i].steps = i;
    log[i].pose_error_px = i == 7 ? std::nan("") : 2.0 * i;
    log[i].wallclock_s = 1.0;
  }
  log[2].pose_error_px = 1000.0;  // failed episode, excluded
  const auto m = compute_metrics(log);
  CHECK(m.raw_successes == 15);
  CHECK(m.convergence_episode == 5);
  double err = 0.0;
  for (int i = 5; i < 20; ++i)
    if (i != 7) err += 2.0 * i;
  CHECK(m.avg_error_px == doctest::Approx(err / 14.0));
  double steps = 0.0;
  for (int i = 5; i < 20; ++i) steps += i;
  CHECK(m.avg_steps == doctest::Approx(steps / 15.0));
  CHECK(m.stable_successes == 5);  // episodes 10..14
  CHECK_THROWS_AS(compute_metrics({}), ConfigError);
}

TEST_CASE("config errors name the problem") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"fixture": "y_bifurcation", "bogus": 1})").find("bogus") != std::string::npos);
  CHECK(message(R"({"fixture": "y_bifurcation", "modes": ["ppo"]})").find("ppo") != std::string::npos);
  CHECK(message(R"({"fixture": "y_bifurcation", "seeds": []})").find("seeds") != std::string::npos);
  CHECK(message(R"({"fixture": "y_bifurcation", "sac": {"gama": 0.9}})").find("sac.gama") != std::string::npos);
  CHECK(message(R"({"phantom": "missing.phantom"})").find("missing.phantom") != std::string::npos);
  CHECK(message(R"({"fixture": "y", "phantom": "a"})").find("exactly one") != std::string::npos);
  CHECK_FALSE(message("{ nope").empty());
  const auto ok = parse_config(R"({"fixture": "straight", "T": 40, "env": {"catheter": {"distal_bend_angle_deg": 30}}})");
  CHECK(ok.trainer.schedule.T == 40);
}

TEST_CASE("suite smoke run, determinism and offline recomputation") {
  const fs::path root = fs::temp_directory_path() / "cathnav_suite_test";
  fs::remove_all(root);
  const auto a = run_suite(smoke_config(root / "a"));
  const auto b = run_suite(smoke_config(root / "b"));
  REQUIRE(a.runs.size() == 4);
  for (const auto& r : a.runs) {
    CHECK_FALSE(r.aborted);
    CHECK(r.log.size() == 10);
    CHECK(fs::exists(r.dir / "metrics.csv"));
  }
  CHECK(fs::exists(root / "a" / "summary.txt"));
  CHECK(slurp(root / "a" / "summary.csv") == slurp(root / "b" / "summary.csv"));
  for (const char* mode : {"sac", "sac-eil-gail"}) {
    CHECK(without_wallclock(slurp(root / "a" / (std::string(mode) + ".csv"))) ==
          without_wallclock(slurp(root / "b" / (std::string(mode) + ".csv"))));
    for (const char* seed : {"seed_0", "seed_1"})
      CHECK(without_wallclock(slurp(root / "a" / mode / seed / "metrics.csv")) ==
            without_wallclock(slurp(root / "b" / mode / seed / "metrics.csv")));
  }
  const auto& r = a.runs.back();
  const auto back = read_metrics_csv(r.dir / "metrics.csv");
  const auto m = compute_metrics(back);
  CHECK(m.raw_successes == r.metrics.raw_successes);
  CHECK(m.convergence_episode == r.metrics.convergence_episode);
  CHECK((std::isnan(m.avg_error_px) ? std::isnan(r.metrics.avg_error_px)
                                    : m.avg_error_px == doctest::Approx(r.metrics.avg_error_px).epsilon(1e-5)));
  fs::remove_all(root);
}

TEST_CASE("fixtures are written byte stable") {
  const fs::path dir = fs::temp_directory_path() / "cathnav_fixture_test";
  fs::create_directories(dir);
  write_fixture("renal_two_level", dir / "a.phantom");
  write_fixture("renal_two_level", dir / "b.phantom");
  CHECK(slurp(dir / "a.phantom") == slurp(dir / "b.phantom"));
  CHECK(load_vessel_map(dir / "a.phantom").bifurcations.size() == 2);
  CHECK_THROWS(write_fixture("aorta", dir / "c.phantom"));
  fs::remove_all(dir);
}
