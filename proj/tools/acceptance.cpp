// Acceptance suite: one PASS/FAIL line per primary criterion, tolerances fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cathnav/correction.hpp"
#include "cathnav/fuzzy.hpp"
#include "cathnav/harness.hpp"
#include "cathnav/imaging.hpp"
#include "cathnav/kinematics.hpp"
#include "cathnav/nn.hpp"
#include "cathnav/trainer.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cathnav;

namespace {

// Tolerances and budgets.
constexpr double kScheduleTol = 1e-12;
constexpr double kAnchorTol = 1e-12;
constexpr double kDefuzzTol = 1e-9;
constexpr double kLn2Tol = 1e-12;
constexpr double kClampTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr int kGradProbes = 100;
constexpr double kRollTolDeg = 1.0;
constexpr int kCorrectionTrials = 20;
constexpr int kCorrectionNeeded = 18;
constexpr double kLearningRatio = 0.9;
constexpr int kFlankStrings = 1000;

constexpr double kScheduleBudgetS = 1.0;
constexpr double kThinningBudgetS = 30.0;
constexpr double kGradBudgetS = 60.0;
constexpr double kCorrectionBudgetS = 120.0;
constexpr double kLearningBudgetS = 45.0 * 60.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict schedule_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  train::ScheduleParams p;
  const auto mid = train::schedule_weights(p.T / 2.0, p);
  double worst_mid = std::max(std::abs(mid.w_sac - 0.75), std::abs(mid.w_gail - 0.25));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> t(-1000.0, 1000.0), k(1e-4, 2.0);
  std::uniform_int_distribution<int> T(1, 2000);
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const train::ScheduleParams q{T(rng), k(rng), 0.05, 50};
    const auto w = train::schedule_weights(t(rng), q);
    worst_sum = std::max(worst_sum, std::abs(w.w_sac + w.w_gail - 1.0));
  }
  const double s = seconds_since(t0);
  return {worst_mid <= kScheduleTol && worst_sum <= kScheduleTol && s < kScheduleBudgetS,
          fmt("|w(T/2) - (0.75, 0.25)| = %.1e, max |w_sac + w_gail - 1| = %.1e over 1e4 draws, %.3f s", worst_mid,
              worst_sum, s)};
}

Verdict fuzzy_exactness() {
  const auto a = imaging::pixels_to_physical(215.0, 80.0);
  const auto b = imaging::pixels_to_physical(0.0, 0.0);
  const double anchors = std::max({std::abs(a.d_cm - 2.5), std::abs(a.e_deg - 0.0), std::abs(b.e_deg - 90.0)});
  const auto fam = fuzzy::translation_family();
  fuzzy::Memberships z{}, half{}, mixed{};
  z[static_cast<int>(fuzzy::Label::Z)] = 1.0;
  half[3] = 0.5;
  half[4] = 0.5;
  mixed[1] = 0.2;
  mixed[3] = 0.6;
  const auto u0 = fuzzy::defuzzify(z, fam), u1 = fuzzy::defuzzify(half, fam), u2 = fuzzy::defuzzify(mixed, fam);
  const double inf = std::numeric_limits<double>::infinity();
  const double defuzz = std::max({u0 ? std::abs(*u0 - 0.0) : inf, u1 ? std::abs(*u1 - 1.5) : inf,
                                  u2 ? std::abs(*u2 - 0.5) : inf});
  return {anchors <= kAnchorTol && defuzz <= kDefuzzTol,
          fmt("calibration anchors off by %.1e, defuzzify hand cases off by %.1e", anchors, defuzz)};
}

Verdict gail_exactness() {
  const double e1 = std::abs(train::gail_reward(0.5) - std::log(2.0));
  const double e2 = std::abs(train::gail_reward(1.0) + std::log(train::kDiscClamp));
  return {e1 <= kLn2Tol && e2 <= kClampTol, fmt("|r(0.5) - ln 2| = %.1e, |r(1) + log 1e-6| = %.1e", e1, e2)};
}

Verdict thinning_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int bad = 0;
  for (int k = 0; k < 100; ++k) {
    const auto img = oracle::random_blob(rng);
    const auto skel = imaging::thin(img);
    bool ok = true;
    for (std::size_t i = 0; i < img.data.size(); ++i) ok &= !(skel.data[i] && !img.data[i]);
    for (int r = 0; r < skel.height; ++r)
      for (int c = 0; c < skel.width; ++c) ok &= !oracle::deletable(skel, c, r, 0) && !oracle::deletable(skel, c, r, 1);
    ok &= oracle::components(skel) == oracle::components(img);
    ok &= imaging::thin(skel) == skel;
    bad += !ok;
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < kThinningBudgetS, fmt("%d of 100 blobs violate a property, %.2f s", bad, s)};
}

Verdict gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const int h = train::TrainerConfig{}.hidden;
  const std::vector<std::vector<int>> shapes{
      {kObsDim, h, h, 2 * kActDim}, {kObsDim + kActDim, h, h, 1}, {8, 16, 16, 2}};
  double worst = 0.0;
  std::string per;
  std::uint64_t seed = 7;
  for (const auto& shape : shapes) {
    nn::Mlp net(shape);
    std::mt19937_64 rng(seed++);
    net.init(rng);
    const double e = nn::gradient_check(net, kGradProbes, seed++, kGradStep);
    worst = std::max(worst, e);
    std::string name;
    for (int n : shape) name += (name.empty() ? "" : "-") + std::to_string(n);
    per += fmt(" %s:%.1e", name.c_str(), e);
  }
  const double s = seconds_since(t0);
  return {worst < kGradTol && s < kGradBudgetS, fmt("max relative error %.1e (%s), %.2f s", worst, per.c_str() + 1, s)};
}

Verdict kinematics_loop() {
  kinematics::CatheterConfig cfg;
  const Polyline2 route{{900, 360}, {0, 360}};
  double worst = 0.0;
  for (int i = 0; i <= 36; ++i) {
    const double roll = 5.0 * i;
    const auto body = kinematics::body_polyline(cfg, 60.0, roll, route);
    const auto est = kinematics::pitch_from_distance(body.in_plane_offset_px, cfg.d_max_px());
    worst = std::max(worst, std::abs(est.theta_deg - roll));
  }
  const auto tip = kinematics::canonical_tip(cfg);
  bool monotone = true;
  double prev = kinematics::rotated_offset(tip, 0.25);
  for (double th = 0.5; th < 90.0; th += 0.25) {
    const double d = kinematics::rotated_offset(tip, th);
    monotone &= d < prev;
    prev = d;
  }
  prev = kinematics::rotated_offset(tip, 90.25);
  for (double th = 90.5; th < 180.0; th += 0.25) {
    const double d = kinematics::rotated_offset(tip, th);
    monotone &= d > prev;
    prev = d;
  }
  return {worst < kRollTolDeg && monotone,
          fmt("max roll error %.3f deg over 37 angles, offset strictly monotone on both halves: %s", worst,
              monotone ? "yes" : "no")};
}

Verdict correction_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto trials = correction_trials(make_fixture("y_bifurcation"), kCorrectionTrials, 42);
  const fuzzy::Tolerances tol;
  int ok = 0;
  for (const auto& t : trials) {
    const auto& r = t.result;
    if (!r.converged || r.iterations > 50 || r.trace.empty()) continue;
    ok += std::abs(r.trace.back().e_trans_cm) < tol.trans_cm && std::abs(r.trace.back().e_rot_deg) < tol.rot_deg;
  }
  const double s = seconds_since(t0);
  return {ok >= kCorrectionNeeded && s < kCorrectionBudgetS,
          fmt("%d/%d seeded starts converge within 50 iterations, %.2f s", ok, kCorrectionTrials, s)};
}

Verdict flanking_oracle() {
  std::mt19937_64 rng(123);
  int mismatches = 0;
  for (int k = 0; k < kFlankStrings; ++k) {
    std::bernoulli_distribution b(0.3 + 0.65 * (k % 10) / 9.0);
    std::vector<bool> raw(300);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = b(rng);
    mismatches += harness::stable_successes(raw) != oracle::flanked(raw);
  }
  return {mismatches == 0, fmt("%d of %d random strings disagree with the brute force", mismatches, kFlankStrings)};
}

const harness::ModeSummary* find_mode(const harness::SuiteResult& s, train::Mode m) {
  for (const auto& x : s.summary)
    if (x.mode == m) return &x;
  return nullptr;
}

std::string conv_list(const harness::SuiteResult& s, train::Mode m) {
  std::string out;
  for (const auto& r : s.runs) {
    if (r.mode != m) continue;
    if (!out.empty()) out += " ";
    out += r.aborted ? "aborted" : r.metrics.convergence_episode ? std::to_string(*r.metrics.convergence_episode) : "none";
  }
  return out;
}

Verdict learning(const harness::SuiteResult& s, double secs) {
  using train::Mode;
  const auto* sac = find_mode(s, Mode::Sac);
  const auto* full = find_mode(s, Mode::SacEilGail);
  if (!sac || !full) return {false, "suite config lacks sac or sac-eil-gail"};
  // every run of both modes has to reach a convergence episode
  const bool all_converged = sac->converged == sac->runs && full->converged == full->runs && sac->aborted == 0 &&
                             full->aborted == 0;
  const double ratio = full->median_convergence_episode / sac->median_convergence_episode;
  return {all_converged && ratio <= kLearningRatio && secs < kLearningBudgetS,
          fmt("median convergence sac-eil-gail %.0f [%s] vs sac %.0f [%s], ratio %.3f (<= %.1f), %.0f s",
              full->median_convergence_episode, conv_list(s, Mode::SacEilGail).c_str(),
              sac->median_convergence_episode, conv_list(s, Mode::Sac).c_str(), ratio, kLearningRatio, secs)};
}

Verdict accuracy(const harness::SuiteResult& s) {
  using train::Mode;
  double eil_worst = -std::numeric_limits<double>::infinity();
  double plain_best = std::numeric_limits<double>::infinity();
  std::string per;
  for (const auto& m : s.summary) {
    const double e = m.median_avg_error_px;
    per += fmt(" %s %.2f", train::to_string(m.mode).c_str(), e);
    if (std::isnan(e)) return {false, "no pose error measured for " + train::to_string(m.mode)};
    if (train::uses_eil(m.mode))
      eil_worst = std::max(eil_worst, e);
    else
      plain_best = std::min(plain_best, e);
  }
  const auto* sac = find_mode(s, Mode::Sac);
  const auto* full = find_mode(s, Mode::SacEilGail);
  if (!sac || !full) return {false, "suite config lacks sac or sac-eil-gail"};
  const bool direct = full->median_avg_error_px < sac->median_avg_error_px;
  const bool split = eil_worst < plain_best;
  return {direct && split, fmt("median bifurcation pose error px:%s; worst EIL %.2f < best non-EIL %.2f", per.c_str(),
                               eil_worst, plain_best)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// CSV text with every wallclock column removed.
std::string without_wallclock(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  std::vector<bool> drop;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (drop.empty())
      for (const auto& h : cells) drop.push_back(h.find("wallclock") != std::string::npos);
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (i >= drop.size() || !drop[i]) out += cells[i] + ",";
    out += "\n";
  }
  return out;
}

std::map<std::string, std::string> csv_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), root).generic_string()] = without_wallclock(slurp(e.path()));
  return out;
}

Verdict determinism(const fs::path& cli, const fs::path& config, const fs::path& work) {
  if (cli.empty()) return {false, "no cathnav executable given (--cathnav)"};
  std::vector<std::map<std::string, std::string>> trees;
  for (const char* run : {"a", "b"}) {
    const fs::path out = work / "determinism" / run;
    fs::remove_all(out);
    const std::string cmd =
        "\"" + cli.string() + "\" suite --config \"" + config.string() + "\" --out \"" + out.string() + "\" > \"" +
        (work / (std::string("determinism_") + run + ".log")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("cathnav suite run ") + run + " failed"};
    trees.push_back(csv_tree(out));
  }
  const bool same = trees[0] == trees[1] && !trees[0].empty();
  int differing = 0;
  for (const auto& [k, v] : trees[0]) {
    const auto it = trees[1].find(k);
    differing += it == trees[1].end() || it->second != v;
  }
  return {same, fmt("%zu CSV files compared without wallclock columns, %d differ", trees[0].size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite for the catheter steering stack"};
  fs::path suite_config, smoke_config, cli, work = "acceptance_out";
  app.add_option("--suite-config", suite_config, "Learning experiment config")->required();
  app.add_option("--smoke-config", smoke_config, "Small suite config for the determinism check")->required();
  app.add_option("--cathnav", cli, "cathnav executable");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](const char* name, const Verdict& v) {
    std::printf("%s  %-24s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };
  auto guarded = [&](const char* name, const std::function<Verdict()>& f) {
    try {
      report(name, f());
    } catch (const std::exception& e) {
      report(name, {false, std::string("error: ") + e.what()});
    }
  };

  guarded("schedule-exactness", schedule_exactness);
  guarded("fuzzy-exactness", fuzzy_exactness);
  guarded("gail-reward-exactness", gail_exactness);
  guarded("thinning-properties", thinning_properties);
  guarded("gradient-check", gradient_check);
  guarded("kinematics-loop", kinematics_loop);
  guarded("correction-convergence", correction_convergence);

  harness::SuiteResult suite;
  double suite_s = 0.0;
  std::string suite_error;
  try {
    auto cfg = harness::load_config(suite_config);
    cfg.output_dir = work / "suite";
    cfg.save_checkpoints = false;
    const auto t0 = std::chrono::steady_clock::now();
    suite = harness::run_suite(cfg, [](const std::string& msg) { std::fprintf(stderr, "  %s\n", msg.c_str()); });
    suite_s = seconds_since(t0);
  } catch (const std::exception& e) {
    suite_error = std::string("error: ") + e.what();
  }
  if (suite_error.empty()) {
    guarded("learning", [&] { return learning(suite, suite_s); });
    guarded("accuracy", [&] { return accuracy(suite); });
  } else {
    report("learning", {false, suite_error});
    report("accuracy", {false, suite_error});
  }

  guarded("flanking-oracle", flanking_oracle);
  guarded("determinism", [&] { return determinism(cli, smoke_config, work); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
