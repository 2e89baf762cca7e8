#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cathnav/expert.hpp"

using namespace cathnav;
using namespace cathnav::expert;

namespace {

// Parent along -x into node 1, one collinear and one perpendicular daughter.
VesselMap tee(bool target_on_collinear) {
  VesselMap m;
  m.nodes = {{860, 360}, {500, 360}, {100, 360}, {500, 60}};
  m.edges = {{0, 1, 60, {{860, 360}, {500, 360}}}, {1, 2, 50, {{500, 360}, {100, 360}}}, {1, 3, 50, {{500, 360}, {500, 60}}}};
  m.bifurcations = {{1, 0, {1, 2}}};
  m.entry = 0;
  m.target = {target_on_collinear ? Vec2{130, 360} : Vec2{500, 90}, 30};
  validate(m);
  return m;
}

// Parent along -x, daughters at +-45 degrees; the route takes the +y one.
VesselMap symmetric_y() {
  const double s = 300.0 * std::cos(3.14159265358979323846 / 4.0);
  VesselMap m;
  m.nodes = {{860, 360}, {500, 360}, {500 - s, 360 + s}, {500 - s, 360 - s}};
  m.edges = {{0, 1, 60, {m.nodes[0], m.nodes[1]}}, {1, 2, 50, {m.nodes[1], m.nodes[2]}},
             {1, 3, 50, {m.nodes[1], m.nodes[3]}}};
  m.bifurcations = {{1, 0, {1, 2}}};
  m.entry = 0;
  m.target = {{500 - 0.9 * s, 360 + 0.9 * s}, 30};
  validate(m);
  return m;
}

BifurcationEvent event_for(const CatheterEnv& env) {
  const auto& b = env.map().bifurcations[0];
  return {0, b.node, 0.0, b.daughters};
}

}  // namespace

TEST_CASE("oracle D_target follows the daughter angle") {
  const double c45 = std::cos(3.14159265358979323846 / 4.0);
  {
    CatheterEnv env(symmetric_y());
    env.reset(0);
    const auto t = oracle_target_pose(env, event_for(env));
    CHECK(std::abs(t.d_target_px - env.d_max_px() * c45) <= 1e-6);
    CHECK(t.branch_id == 1);
  }
  {
    // the fixture's route turns toward the negative normal of the parent
    CatheterEnv env(make_fixture("y_bifurcation"));
    env.reset(0);
    const auto t = oracle_target_pose(env, event_for(env));
    CHECK(std::abs(t.d_target_px + env.d_max_px() * c45) <= 1e-6);
    CHECK(t.branch_id == 2);
    CHECK(t.source == Source::Oracle);
    CHECK_FALSE(check_target_pose(env, event_for(env), t).has_value());
    const auto again = oracle_target_pose(env, event_for(env));
    CHECK(again.p_target.x == t.p_target.x);
    CHECK(again.p_target.y == t.p_target.y);
  }
  {
    CatheterEnv env(tee(true));
    env.reset(0);
    const auto t = oracle_target_pose(env, event_for(env));
    CHECK(t.d_target_px == doctest::Approx(env.d_max_px()).epsilon(1e-12));
    CHECK(t.branch_id == 1);
  }
  {
    CatheterEnv env(tee(false));
    env.reset(0);
    const auto t = oracle_target_pose(env, event_for(env));
    CHECK(std::abs(t.d_target_px) <= 1e-9);
    CHECK(t.branch_id == 2);
  }
}

TEST_CASE("target pose validation rejections") {
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  const auto ev = event_for(env);
  const auto good = oracle_target_pose(env, ev);
  auto bad = good;
  bad.bifurcation = 3;
  CHECK(check_target_pose(env, ev, bad) == std::optional<std::string>("stale bifurcation_id"));
  bad = good;
  bad.branch_id = 0;
  CHECK(check_target_pose(env, ev, bad).has_value());
  bad = good;
  bad.d_target_px = env.d_max_px() + 1.0;
  CHECK(check_target_pose(env, ev, bad).has_value());
  bad = good;
  bad.p_target = {900, 700};
  CHECK(check_target_pose(env, ev, bad).has_value());
  bad = good;
  bad.d_target_px = std::nan("");
  CHECK(check_target_pose(env, ev, bad).has_value());
  // right lumen position but the other daughter
  bad = good;
  bad.branch_id = 1;
  CHECK(check_target_pose(env, ev, bad).has_value());
}

TEST_CASE("oracle gateway returns the oracle pose") {
  CatheterEnv env(make_fixture("y_bifurcation"));
  env.reset(0);
  OracleGateway gw;
  const auto a = gw.request_target_pose(env, event_for(env), 0);
  const auto b = oracle_target_pose(env, event_for(env));
  CHECK(a.d_target_px == b.d_target_px);
  CHECK(a.p_target.x == b.p_target.x);
}

TEST_CASE("demo store round trip") {
  const auto path = std::filesystem::temp_directory_path() / "cathnav_demos_test.jsonl";
  std::filesystem::remove(path);
  std::vector<DemoRecord> recs;
  for (int i = 0; i < 10; ++i) {
    DemoRecord r;
    for (int k = 0; k < kObsDim; ++k) r.s[k] = 0.1 * i + 1.0 / (k + 3.0);
    r.a = {std::nextafter(0.3, 1.0) * i / 10.0, -0.7};
    r.source = i % 2 ? Source::Human : Source::Oracle;
    r.episode = i;
    recs.push_back(r);
  }
  {
    DemoStore store(path);
    store.append(recs);
  }
  const auto back = DemoStore::load(path);
  CHECK(back.records() == recs);

  std::ofstream(path, std::ios::trunc).close();
  CHECK(DemoStore::load(path).empty());

  {
    std::ofstream out(path);
    out << encode_demo(recs[0]) << "\n";
    const auto line = encode_demo(recs[1]);
    out << line.substr(0, line.size() / 2);
  }
  try {
    DemoStore::load(path);
    FAIL("truncated line accepted");
  } catch (const ExpertError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("oracle demonstrations cover whole successful episodes") {
  const auto map = make_fixture("y_bifurcation");
  const auto demos = generate_oracle_demos(map, {}, 3, 10);
  CHECK(demos.size() >= 3);
  for (const auto& d : demos) {
    CHECK(d.source == Source::Oracle);
    CHECK(std::abs(d.a[0]) <= 1.0);
    CHECK(std::abs(d.a[1]) <= 1.0);
  }
  // pre-generated episodes are numbered -1, -2, ...
  CHECK(demos.front().episode == -1);
  CHECK(demos.back().episode == -3);
  CHECK(parse_source(to_string(Source::Human)) == Source::Human);
  CHECK_THROWS_AS(parse_source("robot"), ExpertError);
}
