#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cathnav/geometry.hpp"
#include "cathnav/vessel_map.hpp"

using namespace cathnav;

TEST_CASE("wrap_deg lands in (-180, 180]") {
  CHECK(wrap_deg(180.0) == doctest::Approx(180.0));
  CHECK(wrap_deg(-180.0) == doctest::Approx(180.0));
  CHECK(wrap_deg(190.0) == doctest::Approx(-170.0));
  CHECK(wrap_deg(720.0 + 30.0) == doctest::Approx(30.0));
  for (double d = -1000.0; d < 1000.0; d += 7.3) {
    const double w = wrap_deg(d);
    CHECK(w > -180.0);
    CHECK(w <= 180.0);
    CHECK(std::remainder(w - d, 360.0) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("polyline arclength helpers") {
  const Polyline2 pl{{0, 0}, {3, 4}, {3, 10}};
  CHECK(polyline_length(pl) == doctest::Approx(11.0));
  const Vec2 mid = point_at(pl, 5.0);
  CHECK(mid.x == doctest::Approx(3.0));
  CHECK(mid.y == doctest::Approx(4.0));
  const Vec2 t = tangent_at(pl, 7.0);
  CHECK(t.x == doctest::Approx(0.0));
  CHECK(t.y == doctest::Approx(1.0));
  const auto cut = truncate(pl, 2.5);
  CHECK(polyline_length(cut) == doctest::Approx(2.5));
  const auto dense = densify(pl, 0.5);
  CHECK(polyline_length(dense) == doctest::Approx(11.0));
  for (std::size_t i = 1; i < dense.size(); ++i) CHECK(distance(dense[i - 1], dense[i]) <= 0.5 + 1e-12);
}

TEST_CASE("segment distance") {
  CHECK(distance_to_segment({0, 1}, {-1, 0}, {1, 0}) == doctest::Approx(1.0));
  CHECK(distance_to_segment({3, 0}, {-1, 0}, {1, 0}) == doctest::Approx(2.0));
  CHECK(distance_to_segment({5, 5}, {1, 1}, {1, 1}) == doctest::Approx(std::sqrt(32.0)));
}

TEST_CASE("fixtures have the documented topology") {
  CHECK(make_fixture("straight").edges.size() == 1);
  CHECK(make_fixture("straight").bifurcations.empty());
  CHECK(make_fixture("y_bifurcation").bifurcations.size() == 1);
  CHECK(make_fixture("y_bifurcation").bifurcations[0].daughters.size() == 2);
  const auto renal = make_fixture("renal_two_level");
  CHECK(renal.bifurcations.size() == 2);
  // cascaded: the second bifurcation hangs off a daughter of the first
  const auto& first = renal.bifurcations[0].daughters;
  CHECK(std::find(first.begin(), first.end(), renal.bifurcations[1].parent_edge) != first.end());
  CHECK_THROWS_AS(make_fixture("aorta"), PhantomError);
}

TEST_CASE("phantom text round trip is byte stable") {
  for (const char* name : {"straight", "y_bifurcation", "renal_two_level"}) {
    const std::string text = serialize_vessel_map(make_fixture(name));
    const VesselMap back = parse_vessel_map(text);
    CHECK(serialize_vessel_map(back) == text);
  }
}

TEST_CASE("phantom validation names the offending element") {
  VesselMap m = make_fixture("y_bifurcation");
  m.edges[2].radius = 0.0;
  try {
    validate(m);
    FAIL("zero radius accepted");
  } catch (const PhantomError& e) {
    CHECK(std::string(e.what()).find("edge 2") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_vessel_map("{not json"), PhantomError);
  CHECK_THROWS_AS(parse_vessel_map(R"({"format": 2})"), PhantomError);

  VesselMap disconnected = make_fixture("y_bifurcation");
  disconnected.nodes.push_back({10, 10});
  CHECK_THROWS_AS(validate(disconnected), PhantomError);
}

TEST_CASE("route planning reaches the target edge") {
  const auto y = make_fixture("y_bifurcation");
  CHECK(plan_route(y) == std::vector<int>{0, 2});
  CHECK(route_daughter(y, plan_route(y), 1) == 2);
  const auto renal = make_fixture("renal_two_level");
  const auto r = plan_route(renal);
  CHECK(r.size() == 3);
  CHECK(renal.lumen_clearance(renal.target.center) <= 0.0);
}

TEST_CASE("lumen projection puts points inside") {
  const auto y = make_fixture("y_bifurcation");
  for (Vec2 p : {Vec2{700, 100}, Vec2{100, 600}, Vec2{560, 360}, Vec2{900, 700}}) {
    const Vec2 q = y.project_into_lumen(p);
    CHECK(y.lumen_clearance(q) <= 1e-9);
    if (y.lumen_clearance(p) <= 0.0) CHECK(distance(p, q) == doctest::Approx(0.0));
  }
}
