#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cathnav/geometry.hpp"

namespace cathnav {

class PhantomError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Directed vessel segment from -> to. The polyline starts at nodes[from] and
// ends at nodes[to].
struct Edge {
  int from = 0;
  int to = 0;
  double radius = 0.0;
  Polyline2 polyline;
};

struct Bifurcation {
  int node = 0;
  int parent_edge = 0;
  std::vector<int> daughters;
};

struct TargetDisk {
  Vec2 center;
  double radius = 0.0;
};

// Planar phantom in pixel units on the simulation canvas.
struct VesselMap {
  std::vector<Vec2> nodes;
  std::vector<Edge> edges;
  std::vector<Bifurcation> bifurcations;
  int entry = 0;
  TargetDisk target;

  // Outgoing edges of a node, in edge-index order.
  std::vector<int> outgoing(int node) const;
  const Bifurcation* bifurcation_at(int node) const;
  int bifurcation_index(int node) const;

  // Signed clearance: distance to the nearest centerline minus that edge's
  // radius. Non-positive means inside the lumen.
  double lumen_clearance(Vec2 p) const;
  // Nearest point inside the lumen (p itself when already inside).
  Vec2 project_into_lumen(Vec2 p) const;
  // Distance from p to the centerline of one edge.
  double distance_to_edge(Vec2 p, int edge) const;
};

// Throws PhantomError on malformed text or violated invariants; messages
// name the offending element.
VesselMap parse_vessel_map(const std::string& text);
VesselMap load_vessel_map(const std::filesystem::path& path);
std::string serialize_vessel_map(const VesselMap& map);
void validate(const VesselMap& map);

// Edge sequence from the entry node to the edge whose lumen holds the target
// centre. Throws PhantomError when the target is unreachable.
std::vector<int> plan_route(const VesselMap& map);

// The daughter edge the route takes at a bifurcation node, if the route
// passes it.
std::optional<int> route_daughter(const VesselMap& map, const std::vector<int>& route, int node);

// Canonical fixtures: "straight", "y_bifurcation", "renal_two_level".
VesselMap make_fixture(const std::string& name);

}  // namespace cathnav
