#include "cathnav/vessel_map.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace cathnav {

using nlohmann::json;

std::vector<int> VesselMap::outgoing(int node) const {
  std::vector<int> out;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e)
    if (edges[e].from == node) out.push_back(e);
  return out;
}

const Bifurcation* VesselMap::bifurcation_at(int node) const {
  for (const auto& b : bifurcations)
    if (b.node == node) return &b;
  return nullptr;
}

int VesselMap::bifurcation_index(int node) const {
  for (int i = 0; i < static_cast<int>(bifurcations.size()); ++i)
    if (bifurcations[i].node == node) return i;
  return -1;
}

double VesselMap::distance_to_edge(Vec2 p, int edge) const {
  const auto& pl = edges[edge].polyline;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pl.size(); ++i) best = std::min(best, distance_to_segment(p, pl[i - 1], pl[i]));
  return best;
}

double VesselMap::lumen_clearance(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < static_cast<int>(edges.size()); ++e)
    best = std::min(best, distance_to_edge(p, e) - edges[e].radius);
  return best;
}

Vec2 VesselMap::project_into_lumen(Vec2 p) const {
  if (lumen_clearance(p) <= 0.0) return p;
  // nearest capsule boundary over all edge segments
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_pt = p;
  for (const auto& e : edges) {
    for (std::size_t i = 1; i < e.polyline.size(); ++i) {
      const Vec2 c = closest_on_segment(p, e.polyline[i - 1], e.polyline[i]);
      const double d = distance(p, c) - e.radius;
      if (d < best) {
        best = d;
        const Vec2 dir = (p - c).normalized();
        // land strictly inside so containment checks are robust to rounding
        best_pt = c + dir * (e.radius * (1.0 - 1e-9));
      }
    }
  }
  return best_pt;
}

namespace {

Vec2 parse_point(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw PhantomError(what + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json dump_point(Vec2 p) { return json::array({p.x, p.y}); }

}  // namespace

VesselMap parse_vessel_map(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw PhantomError(std::string("phantom parse error: ") + e.what());
  }
  VesselMap m;
  try {
    if (!j.contains("format") || j.at("format").get<int>() != 1)
      throw PhantomError("phantom: unsupported or missing format (expected 1)");
    for (std::size_t i = 0; i < j.at("nodes").size(); ++i)
      m.nodes.push_back(parse_point(j["nodes"][i], "node " + std::to_string(i)));
    for (std::size_t i = 0; i < j.at("edges").size(); ++i) {
      const auto& je = j["edges"][i];
      Edge e;
      e.from = je.at("from").get<int>();
      e.to = je.at("to").get<int>();
      e.radius = je.at("radius").get<double>();
      const auto nn = static_cast<int>(m.nodes.size());
      if (e.from < 0 || e.from >= nn || e.to < 0 || e.to >= nn)
        throw PhantomError("edge " + std::to_string(i) + ": node index out of range");
      if (je.contains("polyline")) {
        for (std::size_t k = 0; k < je["polyline"].size(); ++k)
          e.polyline.push_back(parse_point(je["polyline"][k], "edge " + std::to_string(i) + " polyline"));
      } else {
        e.polyline = {m.nodes[e.from], m.nodes[e.to]};
      }
      m.edges.push_back(std::move(e));
    }
    if (j.contains("bifurcations")) {
      for (const auto& jb : j["bifurcations"]) {
        Bifurcation b;
        b.node = jb.at("node").get<int>();
        b.parent_edge = jb.at("parent").get<int>();
        b.daughters = jb.at("daughters").get<std::vector<int>>();
        m.bifurcations.push_back(std::move(b));
      }
    }
    m.entry = j.at("entry").get<int>();
    m.target.center = parse_point(j.at("target").at("center"), "target center");
    m.target.radius = j.at("target").at("radius").get<double>();
  } catch (const json::exception& e) {
    throw PhantomError(std::string("phantom schema error: ") + e.what());
  }
  validate(m);
  return m;
}

VesselMap load_vessel_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PhantomError("cannot open phantom file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_vessel_map(ss.str());
}

std::string serialize_vessel_map(const VesselMap& m) {
  json j;
  j["format"] = 1;
  j["nodes"] = json::array();
  for (auto p : m.nodes) j["nodes"].push_back(dump_point(p));
  j["edges"] = json::array();
  for (const auto& e : m.edges) {
    json je{{"from", e.from}, {"to", e.to}, {"radius", e.radius}};
    je["polyline"] = json::array();
    for (auto p : e.polyline) je["polyline"].push_back(dump_point(p));
    j["edges"].push_back(je);
  }
  j["bifurcations"] = json::array();
  for (const auto& b : m.bifurcations)
    j["bifurcations"].push_back({{"node", b.node}, {"parent", b.parent_edge}, {"daughters", b.daughters}});
  j["entry"] = m.entry;
  j["target"] = {{"center", dump_point(m.target.center)}, {"radius", m.target.radius}};
  return j.dump(2) + "\n";
}

void validate(const VesselMap& m) {
  const auto nn = static_cast<int>(m.nodes.size());
  const auto ne = static_cast<int>(m.edges.size());
  if (nn < 2 || ne < 1) throw PhantomError("phantom needs at least 2 nodes and 1 edge");
  for (int i = 0; i < ne; ++i) {
    const auto& e = m.edges[i];
    const std::string name = "edge " + std::to_string(i);
    if (!(e.radius > 0.0)) throw PhantomError(name + ": radius must be > 0");
    if (e.from == e.to) throw PhantomError(name + ": self loop");
    if (e.polyline.size() < 2) throw PhantomError(name + ": polyline needs 2 points");
    if (distance(e.polyline.front(), m.nodes[e.from]) > 1e-6 || distance(e.polyline.back(), m.nodes[e.to]) > 1e-6)
      throw PhantomError(name + ": polyline endpoints do not match its nodes");
    if (polyline_length(e.polyline) <= 0.0) throw PhantomError(name + ": zero length");
  }
  if (m.entry < 0 || m.entry >= nn) throw PhantomError("entry node out of range");

  // connectivity over the undirected graph
  std::vector<char> seen(nn, 0);
  std::vector<int> stack{m.entry};
  seen[m.entry] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const auto& e : m.edges) {
      for (auto [a, b] : {std::pair{e.from, e.to}, std::pair{e.to, e.from}}) {
        if (a == v && !seen[b]) {
          seen[b] = 1;
          stack.push_back(b);
        }
      }
    }
  }
  for (int i = 0; i < nn; ++i)
    if (!seen[i]) throw PhantomError("graph is disconnected: node " + std::to_string(i) + " unreachable from entry");

  for (std::size_t i = 0; i < m.bifurcations.size(); ++i) {
    const auto& b = m.bifurcations[i];
    const std::string name = "bifurcation " + std::to_string(i);
    if (b.node < 0 || b.node >= nn) throw PhantomError(name + ": node out of range");
    if (b.parent_edge < 0 || b.parent_edge >= ne || m.edges[b.parent_edge].to != b.node)
      throw PhantomError(name + ": parent edge must end at the bifurcation node");
    if (b.daughters.size() < 2) throw PhantomError(name + ": needs at least 2 daughter edges");
    for (int d : b.daughters)
      if (d < 0 || d >= ne || m.edges[d].from != b.node)
        throw PhantomError(name + ": daughter edge " + std::to_string(d) + " must start at the node");
    int parents = 0;
    for (const auto& e : m.edges) parents += e.to == b.node;
    if (parents != 1) throw PhantomError(name + ": node must have exactly one parent edge");
  }
  for (int v = 0; v < nn; ++v)
    if (m.outgoing(v).size() >= 2 && !m.bifurcation_at(v))
      throw PhantomError("node " + std::to_string(v) + " branches but is not declared as a bifurcation");

  if (!(m.target.radius > 0.0)) throw PhantomError("target radius must be > 0");
  if (m.lumen_clearance(m.target.center) > 0.0) throw PhantomError("target centre lies outside the vessel lumen");
  if (m.lumen_clearance(m.nodes[m.entry]) > 0.0) throw PhantomError("entry lies outside the vessel lumen");
}

std::vector<int> plan_route(const VesselMap& m) {
  // target edge: the one whose centerline is closest to the target centre
  int target_edge = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < static_cast<int>(m.edges.size()); ++e) {
    const double d = m.distance_to_edge(m.target.center, e);
    if (d <= m.edges[e].radius && d < best) {
      best = d;
      target_edge = e;
    }
  }
  if (target_edge < 0) throw PhantomError("target is not inside any edge lumen");

  std::vector<int> path;
  std::function<bool(int)> dfs = [&](int node) {
    for (int e : m.outgoing(node)) {
      path.push_back(e);
      if (e == target_edge || dfs(m.edges[e].to)) return true;
      path.pop_back();
    }
    return false;
  };
  if (!dfs(m.entry)) throw PhantomError("target edge is not reachable from the entry node");
  return path;
}

std::optional<int> route_daughter(const VesselMap& m, const std::vector<int>& route, int node) {
  const auto* b = m.bifurcation_at(node);
  if (!b) return std::nullopt;
  for (int e : route)
    if (std::find(b->daughters.begin(), b->daughters.end(), e) != b->daughters.end()) return e;
  return std::nullopt;
}

namespace {

VesselMap straight_fixture() {
  VesselMap m;
  m.nodes = {{860, 360}, {60, 360}};
  m.edges = {{0, 1, 70, {m.nodes[0], m.nodes[1]}}};
  m.entry = 0;
  m.target = {{60, 360}, 50};
  return m;
}

// Parent runs up-left from the lower-right entry; the route daughter turns
// up (needs the bend rolled past 90 degrees), the other runs left off-canvas.
VesselMap y_fixture() {
  VesselMap m;
  m.nodes = {{860, 660}, {560, 360}, {0, 360}, {560, 60}};
  m.edges = {
      {0, 1, 70, {m.nodes[0], m.nodes[1]}},
      {1, 2, 55, {m.nodes[1], m.nodes[2]}},
      {1, 3, 55, {m.nodes[1], m.nodes[3]}},
  };
  m.bifurcations = {{1, 0, {1, 2}}};
  m.entry = 0;
  m.target = {{560, 60}, 50};
  return m;
}

VesselMap renal_fixture() {
  VesselMap m;
  m.nodes = {{880, 660}, {600, 380}, {380, 160}, {678, 90}, {120, 160}, {380, 20}};
  m.edges = {
      {0, 1, 70, {m.nodes[0], m.nodes[1]}},
      {1, 2, 60, {m.nodes[1], m.nodes[2]}},
      {1, 3, 45, {m.nodes[1], m.nodes[3]}},
      {2, 4, 50, {m.nodes[2], m.nodes[4]}},
      {2, 5, 50, {m.nodes[2], m.nodes[5]}},
  };
  m.bifurcations = {{1, 0, {1, 2}}, {2, 1, {3, 4}}};
  m.entry = 0;
  m.target = {{120, 160}, 50};
  return m;
}

}  // namespace

VesselMap make_fixture(const std::string& name) {
  VesselMap m;
  if (name == "straight")
    m = straight_fixture();
  else if (name == "y_bifurcation")
    m = y_fixture();
  else if (name == "renal_two_level")
    m = renal_fixture();
  else
    throw PhantomError("unknown fixture '" + name + "' (expected straight, y_bifurcation, renal_two_level)");
  validate(m);
  return m;
}

}  // namespace cathnav
