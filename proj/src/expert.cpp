#include "cathnav/expert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace cathnav::expert {

using nlohmann::json;

std::string to_string(Source s) { return s == Source::Human ? "human" : "oracle"; }

Source parse_source(const std::string& s) {
  if (s == "oracle") return Source::Oracle;
  if (s == "human") return Source::Human;
  throw ExpertError("unknown demonstration source '" + s + "'");
}

namespace {

// Route prefix ending with the parent edge of a bifurcation.
std::vector<int> prefix_to(const CatheterEnv& env, int parent_edge) {
  std::vector<int> prefix;
  for (int e : env.route()) {
    prefix.push_back(e);
    if (e == parent_edge) return prefix;
  }
  throw ExpertError("route does not pass edge " + std::to_string(parent_edge));
}

}  // namespace

double oracle_roll_deg(const CatheterEnv& env, const BifurcationEvent& ev) {
  return env.alignment_pitch_at(ev.bifurcation);
}

TargetPose oracle_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, const ExpertConfig& cfg) {
  const auto& map = env.map();
  const auto& bif = map.bifurcations.at(ev.bifurcation);
  const auto daughter = route_daughter(map, env.route(), bif.node);
  if (!daughter) throw ExpertError("route does not pass bifurcation " + std::to_string(ev.bifurcation));

  const auto& cat = env.config().catheter;
  const double pitch = env.alignment_pitch_at(ev.bifurcation);
  const double s_node = env.route_arclength_to_node(bif.node);
  const double s_base = std::max(0.0, s_node - cat.arc_forward_px() + cfg.advance_mm * cat.px_per_mm);
  const double insertion_mm = (s_base + cat.distal_segment_px()) / cat.px_per_mm;
  const auto pose = env.solve(insertion_mm, pitch, prefix_to(env, bif.parent_edge));

  TargetPose t;
  t.bifurcation = ev.bifurcation;
  t.branch_id = *daughter;
  t.source = Source::Oracle;
  t.d_target_px = env.d_max_px() * std::cos(deg2rad(pitch));
  t.p_target = pose.tip;
  const auto& parent = map.edges[bif.parent_edge].polyline;
  t.advance_direction = tangent_at(parent, polyline_length(parent));
  return t;
}

std::optional<std::string> check_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, const TargetPose& p) {
  const auto& map = env.map();
  if (p.bifurcation != ev.bifurcation) return "stale bifurcation_id";
  if (!std::isfinite(p.d_target_px) || !std::isfinite(p.p_target.x) || !std::isfinite(p.p_target.y))
    return "non-finite pose";
  if (std::find(ev.daughters.begin(), ev.daughters.end(), p.branch_id) == ev.daughters.end())
    return "branch_id is not a daughter of this bifurcation";
  if (std::abs(p.d_target_px) > env.d_max_px() + 1e-9) return "|D_target| exceeds D_max";
  if (map.distance_to_edge(p.p_target, p.branch_id) > map.edges[p.branch_id].radius)
    return "P_target lies outside the chosen daughter lumen";
  return std::nullopt;
}

Action oracle_action(const CatheterEnv& env) {
  const auto& st = env.state();
  const int b = env.next_route_bifurcation();
  Action a{1.0, 0.0};
  if (b < 0) return a;
  const double pitch = env.alignment_pitch_at(b);
  const double roll = wrap_deg(st.roll_deg);
  // +pitch and -pitch give the same planar shape; head for the nearer one
  const double goal = roll >= 0.0 ? pitch : -pitch;
  const double delta = wrap_deg(goal - roll);
  const double step = env.config().roll_deg_per_step;
  a.roll = std::clamp(delta / step, -1.0, 1.0);
  const double remaining_roll_steps = std::ceil(std::max(0.0, std::abs(delta) - step) / step);
  const auto& cat = env.config().catheter;
  const double s_node = env.route_arclength_to_node(env.map().bifurcations[b].node);
  const double s_base = std::max(0.0, st.insertion_mm * cat.px_per_mm - cat.distal_segment_px());
  const double push_px = env.config().push_mm_per_step * cat.px_per_mm;
  // hold position while a full push would carry the base past the node misaligned
  if (remaining_roll_steps > 0 && s_base + push_px >= s_node) a.push = 0.0;
  return a;
}

std::string encode_demo(const DemoRecord& r) {
  json j;
  j["s"] = r.s;
  j["a"] = r.a;
  j["source"] = to_string(r.source);
  j["episode"] = r.episode;
  return j.dump();
}

DemoRecord decode_demo(const std::string& line, std::size_t line_no) {
  const std::string where = "demonstration line " + std::to_string(line_no);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ExpertError(where + ": " + e.what());
  }
  DemoRecord r;
  try {
    const auto s = j.at("s").get<std::vector<double>>();
    const auto a = j.at("a").get<std::vector<double>>();
    if (s.size() != r.s.size()) throw ExpertError(where + ": s must hold " + std::to_string(r.s.size()) + " values");
    if (a.size() != r.a.size()) throw ExpertError(where + ": a must hold " + std::to_string(r.a.size()) + " values");
    std::copy(s.begin(), s.end(), r.s.begin());
    std::copy(a.begin(), a.end(), r.a.begin());
    r.source = parse_source(j.at("source").get<std::string>());
    r.episode = j.at("episode").get<int>();
  } catch (const json::exception& e) {
    throw ExpertError(where + ": " + e.what());
  } catch (const ExpertError& e) {
    if (std::string(e.what()).rfind(where, 0) == 0) throw;
    throw ExpertError(where + ": " + e.what());
  }
  for (double v : r.a)
    if (!(v >= -1.0 && v <= 1.0)) throw ExpertError(where + ": action outside [-1, 1]");
  return r;
}

DemoStore::DemoStore(std::filesystem::path file) : file_(std::move(file)) {}

void DemoStore::append(const DemoRecord& r) {
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    if (!out) throw ExpertError("cannot append to " + file_->string());
    out << encode_demo(r) << '\n';
  }
  records_.push_back(r);
}

void DemoStore::append(const std::vector<DemoRecord>& rs) {
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    if (!out) throw ExpertError("cannot append to " + file_->string());
    for (const auto& r : rs) out << encode_demo(r) << '\n';
  }
  records_.insert(records_.end(), rs.begin(), rs.end());
}

DemoStore DemoStore::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ExpertError("cannot open " + file.string());
  DemoStore store;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    store.records_.push_back(decode_demo(line, no));
  }
  store.file_ = file;
  return store;
}

std::vector<DemoRecord> generate_oracle_demos(const VesselMap& map, const EnvConfig& cfg, int episodes,
                                              std::uint64_t seed) {
  CatheterEnv env(map, cfg);
  std::vector<DemoRecord> out;
  for (int ep = 0; ep < episodes; ++ep) {
    Observation obs = env.reset(seed + static_cast<std::uint64_t>(ep));
    while (!env.state().done) {
      const Action a = oracle_action(env);
      out.push_back({obs, {a.push, a.roll}, Source::Oracle, -1 - ep});
      obs = env.step(a).obs;
    }
  }
  return out;
}

}  // namespace cathnav::expert
