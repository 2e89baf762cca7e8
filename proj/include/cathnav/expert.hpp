#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cathnav/env.hpp"

namespace cathnav::expert {

class ExpertError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Source { Oracle, Human };
std::string to_string(Source s);
Source parse_source(const std::string& s);

struct TargetPose {
  int bifurcation = -1;
  double d_target_px = 0.0;
  Vec2 p_target;
  int branch_id = -1;
  Source source = Source::Oracle;
  Vec2 advance_direction{1.0, 0.0};  // parent tangent at the node
};

struct ExpertConfig {
  double advance_mm = 8.0;
};

// Target configuration: bend rolled to the alignment pitch of the route
// daughter, tip advance_mm past the node with the arc base still in the
// parent. D_target = D_max cos(pitch); P_target is that configuration's tip.
TargetPose oracle_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, const ExpertConfig& cfg = {});

// Roll at which the oracle configuration is reached.
double oracle_roll_deg(const CatheterEnv& env, const BifurcationEvent& ev);

// nullopt when the pose is acceptable, else the rejection reason.
std::optional<std::string> check_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, const TargetPose& p);

// Scripted full-route controller: rolls toward the alignment pitch of the
// next route bifurcation and pushes unless the base would cross the node
// before the roll is aligned.
Action oracle_action(const CatheterEnv& env);

struct DemoRecord {
  Observation s{};
  std::array<double, kActDim> a{};
  Source source = Source::Oracle;
  int episode = 0;

  bool operator==(const DemoRecord&) const = default;
};

std::string encode_demo(const DemoRecord& r);
// Throws ExpertError naming line_no on malformed input.
DemoRecord decode_demo(const std::string& line, std::size_t line_no);

// Append-only record sequence, optionally mirrored to a JSON-lines file.
class DemoStore {
 public:
  DemoStore() = default;
  explicit DemoStore(std::filesystem::path file);

  void append(const DemoRecord& r);
  void append(const std::vector<DemoRecord>& rs);
  const std::vector<DemoRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  static DemoStore load(const std::filesystem::path& file);

 private:
  std::optional<std::filesystem::path> file_;
  std::vector<DemoRecord> records_;
};

// Oracle demonstrations over whole episodes; resets use seeds seed, seed+1, ...
// and the records carry episode numbers -1, -2, ... to keep them apart from
// training episodes.
std::vector<DemoRecord> generate_oracle_demos(const VesselMap& map, const EnvConfig& cfg, int episodes,
                                              std::uint64_t seed);

class Gateway {
 public:
  virtual ~Gateway() = default;
  virtual TargetPose request_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, int episode) = 0;
};

class OracleGateway : public Gateway {
 public:
  explicit OracleGateway(ExpertConfig cfg = {}) : cfg_(cfg) {}
  TargetPose request_target_pose(const CatheterEnv& env, const BifurcationEvent& ev, int) override {
    return oracle_target_pose(env, ev, cfg_);
  }

 private:
  ExpertConfig cfg_;
};

}  // namespace cathnav::expert
