#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cathnav/geometry.hpp"

namespace cathnav::imaging {

class ImagingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major bit grid; 1 = foreground. Pixel (col, row) sits at point (x=col, y=row).
struct BinaryImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  BinaryImage() = default;
  BinaryImage(int w, int h);

  std::uint8_t at(int col, int row) const {
    if (col < 0 || row < 0 || col >= width || row >= height) return 0;
    return data[static_cast<std::size_t>(row) * width + col];
  }
  void set(int col, int row, std::uint8_t v) { data[static_cast<std::size_t>(row) * width + col] = v; }
  std::size_t count() const;
  bool operator==(const BinaryImage&) const = default;
};

// P5 PGM with 0/255 values; reading thresholds at 128.
void write_pgm(const BinaryImage& img, const std::filesystem::path& path);
BinaryImage read_pgm(const std::filesystem::path& path);
std::string encode_pgm(const BinaryImage& img);
BinaryImage decode_pgm(const std::string& bytes);

// Neighbours p2..p9 clockwise from north: N, NE, E, SE, S, SW, W, NW.
using Neighborhood = std::array<std::uint8_t, 8>;
Neighborhood neighborhood(const BinaryImage& img, int col, int row);

// Number of 0 -> 1 transitions in the cyclic sequence p2, p3, ..., p9, p2.
int connectivity_number(const Neighborhood& nb);

// Deletion test of the two-subpass thinning; subpass is 0 or 1.
bool deletable(const BinaryImage& img, int col, int row, int subpass);

// Iterative two-subpass thinning until no pixel changes.
BinaryImage thin(const BinaryImage& img);

// 8-connected foreground components.
int count_components(const BinaryImage& img);

// Exact Euclidean distance to the nearest in-image background pixel.
std::vector<double> distance_transform(const BinaryImage& img);

struct SkeletonPath {
  std::vector<Vec2> points;  // Q1 first, Q2 last
  Vec2 q1;
  Vec2 q2;
  bool disconnected = false;  // skeleton had more than one component
  bool smoothing_skipped = false;
  double radius = 0.0;  // median distance-transform value along the path
};

SkeletonPath extract_centerline(const BinaryImage& skel, const BinaryImage& original);

// Savitzky-Golay smoothing per coordinate; boundary points use the polynomial
// fitted to the first / last full window. Paths shorter than the window are
// returned unchanged with smoothing_skipped set.
SkeletonPath smooth_path(const SkeletonPath& path, int window, int order);

// Convolution weights of a Savitzky-Golay fit over `window` samples,
// evaluated at sample index `eval_index` within the window.
std::vector<double> savgol_weights(int window, int order, int eval_index);

struct ProximalLine {
  double k = 0.0;  // kx - y + b = 0
  double b = 0.0;
  bool vertical = false;  // |k| capped; use anchor/direction
  Vec2 anchor;            // point on the line
  Vec2 direction;         // unit, oriented like AB = (1, k)
};

constexpr double kMaxSlope = 1e6;

// Least-squares line over the leading `fraction` of the points (at least 2),
// taken from the front of the path when proximal_at_front, else from the back.
ProximalLine fit_proximal_line(const std::vector<Vec2>& pts, bool proximal_at_front, double fraction = 0.3);

// Signed distance from the line kx - y + b = 0: magnitude |kx - y + b| / sqrt(k^2 + 1),
// sign of AB x AP with A = (0, b), B = (1, k + b).
double signed_distance(Vec2 p, double k, double b);
// Same rule using an anchor point and direction (handles near-vertical lines).
double signed_distance(Vec2 p, const ProximalLine& line);

struct Calibration {
  double d_px_range = 215.0;
  double d_cm_range = 2.5;
  double e_px_range = 80.0;
  double deg_per_px = 1.125;

  double cm_per_px() const { return d_cm_range / d_px_range; }
};

struct PhysicalPose {
  double d_cm = 0.0;
  double e_deg = 0.0;
  bool clamped = false;
};

// d = D (2.5 / 215) cm, e = (80 - E) 1.125 deg; inputs clamped to the
// calibrated ranges [0, 215] and [0, 80].
PhysicalPose pixels_to_physical(double d_px, double e_px, const Calibration& cal = {});

enum class EntrySide { Left, Right, Top, Bottom };
EntrySide parse_entry_side(const std::string& s);
std::string to_string(EntrySide s);

struct PipelineConfig {
  int sg_window = 9;
  int sg_order = 3;
  double proximal_fraction = 0.3;
  EntrySide entry_side = EntrySide::Right;
  // Thinning can erode the distal end of thick diagonal bands; when set, the
  // tip is re-found by marching along the distal direction to the mask edge.
  bool refine_tip = true;
};

// March from the distal path end along its direction to the last foreground
// pixel, then step back by the path radius.
Vec2 refine_tip(const BinaryImage& mask, const std::vector<Vec2>& path_to_tip, double radius);

struct TipPose {
  Vec2 tip;
  double d = 0.0;
  ProximalLine line;
  Vec2 proximal_end;
  SkeletonPath path;  // smoothed, ordered proximal -> tip
};

// thin -> extract_centerline -> smooth_path -> (refine_tip) -> fit_proximal_line
// -> signed_distance.
TipPose estimate_tip_pose(const BinaryImage& mask, const PipelineConfig& cfg = {});

}  // namespace cathnav::imaging
