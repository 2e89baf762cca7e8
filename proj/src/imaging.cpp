#include "cathnav/imaging.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

namespace cathnav::imaging {

BinaryImage::BinaryImage(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ImagingError("image dimensions must be positive");
  data.assign(static_cast<std::size_t>(w) * h, 0);
}

std::size_t BinaryImage::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

std::string encode_pgm(const BinaryImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (auto v : img.data) out.push_back(static_cast<char>(v ? 255 : 0));
  return out;
}

BinaryImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ImagingError("PGM: expected P5 magic");
  auto next_int = [&]() {
    // skip whitespace and comment lines
    for (;;) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
      } else {
        break;
      }
    }
    int v = 0;
    if (!(in >> v)) throw ImagingError("PGM: malformed header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval <= 0 || maxval > 255) throw ImagingError("PGM: only 8-bit images are supported");
  in.get();  // single whitespace after maxval
  BinaryImage img(w, h);
  std::string raw(static_cast<std::size_t>(w) * h, '\0');
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw ImagingError("PGM: truncated pixel data");
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<unsigned char>(raw[i]) >= 128 ? 1 : 0;
  return img;
}

void write_pgm(const BinaryImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImagingError("cannot write " + path.string());
  const auto bytes = encode_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

BinaryImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImagingError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str());
}

namespace {

constexpr int kDc[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDr[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

}  // namespace

Neighborhood neighborhood(const BinaryImage& img, int col, int row) {
  Neighborhood nb{};
  for (int i = 0; i < 8; ++i) nb[i] = img.at(col + kDc[i], row + kDr[i]) ? 1 : 0;
  return nb;
}

int connectivity_number(const Neighborhood& nb) {
  int s = 0;
  for (int i = 0; i < 8; ++i) s += (nb[i] == 0 && nb[(i + 1) % 8] != 0);
  return s;
}

bool deletable(const BinaryImage& img, int col, int row, int subpass) {
  if (!img.at(col, row)) return false;
  const auto nb = neighborhood(img, col, row);
  int count = 0;
  for (auto v : nb) count += v;
  if (count < 2 || count > 6) return false;
  if (connectivity_number(nb) != 1) return false;
  const int p2 = nb[0], p4 = nb[2], p6 = nb[4], p8 = nb[6];
  if (subpass == 0) return p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0;
  return p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0;
}

BinaryImage thin(const BinaryImage& img) {
  BinaryImage out = img;
  std::vector<std::pair<int, int>> live;
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      if (out.at(c, r)) live.emplace_back(c, r);

  std::vector<std::pair<int, int>> doomed;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int subpass = 0; subpass < 2; ++subpass) {
      doomed.clear();
      for (auto [c, r] : live)
        if (deletable(out, c, r, subpass)) doomed.emplace_back(c, r);
      for (auto [c, r] : doomed) out.set(c, r, 0);
      if (!doomed.empty()) {
        changed = true;
        std::erase_if(live, [&](const auto& p) { return !out.at(p.first, p.second); });
      }
    }
  }
  return out;
}

int count_components(const BinaryImage& img) {
  std::vector<char> seen(img.data.size(), 0);
  int components = 0;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const auto idx = static_cast<std::size_t>(r) * img.width + c;
      if (!img.data[idx] || seen[idx]) continue;
      ++components;
      seen[idx] = 1;
      stack.emplace_back(c, r);
      while (!stack.empty()) {
        auto [cc, rr] = stack.back();
        stack.pop_back();
        for (int i = 0; i < 8; ++i) {
          const int nc = cc + kDc[i], nr = rr + kDr[i];
          if (!img.at(nc, nr)) continue;
          const auto nidx = static_cast<std::size_t>(nr) * img.width + nc;
          if (seen[nidx]) continue;
          seen[nidx] = 1;
          stack.emplace_back(nc, nr);
        }
      }
    }
  }
  return components;
}

namespace {

// 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = ((f[q] + q * double(q)) - (f[v[k]] + v[k] * double(v[k]))) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * double(q)) - (f[v[k]] + v[k] * double(v[k]))) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> distance_transform(const BinaryImage& img) {
  const int w = img.width, h = img.height;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = img.data[i] ? inf : 0.0;

  const int n = std::max(w, h);
  std::vector<double> f, d;
  std::vector<int> v(n + 1);
  std::vector<double> z(n + 2);
  f.resize(h);
  d.resize(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d, v, z);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
  }
  f.resize(w);
  d.resize(w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d, v, z);
    for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = std::sqrt(d[c]);
  }
  return grid;
}

namespace {

struct SkeletonGraph {
  std::vector<std::pair<int, int>> pixels;  // (col, row), sorted by (row, col)
  std::vector<std::vector<int>> adj;
};

SkeletonGraph build_graph(const BinaryImage& skel) {
  SkeletonGraph g;
  std::vector<int> index(skel.data.size(), -1);
  for (int r = 0; r < skel.height; ++r)
    for (int c = 0; c < skel.width; ++c)
      if (skel.at(c, r)) {
        index[static_cast<std::size_t>(r) * skel.width + c] = static_cast<int>(g.pixels.size());
        g.pixels.emplace_back(c, r);
      }
  g.adj.resize(g.pixels.size());
  for (std::size_t i = 0; i < g.pixels.size(); ++i) {
    auto [c, r] = g.pixels[i];
    for (int k = 0; k < 8; ++k) {
      const int nc = c + kDc[k], nr = r + kDr[k];
      if (!skel.at(nc, nr)) continue;
      g.adj[i].push_back(index[static_cast<std::size_t>(nr) * skel.width + nc]);
    }
  }
  return g;
}

// Hop distances and BFS parents from src; -1 for unreachable.
void bfs(const SkeletonGraph& g, int src, std::vector<int>& dist, std::vector<int>& parent) {
  dist.assign(g.pixels.size(), -1);
  parent.assign(g.pixels.size(), -1);
  std::deque<int> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    for (int v : g.adj[u]) {
      if (dist[v] >= 0) continue;
      dist[v] = dist[u] + 1;
      parent[v] = u;
      q.push_back(v);
    }
  }
}

// Farthest reachable pixel; pixels are in (row, col) order so the first
// maximum is the lexicographic tie-break.
int farthest(const std::vector<int>& dist) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(dist.size()); ++i)
    if (dist[i] >= 0 && (best < 0 || dist[i] > dist[best])) best = i;
  return best;
}

}  // namespace

SkeletonPath extract_centerline(const BinaryImage& skel, const BinaryImage& original) {
  if (skel.width != original.width || skel.height != original.height)
    throw ImagingError("skeleton and mask sizes differ");
  const auto g = build_graph(skel);
  if (g.pixels.empty()) throw ImagingError("empty skeleton");
  if (g.pixels.size() < 2) throw ImagingError("skeleton has fewer than 2 pixels");

  const auto edt = distance_transform(original);
  auto edt_at = [&](int i) {
    auto [c, r] = g.pixels[i];
    return edt[static_cast<std::size_t>(r) * original.width + c];
  };

  // Q1: the deepest endpoint (degree-1 pixel); all pixels when there is none
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(g.pixels.size()); ++i)
    if (g.adj[i].size() == 1) candidates.push_back(i);
  if (candidates.empty())
    for (int i = 0; i < static_cast<int>(g.pixels.size()); ++i) candidates.push_back(i);
  int q1 = candidates.front();
  for (int i : candidates)
    if (edt_at(i) > edt_at(q1)) q1 = i;

  std::vector<int> dist, parent;
  bfs(g, q1, dist, parent);
  const int q2 = farthest(dist);

  // re-anchor Q1 when another tip lies farther from Q2 (Q1 on a side spur)
  std::vector<int> dist2, parent2;
  bfs(g, q2, dist2, parent2);
  const int far = farthest(dist2);
  SkeletonPath path;
  int start = q1;
  if (dist2[far] > dist2[q1]) {
    start = far;
    dist = dist2;
    parent = parent2;
    // walk from `far` back to q2 below
  }

  std::vector<int> chain;
  if (start == q1) {
    for (int v = q2; v >= 0; v = parent[v]) chain.push_back(v);
    std::reverse(chain.begin(), chain.end());  // q1 ... q2
  } else {
    for (int v = start; v >= 0; v = parent2[v]) chain.push_back(v);  // far ... q2
  }
  for (int v : chain) path.points.push_back({double(g.pixels[v].first), double(g.pixels[v].second)});
  path.q1 = path.points.front();
  path.q2 = path.points.back();

  std::size_t reachable = 0;
  for (int d : dist2) reachable += d >= 0;
  path.disconnected = reachable != g.pixels.size();

  std::vector<double> radii;
  for (int v : chain) radii.push_back(edt_at(v));
  std::nth_element(radii.begin(), radii.begin() + radii.size() / 2, radii.end());
  path.radius = radii[radii.size() / 2];
  return path;
}

std::vector<double> savgol_weights(int window, int order, int eval_index) {
  if (window < 1 || window % 2 == 0) throw ImagingError("Savitzky-Golay window must be odd");
  if (order < 0 || order >= window) throw ImagingError("Savitzky-Golay order must be below the window");
  const int half = window / 2;
  Eigen::MatrixXd a(window, order + 1);
  for (int i = 0; i < window; ++i) {
    const double t = i - half;
    double p = 1.0;
    for (int j = 0; j <= order; ++j) {
      a(i, j) = p;
      p *= t;
    }
  }
  // pseudo-inverse rows give polynomial coefficients; evaluate at eval_index
  const Eigen::MatrixXd pinv = a.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(window, window));
  Eigen::RowVectorXd basis(order + 1);
  const double t = eval_index - half;
  double p = 1.0;
  for (int j = 0; j <= order; ++j) {
    basis(j) = p;
    p *= t;
  }
  const Eigen::RowVectorXd w = basis * pinv;
  return {w.data(), w.data() + w.size()};
}

SkeletonPath smooth_path(const SkeletonPath& path, int window, int order) {
  if (window < 1 || window % 2 == 0) throw ImagingError("Savitzky-Golay window must be odd");
  if (order >= window) throw ImagingError("Savitzky-Golay order must be below the window");
  SkeletonPath out = path;
  const int n = static_cast<int>(path.points.size());
  if (n < window) {
    out.smoothing_skipped = true;
    return out;
  }
  const int half = window / 2;
  std::vector<std::vector<double>> weights(window);
  for (int e = 0; e < window; ++e) weights[e] = savgol_weights(window, order, e);

  for (int i = 0; i < n; ++i) {
    int start, eval;
    if (i < half) {
      start = 0;
      eval = i;
    } else if (i >= n - half) {
      start = n - window;
      eval = i - start;
    } else {
      start = i - half;
      eval = half;
    }
    Vec2 acc{};
    for (int j = 0; j < window; ++j) acc += path.points[start + j] * weights[eval][j];
    out.points[i] = acc;
  }
  out.q1 = out.points.front();
  out.q2 = out.points.back();
  return out;
}

ProximalLine fit_proximal_line(const std::vector<Vec2>& pts, bool proximal_at_front, double fraction) {
  const std::size_t n = pts.size();
  if (n < 2) throw ImagingError("line fit needs at least 2 points");
  const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(fraction * n)), 2, n);
  std::vector<Vec2> sel;
  for (std::size_t i = 0; i < m; ++i) sel.push_back(proximal_at_front ? pts[i] : pts[n - 1 - i]);

  double mx = 0, my = 0;
  for (auto p : sel) {
    mx += p.x;
    my += p.y;
  }
  mx /= m;
  my /= m;
  double sxx = 0, syy = 0, sxy = 0;
  for (auto p : sel) {
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  ProximalLine line;
  line.anchor = {mx, my};
  if (sxx >= syy && sxx > 0.0) {
    line.k = sxy / sxx;
  } else {
    // regress x on y, then invert
    const double slope_xy = syy > 0.0 ? sxy / syy : 0.0;
    if (std::abs(slope_xy) * kMaxSlope <= 1.0) {
      line.vertical = true;
      line.k = slope_xy >= 0.0 ? kMaxSlope : -kMaxSlope;
      line.b = my - line.k * mx;
      line.direction = slope_xy == 0.0 ? Vec2{0.0, 1.0} : (Vec2{slope_xy, 1.0} * (slope_xy > 0 ? 1.0 : -1.0)).normalized();
      return line;
    }
    line.k = 1.0 / slope_xy;
  }
  line.b = my - line.k * mx;
  line.direction = line_direction(line.k);
  return line;
}

double signed_distance(Vec2 p, double k, double b) {
  const double mag = std::abs(k * p.x - p.y + b) / std::sqrt(k * k + 1.0);
  // AB = (1, k), AP = (x, y - b)
  const double cross = 1.0 * (p.y - b) - k * p.x;
  if (cross > 0.0) return mag;
  if (cross < 0.0) return -mag;
  return 0.0;
}

double signed_distance(Vec2 p, const ProximalLine& line) {
  if (!line.vertical) return signed_distance(p, line.k, line.b);
  return line.direction.cross(p - line.anchor);
}

PhysicalPose pixels_to_physical(double d_px, double e_px, const Calibration& cal) {
  PhysicalPose out;
  if (d_px < 0.0 || d_px > cal.d_px_range || e_px < 0.0 || e_px > cal.e_px_range) out.clamped = true;
  d_px = std::clamp(d_px, 0.0, cal.d_px_range);
  e_px = std::clamp(e_px, 0.0, cal.e_px_range);
  out.d_cm = d_px * (cal.d_cm_range / cal.d_px_range);
  out.e_deg = (cal.e_px_range - e_px) * cal.deg_per_px;
  return out;
}

EntrySide parse_entry_side(const std::string& s) {
  if (s == "left") return EntrySide::Left;
  if (s == "right") return EntrySide::Right;
  if (s == "top") return EntrySide::Top;
  if (s == "bottom") return EntrySide::Bottom;
  throw ImagingError("unknown entry side '" + s + "'");
}

std::string to_string(EntrySide s) {
  switch (s) {
    case EntrySide::Left: return "left";
    case EntrySide::Right: return "right";
    case EntrySide::Top: return "top";
    case EntrySide::Bottom: return "bottom";
  }
  return "right";
}

namespace {

double distance_to_side(Vec2 p, EntrySide side, int w, int h) {
  switch (side) {
    case EntrySide::Left: return p.x;
    case EntrySide::Right: return (w - 1) - p.x;
    case EntrySide::Top: return p.y;
    case EntrySide::Bottom: return (h - 1) - p.y;
  }
  return 0.0;
}

}  // namespace

Vec2 refine_tip(const BinaryImage& mask, const std::vector<Vec2>& pts, double radius) {
  const std::size_t n = pts.size();
  if (n < 2) return pts.back();
  const std::size_t k = std::min<std::size_t>(12, n - 1);
  const Vec2 dir = (pts[n - 1] - pts[n - 1 - k]).normalized();
  if (dir.norm() == 0.0) return pts.back();
  constexpr double step = 0.25;
  Vec2 q = pts.back();
  const double max_len = mask.width + mask.height;
  for (double s = 0.0; s < max_len; s += step) {
    const Vec2 next = q + dir * step;
    if (!mask.at(static_cast<int>(std::lround(next.x)), static_cast<int>(std::lround(next.y)))) break;
    q = next;
  }
  // the EDT of a pixel grid overshoots the geometric radius by about a pixel
  const double back = std::max(0.0, radius - 1.0);
  const double travelled = (q - pts.back()).dot(dir);
  return q - dir * std::min(back, travelled);
}

TipPose estimate_tip_pose(const BinaryImage& mask, const PipelineConfig& cfg) {
  const BinaryImage skel = thin(mask);
  SkeletonPath raw = extract_centerline(skel, mask);
  SkeletonPath path = smooth_path(raw, cfg.sg_window, cfg.sg_order);

  // orient proximal -> tip: the proximal end is nearer the entry side
  const bool front_is_proximal = distance_to_side(path.points.front(), cfg.entry_side, mask.width, mask.height) <=
                                 distance_to_side(path.points.back(), cfg.entry_side, mask.width, mask.height);
  if (!front_is_proximal) std::reverse(path.points.begin(), path.points.end());

  TipPose pose;
  pose.line = fit_proximal_line(path.points, true, cfg.proximal_fraction);
  pose.proximal_end = path.points.front();
  pose.tip = cfg.refine_tip ? refine_tip(mask, path.points, path.radius) : path.points.back();
  pose.d = signed_distance(pose.tip, pose.line);
  pose.path = std::move(path);
  return pose;
}

}  // namespace cathnav::imaging
