#pragma once

// Reference implementations shared by the unit tests and the acceptance tool.
// They are written from the rule statements, not from the library code.

#include <algorithm>
#include <deque>
#include <random>
#include <utility>
#include <vector>

#include "cathnav/imaging.hpp"

namespace cathnav::oracle {

// Two-subpass deletion rule on the 8-neighbourhood P2..P9, clockwise from north.
inline bool deletable(const imaging::BinaryImage& img, int c, int r, int subpass) {
  if (!img.at(c, r)) return false;
  const int p2 = img.at(c, r - 1), p3 = img.at(c + 1, r - 1), p4 = img.at(c + 1, r), p5 = img.at(c + 1, r + 1);
  const int p6 = img.at(c, r + 1), p7 = img.at(c - 1, r + 1), p8 = img.at(c - 1, r), p9 = img.at(c - 1, r - 1);
  const int seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
  int a = 0;
  for (int i = 0; i < 8; ++i) a += (seq[i] == 0 && seq[i + 1] == 1);
  const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
  if (b < 2 || b > 6 || a != 1) return false;
  if (subpass == 0) return p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0;
  return p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0;
}

// 8-connected components by breadth-first flood fill.
inline int components(const imaging::BinaryImage& img) {
  std::vector<int> seen(img.data.size(), 0);
  int n = 0;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      if (!img.at(c, r) || seen[r * img.width + c]) continue;
      ++n;
      std::deque<std::pair<int, int>> q{{c, r}};
      seen[r * img.width + c] = 1;
      while (!q.empty()) {
        auto [x, y] = q.front();
        q.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int u = x + dx, v = y + dy;
            if (img.at(u, v) && !seen[v * img.width + u]) {
              seen[v * img.width + u] = 1;
              q.push_back({u, v});
            }
          }
      }
    }
  return n;
}

// Union of 1 to 4 discs and rectangles on a 64x64 canvas.
inline imaging::BinaryImage random_blob(std::mt19937_64& rng) {
  imaging::BinaryImage img(64, 64);
  std::uniform_int_distribution<int> count(1, 4), pos(8, 55), rad(3, 7), len(4, 20);
  const int parts = count(rng);
  for (int k = 0; k < parts; ++k) {
    const int cx = pos(rng), cy = pos(rng), rr = rad(rng);
    if (k % 2 == 0) {
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
          if ((c - cx) * (c - cx) + (r - cy) * (r - cy) <= rr * rr) img.set(c, r, 1);
    } else {
      const int w = len(rng), h = rad(rng);
      for (int r = std::max(1, cy - h); r < std::min(63, cy + h); ++r)
        for (int c = std::max(1, cx - w); c < std::min(63, cx + w); ++c) img.set(c, r, 1);
    }
  }
  return img;
}

// Episode e is a stable success when e-5..e+5 all exist and all succeeded.
inline std::vector<bool> flanked(const std::vector<bool>& raw) {
  const int n = static_cast<int>(raw.size());
  std::vector<bool> out(raw.size(), false);
  for (int e = 0; e < n; ++e) {
    if (e - 5 < 0 || e + 5 >= n) continue;
    bool ok = true;
    for (int j = e - 5; j <= e + 5; ++j) ok = ok && raw[j];
    out[e] = ok;
  }
  return out;
}

}  // namespace cathnav::oracle
