#pragma once

// Independent reference implementations: direct translations of the metric
// and top-k definitions that share no code with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "ecg/graph.hpp"
#include "ecg/rng.hpp"

namespace ecg::testing {

// Brute-force oracle working from an explicit undirected edge list; shares no
// code with the library.
struct Oracle {
  double h_edge;
  std::optional<double> h_adj;
  std::optional<double> li;
};

inline Oracle oracle(const std::vector<std::pair<NodeId, NodeId>>& edges, const std::vector<int>& y) {
  const double m = static_cast<double>(edges.size());
  double same = 0;
  std::map<int, double> deg_mass;
  std::map<std::pair<int, int>, double> joint;
  for (auto [u, v] : edges) {
    if (y[u] == y[v]) same += 1;
    deg_mass[y[u]] += 1;
    deg_mass[y[v]] += 1;
    joint[{y[u], y[v]}] += 1;
    joint[{y[v], y[u]}] += 1;
  }
  Oracle o{};
  o.h_edge = same / m;
  double sq = 0;
  for (auto& [k, d] : deg_mass) sq += (d / (2 * m)) * (d / (2 * m));
  if (1 - sq >= 1e-12) o.h_adj = (o.h_edge - sq) / (1 - sq);

  double H = 0;
  for (auto& [k, d] : deg_mass) {
    const double p = d / (2 * m);
    if (p > 0) H -= p * std::log(p);
  }
  double I = 0;
  for (auto& [ab, c] : joint) {
    const double p = c / (2 * m);
    const double pa = deg_mass[ab.first] / (2 * m);
    const double pb = deg_mass[ab.second] / (2 * m);
    I += p * std::log(p / (pa * pb));
  }
  if (H >= 1e-12) o.li = I / H;
  return o;
}

// Direct translation of the cosine top-k definition: full score table, then a
// stable sort of every candidate by (score desc, id asc).
inline std::vector<std::vector<NodeId>> naive_topk(const FeatureMatrix& e, std::size_t k) {
  const std::size_t n = e.rows;
  std::vector<double> norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < e.cols; ++j) s += double(e.at(i, j)) * double(e.at(i, j));
    norm[i] = std::sqrt(s);
  }
  std::vector<std::vector<NodeId>> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<std::pair<double, NodeId>> cand;
    for (std::size_t v = 0; v < n; ++v) {
      if (v == u) continue;
      double s = 0;
      if (norm[u] > 0 && norm[v] > 0) {
        double dot = 0;
        for (std::size_t j = 0; j < e.cols; ++j) dot += double(e.at(u, j)) * double(e.at(v, j));
        s = dot / (norm[u] * norm[v]);
      }
      cand.emplace_back(s, static_cast<NodeId>(v));
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t j = 0; j < k; ++j) out[u].push_back(cand[j].second);
  }
  return out;
}

/// Small-integer rows with duplicated, doubled and zero rows to force ties.
inline FeatureMatrix tie_heavy_matrix(std::size_t n, std::size_t d, Rng& rng) {
  FeatureMatrix m(n, d);
  for (auto& v : m.values) v = static_cast<float>(static_cast<int>(rng() % 5) - 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto mode = rng() % 6;
    if (i > 0 && mode == 0) {
      const auto src = rng() % i;
      for (std::size_t j = 0; j < d; ++j) m.at(i, j) = m.at(src, j);
    } else if (i > 0 && mode == 1) {
      const auto src = rng() % i;
      for (std::size_t j = 0; j < d; ++j) m.at(i, j) = 2.0f * m.at(src, j);
    } else if (mode == 2 && rng() % 4 == 0) {
      for (std::size_t j = 0; j < d; ++j) m.at(i, j) = 0.0f;
    }
  }
  return m;
}

}  // namespace ecg::testing
