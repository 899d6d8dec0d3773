#include "ecg/rewiring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <fmt/core.h>

namespace ecg {

EcgEdges::EcgEdges(std::size_t num_nodes, std::size_t k, std::vector<NodeId> neighbors,
                   std::vector<double> scores)
    : num_nodes_(num_nodes), k_(k), neighbors_(std::move(neighbors)), scores_(std::move(scores)) {
  if (neighbors_.size() != num_nodes * k || scores_.size() != neighbors_.size()) {
    throw std::invalid_argument("EcgEdges: list sizes do not match num_nodes * k");
  }
}

std::vector<std::pair<NodeId, NodeId>> EcgEdges::pairs() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(neighbors_.size());
  for (NodeId u = 0; u < num_nodes_; ++u) {
    for (NodeId v : neighbors(u)) out.emplace_back(u, v);
  }
  return out;
}

DirectedEdges directed_edges(const Graph& g) {
  DirectedEdges out;
  out.num_nodes = g.num_nodes();
  out.offsets.assign(g.row_offsets().begin(), g.row_offsets().end());
  out.senders.assign(g.neighbor_ids().begin(), g.neighbor_ids().end());
  return out;
}

DirectedEdges directed_edges(const EcgEdges& e) {
  DirectedEdges out;
  out.num_nodes = e.num_nodes();
  out.offsets.resize(e.num_nodes() + 1);
  for (std::size_t u = 0; u <= e.num_nodes(); ++u) out.offsets[u] = u * e.k();
  out.senders.reserve(e.num_edges());
  for (NodeId u = 0; u < e.num_nodes(); ++u) {
    auto row = e.neighbors(u);
    out.senders.insert(out.senders.end(), row.begin(), row.end());
  }
  return out;
}

DirectedEdges symmetrized_edges(const EcgEdges& e) {
  std::vector<std::vector<NodeId>> rows(e.num_nodes());
  for (NodeId u = 0; u < e.num_nodes(); ++u) {
    for (NodeId v : e.neighbors(u)) {
      rows[u].push_back(v);
      rows[v].push_back(u);
    }
  }
  DirectedEdges out;
  out.num_nodes = e.num_nodes();
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    out.senders.insert(out.senders.end(), r.begin(), r.end());
    out.offsets.push_back(out.senders.size());
  }
  return out;
}

EcgEdges cosine_topk(const FeatureMatrix& emb, std::size_t k, unsigned num_threads) {
  const std::size_t n = emb.rows, d = emb.cols;
  if (k == 0) throw std::invalid_argument("cosine_topk: k must be at least 1");
  if (k >= n) {
    throw std::invalid_argument(fmt::format("cosine_topk: k={} must be below num_nodes={}", k, n));
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (float v : emb.row(i)) sq += static_cast<double>(v) * static_cast<double>(v);
    norms[i] = std::sqrt(sq);
  }

  std::vector<NodeId> neighbors(n * k);
  std::vector<double> scores(n * k);

  auto process_rows = [&](std::size_t begin, std::size_t end) {
    std::vector<double> sim(n);
    std::vector<NodeId> order(n - 1);
    for (std::size_t u = begin; u < end; ++u) {
      auto eu = emb.row(u);
      for (std::size_t v = 0; v < n; ++v) {
        if (norms[u] == 0.0 || norms[v] == 0.0) {
          sim[v] = 0.0;
          continue;
        }
        auto ev = emb.row(v);
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(eu[j]) * ev[j];
        sim[v] = dot / (norms[u] * norms[v]);
      }
      std::size_t w = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (v != u) order[w++] = static_cast<NodeId>(v);
      }
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                        [&](NodeId a, NodeId b) {
                          if (sim[a] != sim[b]) return sim[a] > sim[b];
                          return a < b;
                        });
      for (std::size_t j = 0; j < k; ++j) {
        neighbors[u * k + j] = order[j];
        scores[u * k + j] = sim[order[j]];
      }
    }
  };

  unsigned threads = num_threads ? num_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, (n + 63) / 64));
  if (threads <= 1) {
    process_rows(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t block = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * block, e = std::min(n, b + block);
      if (b < e) pool.emplace_back(process_rows, b, e);
    }
  }
  return EcgEdges(n, k, std::move(neighbors), std::move(scores));
}

double ecg_homophily(const EcgEdges& edges, std::span<const int> labels) {
  if (labels.size() != edges.num_nodes()) {
    throw std::invalid_argument("ecg_homophily: label count differs from node count");
  }
  if (edges.num_edges() == 0) return 0.0;
  std::size_t same = 0;
  for (NodeId u = 0; u < edges.num_nodes(); ++u) {
    for (NodeId v : edges.neighbors(u)) same += labels[u] == labels[v];
  }
  return static_cast<double>(same) / static_cast<double>(edges.num_edges());
}

DirectedEdges drop_edge(const DirectedEdges& edges, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("drop_edge: p outside [0, 1]");
  if (p == 0.0) return edges;
  DirectedEdges out;
  out.num_nodes = edges.num_nodes;
  out.offsets.reserve(edges.num_nodes + 1);
  if (p < 1.0) out.senders.reserve(static_cast<std::size_t>(edges.num_edges() * (1.0 - p)) + 16);
  for (NodeId u = 0; u < edges.num_nodes; ++u) {
    for (NodeId v : edges.row(u)) {
      if (uniform01(rng) >= p) out.senders.push_back(v);
    }
    out.offsets.push_back(out.senders.size());
  }
  return out;
}

}  // namespace ecg
