#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ecg/embedding.hpp"
#include "ecg/graph.hpp"
#include "ecg/rng.hpp"

namespace ecg {

/// Directed top-k cosine neighbour lists: node u aggregates from its own k
/// most similar nodes. Scores are non-increasing within a list.
class EcgEdges {
 public:
  EcgEdges() = default;
  EcgEdges(std::size_t num_nodes, std::size_t k, std::vector<NodeId> neighbors,
           std::vector<double> scores);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t k() const { return k_; }
  std::size_t num_edges() const { return neighbors_.size(); }
  std::span<const NodeId> neighbors(NodeId u) const { return {neighbors_.data() + u * k_, k_}; }
  std::span<const double> scores(NodeId u) const { return {scores_.data() + u * k_, k_}; }

  /// Every (u, v) with v in N_u, in row order.
  std::vector<std::pair<NodeId, NodeId>> pairs() const;

  friend bool operator==(const EcgEdges&, const EcgEdges&) = default;

 private:
  std::size_t num_nodes_ = 0;
  std::size_t k_ = 0;
  std::vector<NodeId> neighbors_;
  std::vector<double> scores_;
};

/// Row-form directed edge set: row u lists the senders u receives from.
struct DirectedEdges {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<NodeId> senders;

  std::size_t num_edges() const { return senders.size(); }
  std::span<const NodeId> row(NodeId u) const {
    return {senders.data() + offsets[u], offsets[u + 1] - offsets[u]};
  }
  friend bool operator==(const DirectedEdges&, const DirectedEdges&) = default;
};

DirectedEdges directed_edges(const Graph& g);
DirectedEdges directed_edges(const EcgEdges& e);
/// Union of both orientations of every ECG edge (experimental).
DirectedEdges symmetrized_edges(const EcgEdges& e);

/// Exact top-k by cosine similarity, self excluded, ties to the smaller id.
/// Zero-norm rows score 0 against everything.
EcgEdges cosine_topk(const FeatureMatrix& emb, std::size_t k, unsigned num_threads = 0);
inline EcgEdges cosine_topk(const EmbeddingMatrix& emb, std::size_t k, unsigned num_threads = 0) {
  return cosine_topk(emb.values(), k, num_threads);
}

/// Fraction of directed ECG edges joining same-label nodes.
double ecg_homophily(const EcgEdges& edges, std::span<const int> labels);

/// Keeps each directed edge independently with probability 1 - p.
DirectedEdges drop_edge(const DirectedEdges& edges, double p, Rng& rng);

}  // namespace ecg
