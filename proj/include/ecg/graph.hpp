#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ecg {

using NodeId = std::uint32_t;

/// Raised for any malformed dataset input; the message carries file and line.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable undirected graph in compressed row form.
///
/// Every undirected edge {u, v} is stored twice (v in u's row and u in v's
/// row). Rows are strictly increasing and contain no self-loops.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list. Self-loops are dropped and counted
  /// in `dropped_self_loops`; duplicates (in either orientation) throw.
  static Graph from_edges(std::size_t num_nodes,
                          std::span<const std::pair<NodeId, NodeId>> edges,
                          std::size_t* dropped_self_loops = nullptr);

  std::size_t num_nodes() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t num_edges() const { return neighbor_ids_.size() / 2; }
  std::size_t degree(NodeId u) const { return row_offsets_[u + 1] - row_offsets_[u]; }

  std::span<const NodeId> neighbors(NodeId u) const {
    return {neighbor_ids_.data() + row_offsets_[u], degree(u)};
  }
  std::span<const std::size_t> row_offsets() const { return row_offsets_; }
  std::span<const NodeId> neighbor_ids() const { return neighbor_ids_; }

  /// Each undirected edge once, as (u, v) with u < v, in row order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const;

  /// Exhaustive check of the symmetry / ordering / no-self-loop invariants.
  bool is_valid() const;

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::vector<std::size_t> row_offsets_{0};
  std::vector<NodeId> neighbor_ids_;
};

/// Dense row-major float32 matrix, used for features and frozen embeddings.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<float> row(std::size_t r) { return {values.data() + r * cols, cols}; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

struct NodeTable {
  FeatureMatrix features;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t num_nodes() const { return labels.size(); }
  void validate(std::size_t expected_nodes) const;

  friend bool operator==(const NodeTable&, const NodeTable&) = default;
};

struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  friend bool operator==(const Split&, const Split&) = default;
};

using SplitSet = std::vector<Split>;

struct Dataset {
  Graph graph;
  NodeTable nodes;
  SplitSet splits;
  std::string name;
};

/// Random 50/25/25 partitions, one independent permutation per split.
SplitSet make_splits(std::size_t num_nodes, std::size_t num_splits, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t num_nodes = 2000;
  int num_classes = 5;
  double avg_degree = 10.0;
  double target_edge_homophily = 0.1;
  std::size_t feature_dim = 16;
  double class_separation = 3.0;
  std::uint64_t seed = 0;
};

/// Labels uniform over classes, Gaussian features centred on
/// `class_separation * e_{class mod feature_dim}`, and edges sampled so that
/// each is intra-class with probability `target_edge_homophily`.
std::pair<Graph, NodeTable> generate_synthetic(const SyntheticSpec& spec);

// Text formats: edges.tsv, features.csv, labels.csv, splits.json.
Dataset load_dataset(const std::filesystem::path& dir, std::size_t default_splits,
                     std::uint64_t split_seed);
void save_dataset(const std::filesystem::path& dir, const Graph& g, const NodeTable& nodes,
                  const SplitSet* splits = nullptr);

Graph read_edges(const std::filesystem::path& file, std::size_t num_nodes);
FeatureMatrix read_features(const std::filesystem::path& file);
std::vector<int> read_labels(const std::filesystem::path& file);
SplitSet read_splits(const std::filesystem::path& file, std::size_t num_nodes);

}  // namespace ecg
