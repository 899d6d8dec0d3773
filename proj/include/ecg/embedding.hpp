#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "ecg/graph.hpp"

namespace ecg {

/// Where a set of ECG embeddings came from.
enum class EmbeddingSource { mlp, bgrl, mlp_bgrl, mlp_gnn };

std::string_view to_string(EmbeddingSource s);
/// Accepts "MLP", "BGRL", "MLPBGRL", "MLP->GNN" (also the arrow form), case-insensitive.
EmbeddingSource parse_embedding_source(std::string_view text);

/// Frozen node embeddings. Immutable once constructed: downstream stages only
/// ever read them.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(FeatureMatrix values, EmbeddingSource source,
                  std::optional<std::size_t> split_id);

  const FeatureMatrix& values() const { return values_; }
  EmbeddingSource source() const { return source_; }
  std::optional<std::size_t> split_id() const { return split_id_; }
  std::size_t num_nodes() const { return values_.rows; }
  std::size_t dim() const { return values_.cols; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  FeatureMatrix values_;
  EmbeddingSource source_;
  std::optional<std::size_t> split_id_;
};

/// `.emb` text format: header `<num_nodes> <dim> <source_tag> <split_id|->`,
/// then one row per node with 9 significant digits.
void write_embeddings(const std::filesystem::path& file, const EmbeddingMatrix& emb);
EmbeddingMatrix read_embeddings(const std::filesystem::path& file);

/// Row-normalises each input to unit L2 norm (zero rows stay zero) and
/// concatenates them horizontally. Tagged MLPBGRL.
EmbeddingMatrix concat_embeddings(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

}  // namespace ecg
