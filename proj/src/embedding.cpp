#include "ecg/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

namespace ecg {

std::string_view to_string(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::mlp: return "MLP";
    case EmbeddingSource::bgrl: return "BGRL";
    case EmbeddingSource::mlp_bgrl: return "MLPBGRL";
    case EmbeddingSource::mlp_gnn: return "MLP->GNN";
  }
  return "?";
}

EmbeddingSource parse_embedding_source(std::string_view text) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (t == "MLP") return EmbeddingSource::mlp;
  if (t == "BGRL") return EmbeddingSource::bgrl;
  if (t == "MLPBGRL") return EmbeddingSource::mlp_bgrl;
  if (t == "MLP->GNN" || t == "MLP\xE2\x86\x92GNN" || t == "MLPGNN") return EmbeddingSource::mlp_gnn;
  throw std::invalid_argument(fmt::format("unknown embedding source '{}'", text));
}

EmbeddingMatrix::EmbeddingMatrix(FeatureMatrix values, EmbeddingSource source,
                                 std::optional<std::size_t> split_id)
    : values_(std::move(values)), source_(source), split_id_(split_id) {
  for (float v : values_.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("EmbeddingMatrix: non-finite entry");
  }
}

void write_embeddings(const std::filesystem::path& file, const EmbeddingMatrix& emb) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", file.string()));
  const auto& m = emb.values();
  out << m.rows << ' ' << m.cols << ' ' << to_string(emb.source()) << ' '
      << (emb.split_id() ? std::to_string(*emb.split_id()) : std::string("-")) << '\n';
  std::string line;
  for (std::size_t i = 0; i < m.rows; ++i) {
    line.clear();
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) line += ' ';
      line += fmt::format("{:.9g}", m.at(i, j));
    }
    out << line << '\n';
  }
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("{}: cannot open", file.string()));
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::size_t rows = 0, cols = 0;
  std::string tag, split;
  if (!(hs >> rows >> cols >> tag >> split)) {
    throw DataError(fmt::format("{}:1: malformed header '{}'", file.string(), header));
  }
  std::optional<std::size_t> split_id;
  if (split != "-") split_id = static_cast<std::size_t>(std::stoull(split));
  FeatureMatrix m(rows, cols);
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      throw DataError(fmt::format("{}: expected {} rows, found {}", file.string(), rows, i));
    }
    std::istringstream ls(line);
    for (std::size_t j = 0; j < cols; ++j) {
      if (!(ls >> m.at(i, j))) {
        throw DataError(fmt::format("{}:{}: expected {} values", file.string(), i + 2, cols));
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw DataError(fmt::format("{}:{}: more than {} values", file.string(), i + 2, cols));
    }
  }
  return EmbeddingMatrix(std::move(m), parse_embedding_source(tag), split_id);
}

EmbeddingMatrix concat_embeddings(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.num_nodes() != b.num_nodes()) {
    throw std::invalid_argument(fmt::format("concat_embeddings: node counts differ ({} vs {})",
                                            a.num_nodes(), b.num_nodes()));
  }
  const std::size_t n = a.num_nodes(), da = a.dim(), db = b.dim();
  FeatureMatrix out(n, da + db);
  auto put = [&](const FeatureMatrix& src, std::size_t i, std::size_t offset) {
    double sq = 0.0;
    for (float v : src.row(i)) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < src.cols; ++j) {
      out.at(i, offset + j) = norm > 0.0 ? static_cast<float>(src.at(i, j) / norm) : 0.0f;
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    put(a.values(), i, 0);
    put(b.values(), i, da);
  }
  return EmbeddingMatrix(std::move(out), EmbeddingSource::mlp_bgrl, a.split_id());
}

}  // namespace ecg
