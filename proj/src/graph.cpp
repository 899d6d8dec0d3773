#include "ecg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "ecg/log.hpp"
#include "ecg/rng.hpp"

namespace ecg {

Graph Graph::from_edges(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges,
                        std::size_t* dropped_self_loops) {
  std::vector<std::pair<NodeId, NodeId>> directed;
  directed.reserve(edges.size() * 2);
  std::size_t loops = 0;
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw DataError(fmt::format("edge ({}, {}) references a node outside 0..{}", u, v,
                                  num_nodes == 0 ? 0 : num_nodes - 1));
    }
    if (u == v) {
      ++loops;
      continue;
    }
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  auto dup = std::adjacent_find(directed.begin(), directed.end());
  if (dup != directed.end()) {
    throw DataError(fmt::format("duplicate edge ({}, {})", std::min(dup->first, dup->second),
                                std::max(dup->first, dup->second)));
  }
  if (dropped_self_loops) *dropped_self_loops = loops;

  Graph g;
  g.row_offsets_.assign(num_nodes + 1, 0);
  g.neighbor_ids_.reserve(directed.size());
  for (auto [u, v] : directed) {
    ++g.row_offsets_[u + 1];
    g.neighbor_ids_.push_back(v);
  }
  std::partial_sum(g.row_offsets_.begin(), g.row_offsets_.end(), g.row_offsets_.begin());
  return g;
}

std::vector<std::pair<NodeId, NodeId>> Graph::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

bool Graph::is_valid() const {
  if (row_offsets_.empty() || row_offsets_.front() != 0) return false;
  if (row_offsets_.back() != neighbor_ids_.size() || neighbor_ids_.size() % 2 != 0) return false;
  const auto n = num_nodes();
  for (NodeId u = 0; u < n; ++u) {
    auto row = neighbors(u);
    for (std::size_t i = 0; i < row.size(); ++i) {
      NodeId v = row[i];
      if (v >= n || v == u) return false;
      if (i > 0 && row[i - 1] >= v) return false;
      auto back = neighbors(v);
      if (!std::binary_search(back.begin(), back.end(), u)) return false;
    }
  }
  return true;
}

void NodeTable::validate(std::size_t expected_nodes) const {
  if (features.rows != expected_nodes) {
    throw DataError(fmt::format("features.csv: {} rows but {} nodes", features.rows,
                                expected_nodes));
  }
  if (labels.size() != expected_nodes) {
    throw DataError(fmt::format("labels.csv: {} labels but {} nodes", labels.size(),
                                expected_nodes));
  }
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError(fmt::format("labels.csv:{}: label out of range ({} with C={})", i + 1,
                                  labels[i], num_classes));
    }
    seen[static_cast<std::size_t>(labels[i])] = true;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) {
      throw DataError(fmt::format("labels.csv: class {} never occurs", c));
    }
  }
}

SplitSet make_splits(std::size_t num_nodes, std::size_t num_splits, std::uint64_t seed) {
  if (num_nodes < 4) throw std::invalid_argument("make_splits: need at least 4 nodes");
  SplitSet out;
  out.reserve(num_splits);
  const std::size_t n_train = num_nodes / 2;
  const std::size_t n_val = (num_nodes - n_train) / 2;
  for (std::size_t s = 0; s < num_splits; ++s) {
    auto rng = make_rng(seed, "split", s);
    std::vector<NodeId> perm(num_nodes);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    // Fisher-Yates with our own uniform draw so the result is library-independent.
    for (std::size_t i = num_nodes - 1; i > 0; --i) {
      auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
      std::swap(perm[i], perm[j]);
    }
    Split split;
    split.train.assign(perm.begin(), perm.begin() + n_train);
    split.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    split.test.assign(perm.begin() + n_train + n_val, perm.end());
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    out.push_back(std::move(split));
  }
  return out;
}

std::pair<Graph, NodeTable> generate_synthetic(const SyntheticSpec& spec) {
  const auto n = spec.num_nodes;
  const int C = spec.num_classes;
  if (C < 2 || n < static_cast<std::size_t>(C)) {
    throw std::invalid_argument("generate_synthetic: need num_nodes >= num_classes >= 2");
  }
  if (spec.target_edge_homophily < 0.0 || spec.target_edge_homophily > 1.0) {
    throw std::invalid_argument("generate_synthetic: target_edge_homophily outside [0, 1]");
  }
  if (spec.feature_dim == 0) throw std::invalid_argument("generate_synthetic: feature_dim = 0");

  NodeTable nodes;
  nodes.num_classes = C;
  nodes.labels.resize(n);
  auto label_rng = make_rng(spec.seed, "labels");
  // First C nodes cover every class so the label invariant always holds.
  for (std::size_t i = 0; i < n; ++i) {
    nodes.labels[i] = i < static_cast<std::size_t>(C)
                          ? static_cast<int>(i)
                          : static_cast<int>(uniform01(label_rng) * C);
  }

  nodes.features = FeatureMatrix(n, spec.feature_dim);
  auto feat_rng = make_rng(spec.seed, "features");
  std::normal_distribution<float> unit(0.0f, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.feature_dim; ++j) nodes.features.at(i, j) = unit(feat_rng);
    auto axis = static_cast<std::size_t>(nodes.labels[i]) % spec.feature_dim;
    nodes.features.at(i, axis) += static_cast<float>(spec.class_separation);
  }

  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(C));
  for (std::size_t i = 0; i < n; ++i) {
    by_class[static_cast<std::size_t>(nodes.labels[i])].push_back(static_cast<NodeId>(i));
  }

  const auto target_edges =
      static_cast<std::size_t>(std::llround(spec.avg_degree * static_cast<double>(n) / 2.0));
  auto edge_rng = make_rng(spec.seed, "edges");
  auto pick = [&](const std::vector<NodeId>& pool) {
    return pool[static_cast<std::size_t>(uniform01(edge_rng) * static_cast<double>(pool.size()))];
  };
  std::set<std::pair<NodeId, NodeId>> seen;
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(target_edges);
  const std::size_t max_attempts = 100 * std::max<std::size_t>(target_edges, 1);
  std::size_t attempts = 0;
  while (edges.size() < target_edges) {
    if (++attempts > max_attempts) {
      throw std::runtime_error(fmt::format(
          "generate_synthetic: infeasible edge budget ({} edges after {} attempts)",
          edges.size(), max_attempts));
    }
    auto u = static_cast<NodeId>(uniform01(edge_rng) * static_cast<double>(n));
    auto cu = static_cast<std::size_t>(nodes.labels[u]);
    NodeId v;
    if (uniform01(edge_rng) < spec.target_edge_homophily) {
      v = pick(by_class[cu]);
    } else {
      auto offset = 1 + static_cast<std::size_t>(uniform01(edge_rng) * (C - 1));
      v = pick(by_class[(cu + offset) % static_cast<std::size_t>(C)]);
    }
    if (u == v) continue;
    auto key = std::minmax(u, v);
    if (!seen.insert(key).second) continue;
    edges.emplace_back(key.first, key.second);
  }
  return {Graph::from_edges(n, edges), std::move(nodes)};
}

namespace {

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(fmt::format("{}: cannot open", file.string()));
  return in;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

Graph read_edges(const std::filesystem::path& file, std::size_t num_nodes) {
  auto in = open_input(file);
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::set<std::pair<NodeId, NodeId>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ss(line);
    long long u = -1, v = -1;
    std::string extra;
    if (!(ss >> u >> v) || (ss >> extra) || u < 0 || v < 0) {
      throw DataError(fmt::format("{}:{}: malformed edge line '{}'", file.string(), lineno, line));
    }
    if (static_cast<std::size_t>(u) >= num_nodes || static_cast<std::size_t>(v) >= num_nodes) {
      throw DataError(fmt::format("{}:{}: node id out of range (n={})", file.string(), lineno,
                                  num_nodes));
    }
    const auto a = static_cast<NodeId>(u), b = static_cast<NodeId>(v);
    const std::pair<NodeId, NodeId> key{std::min(a, b), std::max(a, b)};
    if (!seen.insert(key).second) {
      throw DataError(fmt::format("{}:{}: duplicate edge ({}, {})", file.string(), lineno,
                                  key.first, key.second));
    }
    edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  }
  std::size_t loops = 0;
  Graph g = Graph::from_edges(num_nodes, edges, &loops);
  if (loops > 0) log_warn("{}: stripped {} self-loop(s)", file.string(), loops);
  return g;
}

FeatureMatrix read_features(const std::filesystem::path& file) {
  auto in = open_input(file);
  FeatureMatrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      auto comma = line.find(',', pos);
      auto cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        std::size_t used = 0;
        float value = std::stof(cell, &used);
        if (!blank(cell.substr(used)) && used != cell.size()) throw std::invalid_argument(cell);
        m.values.push_back(value);
      } catch (const std::exception&) {
        throw DataError(fmt::format("{}:{}: malformed number '{}'", file.string(), lineno, cell));
      }
      ++count;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (m.rows == 0) {
      m.cols = count;
    } else if (count != m.cols) {
      throw DataError(fmt::format("{}:{}: expected {} columns, found {}", file.string(), lineno,
                                  m.cols, count));
    }
    ++m.rows;
  }
  return m;
}

std::vector<int> read_labels(const std::filesystem::path& file) {
  auto in = open_input(file);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ss(line);
    long long y = -1;
    std::string extra;
    if (!(ss >> y) || (ss >> extra) || y < 0) {
      throw DataError(fmt::format("{}:{}: malformed label '{}'", file.string(), lineno, line));
    }
    labels.push_back(static_cast<int>(y));
  }
  return labels;
}

SplitSet read_splits(const std::filesystem::path& file, std::size_t num_nodes) {
  auto in = open_input(file);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", file.string(), e.what()));
  }
  if (!doc.is_array()) throw DataError(fmt::format("{}: expected a JSON array", file.string()));
  SplitSet out;
  std::size_t index = 0;
  for (const auto& entry : doc) {
    Split s;
    std::vector<char> used(num_nodes, 0);
    auto read_set = [&](const char* key, std::vector<NodeId>& dst) {
      if (!entry.contains(key) || !entry[key].is_array()) {
        throw DataError(fmt::format("{}: split {} missing '{}'", file.string(), index, key));
      }
      for (const auto& id : entry[key]) {
        if (!id.is_number_integer() || id.get<long long>() < 0 ||
            static_cast<std::size_t>(id.get<long long>()) >= num_nodes) {
          throw DataError(fmt::format("{}: split {} '{}' has invalid node id {}", file.string(),
                                      index, key, id.dump()));
        }
        auto v = id.get<NodeId>();
        if (used[v]) {
          throw DataError(fmt::format("{}: split {} uses node {} twice", file.string(), index, v));
        }
        used[v] = 1;
        dst.push_back(v);
      }
      std::sort(dst.begin(), dst.end());
    };
    read_set("train", s.train);
    read_set("val", s.val);
    read_set("test", s.test);
    out.push_back(std::move(s));
    ++index;
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir, std::size_t default_splits,
                     std::uint64_t split_seed) {
  Dataset ds;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  ds.nodes.labels = read_labels(dir / "labels.csv");
  ds.nodes.features = read_features(dir / "features.csv");
  const auto n = ds.nodes.labels.size();
  int max_label = -1;
  for (int y : ds.nodes.labels) max_label = std::max(max_label, y);
  ds.nodes.num_classes = max_label + 1;
  ds.nodes.validate(n);
  ds.graph = read_edges(dir / "edges.tsv", n);
  if (std::filesystem::exists(dir / "splits.json")) {
    ds.splits = read_splits(dir / "splits.json", n);
  } else {
    ds.splits = make_splits(n, default_splits, split_seed);
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Graph& g, const NodeTable& nodes,
                  const SplitSet* splits) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (auto [u, v] : g.edge_list()) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.csv");
    for (std::size_t i = 0; i < nodes.features.rows; ++i) {
      std::string line;
      for (std::size_t j = 0; j < nodes.features.cols; ++j) {
        if (j) line += ',';
        line += fmt::format("{:.9g}", nodes.features.at(i, j));
      }
      out << line << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.csv");
    for (int y : nodes.labels) out << y << '\n';
  }
  if (splits) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& s : *splits) {
      doc.push_back({{"train", s.train}, {"val", s.val}, {"test", s.test}});
    }
    std::ofstream(dir / "splits.json") << doc.dump() << '\n';
  }
}

}  // namespace ecg
