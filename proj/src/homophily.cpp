#include "ecg/homophily.hpp"

#include <cmath>
#include <stdexcept>

namespace ecg {

namespace {

constexpr double kUndefinedEps = 1e-12;

int class_count(std::span<const int> labels) {
  int c = 0;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("homophily: negative label");
    c = std::max(c, y + 1);
  }
  return c;
}

void check_labels(std::size_t num_nodes, std::span<const int> labels) {
  if (labels.size() != num_nodes) {
    throw std::invalid_argument("homophily: label vector length differs from node count");
  }
}

}  // namespace

HomophilyReport pair_homophily_report(std::span<const std::pair<NodeId, NodeId>> pairs,
                                      std::span<const int> labels) {
  if (pairs.empty()) throw std::invalid_argument("homophily: empty edge set");
  const int C = class_count(labels);
  const auto num_c = static_cast<std::size_t>(C);

  // joint[a * C + b] counts ordered endpoint pairs over both orientations.
  std::vector<double> joint(num_c * num_c, 0.0);
  std::size_t same = 0;
  for (auto [u, v] : pairs) {
    const auto a = static_cast<std::size_t>(labels[u]);
    const auto b = static_cast<std::size_t>(labels[v]);
    if (a == b) ++same;
    joint[a * num_c + b] += 1.0;
    joint[b * num_c + a] += 1.0;
  }

  HomophilyReport r;
  r.num_edges = pairs.size();
  const double two_e = 2.0 * static_cast<double>(pairs.size());
  r.edge_homophily = static_cast<double>(same) / static_cast<double>(pairs.size());

  r.class_degree_mass.assign(num_c, 0.0);
  for (std::size_t a = 0; a < num_c; ++a) {
    for (std::size_t b = 0; b < num_c; ++b) r.class_degree_mass[a] += joint[a * num_c + b];
  }

  double expected = 0.0;
  for (double dk : r.class_degree_mass) expected += (dk / two_e) * (dk / two_e);
  if (1.0 - expected >= kUndefinedEps) {
    r.adjusted_homophily = (r.edge_homophily - expected) / (1.0 - expected);
  }

  double entropy = 0.0;
  for (double dk : r.class_degree_mass) {
    if (dk > 0.0) {
      const double p = dk / two_e;
      entropy -= p * std::log(p);
    }
  }
  if (entropy >= kUndefinedEps) {
    double mutual = 0.0;
    for (std::size_t a = 0; a < num_c; ++a) {
      for (std::size_t b = 0; b < num_c; ++b) {
        const double count = joint[a * num_c + b];
        if (count == 0.0) continue;
        const double pab = count / two_e;
        const double pa = r.class_degree_mass[a] / two_e;
        const double pb = r.class_degree_mass[b] / two_e;
        mutual += pab * std::log(pab / (pa * pb));
      }
    }
    r.label_informativeness = mutual / entropy;
  }
  return r;
}

HomophilyReport homophily_report(const Graph& g, std::span<const int> labels) {
  check_labels(g.num_nodes(), labels);
  auto edges = g.edge_list();
  return pair_homophily_report(edges, labels);
}

double edge_homophily(const Graph& g, std::span<const int> labels) {
  check_labels(g.num_nodes(), labels);
  if (g.num_edges() == 0) throw std::invalid_argument("edge_homophily: empty edge set");
  std::size_t same = 0;
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    for (NodeId v : g.neighbors(u)) {
      if (u < v && labels[u] == labels[v]) ++same;
    }
  }
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

std::optional<double> adjusted_homophily(const Graph& g, std::span<const int> labels) {
  return homophily_report(g, labels).adjusted_homophily;
}

std::optional<double> label_informativeness(const Graph& g, std::span<const int> labels) {
  return homophily_report(g, labels).label_informativeness;
}

std::vector<double> class_degree_mass(const Graph& g, std::span<const int> labels) {
  check_labels(g.num_nodes(), labels);
  std::vector<double> mass(static_cast<std::size_t>(class_count(labels)), 0.0);
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    mass[static_cast<std::size_t>(labels[u])] += static_cast<double>(g.degree(u));
  }
  return mass;
}

}  // namespace ecg
