#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ecg/graph.hpp"

namespace ecg {

/// Graph-label statistics. `std::nullopt` is the undefined marker for the
/// adjusted homophily / label informativeness degenerate cases (a single
/// effective class), rendered as "—" in reports.
struct HomophilyReport {
  std::size_t num_edges = 0;
  double edge_homophily = 0.0;
  std::optional<double> adjusted_homophily;
  std::optional<double> label_informativeness;
  std::vector<double> class_degree_mass;  // D_k, sums to 2|E|
};

/// Fraction of undirected edges whose endpoints share a label.
double edge_homophily(const Graph& g, std::span<const int> labels);

/// Edge homophily corrected for degree-weighted class imbalance.
std::optional<double> adjusted_homophily(const Graph& g, std::span<const int> labels);

/// I(y_xi; y_eta) / H(y_xi) for a uniformly drawn edge, computed exactly over
/// every ordered endpoint pair.
std::optional<double> label_informativeness(const Graph& g, std::span<const int> labels);

/// Sum of degrees per class.
std::vector<double> class_degree_mass(const Graph& g, std::span<const int> labels);

HomophilyReport homophily_report(const Graph& g, std::span<const int> labels);

/// Same three statistics for an arbitrary list of directed pairs (u, v),
/// each pair counted once as given. Used for the ECG graph rows.
HomophilyReport pair_homophily_report(std::span<const std::pair<NodeId, NodeId>> pairs,
                                      std::span<const int> labels);

}  // namespace ecg
