#pragma once

// Gradient-check suites shared by the unit tests and the acceptance runner.

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ecg/model.hpp"
#include "ecg/tensor.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

namespace ecg::testing {

inline ad::SparseOp adjacency_op(const Graph& g, Rng& rng, bool random_coeff) {
  ad::SparseOp op;
  op.rows = op.cols = g.num_nodes();
  for (NodeId u = 0; u < g.num_nodes(); ++u) {
    for (NodeId v : g.neighbors(u)) {
      op.index.push_back(v);
      op.coeff.push_back(random_coeff ? uniform01(rng) + 0.1 : 1.0);
    }
    op.offsets.push_back(op.index.size());
  }
  return op;
}

// Smallest |pre-activation| of the attention scores; finite differences are
// only meaningful when every score is clear of the leaky-ReLU kink.
inline double kink_margin(const ad::SparseOp& op, const ad::Matrix<double>& z,
                          const ad::Matrix<double>& as, const ad::Matrix<double>& ad,
                          std::size_t heads) {
  const std::size_t f = z.cols / heads;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < op.rows; ++u) {
    for (std::size_t k = op.offsets[u]; k < op.offsets[u + 1]; ++k) {
      for (std::size_t h = 0; h < heads; ++h) {
        double pre = 0;
        for (std::size_t j = 0; j < f; ++j) {
          pre += z(u, h * f + j) * as(0, h * f + j) + z(op.index[k], h * f + j) * ad(0, h * f + j);
        }
        margin = std::min(margin, std::abs(pre));
      }
    }
  }
  return margin;
}

constexpr double kKinkMargin = 0.02;

/// One report per primitive op for the given seed.
inline std::vector<std::pair<std::string, GradReport>> primitive_grad_reports(std::uint64_t seed) {
  using namespace ecg::ad;
  std::vector<std::pair<std::string, GradReport>> out;
  auto rng = make_rng(seed, "gradcheck");
  const std::size_t n = 5, d = 4;
  auto a = random_param("a", n, d, rng);
  auto b = random_param("b", n, d, rng);
  auto w = random_param("w", d, 3, rng);
  auto row = random_param("row", 1, d, rng);
  Readout read(n, d, rng);
  Readout read3(n, 3, rng);
  Readout read1(n, 1, rng);

  out.emplace_back("matmul", check_gradients({&a, &w}, [&](Tape<double>& t) {
                     return read3(t, matmul(t.parameter(a), t.parameter(w)));
                   }));
  out.emplace_back("add", check_gradients({&a, &b}, [&](Tape<double>& t) {
                     return read(t, add(t.parameter(a), t.parameter(b)));
                   }));
  out.emplace_back("add_row", check_gradients({&a, &row}, [&](Tape<double>& t) {
                     return read(t, add_row(t.parameter(a), t.parameter(row)));
                   }));
  out.emplace_back("scale", check_gradients({&a}, [&](Tape<double>& t) {
                     return read(t, scale(t.parameter(a), -1.7));
                   }));
  out.emplace_back("gelu", check_gradients({&a}, [&](Tape<double>& t) {
                     return read(t, gelu(t.parameter(a)));
                   }));
  out.emplace_back("row_softmax", check_gradients({&a}, [&](Tape<double>& t) {
                     return read(t, row_softmax(t.parameter(a)));
                   }));
  out.emplace_back("cross_entropy", check_gradients({&a}, [&](Tape<double>& t) {
                     std::vector<int> y{0, 3, 1, 2, 3};
                     std::vector<NodeId> mask{0, 1, 3, 4};
                     return cross_entropy(t.parameter(a), y, mask);
                   }));
  out.emplace_back("cosine_rowwise", check_gradients({&a, &b}, [&](Tape<double>& t) {
                     return read1(t, cosine_rowwise(t.parameter(a), t.parameter(b)));
                   }));
  out.emplace_back("mean", check_gradients({&a}, [&](Tape<double>& t) {
                     return mean(gelu(t.parameter(a)));
                   }));
  out.emplace_back("dropout", check_gradients({&a}, [&](Tape<double>& t) {
                     auto drng = make_rng(seed, "mask");
                     return read(t, dropout(t.parameter(a), 0.3, drng, true));
                   }));

  const auto g = random_graph(n, 0.5, rng);
  const auto op = adjacency_op(g, rng, true);
  out.emplace_back("spmm", check_gradients({&a}, [&](Tape<double>& t) {
                     return read(t, spmm(op, t.parameter(a)));
                   }));

  auto z = random_param("z", n, 8, rng);
  auto asrc = random_param("att_src", 1, 8, rng);
  auto adst = random_param("att_dst", 1, 8, rng);
  while (kink_margin(op, z.value, asrc.value, adst.value, 2) < kKinkMargin) {
    z = random_param("z", n, 8, rng);
    asrc = random_param("att_src", 1, 8, rng);
    adst = random_param("att_dst", 1, 8, rng);
  }
  Readout read8(n, 8, rng);
  out.emplace_back("attention_aggregate",
                   check_gradients({&z, &asrc, &adst}, [&](Tape<double>& t) {
                     return read8(t, attention_aggregate(op, t.parameter(z), t.parameter(asrc),
                                                         t.parameter(adst), 2, 0.2));
                   }));
  return out;
}

/// One full backbone layer (inputs included) on a fresh random draw. `draw`
/// advances past GAT draws that put an attention score near the kink.
inline GradReport backbone_grad_report(BackboneKind kind, std::uint64_t& draw) {
  using namespace ecg::ad;
  const std::size_t n = 7;
  for (;;) {
    auto rng = make_rng(draw++, "layer-gradcheck");
    const auto g = random_graph(n, 0.4, rng);
    const auto prop = make_propagation(directed_edges(g), kind);
    BackboneLayer<double> layer(kind, 5, 8, 4, rng, "layer.");
    auto x = random_param("x", n, 5, rng);
    auto params = layer.parameters();
    // Non-zero biases and attention vectors so every path is exercised.
    std::normal_distribution<double> dist(0.0, 0.5);
    for (auto* p : params) {
      for (auto& v : p->value.data) v += dist(rng);
    }
    if (kind == BackboneKind::gat_sep) {
      Tape<double> tape(false);
      const auto z = matmul(tape.constant_ref(x.value), tape.constant_ref(params[0]->value));
      if (kink_margin(prop.adjacency, z.value(), params[1]->value, params[2]->value, 4) <
          kKinkMargin) {
        continue;
      }
    }
    Readout read(n, 8, rng);
    params.push_back(&x);
    return check_gradients(params, [&](Tape<double>& t) {
      return read(t, gelu(layer.forward(t, prop, t.parameter(x))));
    });
  }
}

}  // namespace ecg::testing
