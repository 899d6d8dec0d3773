#pragma once

// Dense rank-2 tensors with a reverse-mode tape.
//
// Every op is templated on the scalar type: training runs in float, the
// finite-difference checks re-evaluate the same code in double.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecg/graph.hpp"
#include "ecg/rng.hpp"

namespace ecg::ad {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ShapeError("Matrix: value count does not match shape");
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

template <typename T>
Matrix<T> from_features(const FeatureMatrix& f) {
  Matrix<T> m(f.rows, f.cols);
  for (std::size_t i = 0; i < f.values.size(); ++i) m.data[i] = static_cast<T>(f.values[i]);
  return m;
}

/// Row-compressed propagation operator: out[u] = sum_k coeff[k] * x[col[k]]
/// over k in row u. Used for graph aggregation (coefficients constant).
struct SparseOp {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<NodeId> index;
  std::vector<double> coeff;

  std::size_t nnz() const { return index.size(); }
  std::size_t row_size(std::size_t r) const { return offsets[r + 1] - offsets[r]; }
};

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

/// Glorot/Xavier uniform initialisation.
template <typename T>
Matrix<T> glorot(std::size_t rows, std::size_t cols, Rng& rng);

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const;
  const Matrix<T>& grad() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

template <typename T>
class Tape {
 public:
  /// Receives the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Matrix<T> value);
  /// Non-owning view of a matrix that must outlive the tape.
  Var<T> constant_ref(const Matrix<T>& value);
  /// Gradients of a parameter accumulate into `p.grad` during backward.
  Var<T> parameter(Parameter<T>& p);

  /// Records an op result. `fn` runs during backward if any input needed grad.
  Var<T> record(Matrix<T> value, bool requires_grad, BackwardFn fn);

  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  const Matrix<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }
  /// Gradient buffer for node `id`, allocated on first use.
  Matrix<T>& grad(std::size_t id);
  const Matrix<T>& grad(std::size_t id) const;

  /// Seeds d(loss)/d(loss) = 1 and visits every node once in reverse order.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> owned;
    const Matrix<T>* ref = nullptr;
    Matrix<T> own_grad;
    Matrix<T>* grad_ref = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
const Matrix<T>& Var<T>::grad() const {
  return static_cast<const Tape<T>*>(tape)->grad(id);
}

// ---- primitives ----------------------------------------------------------

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
/// Adds a 1 x cols row vector to every row.
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> spmm(const SparseOp& op, Var<T> x);
/// Exact GELU, x * Phi(x).
template <typename T> Var<T> gelu(Var<T> x);
template <typename T> Var<T> row_softmax(Var<T> x);
/// Mean negative log-likelihood over the rows listed in `mask`.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const NodeId> mask);
/// Per-row cosine similarity, n x 1; rows with zero norm give 0.
template <typename T> Var<T> cosine_rowwise(Var<T> a, Var<T> b);
/// Mean of all entries, 1 x 1.
template <typename T> Var<T> mean(Var<T> x);
/// Inverted dropout. Identity when p == 0 or `train` is false.
template <typename T> Var<T> dropout(Var<T> x, double p, Rng& rng, bool train);

/// Multi-head additive attention aggregation over the rows of `edges`
/// (coefficients ignored). `z` is n x (heads * F); `att_src`/`att_dst` are
/// 1 x (heads * F). For receiver u and head h:
///   e_uv = leaky_relu(<z_u^h, a_src^h> + <z_v^h, a_dst^h>),
///   alpha = softmax over v in N(u), out_u^h = sum_v alpha_uv z_v^h.
/// Empty neighbourhoods give zero rows.
template <typename T>
Var<T> attention_aggregate(const SparseOp& edges, Var<T> z, Var<T> att_src, Var<T> att_dst,
                           std::size_t heads, double negative_slope);

// ---- optimiser -----------------------------------------------------------

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One update of every parameter from its accumulated gradient.
  void step(std::span<Parameter<T>* const> params);
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace ecg::ad
