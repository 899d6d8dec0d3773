#include "ecg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

namespace ecg::ad {

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<RowMajor<T>> view(Matrix<T>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

template <typename T>
Eigen::Map<const RowMajor<T>> view(const Matrix<T>& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

template <typename T>
void check_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::logic_error("ad: operands recorded on different tapes");
}

template <typename T>
bool needs_grad(Var<T> a) {
  return a.tape->grad_enabled() && a.tape->requires_grad(a);
}

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
T normal_cdf(T x) {
  return T(0.5) * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T>
T normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
}

}  // namespace

template <typename T>
Matrix<T> glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix<T> m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (auto& x : m.data) x = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
  return m;
}

// ---- tape ----------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::constant(Matrix<T> value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant_ref(const Matrix<T>& value) {
  Node n;
  n.ref = &value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.ref = &p.value;
  n.grad_ref = &p.grad;
  n.requires_grad = grad_enabled_;
  if (!p.grad.same_shape(p.value)) p.grad = Matrix<T>(p.value.rows, p.value.cols);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Matrix<T> value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Matrix<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad_ref) return *n.grad_ref;
  const auto& v = value(id);
  if (!n.own_grad.same_shape(v)) n.own_grad = Matrix<T>(v.rows, v.cols);
  return n.own_grad;
}

template <typename T>
const Matrix<T>& Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad_ref ? *n.grad_ref : n.own_grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss belongs to another tape");
  if (!grad_enabled_) throw std::logic_error("backward: tape recorded without gradients");
  if (backward_done_) throw std::logic_error("backward: called twice on the same tape");
  const auto& lv = value(loss.id);
  if (lv.rows != 1 || lv.cols != 1) throw ShapeError("backward: loss must be 1 x 1");
  backward_done_ = true;
  grad(loss.id).data[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

// ---- primitives ----------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols != bv.rows) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(av.rows, av.cols) + " * " +
                     shape_str(bv.rows, bv.cols) + ")");
  }
  Matrix<T> out(av.rows, bv.cols);
  view(out).noalias() = view(av) * view(bv);
  return a.tape->record(std::move(out), needs_grad(a) || needs_grad(b),
                        [a, b](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(a)) {
                            view(t.grad(a.id)).noalias() += view(g) * view(b.value()).transpose();
                          }
                          if (t.requires_grad(b)) {
                            view(t.grad(b.id)).noalias() += view(a.value()).transpose() * view(g);
                          }
                        });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  if (!a.value().same_shape(b.value())) {
    throw ShapeError("add: shapes differ (" + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()) + ")");
  }
  Matrix<T> out = a.value();
  view(out) += view(b.value());
  return a.tape->record(std::move(out), needs_grad(a) || needs_grad(b),
                        [a, b](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(a)) view(t.grad(a.id)) += view(g);
                          if (t.requires_grad(b)) view(t.grad(b.id)) += view(g);
                        });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  check_same_tape(a, row);
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rows != 1 || rv.cols != av.cols) {
    throw ShapeError("add_row: expected 1x" + std::to_string(av.cols) + " row, got " +
                     shape_str(rv.rows, rv.cols));
  }
  Matrix<T> out = av;
  for (std::size_t i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols; ++j) r[j] += rv.data[j];
  }
  return a.tape->record(std::move(out), needs_grad(a) || needs_grad(row),
                        [a, row](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(a)) view(t.grad(a.id)) += view(g);
                          if (t.requires_grad(row)) {
                            auto& gr = t.grad(row.id);
                            for (std::size_t i = 0; i < g.rows; ++i) {
                              auto src = g.row(i);
                              for (std::size_t j = 0; j < g.cols; ++j) gr.data[j] += src[j];
                            }
                          }
                        });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Matrix<T> out = a.value();
  for (auto& x : out.data) x *= factor;
  return a.tape->record(std::move(out), needs_grad(a), [a, factor](Tape<T>& t, std::size_t self) {
    view(t.grad(a.id)) += factor * view(t.grad(self));
  });
}

template <typename T>
Var<T> spmm(const SparseOp& op, Var<T> x) {
  const auto& xv = x.value();
  if (xv.rows != op.cols) {
    throw ShapeError("spmm: operator has " + std::to_string(op.cols) + " columns but x has " +
                     std::to_string(xv.rows) + " rows");
  }
  const std::size_t d = xv.cols;
  Matrix<T> out(op.rows, d);
  for (std::size_t u = 0; u < op.rows; ++u) {
    auto dst = out.row(u);
    for (std::size_t k = op.offsets[u]; k < op.offsets[u + 1]; ++k) {
      const T c = static_cast<T>(op.coeff[k]);
      auto src = xv.row(op.index[k]);
      for (std::size_t j = 0; j < d; ++j) dst[j] += c * src[j];
    }
  }
  return x.tape->record(std::move(out), needs_grad(x), [&op, x, d](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id);
    for (std::size_t u = 0; u < op.rows; ++u) {
      auto src = g.row(u);
      for (std::size_t k = op.offsets[u]; k < op.offsets[u + 1]; ++k) {
        const T c = static_cast<T>(op.coeff[k]);
        auto dst = gx.row(op.index[k]);
        for (std::size_t j = 0; j < d; ++j) dst[j] += c * src[j];
      }
    }
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  const auto& xv = x.value();
  Matrix<T> out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.data.size(); ++i) out.data[i] = xv.data[i] * normal_cdf(xv.data[i]);
  return x.tape->record(std::move(out), needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = x.value();
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      const T v = xv.data[i];
      gx.data[i] += g.data[i] * (normal_cdf(v) + v * normal_pdf(v));
    }
  });
}

template <typename T>
Var<T> row_softmax(Var<T> x) {
  const auto& xv = x.value();
  Matrix<T> out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    auto src = xv.row(i);
    auto dst = out.row(i);
    const T mx = *std::max_element(src.begin(), src.end());
    T sum = 0;
    for (std::size_t j = 0; j < src.size(); ++j) sum += (dst[j] = std::exp(src[j] - mx));
    for (auto& v : dst) v /= sum;
  }
  return x.tape->record(std::move(out), needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < y.rows; ++i) {
      auto yr = y.row(i);
      auto gr = g.row(i);
      T dot = 0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
      auto dst = gx.row(i);
      for (std::size_t j = 0; j < yr.size(); ++j) dst[j] += yr[j] * (gr[j] - dot);
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, std::span<const NodeId> mask) {
  const auto& lv = logits.value();
  if (mask.empty()) throw std::invalid_argument("cross_entropy: empty mask");
  if (labels.size() != lv.rows) throw ShapeError("cross_entropy: label count differs from rows");
  // Softmax rows of the masked nodes are kept for the backward pass.
  Matrix<T> probs(mask.size(), lv.cols);
  double total = 0.0;
  for (std::size_t m = 0; m < mask.size(); ++m) {
    const auto u = mask[m];
    if (u >= lv.rows) throw ShapeError("cross_entropy: mask index out of range");
    const int y = labels[u];
    if (y < 0 || static_cast<std::size_t>(y) >= lv.cols) {
      throw std::invalid_argument("cross_entropy: label outside logit columns");
    }
    auto row = lv.row(u);
    const T mx = *std::max_element(row.begin(), row.end());
    T sum = 0;
    auto p = probs.row(m);
    for (std::size_t j = 0; j < row.size(); ++j) sum += (p[j] = std::exp(row[j] - mx));
    for (auto& v : p) v /= sum;
    total -= static_cast<double>(row[static_cast<std::size_t>(y)] - mx - std::log(sum));
  }
  Matrix<T> out(1, 1, static_cast<T>(total / static_cast<double>(mask.size())));
  std::vector<NodeId> rows(mask.begin(), mask.end());
  std::vector<int> ys;
  ys.reserve(rows.size());
  for (auto u : rows) ys.push_back(labels[u]);
  return logits.tape->record(
      std::move(out), needs_grad(logits),
      [logits, probs = std::move(probs), rows = std::move(rows), ys = std::move(ys)](
          Tape<T>& t, std::size_t self) {
        const T g = t.grad(self).data[0] / static_cast<T>(rows.size());
        auto& gl = t.grad(logits.id);
        for (std::size_t m = 0; m < rows.size(); ++m) {
          auto dst = gl.row(rows[m]);
          auto p = probs.row(m);
          for (std::size_t j = 0; j < p.size(); ++j) dst[j] += g * p[j];
          dst[static_cast<std::size_t>(ys[m])] -= g;
        }
      });
}

template <typename T>
Var<T> cosine_rowwise(Var<T> a, Var<T> b) {
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("cosine_rowwise: shapes differ");
  Matrix<T> out(av.rows, 1);
  std::vector<T> na(av.rows), nb(av.rows);
  for (std::size_t i = 0; i < av.rows; ++i) {
    auto x = av.row(i);
    auto y = bv.row(i);
    T dot = 0, xx = 0, yy = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      dot += x[j] * y[j];
      xx += x[j] * x[j];
      yy += y[j] * y[j];
    }
    na[i] = std::sqrt(xx);
    nb[i] = std::sqrt(yy);
    out.data[i] = (na[i] > T(0) && nb[i] > T(0)) ? dot / (na[i] * nb[i]) : T(0);
  }
  return a.tape->record(
      std::move(out), needs_grad(a) || needs_grad(b),
      [a, b, na = std::move(na), nb = std::move(nb)](Tape<T>& t, std::size_t self) {
        const auto& c = t.value(self);
        const auto& g = t.grad(self);
        const auto& av = a.value();
        const auto& bv = b.value();
        const bool ga = t.requires_grad(a), gb = t.requires_grad(b);
        for (std::size_t i = 0; i < av.rows; ++i) {
          if (!(na[i] > T(0) && nb[i] > T(0))) continue;
          const T inv = T(1) / (na[i] * nb[i]);
          const T gi = g.data[i], ci = c.data[i];
          auto x = av.row(i);
          auto y = bv.row(i);
          if (ga) {
            auto dst = t.grad(a.id).row(i);
            for (std::size_t j = 0; j < x.size(); ++j) {
              dst[j] += gi * (y[j] * inv - ci * x[j] / (na[i] * na[i]));
            }
          }
          if (gb) {
            auto dst = t.grad(b.id).row(i);
            for (std::size_t j = 0; j < y.size(); ++j) {
              dst[j] += gi * (x[j] * inv - ci * y[j] / (nb[i] * nb[i]));
            }
          }
        }
      });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const auto& xv = x.value();
  if (xv.data.empty()) throw ShapeError("mean: empty tensor");
  double sum = 0.0;
  for (T v : xv.data) sum += static_cast<double>(v);
  Matrix<T> out(1, 1, static_cast<T>(sum / static_cast<double>(xv.data.size())));
  return x.tape->record(std::move(out), needs_grad(x), [x](Tape<T>& t, std::size_t self) {
    auto& gx = t.grad(x.id);
    const T g = t.grad(self).data[0] / static_cast<T>(gx.data.size());
    for (auto& v : gx.data) v += g;
  });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, Rng& rng, bool train) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("dropout: p outside [0, 1]");
  if (!train || p == 0.0) return x;
  const auto& xv = x.value();
  Matrix<T> mask(xv.rows, xv.cols);
  const T keep_scale = p < 1.0 ? static_cast<T>(1.0 / (1.0 - p)) : T(0);
  for (auto& m : mask.data) m = uniform01(rng) >= p ? keep_scale : T(0);
  Matrix<T> out(xv.rows, xv.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = xv.data[i] * mask.data[i];
  return x.tape->record(std::move(out), needs_grad(x),
                        [x, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          auto& gx = t.grad(x.id);
                          for (std::size_t i = 0; i < g.data.size(); ++i) {
                            gx.data[i] += g.data[i] * mask.data[i];
                          }
                        });
}

template <typename T>
Var<T> attention_aggregate(const SparseOp& edges, Var<T> z, Var<T> att_src, Var<T> att_dst,
                           std::size_t heads, double negative_slope) {
  check_same_tape(z, att_src);
  check_same_tape(z, att_dst);
  const auto& zv = z.value();
  const auto& as = att_src.value();
  const auto& ad = att_dst.value();
  if (heads == 0 || zv.cols % heads != 0) {
    throw ShapeError("attention_aggregate: width not divisible by head count");
  }
  if (as.rows != 1 || as.cols != zv.cols || !ad.same_shape(as)) {
    throw ShapeError("attention_aggregate: attention vectors must be 1 x width");
  }
  if (edges.cols != zv.rows || edges.rows != zv.rows) {
    throw ShapeError("attention_aggregate: edge operator does not match node count");
  }
  const std::size_t n = zv.rows, f = zv.cols / heads;
  const T slope = static_cast<T>(negative_slope);

  // Per-node head scores <z_u^h, a^h>.
  Matrix<T> src(n, heads), dst(n, heads);
  for (std::size_t u = 0; u < n; ++u) {
    auto zu = zv.row(u);
    for (std::size_t h = 0; h < heads; ++h) {
      T s = 0, d = 0;
      for (std::size_t j = 0; j < f; ++j) {
        s += zu[h * f + j] * as.data[h * f + j];
        d += zu[h * f + j] * ad.data[h * f + j];
      }
      src(u, h) = s;
      dst(u, h) = d;
    }
  }

  // alpha[k * heads + h] for edge slot k; pre-activation sign kept for backward.
  std::vector<T> alpha(edges.nnz() * heads);
  std::vector<unsigned char> positive(edges.nnz() * heads);
  Matrix<T> out(n, zv.cols);
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t b = edges.offsets[u], e = edges.offsets[u + 1];
    if (b == e) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = b; k < e; ++k) {
        T pre = src(u, h) + dst(edges.index[k], h);
        positive[k * heads + h] = pre > T(0);
        T act = pre > T(0) ? pre : slope * pre;
        alpha[k * heads + h] = act;
        mx = std::max(mx, act);
      }
      T sum = 0;
      for (std::size_t k = b; k < e; ++k) sum += (alpha[k * heads + h] = std::exp(alpha[k * heads + h] - mx));
      auto o = out.row(u);
      for (std::size_t k = b; k < e; ++k) {
        T a = (alpha[k * heads + h] /= sum);
        auto zr = zv.row(edges.index[k]);
        for (std::size_t j = 0; j < f; ++j) o[h * f + j] += a * zr[h * f + j];
      }
    }
  }

  const bool rg = needs_grad(z) || needs_grad(att_src) || needs_grad(att_dst);
  return z.tape->record(
      std::move(out), rg,
      [&edges, z, att_src, att_dst, heads, f, slope, alpha = std::move(alpha),
       positive = std::move(positive)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& zv = z.value();
        const auto& as = att_src.value();
        const auto& ad = att_dst.value();
        const std::size_t n = zv.rows;
        Matrix<T> gz(n, zv.cols);
        Matrix<T> gsrc(n, heads), gdst(n, heads);
        std::vector<T> galpha;
        for (std::size_t u = 0; u < n; ++u) {
          const std::size_t b = edges.offsets[u], e = edges.offsets[u + 1];
          if (b == e) continue;
          auto gu = g.row(u);
          galpha.assign(e - b, T(0));
          for (std::size_t h = 0; h < heads; ++h) {
            T weighted = 0;
            for (std::size_t k = b; k < e; ++k) {
              const auto v = edges.index[k];
              auto zr = zv.row(v);
              auto gzr = gz.row(v);
              const T a = alpha[k * heads + h];
              T dot = 0;
              for (std::size_t j = 0; j < f; ++j) {
                dot += gu[h * f + j] * zr[h * f + j];
                gzr[h * f + j] += a * gu[h * f + j];
              }
              galpha[k - b] = dot;
              weighted += a * dot;
            }
            for (std::size_t k = b; k < e; ++k) {
              const T a = alpha[k * heads + h];
              T gs = a * (galpha[k - b] - weighted);
              if (!positive[k * heads + h]) gs *= slope;
              gsrc(u, h) += gs;
              gdst(edges.index[k], h) += gs;
            }
          }
        }
        const bool ga_src = t.requires_grad(att_src), ga_dst = t.requires_grad(att_dst);
        for (std::size_t u = 0; u < n; ++u) {
          auto zr = zv.row(u);
          auto gzr = gz.row(u);
          for (std::size_t h = 0; h < heads; ++h) {
            const T s = gsrc(u, h), d = gdst(u, h);
            for (std::size_t j = 0; j < f; ++j) {
              gzr[h * f + j] += s * as.data[h * f + j] + d * ad.data[h * f + j];
            }
            if (ga_src) {
              auto& g_as = t.grad(att_src.id);
              for (std::size_t j = 0; j < f; ++j) g_as.data[h * f + j] += s * zr[h * f + j];
            }
            if (ga_dst) {
              auto& g_ad = t.grad(att_dst.id);
              for (std::size_t j = 0; j < f; ++j) g_ad.data[h * f + j] += d * zr[h * f + j];
            }
          }
        }
        if (t.requires_grad(z)) view(t.grad(z.id)) += view(gz);
      });
}

// ---- optimiser -----------------------------------------------------------

template <typename T>
void Adam<T>::step(std::span<Parameter<T>* const> params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.size(), T(0));
      v_.emplace_back(p->value.size(), T(0));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const T step = static_cast<T>(cfg_.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(cfg_.eps), wd = static_cast<T>(cfg_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& val = params[i]->value.data;
    const auto& grad = params[i]->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    if (m.size() != val.size()) throw std::logic_error("Adam: parameter shape changed");
    for (std::size_t j = 0; j < val.size(); ++j) {
      const T gj = grad[j] + wd * val[j];
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      val[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

#define ECG_INSTANTIATE(T)                                                                      \
  template Matrix<T> glorot<T>(std::size_t, std::size_t, Rng&);                                 \
  template class Tape<T>;                                                                       \
  template class Adam<T>;                                                                       \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                    \
  template Var<T> add<T>(Var<T>, Var<T>);                                                       \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                   \
  template Var<T> scale<T>(Var<T>, T);                                                          \
  template Var<T> spmm<T>(const SparseOp&, Var<T>);                                             \
  template Var<T> gelu<T>(Var<T>);                                                              \
  template Var<T> row_softmax<T>(Var<T>);                                                       \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const int>, std::span<const NodeId>);      \
  template Var<T> cosine_rowwise<T>(Var<T>, Var<T>);                                            \
  template Var<T> mean<T>(Var<T>);                                                              \
  template Var<T> dropout<T>(Var<T>, double, Rng&, bool);                                       \
  template Var<T> attention_aggregate<T>(const SparseOp&, Var<T>, Var<T>, Var<T>, std::size_t, \
                                         double);

ECG_INSTANTIATE(float)
ECG_INSTANTIATE(double)

#undef ECG_INSTANTIATE

}  // namespace ecg::ad
