#include "aurum/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "aurum/error.hpp"
#include "aurum/simd/kernels.hpp"

namespace aurum::nn {

template <class T>
Var<T> Graph<T>::input(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Graph<T>::param(Parameter<T>& p) {
  Node node;
  node.value = p.value;
  node.param = &p;
  node.requires_grad = p.requires_grad;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, const std::vector<std::size_t>& parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [this](std::size_t p) { return nodes_[p].requires_grad; });
  if (node.requires_grad) {
    node.parents = parents;
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<std::size_t> parents,
                        BackwardFn fn) {
  return record(std::move(value), std::vector<std::size_t>(parents), std::move(fn));
}

template <class T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <class T>
Tensor<T> Graph<T>::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Tensor<T>(n.value.rows(), n.value.cols());
  return n.grad;
}

template <class T>
void Graph<T>::backward(Var<T> loss) {
  if (loss.graph != this) throw ContractError("loss belongs to a different graph");
  const Tensor<T>& lv = nodes_[loss.id].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward needs a scalar loss, got " + lv.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  visited_ = 0;
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    ++visited_;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      auto& dst = n.param->grad;
      if (dst.shape() != n.value.shape()) dst = Tensor<T>(n.value.rows(), n.value.cols());
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

namespace {

template <class T>
std::string shapes(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape_string() + " and " + b.shape_string();
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

template <class T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b, T alpha) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: shapes " + shapes(av, bv) + " are incompatible");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(m, n);
  simd::gemm(false, false, m, n, k, alpha, av.data(), bv.data(), out.data(), false);
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, m, n, k, alpha](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      simd::gemm(false, true, m, k, n, alpha, dy.data(), gr.value(ib).data(),
                 gr.grad_buffer(ia).data(), true);
    }
    if (gr.requires_grad(ib)) {
      simd::gemm(true, false, k, n, m, alpha, gr.value(ia).data(), dy.data(),
                 gr.grad_buffer(ib).data(), true);
    }
  });
}

template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b, T alpha) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: shapes " + shapes(av, bv) + " are incompatible");
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor<T> out(m, n);
  simd::gemm(false, true, m, n, k, alpha, av.data(), bv.data(), out.data(), false);
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, m, n, k, alpha](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      simd::gemm(false, false, m, k, n, alpha, dy.data(), gr.value(ib).data(),
                 gr.grad_buffer(ia).data(), true);
    }
    if (gr.requires_grad(ib)) {
      simd::gemm(true, false, n, k, m, alpha, dy.data(), gr.value(ia).data(),
                 gr.grad_buffer(ib).data(), true);
    }
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) accumulate(gr.grad_buffer(ia), dy);
    if (gr.requires_grad(ib)) accumulate(gr.grad_buffer(ib), dy);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  accumulate(out, b.value(), T(-1));
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) accumulate(gr.grad_buffer(ia), dy);
    if (gr.requires_grad(ib)) accumulate(gr.grad_buffer(ib), dy, T(-1));
  });
}

template <class T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  Graph<T>& g = graph_of(a, bias);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: shapes " + shapes(av, bv) + " are incompatible");
  }
  Tensor<T> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t ia = a.id, ib = bias.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) accumulate(gr.grad_buffer(ia), dy);
    if (gr.requires_grad(ib)) {
      Tensor<T>& db = gr.grad_buffer(ib);
      std::vector<double> col(dy.cols(), 0.0);
      for (std::size_t r = 0; r < dy.rows(); ++r) {
        for (std::size_t c = 0; c < dy.cols(); ++c) col[c] += dy.at(r, c);
      }
      for (std::size_t c = 0; c < col.size(); ++c) db[c] += static_cast<T>(col[c]);
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    if (gr.requires_grad(ia)) {
      Tensor<T>& da = gr.grad_buffer(ia);
      const Tensor<T>& bv = gr.value(ib);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (gr.requires_grad(ib)) {
      Tensor<T>& db = gr.grad_buffer(ib);
      const Tensor<T>& av = gr.value(ia);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ia = a.id;
  return a.graph->record(std::move(out), {ia}, [ia, factor](Graph<T>& gr, std::size_t self) {
    accumulate(gr.grad_buffer(ia), gr.grad_buffer(self), factor);
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps) {
  Graph<T>& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor<T>& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().shape() != std::array<std::size_t, 2>{1, cols} ||
      beta.value().shape() != std::array<std::size_t, 2>{1, cols}) {
    throw ShapeError("layer_norm: affine shapes " + shapes(gamma.value(), beta.value()) +
                     " do not match input " + xv.shape_string());
  }
  Tensor<T> normed(rows, cols);
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto in = xv.row(r);
    double mu = 0.0;
    for (T v : in) mu += v;
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (T v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    auto out = normed.row(r);
    for (std::size_t c = 0; c < cols; ++c) out[c] = static_cast<T>((in[c] - mu) * rstd[r]);
  }
  Tensor<T> out(rows, cols);
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = gv[c] * normed.at(r, c) + bv[c];
  }
  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return g.record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, normed = std::move(normed), rstd = std::move(rstd)](Graph<T>& gr, std::size_t self) {
        const Tensor<T>& dy = gr.grad_buffer(self);
        const std::size_t rows = dy.rows(), cols = dy.cols();
        if (gr.requires_grad(ig) || gr.requires_grad(ib)) {
          std::vector<double> dg(cols, 0.0), db(cols, 0.0);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              dg[c] += static_cast<double>(dy.at(r, c)) * normed.at(r, c);
              db[c] += dy.at(r, c);
            }
          }
          if (gr.requires_grad(ig)) {
            Tensor<T>& t = gr.grad_buffer(ig);
            for (std::size_t c = 0; c < cols; ++c) t[c] += static_cast<T>(dg[c]);
          }
          if (gr.requires_grad(ib)) {
            Tensor<T>& t = gr.grad_buffer(ib);
            for (std::size_t c = 0; c < cols; ++c) t[c] += static_cast<T>(db[c]);
          }
        }
        if (gr.requires_grad(ix)) {
          const Tensor<T>& gv = gr.value(ig);
          Tensor<T>& dx = gr.grad_buffer(ix);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dn = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = static_cast<double>(dy.at(r, c)) * gv[c];
              mean_d += d;
              mean_dn += d * normed.at(r, c);
            }
            mean_d /= static_cast<double>(cols);
            mean_dn /= static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = static_cast<double>(dy.at(r, c)) * gv[c];
              dx.at(r, c) += static_cast<T>(rstd[r] * (d - mean_d - normed.at(r, c) * mean_dn));
            }
          }
        }
      });
}

template <class T>
Var<T> softmax(Var<T> x) {
  Tensor<T> out = x.value();
  simd::softmax_rows(out.data(), out.rows(), out.cols());
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const Tensor<T>& y = gr.value(self);
    Tensor<T>& dx = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const auto yr = y.row(r);
      const auto dyr = dy.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += static_cast<double>(yr[c]) * dyr[c];
      auto dxr = dx.row(r);
      const T d = static_cast<T>(dot);
      for (std::size_t c = 0; c < yr.size(); ++c) dxr[c] += yr[c] * (dyr[c] - d);
    }
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.values()) {
    v = static_cast<T>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
  }
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    const Tensor<T>& xv = gr.value(ix);
    Tensor<T>& dx = gr.grad_buffer(ix);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dx[i] += static_cast<T>(dy[i] * (cdf + v * pdf));
    }
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (begin + count > xv.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") outside " + xv.shape_string());
  }
  Tensor<T> out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    std::copy_n(xv.row(r).begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(r).begin());
  }
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, begin, count](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    Tensor<T>& dx = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      for (std::size_t c = 0; c < count; ++c) dx.at(r, begin + c) += dy.at(r, c);
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph<T>& g = *parts.front().graph;
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, offsets;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.value().rows() != rows) {
      throw ShapeError("concat_cols: shapes " + shapes(parts.front().value(), p.value()) +
                       " disagree on rows");
    }
    ids.push_back(p.id);
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor<T> out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(),
                out.row(r).begin() + static_cast<std::ptrdiff_t>(offsets[k]));
    }
  }
  return g.record(std::move(out), ids, [ids, offsets](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!gr.requires_grad(ids[k])) continue;
      Tensor<T>& dx = gr.grad_buffer(ids[k]);
      for (std::size_t r = 0; r < dx.rows(); ++r) {
        for (std::size_t c = 0; c < dx.cols(); ++c) dx.at(r, c) += dy.at(r, offsets[k] + c);
      }
    }
  });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (begin + count > xv.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") outside " + xv.shape_string());
  }
  std::vector<T> vals(xv.values().begin() + static_cast<std::ptrdiff_t>(begin * xv.cols()),
                      xv.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * xv.cols()));
  Tensor<T> out(count, xv.cols(), std::move(vals));
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix, begin](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    Tensor<T>& dx = gr.grad_buffer(ix);
    const std::size_t off = begin * dx.cols();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[off + i] += dy[i];
  });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph<T>& g = *parts.front().graph;
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    graph_of(parts.front(), p);
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows: shapes " + shapes(parts.front().value(), p.value()) +
                       " disagree on columns");
    }
    ids.push_back(p.id);
    rows += p.value().rows();
  }
  std::vector<T> vals;
  vals.reserve(rows * cols);
  for (const auto& p : parts) vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
  return g.record(Tensor<T>(rows, cols, std::move(vals)), ids, [ids](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t n = gr.value(id).size();
      if (gr.requires_grad(id)) {
        Tensor<T>& dx = gr.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[off + i];
      }
      off += n;
    }
  });
}

template <class T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(index.size(), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " outside " + xv.shape_string());
    }
    std::copy(xv.row(index[i]).begin(), xv.row(index[i]).end(), out.row(i).begin());
  }
  const std::size_t ix = x.id;
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.graph->record(std::move(out), {ix}, [ix, idx = std::move(idx)](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    Tensor<T>& dx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = dx.row(idx[i]);
      const auto src = dy.row(i);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

template <class T>
Var<T> repeat_row(Var<T> x, std::size_t count) {
  const Tensor<T>& xv = x.value();
  if (xv.rows() != 1) throw ShapeError("repeat_row: expects 1 x n, got " + xv.shape_string());
  Tensor<T> out(count, xv.cols());
  for (std::size_t r = 0; r < count; ++r) std::copy(xv.values().begin(), xv.values().end(), out.row(r).begin());
  const std::size_t ix = x.id;
  return x.graph->record(std::move(out), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& dy = gr.grad_buffer(self);
    Tensor<T>& dx = gr.grad_buffer(ix);
    std::vector<double> col(dx.cols(), 0.0);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      for (std::size_t c = 0; c < dy.cols(); ++c) col[c] += dy.at(r, c);
    }
    for (std::size_t c = 0; c < col.size(); ++c) dx[c] += static_cast<T>(col[c]);
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  double s = 0.0;
  for (T v : x.value().values()) s += v;
  const std::size_t ix = x.id;
  return x.graph->record(Tensor<T>(1, 1, static_cast<T>(s)), {ix}, [ix](Graph<T>& gr, std::size_t self) {
    const T d = gr.grad_buffer(self)[0];
    for (auto& v : gr.grad_buffer(ix).values()) v += d;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  double s = 0.0;
  for (T v : x.value().values()) s += v;
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  const std::size_t ix = x.id;
  return x.graph->record(Tensor<T>(1, 1, static_cast<T>(s / static_cast<double>(n))), {ix},
                         [ix, n](Graph<T>& gr, std::size_t self) {
                           const T d = static_cast<T>(gr.grad_buffer(self)[0] / static_cast<double>(n));
                           for (auto& v : gr.grad_buffer(ix).values()) v += d;
                         });
}

template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "mse");
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    s += d * d;
  }
  const std::size_t ia = a.id, ib = b.id;
  return g.record(Tensor<T>(1, 1, static_cast<T>(s / static_cast<double>(n))), {ia, ib},
                  [ia, ib, n](Graph<T>& gr, std::size_t self) {
                    const double scale = 2.0 * gr.grad_buffer(self)[0] / static_cast<double>(n);
                    const Tensor<T>& av = gr.value(ia);
                    const Tensor<T>& bv = gr.value(ib);
                    if (gr.requires_grad(ia)) {
                      Tensor<T>& da = gr.grad_buffer(ia);
                      for (std::size_t i = 0; i < n; ++i) da[i] += static_cast<T>(scale * (static_cast<double>(av[i]) - bv[i]));
                    }
                    if (gr.requires_grad(ib)) {
                      Tensor<T>& db = gr.grad_buffer(ib);
                      for (std::size_t i = 0; i < n; ++i) db[i] -= static_cast<T>(scale * (static_cast<double>(av[i]) - bv[i]));
                    }
                  });
}

#define AURUM_INSTANTIATE_OPS(T)                                                      \
  template class Graph<T>;                                                            \
  template Var<T> matmul(Var<T>, Var<T>, T);                                          \
  template Var<T> matmul_nt(Var<T>, Var<T>, T);                                       \
  template Var<T> add(Var<T>, Var<T>);                                                \
  template Var<T> add_row(Var<T>, Var<T>);                                            \
  template Var<T> sub(Var<T>, Var<T>);                                                \
  template Var<T> mul(Var<T>, Var<T>);                                                \
  template Var<T> scale(Var<T>, T);                                                   \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, double);                         \
  template Var<T> softmax(Var<T>);                                                    \
  template Var<T> gelu(Var<T>);                                                       \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                       \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                            \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                       \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                            \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                  \
  template Var<T> repeat_row(Var<T>, std::size_t);                                    \
  template Var<T> mean(Var<T>);                                                       \
  template Var<T> sum(Var<T>);                                                        \
  template Var<T> mse(Var<T>, Var<T>);

AURUM_INSTANTIATE_OPS(float)
AURUM_INSTANTIATE_OPS(double)

#undef AURUM_INSTANTIATE_OPS

}  // namespace aurum::nn
