#include "llapa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include <Eigen/Core>

#include "llapa/error.hpp"

namespace llapa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Strided = Eigen::OuterStride<>;
using MapBlock = Eigen::Map<RowMat, 0, Strided>;
using CMapBlock = Eigen::Map<const RowMat, 0, Strided>;

CMapMat view(const Tensor& t) { return CMapMat(t.data().data(), t.rows(), t.cols()); }
MapMat view(Tensor& t) { return MapMat(t.data().data(), t.rows(), t.cols()); }

void require_rank2(const Var& v, const char* op) {
  if (v.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 operand, got " + shape_str(v.value().shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.value().shape() != b.value().shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_str(a.value().shape()) + " vs " +
                         shape_str(b.value().shape()));
  }
}

Tape& common_tape(const std::vector<Var>& vars) {
  Tape* tape = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ContractError("operation on an unbound Var");
    if (tape && &v.tape() != tape) throw ContractError("operands recorded on different tapes");
    tape = &v.tape();
  }
  return *tape;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) n.requires_grad = n.requires_grad || requires_grad(in.id());
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  const auto& shape = value(id).shape();
  if (n.grad.shape() != shape) n.grad = Tensor(shape);
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("backward on a Var from another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.value().shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!requires_grad(loss.id())) return;
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.param || !n.param->trainable || n.grad.empty()) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void backward(const Var& loss, ParameterStore& store) {
  loss.tape().backward(loss);
  mark_gradients_ready(store);
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = common_tape({a, b});
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  Tensor out = llapa::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = view(t.grad(self));
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)).noalias() += g * view(t.value(ib)).transpose();
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).noalias() += view(t.value(ia)).transpose() * g;
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = common_tape({a, b});
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      view(t.grad_buffer(id)) += view(t.grad(self));
    }
  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& tape = common_tape({a, row});
  require_rank2(a, "add_row");
  if (row.value().rows() != 1 || row.value().cols() != a.value().cols()) {
    throw DimensionError("add_row: row " + shape_str(row.value().shape()) + " does not broadcast over " +
                         shape_str(a.value().shape()));
  }
  Tensor out = a.value();
  view(out).rowwise() += view(row.value()).row(0);
  const std::size_t ia = a.id(), ir = row.id();
  return tape.record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    auto g = view(t.grad(self));
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)) += g;
    if (t.requires_grad(ir)) view(t.grad_buffer(ir)).row(0) += g.colwise().sum();
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = common_tape({a, b});
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = view(t.grad(self)).array();
    if (t.requires_grad(ia)) view(t.grad_buffer(ia)).array() += g * view(t.value(ib)).array();
    if (t.requires_grad(ib)) view(t.grad_buffer(ib)).array() += g * view(t.value(ia)).array();
  });
}

Var scale(const Var& a, double s) {
  Tape& tape = common_tape({a});
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    view(t.grad_buffer(ia)) += s * view(t.grad(self));
  });
}

Var scale_rows(const Var& a, std::vector<double> weights) {
  Tape& tape = common_tape({a});
  require_rank2(a, "scale_rows");
  if (weights.size() != a.value().rows()) {
    throw DimensionError("scale_rows: " + std::to_string(weights.size()) + " weights for " +
                         shape_str(a.value().shape()));
  }
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v *= weights[r];
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, w = std::move(weights)](Tape& t, std::size_t self) {
    Tensor& ga = t.grad_buffer(ia);
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto dst = ga.row(r);
      auto src = g.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w[r] * src[c];
    }
  });
}

Var sum(const Var& a) {
  Tape& tape = common_tape({a});
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sigmoid(const Var& a) {
  Tape& tape = common_tape({a});
  Tensor out = llapa::sigmoid(a.value());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto y = view(t.value(self)).array();
    view(t.grad_buffer(ia)).array() += view(t.grad(self)).array() * y * (1.0 - y);
  });
}

Var tanh(const Var& a) {
  Tape& tape = common_tape({a});
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto y = view(t.value(self)).array();
    view(t.grad_buffer(ia)).array() += view(t.grad(self)).array() * (1.0 - y * y);
  });
}

double kernels::gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

Var gelu(const Var& a) {
  Tape& tape = common_tape({a});
  Tensor out = a.value();
  auto th = std::make_shared<std::vector<double>>(out.size());
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) {
    const double x = od[i];
    (*th)[i] = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
    od[i] = 0.5 * x * (1.0 + (*th)[i]);
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, th](Tape& t, std::size_t self) {
    auto x = t.value(ia).data();
    auto g = t.grad(self).data();
    auto dst = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = (*th)[i];
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x[i] * x[i]);
      dst[i] += g[i] * (0.5 * (1.0 + h) + 0.5 * x[i] * (1.0 - h * h) * du);
    }
  });
}

Var softmax_lastdim(const Var& a) {
  Tape& tape = common_tape({a});
  require_rank2(a, "softmax_lastdim");
  Tensor out = llapa::softmax_lastdim(a.value());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    auto y = view(t.value(self)).array();
    auto g = view(t.grad(self)).array();
    Eigen::ArrayXd dots = (g * y).rowwise().sum();
    view(t.grad_buffer(ia)).array() += y * (g.colwise() - dots);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Tape& tape = common_tape(parts);
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.value().cols() != cols) {
      throw DimensionError("concat_rows width mismatch: " + shape_str(parts.front().value().shape()) + " vs " +
                           shape_str(p.value().shape()));
    }
    rows += p.value().rows();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset * cols);
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.value().rows();
  }
  return tape.record(std::move(out), parts, [ids, offsets, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      auto dst = t.grad_buffer(ids[i]).data();
      const double* src = g.data().data() + offsets[i] * cols;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  Tape& tape = common_tape(parts);
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.value().rows() != rows) {
      throw DimensionError("concat_cols height mismatch: " + shape_str(parts.front().value().shape()) + " vs " +
                           shape_str(p.value().shape()));
    }
    cols += p.value().cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    view(out).middleCols(offset, p.value().cols()) = view(p.value());
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.value().cols();
  }
  return tape.record(std::move(out), parts, [ids, offsets](Tape& t, std::size_t self) {
    auto g = view(t.grad(self));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      Tensor& dst = t.grad_buffer(ids[i]);
      view(dst) += g.middleCols(offsets[i], dst.cols());
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
  Tape& tape = common_tape({a});
  require_rank2(a, "slice_rows");
  if (begin + count > a.value().rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(a.value().shape()));
  }
  const std::size_t cols = a.value().cols();
  Tensor out = Tensor::zeros(count, cols);
  std::copy_n(a.value().data().begin() + begin * cols, count * cols, out.data().begin());
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, begin, cols](Tape& t, std::size_t self) {
    auto src = t.grad(self).data();
    double* dst = t.grad_buffer(ia).data().data() + begin * cols;
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  });
}

Var gather_rows(const Var& table, std::vector<std::size_t> indices) {
  Tape& tape = common_tape({table});
  require_rank2(table, "gather_rows");
  const std::size_t cols = table.value().cols();
  Tensor out = Tensor::zeros(indices.size(), cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= table.value().rows()) {
      throw DimensionError("gather_rows index " + std::to_string(indices[r]) + " out of range for " +
                           shape_str(table.value().shape()));
    }
    auto src = table.value().row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t it = table.id();
  return tape.record(std::move(out), {table}, [it, idx = std::move(indices)](Tape& t, std::size_t self) {
    Tensor& dst = t.grad_buffer(it);
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto d = dst.row(idx[r]);
      auto s = g.row(r);
      for (std::size_t c = 0; c < d.size(); ++c) d[c] += s[c];
    }
  });
}

Var mean_rows(const Var& a) {
  Tape& tape = common_tape({a});
  require_rank2(a, "mean_rows");
  const std::size_t rows = a.value().rows();
  if (rows == 0) throw ContractError("mean_rows of an empty matrix");
  Tensor out = Tensor::zeros(1, a.value().cols());
  view(out).row(0) = view(a.value()).colwise().mean();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, rows](Tape& t, std::size_t self) {
    view(t.grad_buffer(ia)).rowwise() += view(t.grad(self)).row(0) / static_cast<double>(rows);
  });
}

void kernels::layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tensor& out) {
  const std::size_t n = x.cols();
  out = Tensor::zeros(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) o[c] = (xr[c] - mu) * inv * gain[c] + bias[c];
  }
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& tape = common_tape({x, gain, bias});
  require_rank2(x, "layer_norm");
  const std::size_t n = x.value().cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm affine width does not match " + shape_str(x.value().shape()));
  }
  Tensor out;
  kernels::layer_norm_rows(x.value(), gain.value(), bias.value(), eps, out);
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(std::move(out), {x, gain, bias}, [ix, ig, ib, n, eps](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(ix);
    const Tensor& gv = t.value(ig);
    const Tensor& g = t.grad(self);
    const bool need_x = t.requires_grad(ix), need_g = t.requires_grad(ig), need_b = t.requires_grad(ib);
    std::vector<double> xhat(n), gy(n);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      auto xr = xv.row(r);
      auto gr = g.row(r);
      double mu = 0.0;
      for (double v : xr) mu += v;
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (double v : xr) var += (v - mu) * (v - mu);
      var /= static_cast<double>(n);
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_gy = 0.0, mean_gy_xhat = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        xhat[c] = (xr[c] - mu) * inv;
        gy[c] = gr[c] * gv[c];
        mean_gy += gy[c];
        mean_gy_xhat += gy[c] * xhat[c];
      }
      mean_gy /= static_cast<double>(n);
      mean_gy_xhat /= static_cast<double>(n);
      if (need_x) {
        auto dx = t.grad_buffer(ix).row(r);
        for (std::size_t c = 0; c < n; ++c) dx[c] += inv * (gy[c] - mean_gy - xhat[c] * mean_gy_xhat);
      }
      if (need_g) {
        auto dg = t.grad_buffer(ig).data();
        for (std::size_t c = 0; c < n; ++c) dg[c] += gr[c] * xhat[c];
      }
      if (need_b) {
        auto db = t.grad_buffer(ib).data();
        for (std::size_t c = 0; c < n; ++c) db[c] += gr[c];
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) { return add_row(matmul(x, weight), bias); }

void kernels::attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                const Tensor* bias, Tensor& out, std::vector<Tensor>* probs) {
  const std::size_t nq = q.rows(), nk = k.rows(), width = q.cols();
  const std::size_t d = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  out = Tensor::zeros(nq, width);
  if (probs) probs->assign(heads, Tensor());
  RowMat scores(nq, nk);
  for (std::size_t h = 0; h < heads; ++h) {
    CMapBlock qh(q.data().data() + h * d, nq, d, Strided(width));
    CMapBlock kh(k.data().data() + h * d, nk, d, Strided(width));
    CMapBlock vh(v.data().data() + h * d, nk, d, Strided(width));
    scores.noalias() = (qh * kh.transpose()) * inv_sqrt_d;
    if (bias) scores += view(*bias);
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      auto row = scores.row(r);
      const auto shifted = (row.array() - row.maxCoeff()).eval();
      // Eigen's vectorised exp clamps its input instead of underflowing to zero.
      row = (shifted < -745.2).select(0.0, shifted.exp());
      row /= row.sum();
    }
    MapBlock oh(out.data().data() + h * d, nq, d, Strided(width));
    oh.noalias() = scores * vh;
    if (probs) {
      (*probs)[h] = Tensor::zeros(nq, nk);
      view((*probs)[h]) = scores;
    }
  }
}

Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, std::shared_ptr<const Tensor> bias,
              std::vector<Tensor>* probs) {
  Tape& tape = common_tape({q, k, v});
  require_rank2(q, "attention");
  const std::size_t width = q.value().cols();
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (k.value().cols() != width || v.value().cols() != width || k.value().rows() != v.value().rows()) {
    throw DimensionError("attention operand mismatch: q " + shape_str(q.value().shape()) + ", k " +
                         shape_str(k.value().shape()) + ", v " + shape_str(v.value().shape()));
  }
  if (bias && (bias->rows() != q.value().rows() || bias->cols() != k.value().rows())) {
    throw DimensionError("attention bias " + shape_str(bias->shape()) + " does not match logits " +
                         std::to_string(q.value().rows()) + "x" + std::to_string(k.value().rows()));
  }
  auto saved = std::make_shared<std::vector<Tensor>>();
  Tensor out;
  kernels::attention_forward(q.value(), k.value(), v.value(), heads, bias.get(), out, saved.get());
  if (probs) *probs = *saved;
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return tape.record(std::move(out), {q, k, v}, [iq, ik, iv, heads, saved](Tape& t, std::size_t self) {
    const Tensor& qv = t.value(iq);
    const Tensor& kv = t.value(ik);
    const Tensor& vv = t.value(iv);
    const Tensor& g = t.grad(self);
    const std::size_t nq = qv.rows(), nk = kv.rows(), width = qv.cols(), d = width / heads;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik), need_v = t.requires_grad(iv);
    RowMat dp(nq, nk);
    for (std::size_t h = 0; h < heads; ++h) {
      CMapMat p(view((*saved)[h]).data(), nq, nk);
      CMapBlock gh(g.data().data() + h * d, nq, d, Strided(width));
      CMapBlock qh(qv.data().data() + h * d, nq, d, Strided(width));
      CMapBlock kh(kv.data().data() + h * d, nk, d, Strided(width));
      CMapBlock vh(vv.data().data() + h * d, nk, d, Strided(width));
      if (need_v) {
        MapBlock dv(t.grad_buffer(iv).data().data() + h * d, nk, d, Strided(width));
        dv.noalias() += p.transpose() * gh;
      }
      if (!need_q && !need_k) continue;
      dp.noalias() = gh * vh.transpose();
      Eigen::VectorXd dots = (dp.array() * p.array()).rowwise().sum();
      dp = (p.array() * (dp.array().colwise() - dots.array())).matrix() * inv_sqrt_d;
      if (need_q) {
        MapBlock dq(t.grad_buffer(iq).data().data() + h * d, nq, d, Strided(width));
        dq.noalias() += dp * kh;
      }
      if (need_k) {
        MapBlock dk(t.grad_buffer(ik).data().data() + h * d, nk, d, Strided(width));
        dk.noalias() += dp.transpose() * qh;
      }
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets) {
  Tape& tape = common_tape({logits});
  require_rank2(logits, "cross_entropy");
  const Tensor& z = logits.value();
  if (targets.size() != z.rows()) {
    throw ContractError("cross_entropy: " + std::to_string(z.rows()) + " logit rows for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ContractError("cross_entropy over zero steps");
  auto probs = std::make_shared<Tensor>(llapa::softmax_lastdim(z));
  double loss = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] >= z.cols()) throw ContractError("cross_entropy target outside the vocabulary");
    // log-softmax computed directly for accuracy in the saturated regime
    auto row = z.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    loss -= (row[targets[r]] - mx) - std::log(s);
  }
  loss /= static_cast<double>(targets.size());
  const std::size_t il = logits.id();
  return tape.record(Tensor::scalar(loss), {logits}, [il, probs, targets](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / static_cast<double>(targets.size());
    Tensor& dst = t.grad_buffer(il);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      auto d = dst.row(r);
      auto p = probs->row(r);
      for (std::size_t c = 0; c < d.size(); ++c) d[c] += g * (p[c] - (c == targets[r] ? 1.0 : 0.0));
    }
  });
}

Var binary_cross_entropy(const Var& probs, const std::vector<double>& labels) {
  constexpr double kLo = 1e-12, kHi = 1.0 - 1e-12;
  Tape& tape = common_tape({probs});
  const Tensor& p = probs.value();
  if (p.size() != labels.size()) {
    throw ContractError("binary_cross_entropy: " + std::to_string(p.size()) + " probabilities for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("binary_cross_entropy over an empty batch");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double pc = std::clamp(p[i], kLo, kHi);
    loss -= labels[i] * std::log(pc) + (1.0 - labels[i]) * std::log(1.0 - pc);
  }
  loss /= static_cast<double>(labels.size());
  const std::size_t ip = probs.id();
  return tape.record(Tensor::scalar(loss), {probs}, [ip, labels](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / static_cast<double>(labels.size());
    const Tensor& pv = t.value(ip);
    auto dst = t.grad_buffer(ip).data();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double pi = pv[i];
      if (pi < kLo || pi > kHi) continue;
      dst[i] += -g * (labels[i] / pi - (1.0 - labels[i]) / (1.0 - pi));
    }
  });
}

}  // namespace llapa
