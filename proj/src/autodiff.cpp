#include "dsg/autodiff.hpp"

#include "dsg/nn.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dsg {

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void check_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) shape_error(op, "expected rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace

const Shape& Tensor::shape() const { return graph_->shape(id_); }
const Array& Tensor::values() const { return graph_->value(id_); }

int Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s[0];
}

int Tensor::cols() const {
  const Shape& s = shape();
  return s.size() == 2 ? s[1] : 1;
}

double Tensor::scalar() const {
  if (!shape().empty()) shape_error("scalar", "tensor has rank > 0: " + shape_str(shape()));
  return values()[0];
}

Tensor Graph::make_node(Shape shape, Array value, const std::vector<int>& parents,
                        BackwardFn backward_fn, const char* op_name) {
  if (shape_size(shape) != static_cast<int>(value.size())) {
    shape_error(op_name, "value size does not match shape " + shape_str(shape));
  }
  if (!value.allFinite()) {
    throw std::runtime_error(std::string(op_name) + ": non-finite values in forward result");
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  for (int p : parents) {
    if (p < 0 || p >= size()) shape_error(op_name, "parent id out of range");
    if (nodes_[p].requires_grad) n.requires_grad = true;
  }
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return Tensor(this, size() - 1);
}

Tensor Graph::constant(Shape shape, Array values) {
  return make_node(std::move(shape), std::move(values), {}, nullptr, "constant");
}

Tensor Graph::constant(Shape shape, std::vector<double> values) {
  Array a = Eigen::Map<const Array>(values.data(), static_cast<long>(values.size()));
  return constant(std::move(shape), std::move(a));
}

Tensor Graph::scalar(double v) {
  Array a(1);
  a[0] = v;
  return constant(Shape{}, std::move(a));
}

Tensor Graph::zeros(Shape shape) {
  Array a = Array::Zero(shape_size(shape));
  return constant(std::move(shape), std::move(a));
}

Tensor Graph::ones(Shape shape) {
  Array a = Array::Ones(shape_size(shape));
  return constant(std::move(shape), std::move(a));
}

Tensor Graph::param(ParamTensor& p) {
  Tensor t = make_node(p.shape, p.value, {}, nullptr, "param");
  nodes_[t.id()].param = &p;
  nodes_[t.id()].requires_grad = true;
  param_leaves_.push_back(t.id());
  return t;
}

void Graph::backward(const Tensor& root) {
  if (root.graph() != this) throw std::invalid_argument("backward: tensor from another graph");
  if (!root.shape().empty()) {
    throw std::invalid_argument("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  for (Node& n : nodes_) n.grad = Array::Zero(n.value.size());
  nodes_[root.id()].grad[0] = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward_fn && n.requires_grad) n.backward_fn(*this, id);
  }
  // Accumulation into parameters in fixed leaf order keeps runs deterministic.
  for (int id : param_leaves_) {
    nodes_[id].param->grad += nodes_[id].grad;
  }
}

Array Graph::param_grad(const ParamTensor& p) const {
  Array g = Array::Zero(shape_size(p.shape));
  for (int id : param_leaves_) {
    if (nodes_[id].param == &p) g += nodes_[id].grad;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank2("matmul", a);
  check_rank2("matmul", b);
  int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  Graph& g = *a.graph();
  ConstMatMap A(a.values().data(), m, k);
  ConstMatMap B(b.values().data(), k, n);
  Array out(static_cast<long>(m) * n);
  MatMap(out.data(), m, n).noalias() = A * B;
  int aid = a.id(), bid = b.id();
  return g.make_node(
      {m, n}, std::move(out), {aid, bid},
      [aid, bid, m, k, n](Graph& gr, int self) {
        ConstMatMap Go(gr.grad(self).data(), m, n);
        ConstMatMap Av(gr.value(aid).data(), m, k);
        ConstMatMap Bv(gr.value(bid).data(), k, n);
        if (gr.requires_grad(aid)) {
          MatMap Ga(gr.grad_buffer(aid).data(), m, k);
          Ga.noalias() += Go * Bv.transpose();
        }
        if (gr.requires_grad(bid)) {
          MatMap Gb(gr.grad_buffer(bid).data(), k, n);
          Gb.noalias() += Av.transpose() * Go;
        }
      },
      "matmul");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) shape_error("concat", "no parts");
  if (parts.size() == 1) return parts[0];
  Graph& g = *parts[0].graph();
  int rank = parts[0].rank();
  if (rank == 0) shape_error("concat", "cannot concat scalars");
  if (axis < 0 || axis >= rank) shape_error("concat", "axis out of range");

  std::vector<int> ids;
  for (const Tensor& t : parts) {
    if (t.rank() != rank) shape_error("concat", "mixed ranks");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && t.shape()[d] != parts[0].shape()[d]) {
        shape_error("concat", "non-concat dimension mismatch: " + shape_str(t.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
      }
    }
    ids.push_back(t.id());
  }

  if (rank == 1 || axis == 0) {
    // Row-major: axis-0 concat is flat juxtaposition.
    int total = 0;
    for (const Tensor& t : parts) total += t.shape()[0];
    Shape shape = parts[0].shape();
    shape[0] = total;
    Array out(shape_size(shape));
    long off = 0;
    for (const Tensor& t : parts) {
      out.segment(off, t.values().size()) = t.values();
      off += t.values().size();
    }
    std::vector<long> sizes;
    for (const Tensor& t : parts) sizes.push_back(t.values().size());
    return g.make_node(std::move(shape), std::move(out), ids,
                       [ids, sizes](Graph& gr, int self) {
                         long off = 0;
                         for (size_t i = 0; i < ids.size(); ++i) {
                           if (gr.requires_grad(ids[i])) {
                             gr.grad_buffer(ids[i]) += gr.grad(self).segment(off, sizes[i]);
                           }
                           off += sizes[i];
                         }
                       },
                       "concat");
  }

  // axis == 1, rank 2
  int m = parts[0].shape()[0];
  int total_cols = 0;
  std::vector<int> widths;
  for (const Tensor& t : parts) {
    widths.push_back(t.shape()[1]);
    total_cols += t.shape()[1];
  }
  Array out(static_cast<long>(m) * total_cols);
  MatMap O(out.data(), m, total_cols);
  int c = 0;
  for (const Tensor& t : parts) {
    O.middleCols(c, t.shape()[1]) = ConstMatMap(t.values().data(), m, t.shape()[1]);
    c += t.shape()[1];
  }
  return g.make_node({m, total_cols}, std::move(out), ids,
                     [ids, widths, m, total_cols](Graph& gr, int self) {
                       ConstMatMap Go(gr.grad(self).data(), m, total_cols);
                       int c = 0;
                       for (size_t i = 0; i < ids.size(); ++i) {
                         if (gr.requires_grad(ids[i])) {
                           MatMap Gp(gr.grad_buffer(ids[i]).data(), m, widths[i]);
                           Gp += Go.middleCols(c, widths[i]);
                         }
                         c += widths[i];
                       }
                     },
                     "concat");
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
  check_rank2("gather_rows", a);
  int m = a.shape()[0], n = a.shape()[1];
  for (int r : rows) {
    if (r < 0 || r >= m) shape_error("gather_rows", "row index out of range");
  }
  int k = static_cast<int>(rows.size());
  Graph& g = *a.graph();
  Array out(static_cast<long>(k) * n);
  MatMap O(out.data(), k, n);
  ConstMatMap A(a.values().data(), m, n);
  for (int i = 0; i < k; ++i) O.row(i) = A.row(rows[i]);
  int aid = a.id();
  return g.make_node({k, n}, std::move(out), {aid},
                     [aid, rows, m, n, k](Graph& gr, int self) {
                       if (!gr.requires_grad(aid)) return;
                       ConstMatMap Go(gr.grad(self).data(), k, n);
                       MatMap Ga(gr.grad_buffer(aid).data(), m, n);
                       for (int i = 0; i < k; ++i) Ga.row(rows[i]) += Go.row(i);
                     },
                     "gather_rows");
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  check_rank2("slice_rows", a);
  if (r0 < 0 || r1 > a.shape()[0] || r0 >= r1) shape_error("slice_rows", "bad range");
  std::vector<int> rows;
  for (int r = r0; r < r1; ++r) rows.push_back(r);
  return gather_rows(a, rows);
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  check_rank2("slice_cols", a);
  int m = a.shape()[0], n = a.shape()[1];
  if (c0 < 0 || c1 > n || c0 >= c1) shape_error("slice_cols", "bad range");
  int w = c1 - c0;
  Graph& g = *a.graph();
  Array out(static_cast<long>(m) * w);
  MatMap(out.data(), m, w) = ConstMatMap(a.values().data(), m, n).middleCols(c0, w);
  int aid = a.id();
  return g.make_node({m, w}, std::move(out), {aid},
                     [aid, m, n, c0, w](Graph& gr, int self) {
                       if (!gr.requires_grad(aid)) return;
                       MatMap Ga(gr.grad_buffer(aid).data(), m, n);
                       Ga.middleCols(c0, w) += ConstMatMap(gr.grad(self).data(), m, w);
                     },
                     "slice_cols");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != static_cast<int>(a.values().size())) {
    shape_error("reshape", "element count mismatch: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  Graph& g = *a.graph();
  int aid = a.id();
  return g.make_node(std::move(shape), a.values(), {aid},
                     [aid](Graph& gr, int self) {
                       if (gr.requires_grad(aid)) gr.grad_buffer(aid) += gr.grad(self);
                     },
                     "reshape");
}

namespace {

// Shared implementation for elementwise binary ops with rank-0 broadcast.
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 const std::function<Array(const Array&, const Array&)>& fwd,
                 const std::function<void(Graph&, int, int, int)>& bwd) {
  bool a0 = a.rank() == 0, b0 = b.rank() == 0;
  if (!a0 && !b0 && a.shape() != b.shape()) {
    shape_error(name, "shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Graph& g = *a.graph();
  Array out = fwd(a.values(), b.values());
  Shape shape = a0 ? b.shape() : a.shape();
  int aid = a.id(), bid = b.id();
  return g.make_node(std::move(shape), std::move(out), {aid, bid},
                     [bwd, aid, bid](Graph& gr, int self) { bwd(gr, self, aid, bid); },
                     name);
}

void accumulate_maybe_scalar(Graph& g, int pid, const Array& contrib) {
  if (!g.requires_grad(pid)) return;
  if (g.grad_buffer(pid).size() == 1 && contrib.size() > 1) {
    g.grad_buffer(pid)[0] += contrib.sum();
  } else {
    g.grad_buffer(pid) += contrib;
  }
}

Array broadcast_values(const Array& v, long n) {
  if (v.size() == 1 && n > 1) return Array::Constant(n, v[0]);
  return v;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b,
      [](const Array& x, const Array& y) -> Array {
        if (x.size() == 1 && y.size() > 1) return x[0] + y;
        if (y.size() == 1 && x.size() > 1) return x + y[0];
        return x + y;
      },
      [](Graph& g, int self, int aid, int bid) {
        accumulate_maybe_scalar(g, aid, g.grad(self));
        accumulate_maybe_scalar(g, bid, g.grad(self));
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b,
      [](const Array& x, const Array& y) -> Array {
        if (x.size() == 1 && y.size() > 1) return x[0] - y;
        if (y.size() == 1 && x.size() > 1) return x - y[0];
        return x - y;
      },
      [](Graph& g, int self, int aid, int bid) {
        accumulate_maybe_scalar(g, aid, g.grad(self));
        accumulate_maybe_scalar(g, bid, -g.grad(self));
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b,
      [](const Array& x, const Array& y) -> Array {
        if (x.size() == 1 && y.size() > 1) return x[0] * y;
        if (y.size() == 1 && x.size() > 1) return x * y[0];
        return x * y;
      },
      [](Graph& g, int self, int aid, int bid) {
        const Array& go = g.grad(self);
        Array bv = broadcast_values(g.value(bid), go.size());
        Array av = broadcast_values(g.value(aid), go.size());
        accumulate_maybe_scalar(g, aid, Array(go * bv));
        accumulate_maybe_scalar(g, bid, Array(go * av));
      });
}

Tensor scalar_mul(const Tensor& a, double c) {
  Graph& g = *a.graph();
  int aid = a.id();
  return g.make_node(a.shape(), Array(a.values() * c), {aid},
                     [aid, c](Graph& gr, int self) {
                       if (gr.requires_grad(aid)) gr.grad_buffer(aid) += gr.grad(self) * c;
                     },
                     "scalar_mul");
}

Tensor scalar_add(const Tensor& a, double c) {
  Graph& g = *a.graph();
  int aid = a.id();
  return g.make_node(a.shape(), Array(a.values() + c), {aid},
                     [aid](Graph& gr, int self) {
                       if (gr.requires_grad(aid)) gr.grad_buffer(aid) += gr.grad(self);
                     },
                     "scalar_add");
}

Tensor relu(const Tensor& a) {
  Graph& g = *a.graph();
  int aid = a.id();
  return g.make_node(a.shape(), Array(a.values().max(0.0)), {aid},
                     [aid](Graph& gr, int self) {
                       if (!gr.requires_grad(aid)) return;
                       const Array& x = gr.value(aid);
                       gr.grad_buffer(aid) += gr.grad(self) * (x > 0.0).cast<double>();
                     },
                     "relu");
}

Tensor exp(const Tensor& a) {
  Graph& g = *a.graph();
  int aid = a.id();
  return g.make_node(a.shape(), Array(a.values().exp()), {aid},
                     [aid](Graph& gr, int self) {
                       if (!gr.requires_grad(aid)) return;
                       gr.grad_buffer(aid) += gr.grad(self) * gr.value(self);
                     },
                     "exp");
}

Tensor reduce_sum(const Tensor& a) {
  Graph& g = *a.graph();
  Array out(1);
  out[0] = a.values().sum();
  int aid = a.id();
  return g.make_node(Shape{}, std::move(out), {aid},
                     [aid](Graph& gr, int self) {
                       if (gr.requires_grad(aid)) gr.grad_buffer(aid) += gr.grad(self)[0];
                     },
                     "reduce_sum");
}

Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  check_rank2("add_rowvec", a);
  int m = a.shape()[0], n = a.shape()[1];
  if (shape_size(b.shape()) != n || b.rank() == 0) {
    shape_error("add_rowvec", "bias shape " + shape_str(b.shape()) + " does not match columns of " +
                                  shape_str(a.shape()));
  }
  Graph& g = *a.graph();
  Array out(a.values().size());
  {
    MatMap O(out.data(), m, n);
    O = ConstMatMap(a.values().data(), m, n);
    Eigen::Map<const Eigen::RowVectorXd> bv(b.values().data(), n);
    O.rowwise() += bv;
  }
  int aid = a.id(), bid = b.id();
  return g.make_node({m, n}, std::move(out), {aid, bid},
                     [aid, bid, m, n](Graph& gr, int self) {
                       ConstMatMap Go(gr.grad(self).data(), m, n);
                       if (gr.requires_grad(aid)) gr.grad_buffer(aid) += gr.grad(self);
                       if (gr.requires_grad(bid)) {
                         Eigen::Map<Eigen::RowVectorXd> Gb(gr.grad_buffer(bid).data(), n);
                         Gb += Go.colwise().sum();
                       }
                     },
                     "add_rowvec");
}

Tensor softmax_weights(const Tensor& scores) {
  if (scores.rank() != 1) shape_error("softmax_weights", "expected rank-1 scores");
  int n = scores.shape()[0];
  if (n < 1) shape_error("softmax_weights", "empty scores");
  Graph& g = *scores.graph();
  double m = scores.values().maxCoeff();
  Array e = (scores.values() - m).exp();
  Array w = e / e.sum();
  int sid = scores.id();
  return g.make_node({n}, std::move(w), {sid},
                     [sid](Graph& gr, int self) {
                       if (!gr.requires_grad(sid)) return;
                       const Array& w = gr.value(self);
                       const Array& go = gr.grad(self);
                       double dot = (go * w).sum();
                       gr.grad_buffer(sid) += w * (go - dot);
                     },
                     "softmax_weights");
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  check_rank2("softmax_cross_entropy", logits);
  int n = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(targets.size()) != n) {
    shape_error("softmax_cross_entropy", "target count does not match rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= c) shape_error("softmax_cross_entropy", "target class out of range");
  }
  Graph& g = *logits.graph();
  ConstMatMap L(logits.values().data(), n, c);
  Array probs(static_cast<long>(n) * c);
  MatMap P(probs.data(), n, c);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double m = L.row(i).maxCoeff();
    Eigen::RowVectorXd e = (L.row(i).array() - m).exp();
    double z = e.sum();
    P.row(i) = e / z;
    loss -= (L(i, targets[i]) - m - std::log(z));
  }
  loss /= n;
  Array out(1);
  out[0] = loss;
  int lid = logits.id();
  auto probs_cache = std::make_shared<Array>(std::move(probs));
  return g.make_node(Shape{}, std::move(out), {lid},
                     [lid, targets, n, c, probs_cache](Graph& gr, int self) {
                       if (!gr.requires_grad(lid)) return;
                       double go = gr.grad(self)[0];
                       MatMap Gl(gr.grad_buffer(lid).data(), n, c);
                       ConstMatMap P(probs_cache->data(), n, c);
                       double inv = go / n;
                       Gl += P * inv;
                       for (int i = 0; i < n; ++i) Gl(i, targets[i]) -= inv;
                     },
                     "softmax_cross_entropy");
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    shape_error("smooth_l1", "shape mismatch: " + shape_str(pred.shape()) + " vs " +
                                 shape_str(target.shape()));
  }
  Graph& g = *pred.graph();
  Array d = pred.values() - target.values();
  long n = d.size();
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    double a = std::abs(d[i]);
    loss += a < 1.0 ? 0.5 * d[i] * d[i] : a - 0.5;
  }
  Array out(1);
  out[0] = loss / static_cast<double>(n);
  int pid = pred.id(), tid = target.id();
  return g.make_node(Shape{}, std::move(out), {pid, tid},
                     [pid, tid, n](Graph& gr, int self) {
                       Array d = gr.value(pid) - gr.value(tid);
                       double go = gr.grad(self)[0] / static_cast<double>(n);
                       Array dd(n);
                       for (long i = 0; i < n; ++i) {
                         double v = d[i];
                         dd[i] = (std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0)) * go;
                       }
                       if (gr.requires_grad(pid)) gr.grad_buffer(pid) += dd;
                       if (gr.requires_grad(tid)) gr.grad_buffer(tid) -= dd;
                     },
                     "smooth_l1");
}

}  // namespace dsg
