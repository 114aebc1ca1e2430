#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace dsg {

using Array = Eigen::ArrayXd;
using Shape = std::vector<int>;  // rank 0 (scalar), 1 (vector) or 2 (matrix)

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct ParamTensor;
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Tensor {
 public:
  Tensor() = default;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  const Array& values() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int rows() const;
  int cols() const;
  double scalar() const;

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Define-by-run computation graph. Nodes are appended in topological order;
// values are computed eagerly and checked finite. A graph is built per
// training step and discarded. Not copyable; independent graphs may live in
// different threads.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self_id)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Shape shape, Array values);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor scalar(double v);
  Tensor zeros(Shape shape);
  Tensor ones(Shape shape);

  // Leaf bound to a persistent parameter; backward() accumulates into p.grad.
  Tensor param(ParamTensor& p);

  // root must be rank 0. Gradients accumulate in fixed reverse node-id order.
  void backward(const Tensor& root);

  // Low-level node construction for the op free functions.
  Tensor make_node(Shape shape, Array value, const std::vector<int>& parents,
                   BackwardFn backward_fn, const char* op_name);

  const Array& value(int id) const { return nodes_[id].value; }
  const Array& grad(int id) const { return nodes_[id].grad; }
  Array& grad_buffer(int id) { return nodes_[id].grad; }
  const Shape& shape(int id) const { return nodes_[id].shape; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Gradient of a leaf created by param(); zero if untouched by forward.
  Array param_grad(const ParamTensor& p) const;

 private:
  struct Node {
    Shape shape;
    Array value;
    Array grad;
    BackwardFn backward_fn;
    ParamTensor* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<int> param_leaves_;
};

// ---- Ops. Each validates shapes, computes forward eagerly and registers the
// backward rule. All throw std::invalid_argument on shape mismatch and
// std::runtime_error if the forward result is not finite. ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, int axis = 0);
Tensor gather_rows(const Tensor& a, const std::vector<int>& rows);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);  // same shape, or one rank-0
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise; one may be rank-0
Tensor scalar_mul(const Tensor& a, double c);
Tensor scalar_add(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor reduce_sum(const Tensor& a);                  // -> rank 0
Tensor add_rowvec(const Tensor& a, const Tensor& b); // [m,n] + [n] per row

// Stabilized softmax over a rank-1 score vector; sums to 1 within 1e-12.
Tensor softmax_weights(const Tensor& scores);

// Mean over rows of -log softmax(logits)[target]; max-subtraction stabilized.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Mean over elements of the Huber-style penalty with beta = 1.
Tensor smooth_l1(const Tensor& pred, const Tensor& target);

}  // namespace dsg
