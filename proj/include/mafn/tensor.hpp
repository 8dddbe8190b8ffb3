#ifndef MAFN_TENSOR_HPP
#define MAFN_TENSOR_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mafn/errors.hpp"

namespace mafn {

using Shape = std::vector<std::size_t>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node;

/// Propagates `upstream` (the gradient of the loss w.r.t. this node's value)
/// into the parents' gradient buffers. A null buffer means the parent does
/// not track gradients.
using BackwardFn =
    std::function<void(const Node& self, const Eigen::VectorXd& upstream,
                       std::span<Eigen::VectorXd* const> parent_grads)>;

struct Node {
  Shape shape;
  Eigen::VectorXd value;  // row-major flat storage
  Eigen::VectorXd grad;   // empty until a backward pass reaches this leaf
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

/*
 * Dense float64 tensor with reverse-mode gradient tracking.
 *
 * A Tensor is a cheap handle: copies share the same storage and graph node.
 * Use clone() for an independent copy. Operations on tensors that track
 * gradients record a node; backward() on a scalar result walks the recorded
 * graph and accumulates into the `grad` of every reachable leaf.
 */
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return static_cast<std::size_t>(node_->value.size()); }
  /// Leading dimension of a rank-2 tensor (1 for rank <= 1).
  std::size_t rows() const;
  /// Trailing dimension (1 for scalars).
  std::size_t cols() const;

  const Eigen::VectorXd& values() const { return node_->value; }
  /// Mutable storage; only meaningful for leaves (optimizer updates, tests).
  Eigen::VectorXd& mutable_values() { return node_->value; }
  Eigen::Map<const RowMatrix> matrix() const;

  double item() const;
  double at(std::size_t flat) const { return node_->value(static_cast<Eigen::Index>(flat)); }
  double operator()(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->parents.empty(); }
  const char* op() const { return node_->op; }

  bool has_grad() const { return node_->grad.size() > 0; }
  const Eigen::VectorXd& grad() const { return node_->grad; }
  Eigen::VectorXd& mutable_grad() { return node_->grad; }
  void zero_grad();

  /// Same values, no graph history.
  Tensor detach() const;
  /// Deep copy of the values (and grad-tracking flag) as a fresh leaf.
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Graph construction hook used by the op implementations.
  static Tensor make_result(Shape shape, Eigen::VectorXd value, const char* op,
                            std::vector<Tensor> parents, detail::BackwardFn backward);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered view of the graph that produced a tensor.
class ComputeGraph {
 public:
  static ComputeGraph from(const Tensor& root);

  /// Every node appears after all of its parents; the root is last.
  const std::vector<const detail::Node*>& nodes() const { return order_; }
  std::size_t index_of(const detail::Node* node) const;

 private:
  std::vector<const detail::Node*> order_;
};

/// While alive, ops on the current thread record no history.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// The per-pass gradient is computed separately and added at the end, so two
/// passes over one graph leave exactly twice the single-pass gradient.
void backward(const Tensor& loss);

// ---- arithmetic -----------------------------------------------------------
//
// Binary ops accept equal shapes, or operands whose rank-2 view can be
// broadcast along a dimension of size 1 (bias rows [1 x n] / [n], per-row
// columns [m x 1], and scalars).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor neg(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double f, const Tensor& x) { return scale(x, f); }
inline Tensor operator*(const Tensor& x, double f) { return scale(x, f); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

// ---- pointwise ------------------------------------------------------------

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);
/// max(0, x); alias of relu.
Tensor max0(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

// ---- reductions and structure ---------------------------------------------

/// Sum of all elements, as a rank-0 scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Rank-2 reduction along `axis`, keeping the reduced dimension as 1.
Tensor sum_axis(const Tensor& x, int axis);

/// Softmax along `axis` (rank 1 or 2; negative axis counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

Tensor concat(std::span<const Tensor> parts, int axis);
inline Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

/// Row lookup: result row i is table row ids[i]. Gradients scatter-add.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
/// Per-row element pick: result [N x 1], entry i is x(i, cols[i]).
Tensor pick(const Tensor& x, std::span<const int> cols);

}  // namespace mafn

#endif  // MAFN_TENSOR_HPP
