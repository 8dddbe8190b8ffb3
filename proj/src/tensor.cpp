#include "mafn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mafn {

using Eigen::Index;
using Eigen::VectorXd;
using MapConst = Eigen::Map<const RowMatrix>;
using MapMut = Eigen::Map<RowMatrix>;

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

struct View2 {
  Index rows;
  Index cols;
};

View2 view2(const Shape& s) {
  switch (s.size()) {
    case 0: return {1, 1};
    case 1: return {1, static_cast<Index>(s[0])};
    case 2: return {static_cast<Index>(s[0]), static_cast<Index>(s[1])};
    default: return {1, static_cast<Index>(shape_numel(s))};
  }
}

MapConst as_matrix(const VectorXd& v, View2 d) { return MapConst(v.data(), d.rows, d.cols); }

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  }
  return a;
}

// Describes how a tensor's flat storage splits into independent lines along
// one axis: line l starts at start(l) and steps by `stride`.
struct Lines {
  Index count;
  Index length;
  Index stride;
  Index outer_stride;  // start(l) = l * outer_stride for axis=last, l for axis 0 of rank 2
  bool along_rows;
  Index start(Index l) const { return along_rows ? l : l * outer_stride; }
};

Lines lines_for(const Shape& shape, int axis, const char* op) {
  if (shape.size() == 0 || shape.size() > 2) {
    throw DimensionError(std::string(op) + " supports rank 1 or 2, got " + shape_string(shape));
  }
  const int a = normalize_axis(axis, shape.size(), op);
  if (shape.size() == 1) return {1, static_cast<Index>(shape[0]), 1, 0, false};
  const auto r = static_cast<Index>(shape[0]);
  const auto c = static_cast<Index>(shape[1]);
  if (a == 1) return {r, c, 1, c, false};
  return {c, r, c, 0, true};
}

// Broadcast bookkeeping for binary elementwise ops.
struct Broadcast {
  Shape out_shape;
  View2 out;
  View2 a;
  View2 b;
  bool same = false;
};

Broadcast plan_broadcast(const Tensor& x, const Tensor& y, const char* op) {
  Broadcast p;
  if (x.shape() == y.shape()) {
    p.same = true;
    p.out_shape = x.shape();
    p.out = p.a = p.b = view2(x.shape());
    return p;
  }
  auto fail = [&] {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(x.shape()) +
                         " with " + shape_string(y.shape()));
  };
  if (x.rank() > 2 || y.rank() > 2) fail();
  p.a = view2(x.shape());
  p.b = view2(y.shape());
  const Index r = std::max(p.a.rows, p.b.rows);
  const Index c = std::max(p.a.cols, p.b.cols);
  auto ok = [](Index d, Index full) { return d == 1 || d == full; };
  if (!ok(p.a.rows, r) || !ok(p.b.rows, r) || !ok(p.a.cols, c) || !ok(p.b.cols, c)) fail();
  p.out = {r, c};
  if (p.a.rows == r && p.a.cols == c && x.rank() >= y.rank()) {
    p.out_shape = x.shape();
  } else if (p.b.rows == r && p.b.cols == c && y.rank() >= x.rank()) {
    p.out_shape = y.shape();
  } else {
    p.out_shape = {static_cast<std::size_t>(r), static_cast<std::size_t>(c)};
  }
  return p;
}

RowMatrix expand(const VectorXd& v, View2 from, View2 to) {
  MapConst m = as_matrix(v, from);
  return m.replicate(to.rows / from.rows, to.cols / from.cols);
}

// Sum a full-size gradient back down to the operand's broadcast shape.
void accumulate_reduced(VectorXd& dst, const RowMatrix& g, View2 to) {
  MapMut d(dst.data(), to.rows, to.cols);
  if (to.rows == g.rows() && to.cols == g.cols()) {
    d += g;
  } else if (to.rows == 1 && to.cols == 1) {
    d(0, 0) += g.sum();
  } else if (to.rows == 1) {
    d += g.colwise().sum();
  } else {
    d += g.rowwise().sum();
  }
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary(const Tensor& x, const Tensor& y, const char* op, Fwd fwd, GradA grad_a, GradB grad_b) {
  Broadcast p = plan_broadcast(x, y, op);
  if (p.same) {
    VectorXd out = fwd(x.values().array(), y.values().array()).matrix();
    return Tensor::make_result(
        p.out_shape, std::move(out), op, {x, y},
        [grad_a, grad_b](const detail::Node& self, const VectorXd& g,
                         std::span<VectorXd* const> pg) {
          const auto& av = self.parents[0]->value;
          const auto& bv = self.parents[1]->value;
          if (pg[0]) *pg[0] += grad_a(g.array(), av.array(), bv.array()).matrix();
          if (pg[1]) *pg[1] += grad_b(g.array(), av.array(), bv.array()).matrix();
        });
  }
  RowMatrix af = expand(x.values(), p.a, p.out);
  RowMatrix bf = expand(y.values(), p.b, p.out);
  RowMatrix of = fwd(af.array(), bf.array()).matrix();
  VectorXd out = Eigen::Map<const VectorXd>(of.data(), of.size());
  return Tensor::make_result(
      p.out_shape, std::move(out), op, {x, y},
      [p, grad_a, grad_b](const detail::Node& self, const VectorXd& gflat,
                          std::span<VectorXd* const> pg) {
        RowMatrix af = expand(self.parents[0]->value, p.a, p.out);
        RowMatrix bf = expand(self.parents[1]->value, p.b, p.out);
        MapConst g(gflat.data(), p.out.rows, p.out.cols);
        if (pg[0]) {
          RowMatrix ga = grad_a(g.array(), af.array(), bf.array()).matrix();
          accumulate_reduced(*pg[0], ga, p.a);
        }
        if (pg[1]) {
          RowMatrix gb = grad_b(g.array(), af.array(), bf.array()).matrix();
          accumulate_reduced(*pg[1], gb, p.b);
        }
      });
}

template <typename Fwd, typename Grad>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Grad grad) {
  VectorXd out = fwd(x.values().array()).matrix();
  return Tensor::make_result(
      x.shape(), std::move(out), op, {x},
      [grad](const detail::Node& self, const VectorXd& g, std::span<VectorXd* const> pg) {
        if (pg[0]) *pg[0] += grad(g.array(), self.parents[0]->value.array(), self.value.array()).matrix();
      });
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : node_(std::make_shared<detail::Node>()) {
  node_->value = VectorXd::Zero(1);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->value = VectorXd::Constant(static_cast<Index>(shape_numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->value = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_matrix(const Eigen::Ref<const RowMatrix>& m, bool requires_grad) {
  Shape shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  check_shape(shape);
  auto node = std::make_shared<detail::Node>();
  node->value.resize(m.size());
  MapMut(node->value.data(), m.rows(), m.cols()) = m;
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->value = VectorXd::Constant(1, value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }
std::size_t Tensor::cols() const { return rank() == 0 ? 1 : shape().back(); }

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  View2 d = view2(shape());
  return MapConst(node_->value.data(), d.rows, d.cols);
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->value(0);
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  return node_->value(static_cast<Index>(r * cols() + c));
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (has_grad()) node_->grad.setZero();
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad && is_leaf();
  return t;
}

Tensor Tensor::make_result(Shape shape, VectorXd value, const char* op, std::vector<Tensor> parents,
                           detail::BackwardFn backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool tracked = false;
  if (grad_enabled()) {
    for (const auto& p : parents) tracked = tracked || p.requires_grad();
  }
  // Untracked results are plain constants: no history is kept.
  if (tracked) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- graph traversal ----------------------------------------------------------

ComputeGraph ComputeGraph::from(const Tensor& root) {
  ComputeGraph g;
  std::unordered_map<const detail::Node*, bool> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<const detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen[root.node().get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const detail::Node* parent = node->parents[next++].get();
      if (!seen[parent]) {
        seen[parent] = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

std::size_t ComputeGraph::index_of(const detail::Node* node) const {
  auto it = std::find(order_.begin(), order_.end(), node);
  if (it == order_.end()) throw ContractError("node is not part of this graph");
  return static_cast<std::size_t>(it - order_.begin());
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a tensor that does not track gradients");
  }
  ComputeGraph graph = ComputeGraph::from(loss);
  const auto& nodes = graph.nodes();
  std::unordered_map<const detail::Node*, std::size_t> index;
  index.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;

  std::vector<VectorXd> buf(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i]->requires_grad) buf[i] = VectorXd::Zero(nodes[i]->value.size());
  }
  buf.back().setOnes();

  std::vector<VectorXd*> parent_bufs;
  for (std::size_t i = nodes.size(); i-- > 0;) {
    const detail::Node* node = nodes[i];
    if (!node->requires_grad || node->parents.empty()) continue;
    parent_bufs.assign(node->parents.size(), nullptr);
    for (std::size_t p = 0; p < node->parents.size(); ++p) {
      const detail::Node* parent = node->parents[p].get();
      if (parent->requires_grad) parent_bufs[p] = &buf[index[parent]];
    }
    node->backward(*node, buf[i], parent_bufs);
  }

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto* node = const_cast<detail::Node*>(nodes[i]);
    if (!node->requires_grad || !node->parents.empty()) continue;
    if (node->grad.size() == 0) {
      node->grad = std::move(buf[i]);
    } else {
      node->grad += buf[i];
    }
  }
}

// ---- arithmetic -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const View2 da = view2(a.shape());
  const View2 db = view2(b.shape());
  VectorXd out(da.rows * db.cols);
  MapMut(out.data(), da.rows, db.cols).noalias() = as_matrix(a.values(), da) * as_matrix(b.values(), db);
  return Tensor::make_result(
      {a.shape()[0], b.shape()[1]}, std::move(out), "matmul", {a, b},
      [da, db](const detail::Node& self, const VectorXd& gflat, std::span<VectorXd* const> pg) {
        MapConst g(gflat.data(), da.rows, db.cols);
        if (pg[0]) {
          MapMut(pg[0]->data(), da.rows, da.cols).noalias() +=
              g * as_matrix(self.parents[1]->value, db).transpose();
        }
        if (pg[1]) {
          MapMut(pg[1]->data(), db.rows, db.cols).noalias() +=
              as_matrix(self.parents[0]->value, da).transpose() * g;
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](const auto& x, const auto& y) { return x + y; },
      [](const auto& g, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](const auto& x, const auto& y) { return x - y; },
      [](const auto& g, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](const auto& x, const auto& y) { return x * y; },
      [](const auto& g, const auto&, const auto& y) { return g * y; },
      [](const auto& g, const auto& x, const auto&) { return g * x; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](const auto& v) { return v * factor; },
      [factor](const auto& g, const auto&, const auto&) { return g * factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](const auto& v) { return v + offset; },
      [](const auto& g, const auto&, const auto&) { return g; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// ---- pointwise --------------------------------------------------------------

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](const auto& v) { return v.tanh(); },
      [](const auto& g, const auto&, const auto& y) { return g * (1.0 - y.square()); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](const auto& v) {
        // Split by sign so exp() never overflows.
        return v.unaryExpr([](double z) {
          if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
          const double e = std::exp(z);
          return e / (1.0 + e);
        });
      },
      [](const auto& g, const auto&, const auto& y) { return g * y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](const auto& v) { return v.max(0.0); },
      [](const auto& g, const auto& in, const auto&) { return (in > 0.0).select(g, 0.0); });
}

Tensor max0(const Tensor& x) { return relu(x); }

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](const auto& v) { return v.exp(); },
      [](const auto& g, const auto&, const auto& y) { return g * y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, "log", [](const auto& v) { return v.log(); },
      [](const auto& g, const auto& in, const auto&) { return g / in; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](const auto& v) { return v.square(); },
      [](const auto& g, const auto& in, const auto&) { return 2.0 * g * in; });
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& x) {
  VectorXd out = VectorXd::Constant(1, x.values().sum());
  return Tensor::make_result({}, std::move(out), "sum", {x},
                             [](const detail::Node&, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (pg[0]) pg[0]->array() += g(0);
                             });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, int axis) {
  if (x.rank() != 2) throw DimensionError("sum_axis expects rank 2, got " + shape_string(x.shape()));
  const int a = normalize_axis(axis, 2, "sum_axis");
  const View2 d = view2(x.shape());
  MapConst m = as_matrix(x.values(), d);
  VectorXd out;
  Shape shape;
  if (a == 0) {
    out = m.colwise().sum().transpose();
    shape = {1, x.shape()[1]};
  } else {
    out = m.rowwise().sum();
    shape = {x.shape()[0], 1};
  }
  return Tensor::make_result(shape, std::move(out), "sum_axis", {x},
                             [d, a](const detail::Node&, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               MapMut dst(pg[0]->data(), d.rows, d.cols);
                               if (a == 0) {
                                 dst.rowwise() += g.transpose();
                               } else {
                                 dst.colwise() += g;
                               }
                             });
}

Tensor softmax(const Tensor& x, int axis) {
  const Lines L = lines_for(x.shape(), axis, "softmax");
  const VectorXd& v = x.values();
  if (!v.allFinite()) throw NumericError("softmax: non-finite input");
  VectorXd out(v.size());
  for (Index l = 0; l < L.count; ++l) {
    const Index s = L.start(l);
    double mx = v(s);
    for (Index k = 1; k < L.length; ++k) mx = std::max(mx, v(s + k * L.stride));
    double z = 0.0;
    for (Index k = 0; k < L.length; ++k) z += (out(s + k * L.stride) = std::exp(v(s + k * L.stride) - mx));
    for (Index k = 0; k < L.length; ++k) out(s + k * L.stride) /= z;
  }
  return Tensor::make_result(x.shape(), std::move(out), "softmax", {x},
                             [L](const detail::Node& self, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               const VectorXd& y = self.value;
                               for (Index l = 0; l < L.count; ++l) {
                                 const Index s = L.start(l);
                                 double dot = 0.0;
                                 for (Index k = 0; k < L.length; ++k) {
                                   const Index i = s + k * L.stride;
                                   dot += g(i) * y(i);
                                 }
                                 for (Index k = 0; k < L.length; ++k) {
                                   const Index i = s + k * L.stride;
                                   (*pg[0])(i) += y(i) * (g(i) - dot);
                                 }
                               }
                             });
}

Tensor log_softmax(const Tensor& x, int axis) {
  const Lines L = lines_for(x.shape(), axis, "log_softmax");
  const VectorXd& v = x.values();
  if (!v.allFinite()) throw NumericError("log_softmax: non-finite input");
  VectorXd out(v.size());
  for (Index l = 0; l < L.count; ++l) {
    const Index s = L.start(l);
    double mx = v(s);
    for (Index k = 1; k < L.length; ++k) mx = std::max(mx, v(s + k * L.stride));
    double z = 0.0;
    for (Index k = 0; k < L.length; ++k) z += std::exp(v(s + k * L.stride) - mx);
    const double lse = mx + std::log(z);
    for (Index k = 0; k < L.length; ++k) out(s + k * L.stride) = v(s + k * L.stride) - lse;
  }
  return Tensor::make_result(x.shape(), std::move(out), "log_softmax", {x},
                             [L](const detail::Node& self, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               const VectorXd& y = self.value;
                               for (Index l = 0; l < L.count; ++l) {
                                 const Index s = L.start(l);
                                 double gsum = 0.0;
                                 for (Index k = 0; k < L.length; ++k) gsum += g(s + k * L.stride);
                                 for (Index k = 0; k < L.length; ++k) {
                                   const Index i = s + k * L.stride;
                                   (*pg[0])(i) += g(i) - std::exp(y(i)) * gsum;
                                 }
                               }
                             });
}

// ---- structure ------------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of an empty list");
  const std::size_t rank = parts[0].rank();
  if (rank == 0 || rank > 2) throw DimensionError("concat supports rank 1 or 2, got " + shape_string(parts[0].shape()));
  const int a = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  out_shape[a] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == rank;
    for (std::size_t d = 0; ok && d < rank; ++d) {
      if (static_cast<int>(d) != a && p.shape()[d] != parts[0].shape()[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_string(p.shape()) + " incompatible with " +
                           shape_string(parts[0].shape()) + " along axis " + std::to_string(a));
    }
    out_shape[a] += p.shape()[a];
  }
  const View2 od = view2(out_shape);
  // Column offsets (or row offsets) of each part within the output.
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  VectorXd out(od.rows * od.cols);
  MapMut om(out.data(), od.rows, od.cols);
  Index off = 0;
  const bool along_cols = (rank == 1) || a == 1;
  for (const auto& p : parts) {
    const View2 pd = view2(p.shape());
    offsets.push_back(off);
    if (along_cols) {
      om.middleCols(off, pd.cols) = as_matrix(p.values(), pd);
      off += pd.cols;
    } else {
      om.middleRows(off, pd.rows) = as_matrix(p.values(), pd);
      off += pd.rows;
    }
  }
  std::vector<View2> dims;
  for (const auto& p : parts) dims.push_back(view2(p.shape()));
  return Tensor::make_result(
      out_shape, std::move(out), "concat", std::vector<Tensor>(parts.begin(), parts.end()),
      [od, offsets, dims, along_cols](const detail::Node&, const VectorXd& gflat, std::span<VectorXd* const> pg) {
        MapConst g(gflat.data(), od.rows, od.cols);
        for (std::size_t i = 0; i < pg.size(); ++i) {
          if (!pg[i]) continue;
          MapMut dst(pg[i]->data(), dims[i].rows, dims[i].cols);
          if (along_cols) {
            dst += g.middleCols(offsets[i], dims[i].cols);
          } else {
            dst += g.middleRows(offsets[i], dims[i].rows);
          }
        }
      });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || x.rank() > 2) throw DimensionError("slice supports rank 1 or 2, got " + shape_string(x.shape()));
  const int a = normalize_axis(axis, x.rank(), "slice");
  if (begin >= end || end > x.shape()[a]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for axis of size " + std::to_string(x.shape()[a]));
  }
  Shape out_shape = x.shape();
  out_shape[a] = end - begin;
  const View2 d = view2(x.shape());
  const View2 od = view2(out_shape);
  const bool along_cols = (x.rank() == 1) || a == 1;
  const auto b = static_cast<Index>(begin);
  VectorXd out(od.rows * od.cols);
  MapMut om(out.data(), od.rows, od.cols);
  MapConst xm = as_matrix(x.values(), d);
  if (along_cols) {
    om = xm.middleCols(b, od.cols);
  } else {
    om = xm.middleRows(b, od.rows);
  }
  return Tensor::make_result(out_shape, std::move(out), "slice", {x},
                             [d, od, b, along_cols](const detail::Node&, const VectorXd& gflat,
                                                    std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               MapConst g(gflat.data(), od.rows, od.cols);
                               MapMut dst(pg[0]->data(), d.rows, d.cols);
                               if (along_cols) {
                                 dst.middleCols(b, od.cols) += g;
                               } else {
                                 dst.middleRows(b, od.rows) += g;
                               }
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  VectorXd out = x.values();
  return Tensor::make_result(std::move(shape), std::move(out), "reshape", {x},
                             [](const detail::Node&, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (pg[0]) *pg[0] += g;
                             });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be rank 2, got " + shape_string(table.shape()));
  if (ids.empty()) throw ContractError("gather_rows: empty id list");
  const auto k = static_cast<int>(table.shape()[0]);
  const auto m = static_cast<Index>(table.shape()[1]);
  for (int id : ids) {
    if (id < 0 || id >= k) {
      throw ContractError("gather_rows: id " + std::to_string(id) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  const auto n = static_cast<Index>(ids.size());
  VectorXd out(n * m);
  for (Index i = 0; i < n; ++i) out.segment(i * m, m) = table.values().segment(ids[i] * m, m);
  std::vector<int> idv(ids.begin(), ids.end());
  return Tensor::make_result({static_cast<std::size_t>(n), static_cast<std::size_t>(m)}, std::move(out),
                             "gather_rows", {table},
                             [idv, m](const detail::Node&, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               for (std::size_t i = 0; i < idv.size(); ++i) {
                                 pg[0]->segment(idv[i] * m, m) += g.segment(static_cast<Index>(i) * m, m);
                               }
                             });
}

Tensor pick(const Tensor& x, std::span<const int> cols) {
  if (x.rank() != 2 || x.shape()[0] != cols.size()) {
    throw DimensionError("pick: need [N x K] with N = " + std::to_string(cols.size()) + ", got " +
                         shape_string(x.shape()));
  }
  const auto k = static_cast<int>(x.shape()[1]);
  const auto n = static_cast<Index>(cols.size());
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) {
    if (cols[i] < 0 || cols[i] >= k) {
      throw ContractError("pick: column " + std::to_string(cols[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    out(i) = x.values()(i * k + cols[i]);
  }
  std::vector<int> cv(cols.begin(), cols.end());
  return Tensor::make_result({cols.size(), 1}, std::move(out), "pick", {x},
                             [cv, k](const detail::Node&, const VectorXd& g, std::span<VectorXd* const> pg) {
                               if (!pg[0]) return;
                               for (std::size_t i = 0; i < cv.size(); ++i) {
                                 (*pg[0])(static_cast<Index>(i) * k + cv[i]) += g(static_cast<Index>(i));
                               }
                             });
}

}  // namespace mafn
