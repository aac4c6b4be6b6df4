#include "la2/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tensor_internal.hpp"

namespace la2 {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool& grad_mode() { return g_grad_enabled; }

void check_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> backward) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_mode()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void accumulate(Node& input, std::span<const double> g) {
  if (!input.requires_grad) return;
  auto& buf = input.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (la2::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " holds " +
                     std::to_string(la2::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = la2::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
  std::vector<double> v(m.data(), m.data() + m.size());
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v),
                requires_grad);
}

std::size_t Tensor::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range");
  return node_->shape[static_cast<std::size_t>(a)];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("tensor: only leaf tensors may be mutated");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() requires a single element, shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("tensor: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw std::out_of_range("tensor: index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value); }

RowMatrix Tensor::matrix() const {
  const std::size_t cols = rank() == 0 ? 1 : node_->shape.back();
  const std::size_t rows = cols == 0 ? 0 : numel() / cols;
  return Eigen::Map<const RowMatrix>(node_->value.data(), static_cast<Eigen::Index>(rows),
                                     static_cast<Eigen::Index>(cols));
}

NoGradGuard::NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
NoGradGuard::~NoGradGuard() { detail::grad_mode() = previous_; }

bool grad_enabled() { return detail::grad_mode(); }

GradTape GradTape::record(const Tensor& loss) {
  GradTape tape;
  tape.loss_ = loss;
  if (!loss.requires_grad()) return tape;

  // Iterative post-order DFS gives inputs before consumers.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const detail::NodePtr& child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(child, 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

std::vector<std::string> GradTape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.emplace_back(n->op);
  return names;
}

void GradTape::backward() {
  if (loss_.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss_.shape()));
  }
  if (nodes_.empty()) return;
  for (const auto& n : nodes_) {
    if (!n->inputs.empty()) n->grad.clear();
  }
  loss_.node()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.inputs.empty()) continue;
    // Nothing flowed into this node, so nothing flows out of it.
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(n);
    // Interior gradients are transient; leaves keep accumulating.
    std::vector<double>().swap(n.grad);
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  GradTape::record(loss).backward();
}

}  // namespace la2
