#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace la2 {

using Shape = std::vector<std::size_t>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation on finite inputs produces NaN or Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient slot.
///
/// Tensors are handles: copies share the underlying node. Values are
/// immutable once an operation has produced them; only leaves may be
/// updated in place (optimizer steps) through mutable_data().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  /// Size of axis `axis`; negative values count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->inputs.empty(); }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient values; zeros when none has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Copy of the values with no history.
  Tensor detach() const;
  /// The tensor viewed as a matrix with the last axis as columns.
  RowMatrix matrix() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const char* op_name() const { return node_->op; }

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Disables graph recording on the current thread while alive.
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

/// Operations reachable from a scalar loss, in an order consistent with
/// execution. Replaying it backwards propagates gradients to every leaf
/// flagged requires_grad.
class GradTape {
 public:
  static GradTape record(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;
  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule in reverse order.
  void backward();

 private:
  Tensor loss_;
  std::vector<detail::NodePtr> nodes_;
};

/// Accumulates d(loss)/dx into the grad slot of every reachable leaf.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations. All of them record a backward rule when grad mode is on and
// at least one input requires a gradient.

Tensor matmul(const Tensor& a, const Tensor& b);  // [..., k] x [k, n]
Tensor transpose(const Tensor& a);                // 2-D only
Tensor reshape(const Tensor& a, Shape shape);

// Binary ops broadcast the smaller operand into the larger one. Shapes are
// aligned from the trailing axis; each axis of the smaller operand must
// match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);

/// Replaces entries with |x| < tol by 1; gradient is zero there.
Tensor safe_denominator(const Tensor& a, double tol);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor l1_lastdim(const Tensor& a);  // keeps the last axis with size 1
Tensor l2_lastdim(const Tensor& a);  // keeps the last axis with size 1

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax_lastdim(const Tensor& x);

Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor slice_lastdim(const Tensor& a, std::size_t start, std::size_t length);

/// out[a, b, :] = h[idx(a, b), :]. Backward scatter-adds into h.
Tensor gather_rows(const Tensor& h, const IndexMatrix& idx);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace la2
