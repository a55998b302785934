#pragma once

// Dense row-major tensors of doubles with eager reverse-mode
// differentiation. A graph is recorded while primitives run on tensors that
// require gradients and lives as long as some handle references its output.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace ptlab {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

enum class Primitive {
  matmul,
  add,
  sub,
  mul_elementwise,
  scale_by_constant,
  exp,
  log,
  tanh,
  relu,
  sum,
  mean,
  l2_normalize_rows,
  softmax_lastdim,
  transpose,
  concat_rows,
  slice_rows,
  outer_product,
  div_elementwise,
  clamp_min,
  log_softmax_lastdim,
  reshape,
};

/// Non-tensor arguments some primitives take.
struct PrimitiveArgs {
  double constant = 0.0;   // scale_by_constant factor, clamp_min floor
  std::size_t begin = 0;   // slice_rows
  std::size_t end = 0;     // slice_rows (exclusive)
  Shape shape;             // reshape target
};

namespace detail {
struct Node;
struct Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  /// A leaf that does not take part in differentiation.
  static Tensor constant(Shape shape, std::vector<double> values);
  /// A leaf that gradients are computed for.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value) { return constant({1}, {value}); }
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor identity(std::size_t n);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::span<const double> values() const;
  std::vector<double> to_vector() const;
  bool requires_grad() const;
  NodeId id() const;

  std::size_t numel() const { return values().size(); }
  std::size_t rank() const { return shape().size(); }
  /// Row count when viewed as a matrix; a rank-1 tensor is a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }

  /// Same values, no graph history.
  Tensor detach() const;

  /// Node identity, not value equality.
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<const detail::Node> node_;

  friend struct detail::Access;
};

/// Evaluates one primitive. Throws ShapeError when operand shapes do not
/// conform and DomainError for out-of-domain inputs or non-finite results.
Tensor apply_primitive(Primitive kind, std::span<const Tensor> operands,
                       const PrimitiveArgs& args = {});

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l2_normalize_rows(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor outer(const Tensor& a, const Tensor& b);
Tensor clamp_min(const Tensor& a, double floor);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

/// Gradients of a scalar loss keyed by parameter node.
class GradientMap {
 public:
  bool contains(const Tensor& param) const;
  /// Throws GraphError when `param` was not reached from the loss.
  const Tensor& at(const Tensor& param) const;
  /// Zero tensor of the parameter's shape when it was not reached.
  Tensor get_or_zero(const Tensor& param) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::unordered_map<NodeId, Tensor> grads_;
  friend GradientMap backward(const Tensor& loss);
};

/// Exact reverse-mode gradients of `loss` with respect to every reachable
/// parameter. Throws ShapeError for a non-scalar loss and GraphError when no
/// parameter reaches it.
GradientMap backward(const Tensor& loss);

using Objective = std::function<Tensor(std::span<const Tensor>)>;

/// Largest |analytic - central difference| / max(1, |central difference|)
/// over every entry of `params`. The objective is called with parameter
/// leaves for the analytic pass and with perturbed constants for the
/// numeric one.
double finite_difference_check(const Objective& objective,
                               std::span<const Tensor> params, double eps);

}  // namespace ptlab
