#include "ptlab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <string>
#include <unordered_set>

#include "ptlab/errors.hpp"

namespace ptlab {
namespace detail {

// Accumulates the node's upstream gradient into the gradients of its inputs.
// Entries of `input_grads` are null for inputs that do not require grad.
using BackwardFn = std::function<void(const Node& self, std::span<const double> upstream,
                                      std::span<std::vector<double>*> input_grads)>;

struct Node {
  NodeId id = 0;
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<std::shared_ptr<const Node>> inputs;
  BackwardFn backward;
};

struct Access {
  static const std::shared_ptr<const Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<const Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

namespace {

using detail::Access;
using detail::Node;

NodeId next_node_id() {
  static std::atomic<NodeId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::size_t product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

void validate_shape(const Shape& shape, std::size_t count) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (product(shape) != count) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " + std::to_string(count) +
                     " values");
  }
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape, values.size());
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("tensor values must be finite");
  }
  auto node = std::make_shared<Node>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Access::wrap(std::move(node));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::span<const Tensor> inputs, detail::BackwardFn fn) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(op) + " produced a non-finite value");
  }
  auto node = std::make_shared<Node>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->values = std::move(values);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(Access::node(in));
    node->backward = std::move(fn);
  }
  return Access::wrap(std::move(node));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> inputs, detail::BackwardFn fn) {
  return make_result(op, std::move(shape), std::move(values),
                     std::span<const Tensor>(inputs.begin(), inputs.size()), std::move(fn));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined operand");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}


template <class F>
Tensor unary_map(const char* op, const Tensor& a, F f, detail::BackwardFn fn) {
  require_defined(a, op);
  std::vector<double> out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(op, a.shape(), std::move(out), {a}, std::move(fn));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), true);
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = product(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::ones(Shape shape) {
  const auto n = product(shape);
  return constant(std::move(shape), std::vector<double>(n, 1.0));
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return constant({n, n}, std::move(v));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("undefined tensor");
  return node_->shape;
}

std::span<const double> Tensor::values() const {
  if (!node_) throw ShapeError("undefined tensor");
  return node_->values;
}

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

NodeId Tensor::id() const {
  if (!node_) throw ShapeError("undefined tensor");
  return node_->id;
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() == 1) return 1;
  return product(s) / s.back();
}

std::size_t Tensor::cols() const { return shape().back(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single-element tensor");
  return values()[0];
}

Tensor Tensor::detach() const { return constant(shape(), to_vector()); }

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto A = a.values();
  auto B = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [m, k, n](const Node& self, std::span<const double> g,
                               std::span<std::vector<double>*> grads) {
                       const auto& A = self.inputs[0]->values;
                       const auto& B = self.inputs[1]->values;
                       if (auto* ga = grads[0]) {
                         // dA = G * B^T
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
                             (*ga)[i * k + p] += acc;
                           }
                       }
                       if (auto* gb = grads[1]) {
                         // dB = A^T * G
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             const double aip = A[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
                           }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result("add", a.shape(), std::move(out), {a, b},
                     [](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       for (auto* gi : grads)
                         if (gi)
                           for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result("sub", a.shape(), std::move(out), {a, b},
                     [](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       if (auto* ga = grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                       if (auto* gb = grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul_elementwise");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result("mul_elementwise", a.shape(), std::move(out), {a, b},
                     [](const Node& self, std::span<const double> g,
                        std::span<std::vector<double>*> grads) {
                       const auto& A = self.inputs[0]->values;
                       const auto& B = self.inputs[1]->values;
                       if (auto* ga = grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
                       if (auto* gb = grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
                     });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div_elementwise");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.values()[i] == 0.0) throw DomainError("div_elementwise: division by zero");
    out[i] = a.values()[i] / b.values()[i];
  }
  return make_result("div_elementwise", a.shape(), std::move(out), {a, b},
                     [](const Node& self, std::span<const double> g,
                        std::span<std::vector<double>*> grads) {
                       const auto& B = self.inputs[1]->values;
                       const auto& Y = self.values;
                       if (auto* ga = grads[0])
                         for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / B[i];
                       if (auto* gb = grads[1])
                         for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * Y[i] / B[i];
                     });
}

Tensor scale(const Tensor& a, double factor) {
  if (!std::isfinite(factor)) throw DomainError("scale_by_constant: factor must be finite");
  return unary_map("scale_by_constant", a, [factor](double x) { return factor * x; },
                   [factor](const Node&, std::span<const double> g,
                            std::span<std::vector<double>*> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += factor * g[i];
                   });
}

Tensor exp(const Tensor& a) {
  return unary_map("exp", a, [](double x) { return std::exp(x); },
                   [](const Node& self, std::span<const double> g,
                      std::span<std::vector<double>*> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       (*grads[0])[i] += g[i] * self.values[i];
                   });
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (double x : a.values()) {
    if (!(x > 0.0)) throw DomainError("log: argument must be strictly positive");
  }
  return unary_map("log", a, [](double x) { return std::log(x); },
                   [](const Node& self, std::span<const double> g,
                      std::span<std::vector<double>*> grads) {
                     const auto& X = self.inputs[0]->values;
                     for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] / X[i];
                   });
}

Tensor tanh(const Tensor& a) {
  return unary_map("tanh", a, [](double x) { return std::tanh(x); },
                   [](const Node& self, std::span<const double> g,
                      std::span<std::vector<double>*> grads) {
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double y = self.values[i];
                       (*grads[0])[i] += g[i] * (1.0 - y * y);
                     }
                   });
}

Tensor relu(const Tensor& a) {
  return unary_map("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](const Node& self, std::span<const double> g,
                      std::span<std::vector<double>*> grads) {
                     const auto& X = self.inputs[0]->values;
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (X[i] > 0.0) (*grads[0])[i] += g[i];
                   });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary_map("clamp_min", a, [floor](double x) { return x < floor ? floor : x; },
                   [floor](const Node& self, std::span<const double> g,
                           std::span<std::vector<double>*> grads) {
                     const auto& X = self.inputs[0]->values;
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (X[i] >= floor) (*grads[0])[i] += g[i];
                   });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  return make_result("sum", {1}, {acc}, {a},
                     [](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       for (auto& x : *grads[0]) x += g[0];
                     });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  const double n = static_cast<double>(a.numel());
  return make_result("mean", {1}, {acc / n}, {a},
                     [n](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       for (auto& x : *grads[0]) x += g[0] / n;
                     });
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_defined(a, "l2_normalize_rows");
  const std::size_t r = a.rows(), c = a.cols();
  auto X = a.values();
  std::vector<double> out(a.numel());
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += X[i * c + j] * X[i * c + j];
    const double norm = std::sqrt(ss);
    if (!(norm > 0.0)) throw DomainError("l2_normalize_rows: zero-norm row");
    norms[i] = norm;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = X[i * c + j] / norm;
  }
  return make_result("l2_normalize_rows", a.shape(), std::move(out), {a},
                     [r, c, norms = std::move(norms)](const Node& self, std::span<const double> g,
                                                      std::span<std::vector<double>*> grads) {
                       const auto& Y = self.values;
                       for (std::size_t i = 0; i < r; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += Y[i * c + j] * g[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           (*grads[0])[i * c + j] += (g[i * c + j] - Y[i * c + j] * dot) / norms[i];
                       }
                     });
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax_lastdim");
  const std::size_t r = a.rows(), c = a.cols();
  auto X = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = X.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return make_result("softmax_lastdim", a.shape(), std::move(out), {a},
                     [r, c](const Node& self, std::span<const double> g,
                            std::span<std::vector<double>*> grads) {
                       const auto& Y = self.values;
                       for (std::size_t i = 0; i < r; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * Y[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           (*grads[0])[i * c + j] += Y[i * c + j] * (g[i * c + j] - dot);
                       }
                     });
}

Tensor log_softmax(const Tensor& a) {
  require_defined(a, "log_softmax_lastdim");
  const std::size_t r = a.rows(), c = a.cols();
  auto X = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = X.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return make_result("log_softmax_lastdim", a.shape(), std::move(out), {a},
                     [r, c](const Node& self, std::span<const double> g,
                            std::span<std::vector<double>*> grads) {
                       const auto& Y = self.values;
                       for (std::size_t i = 0; i < r; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           (*grads[0])[i * c + j] += g[i * c + j] - std::exp(Y[i * c + j]) * gs;
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() > 2) throw ShapeError("transpose: rank must be 1 or 2");
  const std::size_t r = a.rows(), c = a.cols();
  auto X = a.values();
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = X[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a},
                     [r, c](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += g[j * r + i];
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  for (const auto& p : parts) require_defined(p, "concat_rows");
  const std::size_t c = parts.front().cols();
  std::size_t total_rows = 0;
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() > 2 || p.cols() != c) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    }
    offsets.push_back(out.size());
    total_rows += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result("concat_rows", {total_rows, c}, std::move(out), parts,
                     [offsets = std::move(offsets)](const Node& self, std::span<const double> g,
                                                    std::span<std::vector<double>*> grads) {
                       for (std::size_t k = 0; k < grads.size(); ++k) {
                         if (!grads[k]) continue;
                         const auto n = self.inputs[k]->values.size();
                         for (std::size_t i = 0; i < n; ++i) (*grads[k])[i] += g[offsets[k] + i];
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_defined(a, "slice_rows");
  if (a.rank() > 2 || begin >= end || end > a.rows()) {
    throw ShapeError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") of " + shape_str(a.shape()));
  }
  const std::size_t c = a.cols();
  auto X = a.values();
  std::vector<double> out(X.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          X.begin() + static_cast<std::ptrdiff_t>(end * c));
  return make_result("slice_rows", {end - begin, c}, std::move(out), {a},
                     [off = begin * c](const Node&, std::span<const double> g,
                                       std::span<std::vector<double>*> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[off + i] += g[i];
                     });
}

Tensor outer(const Tensor& a, const Tensor& b) {
  require_defined(a, "outer_product");
  require_defined(b, "outer_product");
  const std::size_t m = a.numel(), n = b.numel();
  auto A = a.values();
  auto B = b.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i] * B[j];
  return make_result("outer_product", {m, n}, std::move(out), {a, b},
                     [m, n](const Node& self, std::span<const double> g,
                            std::span<std::vector<double>*> grads) {
                       const auto& A = self.inputs[0]->values;
                       const auto& B = self.inputs[1]->values;
                       if (auto* ga = grads[0])
                         for (std::size_t i = 0; i < m; ++i) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[j];
                           (*ga)[i] += acc;
                         }
                       if (auto* gb = grads[1])
                         for (std::size_t j = 0; j < n; ++j) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < m; ++i) acc += g[i * n + j] * A[i];
                           (*gb)[j] += acc;
                         }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  validate_shape(shape, a.numel());
  return make_result("reshape", std::move(shape), a.to_vector(), {a},
                     [](const Node&, std::span<const double> g, std::span<std::vector<double>*> grads) {
                       for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
                     });
}

Tensor apply_primitive(Primitive kind, std::span<const Tensor> operands, const PrimitiveArgs& args) {
  auto arity = [&](std::size_t n) {
    if (operands.size() != n) {
      throw ShapeError("primitive expects " + std::to_string(n) + " operand(s), got " +
                       std::to_string(operands.size()));
    }
  };
  switch (kind) {
    case Primitive::matmul: arity(2); return matmul(operands[0], operands[1]);
    case Primitive::add: arity(2); return add(operands[0], operands[1]);
    case Primitive::sub: arity(2); return sub(operands[0], operands[1]);
    case Primitive::mul_elementwise: arity(2); return mul(operands[0], operands[1]);
    case Primitive::div_elementwise: arity(2); return div(operands[0], operands[1]);
    case Primitive::scale_by_constant: arity(1); return scale(operands[0], args.constant);
    case Primitive::exp: arity(1); return exp(operands[0]);
    case Primitive::log: arity(1); return log(operands[0]);
    case Primitive::tanh: arity(1); return tanh(operands[0]);
    case Primitive::relu: arity(1); return relu(operands[0]);
    case Primitive::sum: arity(1); return sum(operands[0]);
    case Primitive::mean: arity(1); return mean(operands[0]);
    case Primitive::l2_normalize_rows: arity(1); return l2_normalize_rows(operands[0]);
    case Primitive::softmax_lastdim: arity(1); return softmax(operands[0]);
    case Primitive::log_softmax_lastdim: arity(1); return log_softmax(operands[0]);
    case Primitive::transpose: arity(1); return transpose(operands[0]);
    case Primitive::concat_rows: return concat_rows(operands);
    case Primitive::slice_rows: arity(1); return slice_rows(operands[0], args.begin, args.end);
    case Primitive::outer_product: arity(2); return outer(operands[0], operands[1]);
    case Primitive::clamp_min: arity(1); return clamp_min(operands[0], args.constant);
    case Primitive::reshape: arity(1); return reshape(operands[0], args.shape);
  }
  throw ShapeError("unknown primitive");
}

// ---------------------------------------------------------------------------
// Differentiation

bool GradientMap::contains(const Tensor& param) const {
  return param.defined() && grads_.count(param.id()) > 0;
}

const Tensor& GradientMap::at(const Tensor& param) const {
  auto it = grads_.find(param.id());
  if (it == grads_.end()) throw GraphError("parameter is not reachable from the loss");
  return it->second;
}

Tensor GradientMap::get_or_zero(const Tensor& param) const {
  auto it = grads_.find(param.id());
  if (it == grads_.end()) return Tensor::zeros(param.shape());
  return it->second;
}

GradientMap backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw GraphError("loss is detached from every parameter");

  // Iterative post-order DFS over the grad-requiring subgraph.
  const Node* root = Access::node(loss).get();
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, std::vector<double>> grads;
  grads[root] = {1.0};
  GradientMap result;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    auto git = grads.find(node);
    if (git == grads.end()) continue;
    if (!node->backward) {
      result.grads_.emplace(node->id, Tensor::constant(node->shape, std::move(git->second)));
      grads.erase(git);
      continue;
    }
    const std::vector<double> upstream = std::move(git->second);
    grads.erase(git);
    std::vector<std::vector<double>*> input_grads(node->inputs.size(), nullptr);
    for (std::size_t k = 0; k < node->inputs.size(); ++k) {
      const Node* in = node->inputs[k].get();
      if (!in->requires_grad) continue;
      auto& slot = grads[in];
      if (slot.empty()) slot.assign(in->values.size(), 0.0);
      input_grads[k] = &slot;
    }
    node->backward(*node, upstream, input_grads);
  }
  return result;
}

double finite_difference_check(const Objective& objective, std::span<const Tensor> params, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite_difference_check: eps must be positive");
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(Tensor::parameter(p.shape(), p.to_vector()));

  const Tensor loss = objective(leaves);
  if (loss.numel() != 1) throw ShapeError("finite_difference_check: objective must be scalar");
  if (!std::isfinite(loss.item())) throw DomainError("finite_difference_check: non-finite objective");
  GradientMap analytic;
  if (loss.requires_grad()) analytic = backward(loss);

  std::vector<Tensor> probe(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) probe[k] = params[k].detach();
  auto evaluate = [&](std::size_t k, std::vector<double> values) {
    const Tensor saved = probe[k];
    probe[k] = Tensor::constant(saved.shape(), std::move(values));
    const double v = objective(probe).item();
    probe[k] = saved;
    if (!std::isfinite(v)) throw DomainError("finite_difference_check: non-finite objective");
    return v;
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor g = analytic.get_or_zero(leaves[k]);
    const auto base = params[k].to_vector();
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto plus = base;
      auto minus = base;
      plus[i] += eps;
      minus[i] -= eps;
      const double numeric = (evaluate(k, std::move(plus)) - evaluate(k, std::move(minus))) / (2.0 * eps);
      const double err = std::abs(g.values()[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ptlab
