#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ptlab/errors.hpp"
#include "ptlab/objectives.hpp"
#include "ptlab/rng.hpp"
#include "ptlab/tensor.hpp"
#include "support.hpp"

using namespace ptlab;
using ptlab::testing::random_values;

namespace {

struct Operand {
  Shape shape;
  std::vector<double> values;
};

struct Instance {
  std::vector<Operand> operands;
  PrimitiveArgs args;
};

using Generator = std::function<Instance(Rng&)>;

std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

// Entries bounded away from zero so kinks (relu) and poles (div) stay far
// from the finite-difference stencil.
std::vector<double> away_from_zero(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) {
    const double m = 0.1 + rng.uniform();
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return v;
}

std::vector<double> positive(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 0.2 + 2.0 * rng.uniform();
  return v;
}

Instance unary(Rng& rng, std::vector<double> (*fill)(Rng&, std::size_t)) {
  const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 5);
  return {{{{r, c}, fill(rng, r * c)}}, {}};
}

std::vector<double> gaussian(Rng& rng, std::size_t n) { return random_values(rng, n); }

// sum(primitive(x) * W) with a random constant W, so every output entry
// carries a distinct cotangent.
double primitive_gradient_error(Primitive kind, const Instance& inst, Rng& rng) {
  std::vector<Tensor> params;
  for (const auto& op : inst.operands) params.push_back(Tensor::parameter(op.shape, op.values));
  const Tensor probe = apply_primitive(kind, params, inst.args);
  const Tensor weights = Tensor::constant(probe.shape(), random_values(rng, probe.numel()));
  const Objective objective = [&](std::span<const Tensor> p) {
    return sum(mul(apply_primitive(kind, p, inst.args), weights));
  };
  return finite_difference_check(objective, params, 1e-6);
}

const std::vector<std::pair<Primitive, Generator>>& primitive_cases() {
  static const std::vector<std::pair<Primitive, Generator>> cases{
      {Primitive::matmul,
       [](Rng& rng) {
         const std::size_t m = extent(rng, 1, 4), k = extent(rng, 1, 4), n = extent(rng, 1, 4);
         return Instance{{{{m, k}, gaussian(rng, m * k)}, {{k, n}, gaussian(rng, k * n)}}, {}};
       }},
      {Primitive::add,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 4);
         return Instance{{{{r, c}, gaussian(rng, r * c)}, {{r, c}, gaussian(rng, r * c)}}, {}};
       }},
      {Primitive::sub,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 4);
         return Instance{{{{r, c}, gaussian(rng, r * c)}, {{r, c}, gaussian(rng, r * c)}}, {}};
       }},
      {Primitive::mul_elementwise,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 4);
         return Instance{{{{r, c}, gaussian(rng, r * c)}, {{r, c}, gaussian(rng, r * c)}}, {}};
       }},
      {Primitive::div_elementwise,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 4);
         return Instance{{{{r, c}, gaussian(rng, r * c)}, {{r, c}, away_from_zero(rng, r * c)}}, {}};
       }},
      {Primitive::scale_by_constant,
       [](Rng& rng) {
         auto inst = unary(rng, gaussian);
         inst.args.constant = rng.uniform(-3.0, 3.0);
         return inst;
       }},
      {Primitive::exp, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::log, [](Rng& rng) { return unary(rng, positive); }},
      {Primitive::tanh, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::relu, [](Rng& rng) { return unary(rng, away_from_zero); }},
      {Primitive::sum, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::mean, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::l2_normalize_rows, [](Rng& rng) { return unary(rng, away_from_zero); }},
      {Primitive::softmax_lastdim, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::log_softmax_lastdim, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::transpose, [](Rng& rng) { return unary(rng, gaussian); }},
      {Primitive::concat_rows,
       [](Rng& rng) {
         const std::size_t c = extent(rng, 1, 4), parts = extent(rng, 1, 3);
         Instance inst;
         for (std::size_t p = 0; p < parts; ++p) {
           const std::size_t r = extent(rng, 1, 3);
           inst.operands.push_back({{r, c}, gaussian(rng, r * c)});
         }
         return inst;
       }},
      {Primitive::slice_rows,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 5), c = extent(rng, 1, 4);
         Instance inst{{{{r, c}, gaussian(rng, r * c)}}, {}};
         inst.args.begin = rng.uniform_index(r);
         inst.args.end = inst.args.begin + 1 + rng.uniform_index(r - inst.args.begin);
         return inst;
       }},
      {Primitive::outer_product,
       [](Rng& rng) {
         const std::size_t m = extent(rng, 1, 5), n = extent(rng, 1, 5);
         return Instance{{{{m}, gaussian(rng, m)}, {{n}, gaussian(rng, n)}}, {}};
       }},
      {Primitive::clamp_min,
       [](Rng& rng) {
         auto inst = unary(rng, away_from_zero);
         inst.args.constant = 0.0;
         return inst;
       }},
      {Primitive::reshape,
       [](Rng& rng) {
         const std::size_t r = extent(rng, 1, 4), c = extent(rng, 1, 4);
         Instance inst{{{{r, c}, gaussian(rng, r * c)}}, {}};
         inst.args.shape = {c, r};
         return inst;
       }},
  };
  return cases;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  const auto s = softmax(Tensor::constant({2}, {0.0, 0.0}));
  CHECK(s.values()[0] == 0.5);
  CHECK(s.values()[1] == 0.5);
}

TEST_CASE("identity is neutral for matmul") {
  Rng rng(4);
  const auto a = Tensor::constant({3, 3}, random_values(rng, 9));
  CHECK(matmul(Tensor::identity(3), a).to_vector() == a.to_vector());
}

TEST_CASE("l2_normalize_rows on a 3-4-5 row") {
  const auto n = l2_normalize_rows(Tensor::constant({1, 2}, {3.0, 4.0}));
  CHECK(n.values()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.values()[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("gradient of x*x at 3 is 6") {
  const auto x = Tensor::parameter({1}, {3.0});
  const auto g = backward(sum(mul(x, x)));
  CHECK(g.at(x).item() == 6.0);
}

TEST_CASE("gradient of sum(softmax(z)) vanishes") {
  Rng rng(9);
  const auto z = Tensor::parameter({2, 5}, random_values(rng, 10));
  const auto g = backward(sum(softmax(z)));
  for (double v : g.at(z).values()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("cross-entropy gradient on a random 3-class instance matches central differences") {
  Rng rng(21);
  const auto feats = Tensor::constant({4, 3}, random_values(rng, 12));
  const auto labels = Tensor::constant({4, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0});
  const auto w = Tensor::parameter({3, 3}, random_values(rng, 9));
  const Objective f = [&](std::span<const Tensor> p) {
    return cross_entropy(softmax(matmul(feats, transpose(p[0]))), labels);
  };
  const std::vector<Tensor> params{w};
  CHECK(finite_difference_check(f, params, 1e-6) < 1e-5);
}

TEST_CASE("every primitive passes the finite-difference check on 100 seeded instances") {
  for (const auto& [kind, gen] : primitive_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      Rng rng(Rng::derive(seed, "primitive-" + std::to_string(static_cast<int>(kind))));
      const Instance inst = gen(rng);
      worst = std::max(worst, primitive_gradient_error(kind, inst, rng));
    }
    INFO("primitive " << static_cast<int>(kind));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  Rng rng(33);
  for (int t = 0; t < 200; ++t) {
    const auto s = softmax(Tensor::constant({3, 7}, random_values(rng, 21, 20.0)));
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(s.at(r, c) >= 0.0);
        total += s.at(r, c);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto x = Tensor::parameter({3, 4}, random_values(rng, 12));
    const auto a = sum(tanh(x));
    const auto b = sum(mul(exp(scale(x, 0.3)), x));
    const auto ga = backward(a).at(x).to_vector();
    const auto gb = backward(b).at(x).to_vector();
    const auto gab = backward(add(a, b)).at(x).to_vector();
    for (std::size_t i = 0; i < gab.size(); ++i) CHECK(std::abs(gab[i] - (ga[i] + gb[i])) <= 1e-12);
  }
}

TEST_CASE("identical inputs give bit-identical outputs and gradients") {
  auto run = [] {
    Rng rng(77);
    const auto x = Tensor::parameter({4, 4}, random_values(rng, 16));
    const auto loss = sum(log_softmax(matmul(x, transpose(l2_normalize_rows(x)))));
    return std::pair{loss.item(), backward(loss).at(x).to_vector()};
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("every reachable parameter gets a gradient of its own shape") {
  const auto a = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = Tensor::parameter({3}, {1, -1, 2});
  const auto unused = Tensor::parameter({2}, {1, 1});
  const auto g = backward(sum(matmul(a, reshape(b, {3, 1}))));
  CHECK(g.size() == 2);
  CHECK(g.at(a).shape() == a.shape());
  CHECK(g.at(b).shape() == b.shape());
  CHECK_FALSE(g.contains(unused));
  CHECK_THROWS_AS(g.at(unused), GraphError);
  CHECK(g.get_or_zero(unused).to_vector() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("shape and domain errors") {
  const auto a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
  const auto b = Tensor::constant({2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 3), ShapeError);
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(log(Tensor::constant({2}, {1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(l2_normalize_rows(Tensor::constant({2, 2}, {1, 1, 0, 0})), DomainError);
  CHECK_THROWS_AS(exp(Tensor::constant({1}, {1e6})), DomainError);
  CHECK_THROWS_AS(Tensor::constant({1}, {std::nan("")}), DomainError);
}

TEST_CASE("backward rejects non-scalar and detached losses") {
  const auto x = Tensor::parameter({2}, {1.0, 2.0});
  CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
  CHECK_THROWS_AS(backward(sum(x).detach()), GraphError);
  CHECK_THROWS_AS(backward(sum(Tensor::constant({2}, {1.0, 2.0}))), GraphError);
}

TEST_CASE("graph edges are recorded only when an operand requires grad") {
  const auto c = Tensor::constant({2}, {1.0, 2.0});
  CHECK_FALSE(exp(c).requires_grad());
  CHECK(add(c, Tensor::parameter({2}, {0.0, 0.0})).requires_grad());
}

TEST_CASE("finite_difference_check on quadratic and constant objectives") {
  Rng rng(12);
  const auto x = Tensor::parameter({5}, random_values(rng, 5));
  const std::vector<Tensor> params{x};
  const Objective quad = [](std::span<const Tensor> p) { return scale(sum(mul(p[0], p[0])), 0.5); };
  for (double eps : {1e-4, 1e-5, 1e-6}) CHECK(finite_difference_check(quad, params, eps) < 1e-8);
  const Objective constant = [](std::span<const Tensor> p) {
    return add(scale(sum(p[0]), 0.0), Tensor::scalar(3.0));
  };
  CHECK(finite_difference_check(constant, params, 1e-6) == 0.0);
  CHECK_THROWS_AS(finite_difference_check(quad, params, 0.0), DomainError);
  const Objective blowup = [](std::span<const Tensor> p) { return sum(exp(scale(p[0], 1e5))); };
  CHECK_THROWS_AS(finite_difference_check(blowup, params, 1e-6), DomainError);
}
