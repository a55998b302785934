#pragma once

// Independent reference computations shared by the unit and acceptance
// tests. Nothing here calls into the library's loss or tensor kernels.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ptlab/config.hpp"
#include "ptlab/rng.hpp"

namespace ptlab::testing {

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());  // exponential draws give a uniform simplex point
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline double brute_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

inline double brute_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  return kl;
}

inline std::vector<double> brute_softmax(const std::vector<double>& z) {
  double m = z[0];
  for (double x : z) m = x > m ? x : m;
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += out[i] = std::exp(z[i] - m);
  for (auto& x : out) x /= s;
  return out;
}

inline std::vector<double> one_hot(std::size_t n, std::size_t k) {
  std::vector<double> v(n, 0.0);
  v[k] = 1.0;
  return v;
}

/// Small configuration used where only plumbing is under test.
inline RunConfig tiny_config() {
  RunConfig c;
  c.num_classes = 4;
  c.dim = 8;
  c.hidden = 16;
  c.shots = {2};
  c.test_per_class = 5;
  c.train.epochs = 3;
  c.train.context_length = 2;
  c.train.mi_hidden = 8;
  c.seeds = {1};
  return c;
}

/// The default desk-scale task of the directional regression.
inline RunConfig regression_config() {
  RunConfig c;
  c.num_classes = 10;
  c.dim = 32;
  c.shots = {4};
  c.noise_sigma = 0.3;
  c.prototype_perturb = 0.2;
  c.seeds = {1, 2, 3};
  return c;
}

}  // namespace ptlab::testing
