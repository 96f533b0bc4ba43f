#pragma once

// Generators and brute-force oracles shared by the test binaries.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "abthmm/bt_core.hpp"
#include "abthmm/hmm.hpp"
#include "abthmm/random.hpp"

namespace abthmm::testing {

inline std::filesystem::path data_dir() {
  if (const char* d = std::getenv("ABTHMM_DATA")) return d;
  return std::filesystem::path(__FILE__).parent_path().parent_path() / "data";
}

inline DiscreteDistribution random_row(std::size_t J, Rng& rng) {
  std::vector<double> w(J);
  for (auto& x : w) x = uniform01(rng) + 1e-3;
  return DiscreteDistribution::normalized(std::move(w));
}

// Random canonical Sequence/Selector tree with exactly `leaves` leaves.
// Composites alternate kind with depth and have at least two children.
// ps is a multiple of 0.01; `interior` keeps it inside [0.01, 0.99].
inline Node random_canonical_node(std::size_t leaves, NodeKind kind, std::size_t& next_name, std::size_t J,
                                  Rng& rng, bool interior = false) {
  if (leaves == 1) {
    const double ps = interior ? (1.0 + std::floor(uniform01(rng) * 99.0)) / 100.0
                               : std::round(uniform01(rng) * 100.0) / 100.0;
    return Node::leaf("n" + std::to_string(next_name++), ps, random_row(J, rng));
  }
  // Split `leaves` into k >= 2 positive parts.
  std::vector<std::size_t> parts;
  std::size_t left = leaves;
  const std::size_t max_children = std::min<std::size_t>(leaves, 4);
  const std::size_t k = 2 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(max_children - 1));
  const std::size_t children = std::min(k, leaves);
  for (std::size_t i = 0; i + 1 < children; ++i) {
    const std::size_t room = left - (children - 1 - i);
    const std::size_t take = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(room));
    parts.push_back(std::min(take, room));
    left -= parts.back();
  }
  parts.push_back(left);
  const NodeKind child_kind = kind == NodeKind::Sequence ? NodeKind::Selector : NodeKind::Sequence;
  std::vector<Node> kids;
  for (std::size_t p : parts) kids.push_back(random_canonical_node(p, child_kind, next_name, J, rng, interior));
  return kind == NodeKind::Sequence ? Node::sequence(std::move(kids)) : Node::selector(std::move(kids));
}

inline AbtDefinition random_canonical_tree(std::size_t leaves, std::size_t J, Rng& rng, bool interior = false) {
  std::size_t next_name = 0;
  const NodeKind root_kind = uniform01(rng) < 0.5 ? NodeKind::Sequence : NodeKind::Selector;
  Node root = random_canonical_node(leaves, root_kind, next_name, J, rng, interior);
  return AbtDefinition(std::move(root), J, random_row(J, rng), random_row(J, rng));
}

// Arbitrary (not necessarily canonical) Sequence/Selector tree.
inline Node random_messy_node(std::size_t leaves, std::size_t& next_name, Rng& rng) {
  if (leaves == 1 && uniform01(rng) < 0.8) {
    return Node::leaf("m" + std::to_string(next_name++), 0.5, DiscreteDistribution({1.0}));
  }
  std::vector<Node> kids;
  std::size_t left = leaves;
  while (left > 0) {
    const std::size_t take = 1 + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(left));
    kids.push_back(random_messy_node(std::min(take, left), next_name, rng));
    left -= std::min(take, left);
  }
  return uniform01(rng) < 0.5 ? Node::sequence(std::move(kids)) : Node::selector(std::move(kids));
}

inline Hmm random_hmm(std::size_t N, std::size_t J, Rng& rng, double zero_prob = 0.0) {
  std::vector<double> pi(N);
  for (auto& x : pi) x = uniform01(rng) + 1e-3;
  double t = 0;
  for (double x : pi) t += x;
  for (auto& x : pi) x /= t;
  Matrix a(N, N);
  Matrix b(N, J);
  for (std::size_t i = 0; i < N; ++i) {
    double ra = 0;
    for (std::size_t j = 0; j < N; ++j) {
      a(i, j) = (j != i && uniform01(rng) < zero_prob) ? 0.0 : uniform01(rng) + 1e-3;
      ra += a(i, j);
    }
    for (std::size_t j = 0; j < N; ++j) a(i, j) /= ra;
    double rb = 0;
    for (std::size_t j = 0; j < J; ++j) {
      b(i, j) = uniform01(rng) + 1e-3;
      rb += b(i, j);
    }
    for (std::size_t j = 0; j < J; ++j) b(i, j) /= rb;
  }
  return Hmm(std::move(pi), std::move(a), std::move(b));
}

// Calls fn(path) for every state path of length T over N states.
template <class Fn>
void for_each_path(std::size_t N, std::size_t T, Fn&& fn) {
  std::vector<std::size_t> path(T, 0);
  while (true) {
    fn(path);
    std::size_t k = T;
    while (k > 0) {
      if (++path[k - 1] < N) break;
      path[k - 1] = 0;
      --k;
    }
    if (k == 0) return;
  }
}

inline double path_prob(const Hmm& h, const std::vector<std::size_t>& path, const std::vector<std::size_t>& obs) {
  double p = h.pi()[path[0]] * h.b()(path[0], obs[0]);
  for (std::size_t t = 1; t < path.size(); ++t) p *= h.a()(path[t - 1], path[t]) * h.b()(path[t], obs[t]);
  return p;
}

// Number of canonical Sequence/Selector trees over l ordered leaves.
// c(m): a child with m leaves (a leaf, or a composite of the other kind);
// S(n): ordered lists of one or more children covering n leaves;
// C(n): composites of one fixed kind, two or more children.
inline std::size_t canonical_tree_count(std::size_t l) {
  std::vector<std::size_t> c(l + 1, 0), S(l + 1, 0), C(l + 1, 0);
  for (std::size_t n = 1; n <= l; ++n) {
    for (std::size_t f = 1; f < n; ++f) C[n] += c[f] * S[n - f];
    c[n] = (n == 1 ? 1 : 0) + C[n];
    S[n] = c[n];
    for (std::size_t f = 1; f < n; ++f) S[n] += c[f] * S[n - f];
  }
  return l == 1 ? 1 : 2 * C[l];
}

}  // namespace abthmm::testing
