#include "abthmm/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "abthmm/error.hpp"

namespace abthmm {

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error("distribution has no symbols");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("distribution entry is negative or not finite");
    total += p;
  }
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    throw Error("distribution sums to " + std::to_string(total) + ", expected 1");
  }
}

DiscreteDistribution DiscreteDistribution::normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("weight is negative or not finite");
    total += w;
  }
  if (total <= 0.0) throw Error("cannot normalize all-zero weights");
  for (double& w : weights) w /= total;
  return DiscreteDistribution(std::move(weights));
}

namespace {

void require_same_size(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.size() != q.size()) {
    throw Error("dimension mismatch: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  }
}

double entropy_of(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

}  // namespace

double entropy(const DiscreteDistribution& p) { return entropy_of(p.probs()); }

double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  require_same_size(p, q);
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) return std::numeric_limits<double>::infinity();
    d += p[j] * std::log2(p[j] / q[j]);
  }
  // Rounding can leave a tiny negative residue for p == q.
  return d < 0.0 ? 0.0 : d;
}

double js_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  require_same_size(p, q);
  // Summed term by term so the result is exactly symmetric in p and q.
  double d = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double m = 0.5 * (p[j] + q[j]);
    if (p[j] > 0.0) d += 0.5 * p[j] * std::log2(p[j] / m);
    if (q[j] > 0.0) d += 0.5 * q[j] * std::log2(q[j] / m);
  }
  if (d < 0.0) return 0.0;
  return d > 1.0 ? 1.0 : d;
}

double jsd_all(std::span<const DiscreteDistribution> dists,
               std::optional<std::span<const double>> weights) {
  if (dists.empty()) throw Error("jsd_all needs at least one distribution");
  const std::size_t n = dists.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (weights) {
    if (weights->size() != n) throw Error("weight count does not match distribution count");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!((*weights)[i] >= 0.0)) throw Error("negative weight");
      w[i] = (*weights)[i];
      total += w[i];
    }
    if (std::abs(total - 1.0) > kDistributionTolerance) throw Error("weights do not sum to 1");
  }
  const std::size_t J = dists.front().size();
  if (std::all_of(dists.begin(), dists.end(), [&](const auto& d) { return d == dists.front(); })) return 0.0;
  std::vector<double> mixture(J, 0.0);
  double mean_entropy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require_same_size(dists[i], dists.front());
    for (std::size_t j = 0; j < J; ++j) mixture[j] += w[i] * dists[i][j];
    mean_entropy += w[i] * entropy(dists[i]);
  }
  const double d = entropy_of(mixture) - mean_entropy;
  return d < 0.0 ? 0.0 : d;
}

std::size_t default_symbol_count(std::size_t n_states, double ratio, double sigma) {
  const double span = std::ceil(static_cast<double>(n_states + 1) * ratio * sigma);
  const auto j = static_cast<std::size_t>(span + 8.0 * std::ceil(sigma));
  return j < 16 ? 16 : j;
}

double synthetic_center(std::size_t index, double ratio, double sigma) {
  return 4.0 * sigma + static_cast<double>(index) * ratio * sigma;
}

DiscreteDistribution gaussian_row(double center, double sigma, std::size_t n_symbols) {
  if (!(sigma > 0.0)) throw Error("sigma must be positive");
  if (n_symbols == 0) throw Error("alphabet is empty");
  std::vector<double> w(n_symbols);
  for (std::size_t j = 0; j < n_symbols; ++j) {
    const double z = (static_cast<double>(j) - center) / sigma;
    w[j] = std::exp(-0.5 * z * z);
  }
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) {
    // Center far outside the alphabet: put everything on the nearest symbol.
    std::fill(w.begin(), w.end(), 0.0);
    w[center <= 0.0 ? 0 : n_symbols - 1] = 1.0;
    total = 1.0;
  }
  return DiscreteDistribution::normalized(std::move(w));
}

DiscreteDistribution synthetic_row(std::size_t index, double ratio, double sigma,
                                   std::size_t n_symbols) {
  if (!(ratio >= 0.0)) throw Error("ratio must be non-negative");
  const double c = synthetic_center(index, ratio, sigma);
  if (c + 4.0 * sigma > static_cast<double>(n_symbols)) {
    throw Error("alphabet of " + std::to_string(n_symbols) + " symbols is too small for row " +
                std::to_string(index) + " (needs " +
                std::to_string(static_cast<std::size_t>(std::ceil(c + 4.0 * sigma))) + ")");
  }
  return gaussian_row(c, sigma, n_symbols);
}

std::vector<DiscreteDistribution> synth_emissions(const SyntheticEmissionSpec& spec) {
  if (spec.n_states == 0) throw Error("synthetic emissions need at least one state");
  const std::size_t J = spec.n_symbols == 0
                            ? default_symbol_count(spec.n_states, spec.ratio, spec.sigma)
                            : spec.n_symbols;
  std::vector<DiscreteDistribution> rows;
  rows.reserve(spec.n_states);
  for (std::size_t i = 0; i < spec.n_states; ++i) {
    rows.push_back(synthetic_row(i, spec.ratio, spec.sigma, J));
  }
  return rows;
}

}  // namespace abthmm
