#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace abthmm {

/// Probability vector over J symbols. Entries are non-negative and sum to 1
/// within 1e-9; the constructor enforces it.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  explicit DiscreteDistribution(std::vector<double> probs);

  /// Rescales non-negative weights to sum to one.
  static DiscreteDistribution normalized(std::vector<double> weights);

  std::size_t size() const noexcept { return probs_.size(); }
  bool empty() const noexcept { return probs_.empty(); }
  double operator[](std::size_t j) const { return probs_[j]; }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const DiscreteDistribution&, const DiscreteDistribution&) = default;

 private:
  std::vector<double> probs_;
};

constexpr double kDistributionTolerance = 1e-9;

/// Shannon entropy in bits, with 0 log 0 = 0.
double entropy(const DiscreteDistribution& p);

/// D(p||q) in bits. Returns +infinity when p puts mass where q has none.
double kl_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Jensen-Shannon divergence in bits; always in [0, 1].
double js_divergence(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Generalized JSD: H(sum w_i P_i) - sum w_i H(P_i). Uniform weights when
/// none are given. Bounded by log2(N).
double jsd_all(std::span<const DiscreteDistribution> dists,
               std::optional<std::span<const double>> weights = std::nullopt);

/// Gaussian-kernel emission rows with evenly spaced centers. The spacing
/// between consecutive centers is ratio * sigma, so `ratio` is the
/// decodability knob: 0 makes every row identical.
struct SyntheticEmissionSpec {
  std::size_t n_states = 0;
  double ratio = 0.0;
  double sigma = 2.0;
  std::size_t n_symbols = 0;  ///< 0 selects default_symbol_count()
};

/// ceil((N+1)·R·σ) + 8·ceil(σ), at least 16.
std::size_t default_symbol_count(std::size_t n_states, double ratio, double sigma);

/// Center of row `index`: 4σ + index·R·σ.
double synthetic_center(std::size_t index, double ratio, double sigma);

/// Discretized Gaussian kernel over symbols [0, n_symbols), normalized over
/// that range. No boundary guard; used for default output-state rows.
DiscreteDistribution gaussian_row(double center, double sigma, std::size_t n_symbols);

/// Single synthetic row with the boundary guard applied.
DiscreteDistribution synthetic_row(std::size_t index, double ratio, double sigma,
                                   std::size_t n_symbols);

/// All N rows. Throws when the alphabet cannot hold every center with 4σ of
/// clearance on both sides.
std::vector<DiscreteDistribution> synth_emissions(const SyntheticEmissionSpec& spec);

}  // namespace abthmm
