#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "abthmm/matrix.hpp"
#include "abthmm/random.hpp"

namespace abthmm {

using ObservationSequence = std::vector<std::size_t>;
using StateSequence = std::vector<std::size_t>;

constexpr double kStochasticTolerance = 1e-9;

/// Discrete-emission hidden Markov model (Pi, A, B). Pi, every row of A and
/// every row of B are probability vectors; the constructor enforces it.
class Hmm {
 public:
  Hmm() = default;
  Hmm(std::vector<double> pi, Matrix a, Matrix b, std::vector<std::string> labels = {});

  std::size_t n_states() const noexcept { return pi_.size(); }
  std::size_t n_symbols() const noexcept { return b_.cols(); }
  const std::vector<double>& pi() const noexcept { return pi_; }
  const Matrix& a() const noexcept { return a_; }
  const Matrix& b() const noexcept { return b_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  Hmm with_pi(std::vector<double> pi) const { return {std::move(pi), a_, b_, labels_}; }
  Hmm with_transitions(Matrix a) const { return {pi_, std::move(a), b_, labels_}; }
  Hmm with_emissions(Matrix b) const { return {pi_, a_, std::move(b), labels_}; }

  friend bool operator==(const Hmm&, const Hmm&) = default;

 private:
  std::vector<double> pi_;
  Matrix a_;
  Matrix b_;
  std::vector<std::string> labels_;
};

/// log P(obs | hmm), natural log, via the scaled forward recursion.
/// Returns -infinity when no state path can produce `obs`.
double forward_log_prob(const Hmm& hmm, std::span<const std::size_t> obs);

struct ViterbiResult {
  StateSequence states;
  double log_prob = 0.0;
};

/// Most likely state path. Ties go to the lower state index.
ViterbiResult viterbi_decode(const Hmm& hmm, std::span<const std::size_t> obs);

struct FitOptions {
  int max_iters = 100;
  double tol = 1e-4;  ///< stop when total log-likelihood improves by less
  bool update_pi = true;
  bool update_a = true;
  bool update_b = true;
  unsigned threads = 0;  ///< 0 = hardware concurrency
};

struct FitHistory {
  /// Total log-likelihood of the data under the model at the start of each
  /// iteration; the last entry belongs to the returned model.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
};

struct FitResult {
  Hmm model;
  FitHistory history;
};

/// Multi-sequence Baum-Welch. Zero entries of A stay zero.
FitResult baum_welch_fit(const Hmm& init, std::span<const ObservationSequence> data,
                         const FitOptions& opts = {});

struct SampledSequence {
  StateSequence states;
  ObservationSequence obs;
};

constexpr std::size_t kMaxSampleSteps = 10000;

/// Draws a state from Pi, then alternates emission and transition draws.
/// Stops right after emitting once from an absorbing state.
SampledSequence sample_sequence(const Hmm& hmm, std::span<const std::size_t> absorbing, Rng& rng);
SampledSequence sample_sequence(const Hmm& hmm, std::span<const std::size_t> absorbing,
                                std::uint64_t seed);

/// Index drawn from a discrete distribution given as a probability row.
std::size_t draw_index(std::span<const double> probs, Rng& rng);

}  // namespace abthmm
