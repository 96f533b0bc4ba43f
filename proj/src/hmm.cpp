#include "abthmm/hmm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "abthmm/error.hpp"

namespace abthmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_probability_vector(std::span<const double> v, const std::string& what) {
  double total = 0.0;
  for (double p : v) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(what + " has a negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - 1.0) > kStochasticTolerance) {
    throw Error(what + " sums to " + std::to_string(total) + ", expected 1");
  }
}

void require_symbols(const Hmm& hmm, std::span<const std::size_t> obs) {
  if (obs.empty()) throw Error("observation sequence is empty");
  for (std::size_t s : obs) {
    if (s >= hmm.n_symbols()) {
      throw Error("symbol " + std::to_string(s) + " out of range [0, " +
                  std::to_string(hmm.n_symbols()) + ")");
    }
  }
}

void normalize_row(std::span<double> row) {
  double total = 0.0;
  for (double v : row) total += v;
  if (total > 0.0) {
    for (double& v : row) v /= total;
  }
}

}  // namespace

Hmm::Hmm(std::vector<double> pi, Matrix a, Matrix b, std::vector<std::string> labels)
    : pi_(std::move(pi)), a_(std::move(a)), b_(std::move(b)), labels_(std::move(labels)) {
  const std::size_t n = pi_.size();
  if (n == 0) throw Error("HMM needs at least one state");
  if (a_.rows() != n || a_.cols() != n) throw Error("transition matrix must be N x N");
  if (b_.rows() != n || b_.cols() == 0) throw Error("emission matrix must be N x J with J > 0");
  if (!labels_.empty() && labels_.size() != n) throw Error("label count does not match state count");
  require_probability_vector(pi_, "initial distribution");
  for (std::size_t i = 0; i < n; ++i) {
    require_probability_vector(a_.row(i), "transition row " + std::to_string(i));
    require_probability_vector(b_.row(i), "emission row " + std::to_string(i));
  }
}

double forward_log_prob(const Hmm& hmm, std::span<const std::size_t> obs) {
  require_symbols(hmm, obs);
  const std::size_t n = hmm.n_states();
  const Matrix& a = hmm.a();
  const Matrix& b = hmm.b();
  std::vector<double> alpha(n), next(n);
  double log_p = 0.0;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (t == 0) {
      for (std::size_t i = 0; i < n; ++i) alpha[i] = hmm.pi()[i] * b(i, obs[0]);
    } else {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        const auto row = a.row(i);
        for (std::size_t j = 0; j < n; ++j) next[j] += alpha[i] * row[j];
      }
      for (std::size_t j = 0; j < n; ++j) alpha[j] = next[j] * b(j, obs[t]);
    }
    double scale = 0.0;
    for (double v : alpha) scale += v;
    if (scale <= 0.0) return kNegInf;
    for (double& v : alpha) v /= scale;
    log_p += std::log(scale);
  }
  return log_p;
}

ViterbiResult viterbi_decode(const Hmm& hmm, std::span<const std::size_t> obs) {
  require_symbols(hmm, obs);
  const std::size_t n = hmm.n_states();
  const std::size_t T = obs.size();
  auto safe_log = [](double p) { return p > 0.0 ? std::log(p) : kNegInf; };

  Matrix log_a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) log_a(i, j) = safe_log(hmm.a()(i, j));

  std::vector<double> delta(n), next(n);
  std::vector<std::size_t> back(T * n, 0);
  for (std::size_t t = 0; t < T; ++t) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      const double emit = safe_log(hmm.b()(j, obs[t]));
      if (t == 0) {
        next[j] = safe_log(hmm.pi()[j]) + emit;
      } else {
        double best = kNegInf;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double v = delta[i] + log_a(i, j);
          if (v > best) {
            best = v;
            arg = i;
          }
        }
        next[j] = best + emit;
        back[t * n + j] = arg;
      }
      if (next[j] > kNegInf) any = true;
    }
    if (!any) throw Error("sequence impossible under model (no path at step " + std::to_string(t) + ")");
    delta.swap(next);
  }

  ViterbiResult result;
  std::size_t state = 0;
  double best = kNegInf;
  for (std::size_t j = 0; j < n; ++j) {
    if (delta[j] > best) {
      best = delta[j];
      state = j;
    }
  }
  result.log_prob = best;
  result.states.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    result.states[t] = state;
    if (t > 0) state = back[t * n + state];
  }
  return result;
}

namespace {

struct Accumulator {
  std::vector<double> pi;
  Matrix a_num;
  std::vector<double> a_den;
  Matrix b_num;
  std::vector<double> b_den;
  double log_likelihood = 0.0;

  Accumulator(std::size_t n, std::size_t m)
      : pi(n, 0.0), a_num(n, n), a_den(n, 0.0), b_num(n, m), b_den(n, 0.0) {}

  void merge(const Accumulator& o) {
    for (std::size_t i = 0; i < pi.size(); ++i) {
      pi[i] += o.pi[i];
      a_den[i] += o.a_den[i];
      b_den[i] += o.b_den[i];
      for (std::size_t j = 0; j < a_num.cols(); ++j) a_num(i, j) += o.a_num(i, j);
      for (std::size_t k = 0; k < b_num.cols(); ++k) b_num(i, k) += o.b_num(i, k);
    }
    log_likelihood += o.log_likelihood;
  }
};

// Scaled forward-backward for one sequence; adds expected counts to `acc`.
void accumulate_sequence(const Hmm& hmm, std::span<const std::size_t> obs, Accumulator& acc) {
  const std::size_t n = hmm.n_states();
  const std::size_t T = obs.size();
  const Matrix& a = hmm.a();
  const Matrix& b = hmm.b();

  Matrix alpha(T, n);
  std::vector<double> scale(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto cur = alpha.row(t);
    if (t == 0) {
      for (std::size_t i = 0; i < n; ++i) cur[i] = hmm.pi()[i] * b(i, obs[0]);
    } else {
      const auto prev = alpha.row(t - 1);
      for (std::size_t i = 0; i < n; ++i) {
        if (prev[i] == 0.0) continue;
        const auto arow = a.row(i);
        for (std::size_t j = 0; j < n; ++j) cur[j] += prev[i] * arow[j];
      }
      for (std::size_t j = 0; j < n; ++j) cur[j] *= b(j, obs[t]);
    }
    double c = 0.0;
    for (double v : cur) c += v;
    if (c <= 0.0) throw Error("sequence has zero probability under the current model");
    for (double& v : cur) v /= c;
    scale[t] = c;
    acc.log_likelihood += std::log(c);
  }

  Matrix beta(T, n);
  for (std::size_t i = 0; i < n; ++i) beta(T - 1, i) = 1.0;
  std::vector<double> weighted(n);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t j = 0; j < n; ++j) weighted[j] = b(j, obs[t + 1]) * beta(t + 1, j);
    for (std::size_t i = 0; i < n; ++i) {
      const auto arow = a.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * weighted[j];
      beta(t, i) = s / scale[t + 1];
    }
    // xi_t(i, j) = alpha_t(i) a_ij b_j(o_{t+1}) beta_{t+1}(j) / c_{t+1}
    for (std::size_t i = 0; i < n; ++i) {
      const double ai = alpha(t, i);
      if (ai == 0.0) continue;
      const auto arow = a.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (arow[j] == 0.0) continue;
        acc.a_num(i, j) += ai * arow[j] * weighted[j] / scale[t + 1];
      }
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = alpha(t, i) * beta(t, i);
      if (g == 0.0) continue;
      if (t == 0) acc.pi[i] += g;
      if (t + 1 < T) acc.a_den[i] += g;
      acc.b_num(i, obs[t]) += g;
      acc.b_den[i] += g;
    }
  }
}

constexpr std::size_t kChunkSize = 64;

// Per-chunk statistics merged in chunk order, so the result does not depend
// on the number of worker threads.
Accumulator e_step(const Hmm& hmm, std::span<const ObservationSequence> data, unsigned threads) {
  const std::size_t n_chunks = (data.size() + kChunkSize - 1) / kChunkSize;
  std::vector<Accumulator> partial(n_chunks, Accumulator(hmm.n_states(), hmm.n_symbols()));
  std::atomic<std::size_t> next_chunk{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next_chunk.fetch_add(1);
      if (c >= n_chunks || failed.load()) return;
      try {
        const std::size_t end = std::min(data.size(), (c + 1) * kChunkSize);
        for (std::size_t s = c * kChunkSize; s < end; ++s) accumulate_sequence(hmm, data[s], partial[c]);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  unsigned n_threads = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n_chunks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  Accumulator total(hmm.n_states(), hmm.n_symbols());
  for (const auto& p : partial) total.merge(p);
  return total;
}

Hmm m_step(const Hmm& model, const Accumulator& acc, std::size_t n_sequences, const FitOptions& opts) {
  const std::size_t n = model.n_states();
  std::vector<double> pi = model.pi();
  Matrix a = model.a();
  Matrix b = model.b();
  if (opts.update_pi) {
    for (std::size_t i = 0; i < n; ++i) pi[i] = acc.pi[i] / static_cast<double>(n_sequences);
    normalize_row(pi);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (opts.update_a && acc.a_den[i] > 0.0) {
      for (std::size_t j = 0; j < n; ++j) a(i, j) = acc.a_num(i, j) / acc.a_den[i];
      normalize_row(a.row(i));
    }
    if (opts.update_b && acc.b_den[i] > 0.0) {
      for (std::size_t k = 0; k < b.cols(); ++k) b(i, k) = acc.b_num(i, k) / acc.b_den[i];
      normalize_row(b.row(i));
    }
  }
  return Hmm(std::move(pi), std::move(a), std::move(b), model.labels());
}

}  // namespace

FitResult baum_welch_fit(const Hmm& init, std::span<const ObservationSequence> data,
                         const FitOptions& opts) {
  if (data.empty()) throw Error("Baum-Welch needs at least one sequence");
  if (opts.max_iters < 0) throw Error("max_iters must be non-negative");
  if (!(opts.tol > 0.0)) throw Error("tol must be positive");
  for (const auto& seq : data) {
    if (seq.empty()) throw Error("degenerate observation sequence of length 0");
    require_symbols(init, seq);
  }

  FitResult result{init, {}};
  Accumulator acc = e_step(result.model, data, opts.threads);
  result.history.log_likelihood.push_back(acc.log_likelihood);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Hmm candidate = m_step(result.model, acc, data.size(), opts);
    Accumulator next = e_step(candidate, data, opts.threads);
    const double gain = next.log_likelihood - acc.log_likelihood;
    result.model = std::move(candidate);
    result.history.log_likelihood.push_back(next.log_likelihood);
    result.history.iterations = iter + 1;
    acc = std::move(next);
    if (gain < opts.tol) {
      result.history.converged = true;
      break;
    }
  }
  return result;
}

std::size_t draw_index(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  if (last_positive == probs.size()) throw Error("cannot draw from an all-zero distribution");
  return last_positive;
}

SampledSequence sample_sequence(const Hmm& hmm, std::span<const std::size_t> absorbing, Rng& rng) {
  auto is_absorbing = [&](std::size_t s) {
    return std::find(absorbing.begin(), absorbing.end(), s) != absorbing.end();
  };
  SampledSequence out;
  std::size_t state = draw_index(hmm.pi(), rng);
  for (;;) {
    if (out.states.size() >= kMaxSampleSteps) {
      throw Error("non-terminating model: no absorbing state reached within " +
                  std::to_string(kMaxSampleSteps) + " steps");
    }
    out.states.push_back(state);
    out.obs.push_back(draw_index(hmm.b().row(state), rng));
    if (is_absorbing(state)) break;
    state = draw_index(hmm.a().row(state), rng);
  }
  return out;
}

SampledSequence sample_sequence(const Hmm& hmm, std::span<const std::size_t> absorbing,
                                std::uint64_t seed) {
  Rng rng(seed);
  return sample_sequence(hmm, absorbing, rng);
}

}  // namespace abthmm
