#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abthmm/bt_core.hpp"
#include "abthmm/compiler.hpp"
#include "abthmm/hmm.hpp"

namespace abthmm {

struct Run {
  StateSequence states;  ///< ends with O_S or O_F
  ObservationSequence obs;
  Outcome outcome = Outcome::Failure;
  friend bool operator==(const Run&, const Run&) = default;
};

struct Dataset {
  std::vector<Run> runs;
  std::uint64_t seed = 0;
  std::size_t n_states = 0;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// n independent runs of the tree. Run i uses derive_seed(seed, i), so any
/// prefix of the dataset is independent of n.
Dataset rollout_dataset(const AbtDefinition& abt, std::size_t n, std::uint64_t seed);

/// Observation sequences of a dataset, in run order.
std::vector<ObservationSequence> observations(const Dataset& data);

struct PsEstimate {
  std::size_t visits = 0;
  std::size_t successes = 0;
  std::optional<double> value() const {
    if (visits == 0) return std::nullopt;
    return static_cast<double>(successes) / static_cast<double>(visits);
  }
};

/// Success frequency per state, read from the edge label that leads to the
/// next state of each run. Only states with exactly one "S" and one "F"
/// edge are counted (leaf states); Parallel product states stay at zero.
std::vector<PsEstimate> estimate_ps(const Dataset& data, const LabeledHmm& lhmm);

struct PerturbationSpec {
  double p_tilde = 0.0;  ///< in [0, 0.5]
  std::uint64_t seed = 0;
};

constexpr double kPerturbFloor = 0.05;
constexpr double kPerturbCeil = 0.95;

/// Per non-terminal row, in row order, draws r = +1 or -1 and sets the first
/// non-zero entry p1 to clamp((1 + p_tilde * r) * p1, 0.05, 0.95); the other
/// non-zero entries share the rest in proportion. Rows with a single
/// non-zero entry are left alone. p_tilde = 0 returns the input.
LabeledHmm perturb_hmm(const LabeledHmm& lhmm, const PerturbationSpec& spec);

/// Every row of A replaced by uniform [0, 1) draws, row-normalized. Pi and B
/// are kept.
Hmm randomize_hmm(const Hmm& hmm, std::uint64_t seed);

/// Levenshtein distance divided by the length of `truth`.
double sed(std::span<const std::size_t> estimate, std::span<const std::size_t> truth);
std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// RMS of (ref - est) over the cells where ref is non-zero.
double rms_nonzero(const Matrix& ref, const Matrix& est);

/// Copy of the tree with every emission row replaced by the synthetic rows
/// for l + 2 states (leaves, then O_S and O_F) at the given ratio.
AbtDefinition with_synthetic_emissions(const AbtDefinition& abt, double ratio, double sigma = 2.0);

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepKind { Forward, Viterbi, BaumWelch };

std::string_view sweep_kind_name(SweepKind kind) noexcept;
SweepKind parse_sweep_kind(std::string_view name);

/// A grid value: a perturbation size, or a randomized transition matrix.
struct Perturbation {
  bool random = false;
  double p_tilde = 0.0;
  std::string to_string() const;
  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

Perturbation parse_perturbation(std::string_view text);

struct SweepConfig {
  std::filesystem::path model;
  std::vector<double> ratios{0.0, 0.25, 1.0, 2.5, 5.0};
  std::vector<Perturbation> perturbations{{false, 0.0}, {false, 0.1}, {false, 0.25}, {false, 0.5}};
  std::size_t n_sequences = 15000;
  std::uint64_t master_seed = 20240501;
  double sigma = 2.0;
  int bw_max_iters = 100;
  double bw_tol = 1e-4;
  bool bw_update_all = false;  ///< false: A only
  unsigned threads = 0;
};

/// key=value lines, '#' comments. `model` is resolved against base_dir.
SweepConfig parse_sweep_config(std::string_view text, const std::filesystem::path& base_dir = {});
SweepConfig load_sweep_config(const std::filesystem::path& path);

struct MetricRow {
  SweepKind kind = SweepKind::Forward;
  double ratio = 0.0;
  Perturbation perturbation;
  std::size_t n_states = 0;
  std::size_t n_seqs = 0;
  std::uint64_t seed = 0;
  std::optional<double> logp_per_seq;
  std::optional<double> mean_sed;
  std::optional<double> rms_error;
  std::optional<int> bw_iters;
  std::optional<double> final_logp;  ///< per sequence
};

struct SweepResult {
  std::vector<MetricRow> rows;
  std::vector<FitHistory> histories;  ///< Baum-Welch only, one per row
};

/// Evaluates every (ratio, perturbation) cell. All cells at one ratio share
/// the dataset (seed derive_seed(master_seed, ratio index)); every cell uses
/// the same perturbation seed, so sign draws agree across cells.
SweepResult run_sweep(const AbtDefinition& abt, const SweepConfig& cfg, SweepKind kind);

constexpr std::string_view kMetricCsvHeader =
    "kind,ratio,perturbation,n_states,n_seqs,seed,logp_per_seq,mean_sed,rms_error,bw_iters,final_logp";

void write_metric_csv(std::ostream& out, std::span<const MetricRow> rows);

// ---------------------------------------------------------------------------
// Divergence table

struct DivergenceRow {
  double ratio = 0.0;
  std::size_t n_states = 0;
  double kld = 0.0;  ///< rows 0 and gap
  double jsd = 0.0;  ///< rows 0 and gap
  double jsd_all = 0.0;
};

std::vector<DivergenceRow> divergence_table(std::span<const std::size_t> sizes, std::span<const double> ratios,
                                            double sigma = 2.0, std::size_t gap = 1);

void write_divergence_csv(std::ostream& out, std::span<const DivergenceRow> rows);

/// One line per run: run,length,outcome,states,symbols (space-separated).
void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace abthmm
