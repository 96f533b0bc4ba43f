#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "abthmm/bt_core.hpp"
#include "abthmm/hmm.hpp"

namespace abthmm {

/// One outgoing edge of a state. Plain leaf states have exactly two, labeled
/// "S" and "F". Parallel product states carry one edge per outcome
/// combination of their running children, labeled with one character per
/// child ('S', 'F', or '.' for a child that has already finished).
struct Transition {
  std::string label;
  std::size_t target = 0;
  double prob = 0.0;
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// An HMM whose transitions remember which outcome produced them.
/// Terminal states have no edges.
struct LabeledHmm {
  Hmm hmm;
  std::vector<std::vector<Transition>> edges;
  std::size_t o_s = 0;
  std::size_t o_f = 0;

  std::size_t n_states() const noexcept { return hmm.n_states(); }
  bool is_terminal(std::size_t state) const noexcept { return state == o_s || state == o_f; }
  /// The edge labeled `label` leaving `state`; throws if absent.
  const Transition& edge(std::size_t state, std::string_view label) const;

  friend bool operator==(const LabeledHmm&, const LabeledHmm&) = default;
};

struct CompileOptions {
  std::size_t state_cap = kDefaultStateCap;
};

/// State cap from ABTHMM_STATE_CAP when set, else kDefaultStateCap.
std::size_t default_state_cap();

LabeledHmm compile(const AbtDefinition& abt, const CompileOptions& opts = {});

// ---------------------------------------------------------------------------
// Constraints

struct ConstraintViolation {
  std::size_t row;
  std::string description;
};

struct ConstraintReport {
  bool upper_diagonal = true;
  bool two_nonzero_per_row = true;
  bool superdiagonal_nonzero = true;
  std::vector<ConstraintViolation> violations;

  bool ok() const noexcept { return upper_diagonal && two_nonzero_per_row && superdiagonal_nonzero; }
  std::string to_string() const;
};

/// Numeric check of a transition matrix whose terminal rows are o_s and o_f.
ConstraintReport check_constraints(const Matrix& a, std::size_t o_s, std::size_t o_f);

/// Structural check on edge targets, so zero-probability edges (ps of 0 or
/// 1) still count. Also requires one "S" and one "F" edge per row.
ConstraintReport check_constraints(const LabeledHmm& lhmm);

/// Rebuilds the canonical tree. Throws Error on constraint violations,
/// malformed labels, or matrices no tree compiles to.
AbtDefinition decompile(const LabeledHmm& lhmm);

// ---------------------------------------------------------------------------
// Counting

using BigInt = boost::multiprecision::cpp_int;

/// 2^(l-1) * l!
BigInt count_bts(std::size_t l);

enum class Orientation : std::uint8_t { SuccessNext, FailureNext };

/// Non-zero pattern of one constrained transition matrix: for every leaf
/// row, which outcome moves to i+1 and the column of the other entry.
struct StructureShape {
  std::vector<Orientation> orientation;
  std::vector<std::size_t> second_col;

  std::size_t n_leaves() const noexcept { return orientation.size(); }
  friend bool operator==(const StructureShape&, const StructureShape&) = default;
};

constexpr std::size_t kMaxEnumerationLeaves = 8;

/// Visits every shape for l leaves, in lexicographic row order. Stops early
/// when the visitor returns false.
void for_each_structure(std::size_t l, const std::function<bool(const StructureShape&)>& visit);
std::vector<StructureShape> enumerate_structures(std::size_t l);

/// Materializes a shape with success probability 0.5 on every row and a
/// one-symbol alphabet.
LabeledHmm shape_to_hmm(const StructureShape& shape);
StructureShape shape_of(const LabeledHmm& lhmm);

// ---------------------------------------------------------------------------
// Retry and Parallel

/// A set of edge redirections: edge `edge` of state `row` moves to `to`.
struct MatrixPatch {
  struct Move {
    std::size_t row;
    std::size_t edge;
    std::size_t from;
    std::size_t to;
    double prob;
  };
  std::vector<Move> moves;

  /// True when no probability mass moves.
  bool is_noop() const;
};

/// Redirects every edge of states [k, k+m) that leaves the segment through
/// its failure exit back to k. Rejects a segment that already loops back
/// to k.
MatrixPatch apply_retry(const LabeledHmm& lhmm, std::size_t k, std::size_t m, std::size_t failure_exit);
LabeledHmm apply_patch(const LabeledHmm& lhmm, const MatrixPatch& patch);

/// Product of K >= 2 Retry/Parallel-free child models. Each child's
/// terminals are its own o_s / o_f. The result has the block's product
/// states followed by its own O_S and O_F; its alphabet is the joint
/// alphabet only (J^K, child 0 most significant).
LabeledHmm product_parallel(const std::vector<LabeledHmm>& children, double threshold,
                            std::size_t state_cap = kDefaultStateCap);

}  // namespace abthmm
