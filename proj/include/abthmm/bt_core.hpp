#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abthmm/divergence.hpp"

namespace abthmm {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

enum class Outcome : std::uint8_t { Success, Failure };

constexpr char outcome_char(Outcome o) noexcept { return o == Outcome::Success ? 'S' : 'F'; }
constexpr Outcome flip(Outcome o) noexcept {
  return o == Outcome::Success ? Outcome::Failure : Outcome::Success;
}

enum class NodeKind : std::uint8_t { Leaf, Sequence, Selector, Retry, Parallel };

std::string_view kind_name(NodeKind kind) noexcept;

/// How an emission row was written in the DSL, so serialization can
/// reproduce `(gauss)` instead of expanding it.
struct EmissionSource {
  enum class Kind : std::uint8_t { Table, Gauss };
  Kind kind = Kind::Table;
  std::optional<std::size_t> index;  ///< explicit `(gauss k)` row index

  friend bool operator==(const EmissionSource&, const EmissionSource&) = default;
};

struct LeafStats {
  double ps = 1.0;  ///< probability the leaf returns Success
  DiscreteDistribution emission;
  EmissionSource source;

  /// Provenance is not part of the value.
  friend bool operator==(const LeafStats& a, const LeafStats& b) {
    return a.ps == b.ps && a.emission == b.emission;
  }
};

/// Behavior tree node. Leaves carry a name and LeafStats; composites carry
/// children; Parallel also carries its success threshold (fraction of
/// children that must succeed).
struct Node {
  NodeKind kind = NodeKind::Leaf;
  std::string name;
  LeafStats stats;
  double threshold = 1.0;
  std::vector<Node> children;
  std::size_t leaf_index = 0;  ///< leaves: left-to-right position
  std::size_t ordinal = 0;     ///< parallel nodes: left-to-right position among parallels

  static Node leaf(std::string name, double ps, DiscreteDistribution emission);
  static Node sequence(std::vector<Node> children);
  static Node selector(std::vector<Node> children);
  static Node retry(Node child);
  static Node parallel(double threshold, std::vector<Node> children);

  bool is_leaf() const noexcept { return kind == NodeKind::Leaf; }
  std::size_t first_leaf() const;
  std::size_t leaf_count() const;
  bool contains(NodeKind k) const;

  friend bool operator==(const Node& a, const Node& b);
};

/// Synthetic-row parameters used to expand `(gauss)` rows.
struct SyntheticParams {
  double ratio = 1.0;
  double sigma = 2.0;
};

/// Augmented behavior tree: the tree, per-leaf success probabilities and
/// emission rows, plus emission rows for the two output states.
/// Leaves are numbered 0..l-1 left to right; O_S = l, O_F = l + 1.
/// Immutable; copies share the tree.
class AbtDefinition {
 public:
  AbtDefinition(Node root, std::size_t n_symbols, DiscreteDistribution success_emission,
                DiscreteDistribution failure_emission, SyntheticParams synthetic = {},
                EmissionSource success_source = {}, EmissionSource failure_source = {});

  const Node& root() const noexcept { return *root_; }
  std::size_t n_leaves() const noexcept { return leaves_.size(); }
  std::size_t n_symbols() const noexcept { return n_symbols_; }
  const Node& leaf(std::size_t i) const { return *leaves_.at(i); }
  std::size_t o_s() const noexcept { return leaves_.size(); }
  std::size_t o_f() const noexcept { return leaves_.size() + 1; }
  const DiscreteDistribution& success_emission() const noexcept { return success_emission_; }
  const DiscreteDistribution& failure_emission() const noexcept { return failure_emission_; }
  const EmissionSource& success_source() const noexcept { return success_source_; }
  const EmissionSource& failure_source() const noexcept { return failure_source_; }
  const SyntheticParams& synthetic() const noexcept { return synthetic_; }
  bool has_retry() const { return root_->contains(NodeKind::Retry); }
  bool has_parallel() const { return root_->contains(NodeKind::Parallel); }

  /// Copy with a different root (renumbered).
  AbtDefinition with_root(Node root) const;

  friend bool operator==(const AbtDefinition& a, const AbtDefinition& b);

 private:
  std::shared_ptr<const Node> root_;
  std::vector<const Node*> leaves_;
  std::size_t n_symbols_;
  DiscreteDistribution success_emission_;
  DiscreteDistribution failure_emission_;
  SyntheticParams synthetic_;
  EmissionSource success_source_;
  EmissionSource failure_source_;
};

// ---------------------------------------------------------------------------
// DSL

/// Parses and validates ABT source text. Throws ParseError for syntax
/// problems and Error for semantic ones.
AbtDefinition parse_abt(std::string_view text);
AbtDefinition load_abt(const std::filesystem::path& path);

/// Canonical DSL text; parse_abt(serialize_abt(x)) == x.
std::string serialize_abt(const AbtDefinition& abt);

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string where;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_abt(const AbtDefinition& abt);

/// Flattens nested same-kind Sequence/Selector nodes and removes
/// single-child Sequence/Selector wrappers. Compilation is invariant under it.
Node canonicalize(const Node& node);
AbtDefinition canonicalize(const AbtDefinition& abt);
bool is_canonical(const Node& node);

// ---------------------------------------------------------------------------
// State layout

constexpr std::size_t kDefaultStateCap = 4096;

/// States of a Parallel node: one per tuple of child statuses. A child
/// status is the child's current local leaf (0..l_k-1), or l_k when the child
/// has returned Success, or l_k+1 for Failure. Tuples with every child
/// running come first (the prod l_k "active" states, mixed radix, child 0
/// most significant); tuples with some but not all children finished
/// ("drain" states) follow. All-finished tuples are not states: they route
/// to the parent's exits.
struct ParallelBlock {
  std::size_t first_state = 0;
  std::size_t n_states = 0;
  std::size_t n_active = 0;
  std::size_t symbol_offset = 0;
  std::size_t n_symbols = 0;  ///< J^K joint alphabet
  double threshold = 1.0;
  std::vector<std::size_t> child_leaves;
  std::vector<std::size_t> child_first_leaf;

  std::size_t radix_index(std::span<const std::size_t> status) const;
  /// Block-relative state for a status tuple, or npos when all children finished.
  std::size_t encode(std::span<const std::size_t> status) const;
  const std::vector<std::size_t>& decode(std::size_t block_state) const {
    return state_to_tuple.at(block_state);
  }
  bool finished(std::size_t child, std::size_t status) const { return status >= child_leaves[child]; }

  std::vector<std::size_t> tuple_to_state;
  std::vector<std::vector<std::size_t>> state_to_tuple;
};

/// Mapping from tree positions to HMM states and symbols. Without Parallel
/// nodes state i is leaf i, O_S = l, O_F = l + 1 and the alphabet is J.
/// Each Parallel node is replaced by its block of product states, and its
/// joint alphabet is appended after the base J symbols.
struct StateLayout {
  std::size_t n_states = 0;
  std::size_t o_s = 0;
  std::size_t o_f = 0;
  std::size_t base_symbols = 0;
  std::size_t n_symbols = 0;
  std::vector<std::size_t> leaf_state;   ///< npos for leaves inside a Parallel
  std::vector<ParallelBlock> blocks;     ///< indexed by Node::ordinal
  std::vector<std::size_t> state_block;  ///< npos for leaf and terminal states
  std::vector<std::string> state_labels;
};

/// Block-relative part of a ParallelBlock (sizes, tuple order) for children
/// with the given leaf counts. Throws "product blow-up" past `state_cap`.
ParallelBlock make_parallel_block(std::vector<std::size_t> child_leaves, double threshold,
                                  std::size_t state_cap = kDefaultStateCap);

StateLayout compute_layout(const AbtDefinition& abt, std::size_t state_cap = kDefaultStateCap);

// ---------------------------------------------------------------------------
// Semantics

struct Successors {
  std::size_t on_success;
  std::size_t on_failure;
  std::size_t target(Outcome o) const noexcept {
    return o == Outcome::Success ? on_success : on_failure;
  }
  friend bool operator==(const Successors&, const Successors&) = default;
};

/// Successor state of every leaf on Success and on Failure. Throws for
/// trees containing Retry or Parallel nodes.
std::vector<Successors> successor_map(const AbtDefinition& abt);

/// Same, for a Retry/Parallel-free subtree in local numbering: leaves
/// 0..m-1 relative to the subtree's first leaf, m = local O_S, m+1 = local O_F.
std::vector<Successors> subtree_successors(const Node& root);

struct Visit {
  std::size_t leaf;
  Outcome outcome;
  friend bool operator==(const Visit&, const Visit&) = default;
};

struct TickTrace {
  std::vector<Visit> visited;
  Outcome result = Outcome::Failure;
  /// State path through the layout, excluding the terminal state. Equal to
  /// the visited leaf indices for Parallel-free trees.
  std::vector<std::size_t> states;
};

using OutcomeSource = std::function<Outcome(std::size_t leaf)>;

constexpr std::size_t kMaxTickSteps = 10000;

/// Runs the tree once. The source is asked for the outcome of every leaf
/// execution. Parallel children advance in lockstep, one leaf per child per
/// step. Throws when a Retry loop exceeds kMaxTickSteps.
TickTrace tick(const AbtDefinition& abt, const StateLayout& layout, const OutcomeSource& source);

/// Fixed outcome per leaf; unvisited entries are ignored.
TickTrace tick(const AbtDefinition& abt, std::span<const Outcome> outcomes);

}  // namespace abthmm
