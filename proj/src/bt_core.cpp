#include "abthmm/bt_core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "abthmm/error.hpp"

namespace abthmm {

std::string_view kind_name(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Leaf: return "leaf";
    case NodeKind::Sequence: return "sequence";
    case NodeKind::Selector: return "selector";
    case NodeKind::Retry: return "retry";
    case NodeKind::Parallel: return "parallel";
  }
  return "?";
}

Node Node::leaf(std::string name, double ps, DiscreteDistribution emission) {
  Node n;
  n.kind = NodeKind::Leaf;
  n.name = std::move(name);
  n.stats.ps = ps;
  n.stats.emission = std::move(emission);
  return n;
}

namespace {

Node composite(NodeKind kind, std::vector<Node> children) {
  Node n;
  n.kind = kind;
  n.children = std::move(children);
  return n;
}

}  // namespace

Node Node::sequence(std::vector<Node> children) { return composite(NodeKind::Sequence, std::move(children)); }
Node Node::selector(std::vector<Node> children) { return composite(NodeKind::Selector, std::move(children)); }

Node Node::retry(Node child) {
  std::vector<Node> c;
  c.push_back(std::move(child));
  return composite(NodeKind::Retry, std::move(c));
}

Node Node::parallel(double threshold, std::vector<Node> children) {
  Node n = composite(NodeKind::Parallel, std::move(children));
  n.threshold = threshold;
  return n;
}

std::size_t Node::first_leaf() const {
  const Node* n = this;
  while (!n->is_leaf()) {
    if (n->children.empty()) throw Error("composite node has no children");
    n = &n->children.front();
  }
  return n->leaf_index;
}

std::size_t Node::leaf_count() const {
  if (is_leaf()) return 1;
  std::size_t total = 0;
  for (const auto& c : children) total += c.leaf_count();
  return total;
}

bool Node::contains(NodeKind k) const {
  if (kind == k) return true;
  return std::any_of(children.begin(), children.end(), [k](const Node& c) { return c.contains(k); });
}

bool operator==(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  if (a.is_leaf()) return a.name == b.name && a.stats == b.stats;
  if (a.kind == NodeKind::Parallel && a.threshold != b.threshold) return false;
  return a.children == b.children;
}

// ---------------------------------------------------------------------------

namespace {

void number_tree(Node& node, std::size_t& next_leaf, std::size_t& next_parallel) {
  if (node.is_leaf()) {
    node.leaf_index = next_leaf++;
    return;
  }
  if (node.kind == NodeKind::Parallel) node.ordinal = next_parallel++;
  for (auto& c : node.children) number_tree(c, next_leaf, next_parallel);
}

void collect_leaves(const Node& node, std::vector<const Node*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  for (const auto& c : node.children) collect_leaves(c, out);
}

}  // namespace

AbtDefinition::AbtDefinition(Node root, std::size_t n_symbols, DiscreteDistribution success_emission,
                             DiscreteDistribution failure_emission, SyntheticParams synthetic,
                             EmissionSource success_source, EmissionSource failure_source)
    : n_symbols_(n_symbols),
      success_emission_(std::move(success_emission)),
      failure_emission_(std::move(failure_emission)),
      synthetic_(synthetic),
      success_source_(success_source),
      failure_source_(failure_source) {
  std::size_t next_leaf = 0;
  std::size_t next_parallel = 0;
  number_tree(root, next_leaf, next_parallel);
  auto owned = std::make_shared<const Node>(std::move(root));
  collect_leaves(*owned, leaves_);
  root_ = std::move(owned);
}

AbtDefinition AbtDefinition::with_root(Node root) const {
  return AbtDefinition(std::move(root), n_symbols_, success_emission_, failure_emission_, synthetic_,
                       success_source_, failure_source_);
}

bool operator==(const AbtDefinition& a, const AbtDefinition& b) {
  return a.n_symbols_ == b.n_symbols_ && a.success_emission_ == b.success_emission_ &&
         a.failure_emission_ == b.failure_emission_ && *a.root_ == *b.root_;
}

// ---------------------------------------------------------------------------
// Validation

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) out << v.where << ": " << v.message << '\n';
  return out.str();
}

namespace {

bool retry_on_first_leaf(const Node& node) {
  for (const Node* n = &node; !n->is_leaf() && !n->children.empty(); n = &n->children.front()) {
    if (n->kind == NodeKind::Retry) return true;
  }
  return false;
}

class Validator {
 public:
  Validator(const AbtDefinition& abt, ValidationReport& report) : abt_(abt), report_(report) {}

  void run() {
    visit(abt_.root(), "root", false);
    check_row(abt_.success_emission(), "output O_S");
    check_row(abt_.failure_emission(), "output O_F");
  }

 private:
  void add(const std::string& where, std::string message) {
    report_.violations.push_back({where, std::move(message)});
  }

  void check_row(const DiscreteDistribution& d, const std::string& where) {
    if (d.size() != abt_.n_symbols()) {
      add(where, "emission has " + std::to_string(d.size()) + " symbols, alphabet has " +
                     std::to_string(abt_.n_symbols()));
    }
  }

  void visit(const Node& node, const std::string& where, bool inside_parallel) {
    switch (node.kind) {
      case NodeKind::Leaf: {
        if (node.name.empty()) add(where, "leaf has no name");
        if (!names_.insert(node.name).second) add(where, "duplicate leaf name '" + node.name + "'");
        if (!(node.stats.ps >= 0.0 && node.stats.ps <= 1.0)) {
          add(where, "ps " + std::to_string(node.stats.ps) + " out of range [0, 1]");
        }
        check_row(node.stats.emission, where + " (" + node.name + ")");
        return;
      }
      case NodeKind::Sequence:
      case NodeKind::Selector:
        if (node.children.empty()) add(where, "empty composite");
        break;
      case NodeKind::Retry:
        if (node.children.size() != 1) {
          add(where, "retry needs exactly one child, has " + std::to_string(node.children.size()));
        } else if (retry_on_first_leaf(node.children.front())) {
          add(where, "nested retry on the same first leaf");
        }
        if (inside_parallel) add(where, "parallel children must not contain retry nodes");
        break;
      case NodeKind::Parallel:
        if (node.children.size() < 2) add(where, "parallel needs at least two children");
        if (!(node.threshold > 0.0 && node.threshold <= 1.0)) {
          add(where, "parallel threshold " + std::to_string(node.threshold) + " outside (0, 1]");
        }
        if (inside_parallel) add(where, "parallel children must not contain parallel nodes");
        break;
    }
    const bool nested = inside_parallel || node.kind == NodeKind::Parallel;
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      visit(node.children[i], where + "/" + std::to_string(i), nested);
    }
  }

  const AbtDefinition& abt_;
  ValidationReport& report_;
  std::set<std::string> names_;
};

}  // namespace

ValidationReport validate_abt(const AbtDefinition& abt) {
  ValidationReport report;
  Validator(abt, report).run();
  if (report.ok() && !abt.has_retry() && !abt.has_parallel()) {
    // Every leaf needs an input path: reachable from leaf 0 through the
    // successor graph.
    const auto succ = successor_map(abt);
    std::vector<bool> seen(abt.n_leaves() + 2, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const std::size_t s = stack.back();
      stack.pop_back();
      if (s >= abt.n_leaves()) continue;
      for (std::size_t t : {succ[s].on_success, succ[s].on_failure}) {
        if (!seen[t]) {
          seen[t] = true;
          stack.push_back(t);
        }
      }
    }
    for (std::size_t i = 0; i < abt.n_leaves(); ++i) {
      if (!seen[i]) report.violations.push_back({abt.leaf(i).name, "leaf has no input path"});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Canonical form

Node canonicalize(const Node& node) {
  if (node.is_leaf()) return node;
  Node out = node;
  out.children.clear();
  for (const auto& c : node.children) {
    Node child = canonicalize(c);
    const bool flattenable = node.kind == NodeKind::Sequence || node.kind == NodeKind::Selector;
    if (flattenable && child.kind == node.kind) {
      for (auto& g : child.children) out.children.push_back(std::move(g));
    } else {
      out.children.push_back(std::move(child));
    }
  }
  if ((out.kind == NodeKind::Sequence || out.kind == NodeKind::Selector) && out.children.size() == 1) {
    return std::move(out.children.front());
  }
  return out;
}

AbtDefinition canonicalize(const AbtDefinition& abt) { return abt.with_root(canonicalize(abt.root())); }

bool is_canonical(const Node& node) {
  if (node.is_leaf()) return true;
  const bool composite = node.kind == NodeKind::Sequence || node.kind == NodeKind::Selector;
  if (composite && node.children.size() < 2) return false;
  for (const auto& c : node.children) {
    if (composite && c.kind == node.kind) return false;
    if (!is_canonical(c)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Layout

namespace {

std::size_t checked_mul(std::size_t a, std::size_t b, std::size_t cap, const char* what) {
  if (a != 0 && b > cap / a) throw Error(std::string("product blow-up: ") + what + " exceeds cap");
  return a * b;
}

constexpr std::size_t kJointAlphabetCap = std::size_t{1} << 20;

class LayoutBuilder {
 public:
  LayoutBuilder(const AbtDefinition& abt, std::size_t cap) : abt_(abt), cap_(cap) {
    layout_.base_symbols = abt.n_symbols();
    layout_.n_symbols = abt.n_symbols();
    layout_.leaf_state.assign(abt.n_leaves(), npos);
  }

  StateLayout build() {
    visit(abt_.root());
    layout_.o_s = next_state_;
    layout_.o_f = next_state_ + 1;
    layout_.n_states = next_state_ + 2;
    if (layout_.n_states > cap_) {
      throw Error("product blow-up: " + std::to_string(layout_.n_states) + " states exceed cap " +
                  std::to_string(cap_));
    }
    layout_.state_block.resize(layout_.n_states, npos);
    layout_.state_labels.resize(layout_.n_states);
    for (std::size_t i = 0; i < abt_.n_leaves(); ++i) {
      if (layout_.leaf_state[i] != npos) layout_.state_labels[layout_.leaf_state[i]] = abt_.leaf(i).name;
    }
    for (std::size_t b = 0; b < layout_.blocks.size(); ++b) {
      const auto& block = layout_.blocks[b];
      for (std::size_t s = 0; s < block.n_states; ++s) {
        layout_.state_block[block.first_state + s] = b;
        layout_.state_labels[block.first_state + s] = product_label(block, block.decode(s));
      }
    }
    layout_.state_labels[layout_.o_s] = "O_S";
    layout_.state_labels[layout_.o_f] = "O_F";
    return std::move(layout_);
  }

 private:
  std::string product_label(const ParallelBlock& block, const std::vector<std::size_t>& tuple) const {
    std::string label;
    for (std::size_t k = 0; k < tuple.size(); ++k) {
      if (k) label += '|';
      if (tuple[k] == block.child_leaves[k]) {
        label += "<S>";
      } else if (tuple[k] == block.child_leaves[k] + 1) {
        label += "<F>";
      } else {
        label += abt_.leaf(block.child_first_leaf[k] + tuple[k]).name;
      }
    }
    return label;
  }

  void visit(const Node& node) {
    if (node.is_leaf()) {
      layout_.leaf_state[node.leaf_index] = next_state_++;
      return;
    }
    if (node.kind != NodeKind::Parallel) {
      for (const auto& c : node.children) visit(c);
      return;
    }
    std::vector<std::size_t> child_leaves;
    for (const auto& c : node.children) child_leaves.push_back(c.leaf_count());
    ParallelBlock block = make_parallel_block(std::move(child_leaves), node.threshold, cap_);
    block.first_state = next_state_;
    for (const auto& c : node.children) block.child_first_leaf.push_back(c.first_leaf());
    if (block.first_state + block.n_states + 2 > cap_) {
      throw Error("product blow-up: parallel node needs " + std::to_string(block.n_states) +
                  " states, cap is " + std::to_string(cap_));
    }
    std::size_t joint = 1;
    for (std::size_t k = 0; k < node.children.size(); ++k) {
      joint = checked_mul(joint, abt_.n_symbols(), kJointAlphabetCap, "joint alphabet");
    }
    block.n_symbols = joint;
    block.symbol_offset = layout_.n_symbols;
    layout_.n_symbols += joint;
    next_state_ += block.n_states;
    layout_.blocks.push_back(std::move(block));
  }

  const AbtDefinition& abt_;
  std::size_t cap_;
  std::size_t next_state_ = 0;
  StateLayout layout_;
};

}  // namespace

ParallelBlock make_parallel_block(std::vector<std::size_t> child_leaves, double threshold,
                                  std::size_t state_cap) {
  ParallelBlock block;
  block.threshold = threshold;
  block.child_leaves = std::move(child_leaves);
  std::size_t active = 1;
  std::size_t tuples = 1;
  std::size_t finished = 1;
  for (std::size_t m : block.child_leaves) {
    if (m == 0) throw Error("parallel child has no leaves");
    constexpr std::size_t limit = std::numeric_limits<std::size_t>::max() / 4;
    active = checked_mul(active, m, limit, "parallel product");
    tuples = checked_mul(tuples, m + 2, limit, "parallel product");
    finished = checked_mul(finished, 2, limit, "parallel product");
  }
  block.n_active = active;
  block.n_states = tuples - finished;
  if (block.n_states + 2 > state_cap) {
    throw Error("product blow-up: parallel node needs " + std::to_string(block.n_states) +
                " states, cap is " + std::to_string(state_cap));
  }

  // Active tuples first, then drain tuples, each in mixed-radix order.
  block.tuple_to_state.assign(tuples, npos);
  const std::size_t K = block.child_leaves.size();
  std::vector<std::size_t> status(K, 0);
  for (int pass = 0; pass < 2; ++pass) {
    std::fill(status.begin(), status.end(), 0);
    for (std::size_t t = 0; t < tuples; ++t) {
      std::size_t n_finished = 0;
      for (std::size_t k = 0; k < K; ++k) n_finished += block.finished(k, status[k]) ? 1 : 0;
      const bool wanted = pass == 0 ? n_finished == 0 : (n_finished > 0 && n_finished < K);
      if (wanted) {
        block.tuple_to_state[block.radix_index(status)] = block.state_to_tuple.size();
        block.state_to_tuple.push_back(status);
      }
      for (std::size_t k = K; k-- > 0;) {
        if (++status[k] < block.child_leaves[k] + 2) break;
        status[k] = 0;
      }
    }
  }
  return block;
}

std::size_t ParallelBlock::radix_index(std::span<const std::size_t> status) const {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < child_leaves.size(); ++k) idx = idx * (child_leaves[k] + 2) + status[k];
  return idx;
}

std::size_t ParallelBlock::encode(std::span<const std::size_t> status) const {
  return tuple_to_state.at(radix_index(status));
}

StateLayout compute_layout(const AbtDefinition& abt, std::size_t state_cap) {
  return LayoutBuilder(abt, state_cap).build();
}

// ---------------------------------------------------------------------------
// Successors

namespace {

void assign_exits(const Node& node, std::size_t first, std::size_t on_success, std::size_t on_failure,
                  std::vector<Successors>& out) {
  switch (node.kind) {
    case NodeKind::Leaf:
      out[first] = {on_success, on_failure};
      return;
    case NodeKind::Sequence:
    case NodeKind::Selector: {
      const bool seq = node.kind == NodeKind::Sequence;
      std::size_t start = first;
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        const std::size_t width = node.children[i].leaf_count();
        const bool last = i + 1 == node.children.size();
        const std::size_t next = start + width;
        assign_exits(node.children[i], start, seq && !last ? next : on_success,
                     !seq && !last ? next : on_failure, out);
        start = next;
      }
      return;
    }
    case NodeKind::Retry:
    case NodeKind::Parallel:
      throw Error(std::string("successor map is undefined for ") + std::string(kind_name(node.kind)) +
                  " nodes; compile the tree instead");
  }
}

}  // namespace

std::vector<Successors> subtree_successors(const Node& root) {
  const std::size_t m = root.leaf_count();
  std::vector<Successors> out(m, {npos, npos});
  assign_exits(root, 0, m, m + 1, out);
  return out;
}

std::vector<Successors> successor_map(const AbtDefinition& abt) { return subtree_successors(abt.root()); }

// ---------------------------------------------------------------------------
// Tick

namespace {

class Executor {
 public:
  Executor(const StateLayout& layout, const OutcomeSource& source, TickTrace& trace)
      : layout_(layout), source_(source), trace_(trace) {}

  Outcome run(const Node& node) {
    switch (node.kind) {
      case NodeKind::Leaf: {
        enter(layout_.leaf_state[node.leaf_index]);
        const Outcome o = source_(node.leaf_index);
        trace_.visited.push_back({node.leaf_index, o});
        return o;
      }
      case NodeKind::Sequence:
      case NodeKind::Selector: {
        // Sequence stops at the first Failure, Selector at the first Success.
        const Outcome stop = node.kind == NodeKind::Sequence ? Outcome::Failure : Outcome::Success;
        for (const auto& c : node.children) {
          if (run(c) == stop) return stop;
        }
        return flip(stop);
      }
      case NodeKind::Retry:
        for (;;) {
          if (run(node.children.front()) == Outcome::Success) return Outcome::Success;
        }
      case NodeKind::Parallel:
        return run_parallel(node);
    }
    return Outcome::Failure;
  }

 private:
  void enter(std::size_t state) {
    if (trace_.states.size() >= kMaxTickSteps) {
      throw Error("non-terminating tree: more than " + std::to_string(kMaxTickSteps) + " steps");
    }
    trace_.states.push_back(state);
  }

  // Children of a Parallel are Retry/Parallel-free, so a plain recursive
  // walk records their leaf executions.
  Outcome run_plain(const Node& node, std::vector<Visit>& visits) {
    if (node.is_leaf()) {
      const Outcome o = source_(node.leaf_index);
      visits.push_back({node.leaf_index, o});
      return o;
    }
    if (node.kind != NodeKind::Sequence && node.kind != NodeKind::Selector) {
      throw Error("parallel children must be built from leaves, sequences and selectors");
    }
    const Outcome stop = node.kind == NodeKind::Sequence ? Outcome::Failure : Outcome::Success;
    for (const auto& c : node.children) {
      if (run_plain(c, visits) == stop) return stop;
    }
    return flip(stop);
  }

  Outcome run_parallel(const Node& node) {
    const ParallelBlock& block = layout_.blocks.at(node.ordinal);
    const std::size_t K = node.children.size();
    std::vector<std::vector<Visit>> visits(K);
    std::vector<Outcome> results(K);
    std::size_t steps = 0;
    std::size_t successes = 0;
    for (std::size_t k = 0; k < K; ++k) {
      results[k] = run_plain(node.children[k], visits[k]);
      steps = std::max(steps, visits[k].size());
      if (results[k] == Outcome::Success) ++successes;
    }
    std::vector<std::size_t> status(K);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        if (t < visits[k].size()) {
          status[k] = visits[k][t].leaf - block.child_first_leaf[k];
        } else {
          status[k] = block.child_leaves[k] + (results[k] == Outcome::Success ? 0 : 1);
        }
      }
      enter(block.first_state + block.encode(status));
      for (std::size_t k = 0; k < K; ++k) {
        if (t < visits[k].size()) trace_.visited.push_back(visits[k][t]);
      }
    }
    const double fraction = static_cast<double>(successes) / static_cast<double>(K);
    return fraction >= block.threshold ? Outcome::Success : Outcome::Failure;
  }

  const StateLayout& layout_;
  const OutcomeSource& source_;
  TickTrace& trace_;
};

}  // namespace

TickTrace tick(const AbtDefinition& abt, const StateLayout& layout, const OutcomeSource& source) {
  TickTrace trace;
  trace.result = Executor(layout, source, trace).run(abt.root());
  return trace;
}

TickTrace tick(const AbtDefinition& abt, std::span<const Outcome> outcomes) {
  if (outcomes.size() < abt.n_leaves()) throw Error("tick needs an outcome for every leaf");
  const StateLayout layout = compute_layout(abt);
  const OutcomeSource source = [&](std::size_t leaf) { return outcomes[leaf]; };
  return tick(abt, layout, source);
}

}  // namespace abthmm
