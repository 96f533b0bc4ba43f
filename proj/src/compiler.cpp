#include "abthmm/compiler.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>
#include <tuple>

#include "abthmm/error.hpp"

namespace abthmm {

const Transition& LabeledHmm::edge(std::size_t state, std::string_view label) const {
  for (const auto& e : edges.at(state)) {
    if (e.label == label) return e;
  }
  throw Error("state " + std::to_string(state) + " has no '" + std::string(label) + "' edge");
}

std::size_t default_state_cap() {
  if (const char* env = std::getenv("ABTHMM_STATE_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultStateCap;
}

namespace {

using EdgeTable = std::vector<std::vector<Transition>>;

Matrix transitions_from_edges(const EdgeTable& edges, std::size_t o_s, std::size_t o_f) {
  const std::size_t n = edges.size();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : edges[i]) a(i, e.target) += e.prob;
  }
  a(o_s, o_s) = 1.0;
  a(o_f, o_f) = 1.0;
  return a;
}

MatrixPatch retry_moves(const EdgeTable& edges, std::size_t k, std::size_t m, std::size_t failure_exit) {
  if (m == 0 || k + m > edges.size()) throw Error("retry segment out of range");
  if (failure_exit >= k && failure_exit < k + m) throw Error("retry failure exit lies inside the segment");
  MatrixPatch patch;
  for (std::size_t r = k; r < k + m; ++r) {
    for (std::size_t e = 0; e < edges[r].size(); ++e) {
      const Transition& t = edges[r][e];
      if (t.target == k) throw Error("nested retry on the same first state " + std::to_string(k));
      if (t.target == failure_exit) patch.moves.push_back({r, e, failure_exit, k, t.prob});
    }
  }
  return patch;
}

void patch_edges(EdgeTable& edges, const MatrixPatch& patch) {
  for (const auto& mv : patch.moves) {
    Transition& t = edges.at(mv.row).at(mv.edge);
    if (t.target != mv.from) throw Error("patch does not match the model");
    t.target = mv.to;
  }
}

bool is_plain_child(const LabeledHmm& c) {
  const std::size_t m = c.n_states() - 2;
  if (c.n_states() < 3 || c.o_s != m || c.o_f != m + 1) return false;
  for (std::size_t i = 0; i < m; ++i) {
    if (c.edges[i].size() != 2) return false;
    for (const auto& e : c.edges[i]) {
      if (e.target <= i) return false;
    }
  }
  return true;
}

class Compiler {
 public:
  Compiler(const AbtDefinition& abt, const CompileOptions& opts)
      : abt_(abt), opts_(opts), layout_(compute_layout(abt, opts.state_cap)) {
    edges_.resize(layout_.n_states);
    b_ = Matrix(layout_.n_states, layout_.n_symbols);
  }

  LabeledHmm run() {
    visit(abt_.root(), layout_.o_s, layout_.o_f);
    for (std::size_t i = 0; i < abt_.n_leaves(); ++i) {
      const std::size_t s = layout_.leaf_state[i];
      if (s == npos) continue;
      const auto row = abt_.leaf(i).stats.emission.probs();
      std::copy(row.begin(), row.end(), b_.row(s).begin());
    }
    const auto out_s = abt_.success_emission().probs();
    const auto out_f = abt_.failure_emission().probs();
    std::copy(out_s.begin(), out_s.end(), b_.row(layout_.o_s).begin());
    std::copy(out_f.begin(), out_f.end(), b_.row(layout_.o_f).begin());

    std::vector<double> pi(layout_.n_states, 0.0);
    pi[0] = 1.0;
    LabeledHmm out;
    out.hmm = Hmm(std::move(pi), transitions_from_edges(edges_, layout_.o_s, layout_.o_f), std::move(b_),
                  layout_.state_labels);
    out.edges = std::move(edges_);
    out.o_s = layout_.o_s;
    out.o_f = layout_.o_f;
    return out;
  }

 private:
  std::size_t first_state(const Node& n) const {
    if (n.is_leaf()) return layout_.leaf_state[n.leaf_index];
    if (n.kind == NodeKind::Parallel) return layout_.blocks.at(n.ordinal).first_state;
    return first_state(n.children.front());
  }

  std::size_t end_state(const Node& n) const {
    if (n.is_leaf()) return layout_.leaf_state[n.leaf_index] + 1;
    if (n.kind == NodeKind::Parallel) {
      const auto& b = layout_.blocks.at(n.ordinal);
      return b.first_state + b.n_states;
    }
    return end_state(n.children.back());
  }

  void visit(const Node& n, std::size_t on_success, std::size_t on_failure) {
    switch (n.kind) {
      case NodeKind::Leaf: {
        const std::size_t s = layout_.leaf_state[n.leaf_index];
        const double ps = n.stats.ps;
        edges_[s] = {{"S", on_success, ps}, {"F", on_failure, 1.0 - ps}};
        return;
      }
      case NodeKind::Sequence:
      case NodeKind::Selector: {
        const bool seq = n.kind == NodeKind::Sequence;
        for (std::size_t i = 0; i < n.children.size(); ++i) {
          const bool last = i + 1 == n.children.size();
          const std::size_t next = last ? npos : first_state(n.children[i + 1]);
          visit(n.children[i], seq && !last ? next : on_success, !seq && !last ? next : on_failure);
        }
        return;
      }
      case NodeKind::Retry: {
        const Node& child = n.children.front();
        visit(child, on_success, on_failure);
        const std::size_t k = first_state(child);
        patch_edges(edges_, retry_moves(edges_, k, end_state(child) - k, on_failure));
        return;
      }
      case NodeKind::Parallel:
        visit_parallel(n, on_success, on_failure);
        return;
    }
  }

  void visit_parallel(const Node& n, std::size_t on_success, std::size_t on_failure) {
    std::vector<LabeledHmm> children;
    for (const auto& c : n.children) {
      AbtDefinition sub(c, abt_.n_symbols(), abt_.success_emission(), abt_.failure_emission());
      children.push_back(compile(sub, opts_));
    }
    const LabeledHmm product = product_parallel(children, n.threshold, opts_.state_cap);
    const ParallelBlock& block = layout_.blocks.at(n.ordinal);
    const auto map_state = [&](std::size_t t) {
      if (t == product.o_s) return on_success;
      if (t == product.o_f) return on_failure;
      return block.first_state + t;
    };
    for (std::size_t t = 0; t < block.n_states; ++t) {
      auto& out = edges_[block.first_state + t];
      out = product.edges[t];
      for (auto& e : out) e.target = map_state(e.target);
      const auto row = product.hmm.b().row(t);
      std::copy(row.begin(), row.end(), b_.row(block.first_state + t).begin() + block.symbol_offset);
    }
  }

  const AbtDefinition& abt_;
  const CompileOptions& opts_;
  StateLayout layout_;
  EdgeTable edges_;
  Matrix b_;
};

}  // namespace

LabeledHmm compile(const AbtDefinition& abt, const CompileOptions& opts) {
  const ValidationReport report = validate_abt(abt);
  if (!report.ok()) throw Error("invalid tree: " + report.violations.front().where + ": " +
                                report.violations.front().message);
  return Compiler(abt, opts).run();
}

// ---------------------------------------------------------------------------
// Constraints

std::string ConstraintReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) out << "row " << v.row << ": " << v.description << '\n';
  return out.str();
}

ConstraintReport check_constraints(const Matrix& a, std::size_t o_s, std::size_t o_f) {
  ConstraintReport r;
  const std::size_t n = a.rows();
  if (a.cols() != n || o_s >= n || o_f >= n || o_s == o_f) {
    r.upper_diagonal = r.two_nonzero_per_row = r.superdiagonal_nonzero = false;
    r.violations.push_back({0, "matrix is not square or terminals are out of range"});
    return r;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i == o_s || i == o_f) continue;
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) == 0.0) continue;
      ++nonzero;
      if (j <= i) {
        r.upper_diagonal = false;
        r.violations.push_back({i, "entry at column " + std::to_string(j) + " is on or below the diagonal"});
      }
    }
    if (nonzero != 2) {
      r.two_nonzero_per_row = false;
      r.violations.push_back({i, std::to_string(nonzero) + " non-zero entries, expected 2"});
    }
    if (i + 1 >= n || a(i, i + 1) == 0.0) {
      r.superdiagonal_nonzero = false;
      r.violations.push_back({i, "superdiagonal entry is zero"});
    }
  }
  return r;
}

ConstraintReport check_constraints(const LabeledHmm& lhmm) {
  ConstraintReport r;
  const std::size_t n = lhmm.n_states();
  for (std::size_t i = 0; i < n; ++i) {
    if (lhmm.is_terminal(i)) continue;
    const auto& edges = lhmm.edges.at(i);
    bool has_next = false;
    std::vector<std::size_t> targets;
    for (const auto& e : edges) {
      if (e.target <= i) {
        r.upper_diagonal = false;
        r.violations.push_back({i, "edge to column " + std::to_string(e.target) + " is on or below the diagonal"});
      }
      if (e.target == i + 1) has_next = true;
      targets.push_back(e.target);
    }
    std::sort(targets.begin(), targets.end());
    const bool distinct = std::adjacent_find(targets.begin(), targets.end()) == targets.end();
    const bool labels = edges.size() == 2 && ((edges[0].label == "S" && edges[1].label == "F") ||
                                              (edges[0].label == "F" && edges[1].label == "S"));
    if (edges.size() != 2 || !distinct || !labels) {
      r.two_nonzero_per_row = false;
      r.violations.push_back({i, "expected one S edge and one F edge to distinct states"});
    }
    if (!has_next) {
      r.superdiagonal_nonzero = false;
      r.violations.push_back({i, "no edge to the next state"});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Decompile

namespace {

enum class Comp : std::uint8_t { Seq, Sel };

Comp other(Comp t) { return t == Comp::Seq ? Comp::Sel : Comp::Seq; }

class Decompiler {
 public:
  Decompiler(const LabeledHmm& lhmm) : lhmm_(lhmm), l_(lhmm.n_states() - 2) {
    succ_.resize(l_);
    fail_.resize(l_);
    for (std::size_t i = 0; i < l_; ++i) {
      succ_[i] = lhmm.edge(i, "S").target;
      fail_[i] = lhmm.edge(i, "F").target;
    }
  }

  std::optional<Node> run() {
    if (l_ == 1) {
      if (succ_[0] == l_ && fail_[0] == l_ + 1) return leaf(0);
      return std::nullopt;
    }
    if (node(0, l_ - 1, Comp::Seq, l_, l_ + 1)) return build(0, l_ - 1, Comp::Seq, l_, l_ + 1);
    if (node(0, l_ - 1, Comp::Sel, l_ + 1, l_)) return build(0, l_ - 1, Comp::Sel, l_ + 1, l_);
    return std::nullopt;
  }

 private:
  // A Sequence continues to its next child on S and short-circuits on F;
  // a Selector the other way round.
  std::size_t cont_target(std::size_t i, Comp t) const { return t == Comp::Seq ? succ_[i] : fail_[i]; }
  std::size_t short_target(std::size_t i, Comp t) const { return t == Comp::Seq ? fail_[i] : succ_[i]; }

  // Leaves [b, e] as one child of a type-t composite whose following sibling
  // (or continue exit) is `next` and whose short-circuit exit is `brk`.
  bool child(std::size_t b, std::size_t e, Comp t, std::size_t next, std::size_t brk) {
    if (b == e) return cont_target(b, t) == next && short_target(b, t) == brk;
    return node(b, e, other(t), brk, next);
  }

  // Leaves [p, e] as the remaining children (one or more) of a type-t node.
  bool rest(std::size_t p, std::size_t e, Comp t, std::size_t cont, std::size_t brk) {
    const auto key = std::make_tuple(p, e, static_cast<int>(t) + 2, cont, brk);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    bool ok = false;
    for (std::size_t x = p; x <= e && !ok; ++x) {
      if (x == e) ok = child(p, e, t, cont, brk);
      else ok = child(p, x, t, x + 1, brk) && rest(x + 1, e, t, cont, brk);
    }
    memo_[key] = ok;
    return ok;
  }

  // Leaves [b, e] as a type-t composite with at least two children.
  bool node(std::size_t b, std::size_t e, Comp t, std::size_t cont, std::size_t brk) {
    if (b >= e) return false;
    const auto key = std::make_tuple(b, e, static_cast<int>(t), cont, brk);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    bool ok = false;
    for (std::size_t x = b; x < e && !ok; ++x) ok = child(b, x, t, x + 1, brk) && rest(x + 1, e, t, cont, brk);
    memo_[key] = ok;
    return ok;
  }

  Node leaf(std::size_t i) const {
    const auto& labels = lhmm_.hmm.labels();
    std::string name = i < labels.size() && !labels[i].empty() ? labels[i] : "l" + std::to_string(i + 1);
    const auto row = lhmm_.hmm.b().row(i);
    return Node::leaf(std::move(name), lhmm_.edge(i, "S").prob,
                      DiscreteDistribution(std::vector<double>(row.begin(), row.end())));
  }

  Node build_child(std::size_t b, std::size_t e, Comp t, std::size_t next, std::size_t brk) {
    if (b == e) return leaf(b);
    return build(b, e, other(t), brk, next);
  }

  Node build(std::size_t b, std::size_t e, Comp t, std::size_t cont, std::size_t brk) {
    std::vector<Node> children;
    std::size_t p = b;
    for (;;) {
      std::size_t x = p;
      bool done = false;
      for (; x <= e; ++x) {
        if (x == e && child(p, e, t, cont, brk) && (p != b)) {
          done = true;
          break;
        }
        if (x < e && child(p, x, t, x + 1, brk) && rest(x + 1, e, t, cont, brk)) break;
      }
      if (done) {
        children.push_back(build_child(p, e, t, cont, brk));
        break;
      }
      if (x > e) throw Error("internal decompile error");
      children.push_back(build_child(p, x, t, x + 1, brk));
      p = x + 1;
    }
    return t == Comp::Seq ? Node::sequence(std::move(children)) : Node::selector(std::move(children));
  }

  const LabeledHmm& lhmm_;
  std::size_t l_;
  std::vector<std::size_t> succ_;
  std::vector<std::size_t> fail_;
  std::map<std::tuple<std::size_t, std::size_t, int, std::size_t, std::size_t>, bool> memo_;
};

}  // namespace

AbtDefinition decompile(const LabeledHmm& lhmm) {
  const std::size_t n = lhmm.n_states();
  if (n < 3 || lhmm.o_s != n - 2 || lhmm.o_f != n - 1 || lhmm.edges.size() != n) {
    throw Error("decompile needs leaf states 0..l-1 followed by O_S and O_F");
  }
  const ConstraintReport report = check_constraints(lhmm);
  if (!report.ok()) throw Error("constraint violation: " + report.violations.front().description + " (row " +
                                std::to_string(report.violations.front().row) + ")");
  auto root = Decompiler(lhmm).run();
  if (!root) throw Error("no behavior tree compiles to this transition structure");

  const auto& b = lhmm.hmm.b();
  const auto row = [&](std::size_t s) {
    return DiscreteDistribution(std::vector<double>(b.row(s).begin(), b.row(s).end()));
  };
  AbtDefinition abt(std::move(*root), lhmm.hmm.n_symbols(), row(lhmm.o_s), row(lhmm.o_f));

  const LabeledHmm again = compile(abt);
  for (std::size_t i = 0; i + 2 < n; ++i) {
    for (const auto& e : lhmm.edges[i]) {
      if (again.edge(i, e.label).target != e.target) throw Error("decompiled tree does not reproduce the model");
    }
  }
  return abt;
}

// ---------------------------------------------------------------------------
// Counting

BigInt count_bts(std::size_t l) {
  if (l == 0) throw Error("count_bts needs at least one leaf");
  BigInt total = 1;
  total <<= (l - 1);
  for (std::size_t k = 2; k <= l; ++k) total *= k;
  return total;
}

void for_each_structure(std::size_t l, const std::function<bool(const StructureShape&)>& visit) {
  if (l == 0) throw Error("enumeration needs at least one leaf");
  if (l > kMaxEnumerationLeaves) {
    throw Error("enumeration limited to " + std::to_string(kMaxEnumerationLeaves) + " leaves");
  }
  StructureShape shape;
  shape.orientation.assign(l, Orientation::SuccessNext);
  shape.second_col.assign(l, 0);
  shape.second_col[l - 1] = l + 1;
  const std::function<bool(std::size_t)> rec = [&](std::size_t i) -> bool {
    if (i + 1 >= l) return visit(shape);
    for (Orientation o : {Orientation::SuccessNext, Orientation::FailureNext}) {
      shape.orientation[i] = o;
      for (std::size_t c = i + 2; c <= l + 1; ++c) {
        shape.second_col[i] = c;
        if (!rec(i + 1)) return false;
      }
    }
    return true;
  };
  rec(0);
}

std::vector<StructureShape> enumerate_structures(std::size_t l) {
  std::vector<StructureShape> out;
  for_each_structure(l, [&](const StructureShape& s) {
    out.push_back(s);
    return true;
  });
  return out;
}

LabeledHmm shape_to_hmm(const StructureShape& shape) {
  const std::size_t l = shape.n_leaves();
  if (l == 0 || shape.second_col.size() != l) throw Error("malformed shape");
  const std::size_t n = l + 2;
  EdgeTable edges(n);
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < l; ++i) {
    const std::size_t c = shape.second_col[i];
    if (c <= i + 1 || c > l + 1) throw Error("shape column out of range in row " + std::to_string(i));
    const bool s_next = shape.orientation[i] == Orientation::SuccessNext;
    edges[i] = {{"S", s_next ? i + 1 : c, 0.5}, {"F", s_next ? c : i + 1, 0.5}};
    labels[i] = "l" + std::to_string(i + 1);
  }
  labels[l] = "O_S";
  labels[l + 1] = "O_F";
  std::vector<double> pi(n, 0.0);
  pi[0] = 1.0;
  LabeledHmm out;
  out.hmm = Hmm(std::move(pi), transitions_from_edges(edges, l, l + 1), Matrix(n, 1, 1.0), std::move(labels));
  out.edges = std::move(edges);
  out.o_s = l;
  out.o_f = l + 1;
  return out;
}

StructureShape shape_of(const LabeledHmm& lhmm) {
  const ConstraintReport report = check_constraints(lhmm);
  if (!report.ok()) throw Error("constraint violation: " + report.violations.front().description);
  StructureShape shape;
  for (std::size_t i = 0; i < lhmm.n_states(); ++i) {
    if (lhmm.is_terminal(i)) continue;
    const auto& s = lhmm.edge(i, "S");
    const auto& f = lhmm.edge(i, "F");
    const bool s_next = s.target == i + 1;
    shape.orientation.push_back(s_next ? Orientation::SuccessNext : Orientation::FailureNext);
    shape.second_col.push_back(s_next ? f.target : s.target);
  }
  return shape;
}

// ---------------------------------------------------------------------------
// Retry and Parallel

bool MatrixPatch::is_noop() const {
  return std::all_of(moves.begin(), moves.end(), [](const Move& m) { return m.prob == 0.0; });
}

MatrixPatch apply_retry(const LabeledHmm& lhmm, std::size_t k, std::size_t m, std::size_t failure_exit) {
  return retry_moves(lhmm.edges, k, m, failure_exit);
}

LabeledHmm apply_patch(const LabeledHmm& lhmm, const MatrixPatch& patch) {
  LabeledHmm out = lhmm;
  patch_edges(out.edges, patch);
  out.hmm = lhmm.hmm.with_transitions(transitions_from_edges(out.edges, out.o_s, out.o_f));
  return out;
}

namespace {

constexpr std::size_t kEmissionCellCap = std::size_t{1} << 26;

std::string tuple_label(const std::vector<LabeledHmm>& children, const std::vector<std::size_t>& status) {
  std::string label;
  for (std::size_t k = 0; k < children.size(); ++k) {
    if (k) label += '|';
    const std::size_t m = children[k].n_states() - 2;
    if (status[k] == m) {
      label += "<S>";
    } else if (status[k] == m + 1) {
      label += "<F>";
    } else {
      const auto& labels = children[k].hmm.labels();
      label += status[k] < labels.size() ? labels[status[k]] : "l" + std::to_string(status[k] + 1);
    }
  }
  return label;
}

}  // namespace

LabeledHmm product_parallel(const std::vector<LabeledHmm>& children, double threshold, std::size_t state_cap) {
  const std::size_t K = children.size();
  if (K < 2) throw Error("parallel needs at least two children");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("parallel threshold outside (0, 1]");
  std::vector<std::size_t> leaves;
  std::vector<std::size_t> symbols;
  std::size_t joint = 1;
  for (const auto& c : children) {
    if (!is_plain_child(c)) throw Error("parallel children must be compiled Retry- and Parallel-free trees");
    leaves.push_back(c.n_states() - 2);
    symbols.push_back(c.hmm.n_symbols());
    if (joint > (std::size_t{1} << 20) / c.hmm.n_symbols()) throw Error("product blow-up: joint alphabet too large");
    joint *= c.hmm.n_symbols();
  }
  const ParallelBlock block = make_parallel_block(leaves, threshold, state_cap);
  const std::size_t n = block.n_states + 2;
  const std::size_t o_s = block.n_states;
  const std::size_t o_f = block.n_states + 1;
  if (n > kEmissionCellCap / joint) throw Error("product blow-up: joint emission table too large");

  EdgeTable edges(n);
  std::vector<std::string> labels(n);
  Matrix b(n, joint);

  // Component emission row of child k in status s.
  const auto component = [&](std::size_t k, std::size_t s) {
    const std::size_t m = leaves[k];
    const std::size_t state = s < m ? s : (s == m ? children[k].o_s : children[k].o_f);
    return children[k].hmm.b().row(state);
  };
  const auto fill_joint = [&](std::size_t row, const std::vector<std::size_t>& status) {
    std::vector<std::size_t> digit(K, 0);
    for (std::size_t x = 0; x < joint; ++x) {
      double p = 1.0;
      for (std::size_t k = 0; k < K && p != 0.0; ++k) p *= component(k, status[k])[digit[k]];
      b(row, x) = p;
      for (std::size_t k = K; k-- > 0;) {
        if (++digit[k] < symbols[k]) break;
        digit[k] = 0;
      }
    }
  };

  for (std::size_t s = 0; s < block.n_states; ++s) {
    const std::vector<std::size_t>& status = block.decode(s);
    labels[s] = tuple_label(children, status);
    fill_joint(s, status);
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < K; ++k) {
      if (!block.finished(k, status[k])) active.push_back(k);
    }
    const std::size_t combos = std::size_t{1} << active.size();
    for (std::size_t c = 0; c < combos; ++c) {
      std::vector<std::size_t> next = status;
      std::string label(K, '.');
      double prob = 1.0;
      for (std::size_t j = 0; j < active.size(); ++j) {
        const std::size_t k = active[j];
        const bool fail = (c >> (active.size() - 1 - j)) & 1U;
        const Transition& e = children[k].edge(status[k], fail ? "F" : "S");
        label[k] = fail ? 'F' : 'S';
        prob *= e.prob;
        next[k] = e.target;
      }
      std::size_t target = block.encode(next);
      if (target == npos) {
        std::size_t successes = 0;
        for (std::size_t k = 0; k < K; ++k) successes += next[k] == leaves[k] ? 1 : 0;
        const double fraction = static_cast<double>(successes) / static_cast<double>(K);
        target = fraction >= threshold ? o_s : o_f;
      }
      edges[s].push_back({std::move(label), target, prob});
    }
  }
  std::vector<std::size_t> done_s(K);
  std::vector<std::size_t> done_f(K);
  for (std::size_t k = 0; k < K; ++k) {
    done_s[k] = leaves[k];
    done_f[k] = leaves[k] + 1;
  }
  fill_joint(o_s, done_s);
  fill_joint(o_f, done_f);
  labels[o_s] = "O_S";
  labels[o_f] = "O_F";

  std::vector<double> pi(n, 0.0);
  pi[0] = 1.0;
  LabeledHmm out;
  out.hmm = Hmm(std::move(pi), transitions_from_edges(edges, o_s, o_f), std::move(b), std::move(labels));
  out.edges = std::move(edges);
  out.o_s = o_s;
  out.o_f = o_f;
  return out;
}

}  // namespace abthmm
