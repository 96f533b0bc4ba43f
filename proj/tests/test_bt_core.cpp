#include <doctest.h>

#include <fstream>
#include <sstream>

#include "abthmm/bt_core.hpp"
#include "abthmm/error.hpp"
#include "support.hpp"

using namespace abthmm;
using abthmm::testing::random_canonical_tree;

namespace {

const char* kExemplar6 = R"(
(alphabet 1)
(sequence
  (leaf l1 :ps 0.5 :emit (table 1))
  (leaf l2 :ps 0.5 :emit (table 1))
  (selector
    (leaf l3 :ps 0.5 :emit (table 1))
    (leaf l4 :ps 0.5 :emit (table 1))))
)";

std::string leaf(const std::string& name, double ps = 0.5) {
  std::ostringstream s;
  s << "(leaf " << name << " :ps " << ps << " :emit (table 1))";
  return s.str();
}

std::vector<Outcome> outcomes_from_mask(std::size_t l, std::size_t mask) {
  std::vector<Outcome> o(l);
  for (std::size_t i = 0; i < l; ++i) o[i] = (mask >> i) & 1U ? Outcome::Failure : Outcome::Success;
  return o;
}

}  // namespace

TEST_CASE("parse minimal tree") {
  const AbtDefinition abt = parse_abt("(sequence (leaf a :ps 1.0 :emit (table 1.0)) )");
  CHECK(abt.n_leaves() == 1);
  CHECK(abt.leaf(0).name == "a");
  CHECK(abt.leaf(0).leaf_index == 0);
  CHECK(abt.o_s() == 1);
  CHECK(abt.o_f() == 2);
  CHECK(abt.n_symbols() == 1);
}

TEST_CASE("parse four-leaf example") {
  const AbtDefinition abt = parse_abt(kExemplar6);
  CHECK(abt.n_leaves() == 4);
  CHECK(abt.o_s() == 4);
  CHECK(abt.o_f() == 5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(abt.leaf(i).name == "l" + std::to_string(i + 1));
  CHECK(validate_abt(abt).ok());
}

TEST_CASE("shipped exemplars parse") {
  const auto ex6 = load_abt(abthmm::testing::data_dir() / "exemplar6.abt");
  CHECK(ex6.n_leaves() == 4);
  CHECK(is_canonical(ex6.root()));
  const auto ex = load_abt(abthmm::testing::data_dir() / "exemplar16.abt");
  CHECK(ex.n_leaves() == 14);
  CHECK(is_canonical(ex.root()));
}

TEST_CASE("parse errors") {
  CHECK_THROWS_WITH_AS(parse_abt("(leaf a :ps 1.5 :emit (table 1))"), doctest::Contains("out of range"), Error);
  CHECK_THROWS_AS(parse_abt("(sequence (leaf a :ps 0.5 :emit (table 0.5 0.4)))"), Error);
  CHECK_THROWS_WITH_AS(parse_abt("(sequence " + leaf("a") + " " + leaf("a") + ")"), doctest::Contains("duplicate"), Error);
  CHECK_THROWS_AS(parse_abt("(loop " + leaf("a") + ")"), ParseError);
  CHECK_THROWS_AS(parse_abt(""), ParseError);
  CHECK_THROWS_AS(parse_abt("(sequence (leaf a :ps 0.5 :emit (table 1))"), ParseError);
  CHECK_THROWS_AS(parse_abt("(sequence (leaf a :ps x :emit (table 1)))"), ParseError);
  CHECK_THROWS_AS(parse_abt(leaf("a") + " " + leaf("b")), ParseError);

  try {
    parse_abt("(sequence\n  (leaf a :ps 0.5 :emit (table 1))\n  (bogus))");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 4);
  }
}

TEST_CASE("comments and whitespace") {
  const AbtDefinition a = parse_abt("; leading comment\n(selector ; inline\n " + leaf("x") + "\n\t" + leaf("y") + ")");
  CHECK(a.n_leaves() == 2);
  CHECK(a.root().kind == NodeKind::Selector);
}

TEST_CASE("gauss rows and default outputs") {
  const AbtDefinition a = parse_abt("(ratio 5) (sequence (leaf a :ps 0.5 :emit (gauss)) (leaf b :ps 0.5 :emit (gauss)))");
  CHECK(a.n_symbols() == default_symbol_count(4, 5.0, 2.0));
  CHECK(a.leaf(1).stats.emission == synthetic_row(1, 5.0, 2.0, a.n_symbols()));
  CHECK(a.success_emission() == synthetic_row(2, 5.0, 2.0, a.n_symbols()));
  CHECK(a.failure_emission() == synthetic_row(3, 5.0, 2.0, a.n_symbols()));
  CHECK_THROWS_AS(parse_abt("(alphabet 10) (ratio 5) (sequence (leaf a :ps 0.5 :emit (gauss)) (leaf b :ps 0.5 :emit (gauss)))"), ParseError);
}

TEST_CASE("validation findings") {
  const DiscreteDistribution one({1.0});
  SUBCASE("empty composite") {
    std::vector<Node> kids;
    kids.push_back(Node::leaf("a", 0.5, one));
    kids.push_back(Node::sequence({}));
    const AbtDefinition abt(Node::selector(std::move(kids)), 1, one, one);
    const auto report = validate_abt(abt);
    REQUIRE_FALSE(report.ok());
    CHECK(report.to_string().find("empty composite") != std::string::npos);
  }
  SUBCASE("parallel threshold zero") {
    std::vector<Node> kids;
    kids.push_back(Node::leaf("a", 0.5, one));
    kids.push_back(Node::leaf("b", 0.5, one));
    const AbtDefinition abt(Node::parallel(0.0, std::move(kids)), 1, one, one);
    CHECK_FALSE(validate_abt(abt).ok());
  }
  SUBCASE("parallel child with retry") {
    std::vector<Node> kids;
    kids.push_back(Node::retry(Node::leaf("a", 0.5, one)));
    kids.push_back(Node::leaf("b", 0.5, one));
    const AbtDefinition abt(Node::parallel(1.0, std::move(kids)), 1, one, one);
    CHECK_FALSE(validate_abt(abt).ok());
  }
  SUBCASE("nested retry on one first leaf") {
    std::vector<Node> kids;
    kids.push_back(Node::retry(Node::leaf("a", 0.5, one)));
    kids.push_back(Node::leaf("b", 0.5, one));
    const AbtDefinition abt(Node::retry(Node::sequence(std::move(kids))), 1, one, one);
    CHECK_FALSE(validate_abt(abt).ok());
  }
  SUBCASE("emission size") {
    const AbtDefinition abt(Node::leaf("a", 0.5, DiscreteDistribution({0.5, 0.5})), 1, one, one);
    CHECK_FALSE(validate_abt(abt).ok());
  }
}

TEST_CASE("successor map examples") {
  const AbtDefinition ex6 = parse_abt(kExemplar6);
  const auto succ = successor_map(ex6);
  CHECK(succ[0] == Successors{1, 5});
  CHECK(succ[1] == Successors{2, 5});
  CHECK(succ[2] == Successors{4, 3});
  CHECK(succ[3] == Successors{4, 5});

  const auto single = successor_map(parse_abt(leaf("a")));
  CHECK(single[0] == Successors{1, 2});

  const auto seq = successor_map(parse_abt("(sequence " + leaf("a") + leaf("b") + leaf("c") + ")"));
  CHECK(seq[0] == Successors{1, 4});
  CHECK(seq[1] == Successors{2, 4});
  CHECK(seq[2] == Successors{3, 4});

  CHECK_THROWS_AS(successor_map(parse_abt("(retry " + leaf("a") + ")")), Error);
}

TEST_CASE("successor map matches tick on a pure sequence") {
  // Oracle: enumerate all 2^3 outcome assignments and record transitions.
  const AbtDefinition abt = parse_abt("(sequence " + leaf("a") + leaf("b") + leaf("c") + ")");
  const auto succ = successor_map(abt);
  for (std::size_t mask = 0; mask < 8; ++mask) {
    const auto o = outcomes_from_mask(3, mask);
    const TickTrace t = tick(abt, o);
    for (std::size_t k = 0; k + 1 < t.visited.size(); ++k) {
      CHECK(succ[t.visited[k].leaf].target(t.visited[k].outcome) == t.visited[k + 1].leaf);
    }
  }
}

TEST_CASE("tick examples") {
  const AbtDefinition ex6 = parse_abt(kExemplar6);
  const std::vector<Outcome> all_s(4, Outcome::Success);
  const TickTrace t = tick(ex6, all_s);
  REQUIRE(t.visited.size() == 3);
  CHECK(t.visited[0].leaf == 0);
  CHECK(t.visited[1].leaf == 1);
  CHECK(t.visited[2].leaf == 2);
  CHECK(t.result == Outcome::Success);

  const std::vector<Outcome> f{Outcome::Failure};
  const TickTrace single = tick(parse_abt(leaf("a")), f);
  REQUIRE(single.visited.size() == 1);
  CHECK(single.visited[0] == Visit{0, Outcome::Failure});
  CHECK(single.result == Outcome::Failure);

  const std::vector<Outcome> first_fails{Outcome::Failure, Outcome::Success, Outcome::Success, Outcome::Success};
  const TickTrace early = tick(ex6, first_fails);
  CHECK(early.visited.size() == 1);
  CHECK(early.result == Outcome::Failure);
}

TEST_CASE("tick retry loops until success or the step cap") {
  const AbtDefinition r = parse_abt("(retry " + leaf("a") + ")");
  const std::vector<Outcome> fail{Outcome::Failure};
  CHECK_THROWS_AS(tick(r, fail), Error);
  int calls = 0;
  const StateLayout layout = compute_layout(r);
  const TickTrace t = tick(r, layout, [&](std::size_t) { return ++calls < 4 ? Outcome::Failure : Outcome::Success; });
  CHECK(t.visited.size() == 4);
  CHECK(t.result == Outcome::Success);
}

TEST_CASE("tick parallel runs children in lockstep") {
  const AbtDefinition p =
      parse_abt("(parallel :threshold 0.5 (sequence " + leaf("a") + leaf("b") + ") " + leaf("c") + ")");
  const std::vector<Outcome> o{Outcome::Success, Outcome::Failure, Outcome::Success};
  const TickTrace t = tick(p, o);
  CHECK(t.result == Outcome::Success);
  CHECK(t.states.size() == 2);
  const StateLayout layout = compute_layout(p);
  const auto& block = layout.blocks[0];
  CHECK(block.n_active == 2);
  CHECK(layout.state_labels[t.states[0]] == "a|c");
  CHECK(layout.state_labels[t.states[1]] == "b|<S>");
}

TEST_CASE("layout cap") {
  std::string kids;
  for (int k = 0; k < 3; ++k) {
    kids += "(sequence";
    for (int i = 0; i < 20; ++i) kids += leaf("x" + std::to_string(k) + "_" + std::to_string(i));
    kids += ")";
  }
  const AbtDefinition big = parse_abt("(parallel :threshold 1 " + kids + ")");
  CHECK_THROWS_WITH_AS(compute_layout(big), doctest::Contains("product blow-up"), Error);
  CHECK_NOTHROW(compute_layout(big, 20000));
}

TEST_CASE("canonicalize flattens and unwraps") {
  const AbtDefinition messy =
      parse_abt("(sequence " + leaf("a") + "(sequence " + leaf("b") + "(selector (sequence " + leaf("c") + leaf("d") + "))))");
  const Node canon = canonicalize(messy.root());
  CHECK(is_canonical(canon));
  CHECK(canon.kind == NodeKind::Sequence);
  CHECK(canon.children.size() == 4);
  CHECK_FALSE(is_canonical(messy.root()));
}

TEST_CASE("property: visits strictly increase and agree with the successor map") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t l = 1 + static_cast<std::size_t>(uniform01(rng) * 10);
    const AbtDefinition abt = random_canonical_tree(l, 1, rng);
    const auto succ = successor_map(abt);
    for (std::size_t mask = 0; mask < (std::size_t{1} << l); ++mask) {
      const auto o = outcomes_from_mask(l, mask);
      const TickTrace t = tick(abt, o);
      REQUIRE_FALSE(t.visited.empty());
      for (std::size_t k = 0; k + 1 < t.visited.size(); ++k) {
        REQUIRE(t.visited[k + 1].leaf > t.visited[k].leaf);
        REQUIRE(succ[t.visited[k].leaf].target(t.visited[k].outcome) == t.visited[k + 1].leaf);
      }
      const Visit last = t.visited.back();
      const std::size_t exit = succ[last.leaf].target(last.outcome);
      REQUIRE(exit == (t.result == Outcome::Success ? abt.o_s() : abt.o_f()));
      for (std::size_t j = 0; j < l; ++j) {
        REQUIRE(succ[j].on_success > j);
        REQUIRE(succ[j].on_failure > j);
      }
    }
  }
}

TEST_CASE("property: a sequential pathway exists") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t l = 1 + static_cast<std::size_t>(uniform01(rng) * 14);
    const AbtDefinition abt = random_canonical_tree(l, 1, rng);
    const auto succ = successor_map(abt);
    std::vector<Outcome> o(l);
    for (std::size_t j = 0; j < l; ++j) o[j] = succ[j].on_success == j + 1 ? Outcome::Success : Outcome::Failure;
    const TickTrace t = tick(abt, o);
    REQUIRE(t.visited.size() == l);
    for (std::size_t j = 0; j < l; ++j) REQUIRE(t.visited[j].leaf == j);
  }
}

TEST_CASE("property: canonicalization preserves the successor map") {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t next = 0;
    const std::size_t l = 1 + static_cast<std::size_t>(uniform01(rng) * 9);
    const Node messy = abthmm::testing::random_messy_node(l, next, rng);
    const DiscreteDistribution one({1.0});
    const AbtDefinition a(messy, 1, one, one);
    if (!validate_abt(a).ok()) continue;
    const AbtDefinition c = canonicalize(a);
    CHECK(is_canonical(c.root()));
    CHECK(successor_map(a) == successor_map(c));
    CHECK(canonicalize(c.root()) == c.root());
  }
}

TEST_CASE("property: parse of serialize is the identity") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t l = 1 + static_cast<std::size_t>(uniform01(rng) * 12);
    const AbtDefinition abt = random_canonical_tree(l, 1 + static_cast<std::size_t>(uniform01(rng) * 5), rng);
    const std::string text = serialize_abt(abt);
    const AbtDefinition back = parse_abt(text);
    REQUIRE(back == abt);
    REQUIRE(serialize_abt(back) == text);
  }
  for (const char* file : {"exemplar6.abt", "exemplar16.abt"}) {
    const AbtDefinition abt = load_abt(abthmm::testing::data_dir() / file);
    const std::string text = serialize_abt(abt);
    CHECK(parse_abt(text) == abt);
    CHECK(text.find("(gauss)") != std::string::npos);
  }
  const AbtDefinition mixed = parse_abt(
      "(alphabet 2) (outputs (table 1 0) (table 0 1)) (sequence (retry (leaf a :ps 0.25 :emit (table 0.5 0.5)))"
      " (parallel :threshold 0.5 (leaf b :ps 0.5 :emit (table 0.5 0.5)) (leaf c :ps 0.75 :emit (table 1 0))))");
  CHECK(parse_abt(serialize_abt(mixed)) == mixed);
}
