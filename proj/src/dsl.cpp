#include <charconv>
#include <fstream>
#include <sstream>

#include "abthmm/bt_core.hpp"
#include "abthmm/error.hpp"

namespace abthmm {

namespace {

struct Token {
  enum class Kind { Open, Close, Atom, End } kind;
  std::string text;
  std::size_t line;
  std::size_t column;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skip();
    if (pos_ >= text_.size()) return {Token::Kind::End, "", line_, col_};
    const std::size_t line = line_;
    const std::size_t col = col_;
    const char c = text_[pos_];
    if (c == '(' || c == ')') {
      advance();
      return {c == '(' ? Token::Kind::Open : Token::Kind::Close, std::string(1, c), line, col};
    }
    std::string atom;
    while (pos_ < text_.size() && !is_delim(text_[pos_])) {
      atom += text_[pos_];
      advance();
    }
    return {Token::Kind::Atom, std::move(atom), line, col};
  }

 private:
  static bool is_delim(char c) {
    return c == '(' || c == ')' || c == ';' || c == ' ' || c == '\t' || c == '\n' || c == '\r';
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

struct RawDist {
  bool gauss = false;
  std::optional<std::size_t> index;
  std::vector<double> table;
  std::size_t line = 0;
  std::size_t column = 0;
};

struct RawNode {
  NodeKind kind = NodeKind::Leaf;
  std::string name;
  double ps = 0.0;
  double threshold = 1.0;
  RawDist emit;
  std::vector<RawNode> children;
  std::size_t line = 0;
  std::size_t column = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { bump(); }

  AbtDefinition parse() {
    while (tok_.kind == Token::Kind::Open) {
      const Token open = tok_;
      bump();
      const Token head = expect_atom("node or header keyword");
      if (head.text == "alphabet") {
        if (alphabet_) fail(head, "duplicate alphabet header");
        alphabet_ = parse_count(expect_atom("alphabet size"));
        if (*alphabet_ == 0) fail(head, "alphabet must be non-empty");
        expect_close();
      } else if (head.text == "ratio") {
        synthetic_.ratio = parse_float(expect_atom("ratio"));
        expect_close();
      } else if (head.text == "sigma") {
        synthetic_.sigma = parse_float(expect_atom("sigma"));
        if (!(synthetic_.sigma > 0.0)) fail(head, "sigma must be positive");
        expect_close();
      } else if (head.text == "outputs") {
        if (outputs_) fail(head, "duplicate outputs header");
        RawDist s = parse_dist(true);
        RawDist f = parse_dist(true);
        outputs_ = {std::move(s), std::move(f)};
        expect_close();
      } else {
        RawNode root = parse_node_body(open, head);
        if (tok_.kind != Token::Kind::End) fail(tok_, "unexpected input after the root node");
        return build(root);
      }
    }
    if (tok_.kind == Token::Kind::End) fail(tok_, "missing root node");
    fail(tok_, "expected '('");
  }

 private:
  [[noreturn]] static void fail(const Token& at, const std::string& message) {
    throw ParseError(message, at.line, at.column);
  }
  [[noreturn]] static void fail_at(std::size_t line, std::size_t column, const std::string& message) {
    throw ParseError(message, line, column);
  }

  void bump() { tok_ = lexer_.next(); }

  Token expect_atom(const char* what) {
    if (tok_.kind != Token::Kind::Atom) fail(tok_, std::string("expected ") + what);
    Token t = tok_;
    bump();
    return t;
  }

  void expect_open(const char* what) {
    if (tok_.kind != Token::Kind::Open) fail(tok_, std::string("expected '(' to start ") + what);
    bump();
  }

  void expect_close() {
    if (tok_.kind != Token::Kind::Close) fail(tok_, "expected ')'");
    bump();
  }

  static double parse_float(const Token& t) {
    double v = 0.0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) fail(t, "expected a number, got '" + t.text + "'");
    return v;
  }

  static std::size_t parse_count(const Token& t) {
    std::size_t v = 0;
    const char* first = t.text.data();
    const char* last = first + t.text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) fail(t, "expected a non-negative integer, got '" + t.text + "'");
    return v;
  }

  RawDist parse_dist(bool output) {
    RawDist d;
    d.line = tok_.line;
    d.column = tok_.column;
    expect_open("an emission row");
    const Token head = expect_atom("'table' or 'gauss'");
    if (head.text == "table") {
      while (tok_.kind == Token::Kind::Atom) d.table.push_back(parse_float(expect_atom("probability")));
      if (d.table.empty()) fail(tok_, "table needs at least one probability");
    } else if (head.text == "gauss") {
      d.gauss = true;
      if (tok_.kind == Token::Kind::Atom) d.index = parse_count(expect_atom("row index"));
      if (output && !d.index) fail(head, "output rows need an explicit (gauss index)");
    } else {
      fail(head, "unknown emission form '" + head.text + "'");
    }
    expect_close();
    return d;
  }

  RawNode parse_node() {
    const Token open = tok_;
    expect_open("a node");
    const Token head = expect_atom("node keyword");
    return parse_node_body(open, head);
  }

  // Called after "(" and the keyword have been consumed.
  RawNode parse_node_body(const Token& open, const Token& head) {
    RawNode n;
    n.line = open.line;
    n.column = open.column;
    if (head.text == "leaf") {
      n.kind = NodeKind::Leaf;
      n.name = expect_atom("leaf name").text;
      bool have_ps = false;
      bool have_emit = false;
      while (tok_.kind == Token::Kind::Atom) {
        const Token key = expect_atom("attribute");
        if (key.text == ":ps") {
          if (have_ps) fail(key, "duplicate :ps");
          n.ps = parse_float(expect_atom("ps value"));
          have_ps = true;
        } else if (key.text == ":emit") {
          if (have_emit) fail(key, "duplicate :emit");
          n.emit = parse_dist(false);
          have_emit = true;
        } else {
          fail(key, "unknown leaf attribute '" + key.text + "'");
        }
      }
      if (!have_ps) fail(tok_, "leaf '" + n.name + "' is missing :ps");
      if (!have_emit) fail(tok_, "leaf '" + n.name + "' is missing :emit");
      expect_close();
      return n;
    }
    if (head.text == "sequence") {
      n.kind = NodeKind::Sequence;
    } else if (head.text == "selector") {
      n.kind = NodeKind::Selector;
    } else if (head.text == "retry") {
      n.kind = NodeKind::Retry;
    } else if (head.text == "parallel") {
      n.kind = NodeKind::Parallel;
      const Token key = expect_atom(":threshold");
      if (key.text != ":threshold") fail(key, "expected :threshold");
      n.threshold = parse_float(expect_atom("threshold value"));
    } else {
      fail(head, "unknown node keyword '" + head.text + "'");
    }
    while (tok_.kind == Token::Kind::Open) n.children.push_back(parse_node());
    expect_close();
    return n;
  }

  static void collect(const RawNode& n, std::vector<const RawNode*>& leaves) {
    if (n.kind == NodeKind::Leaf) {
      leaves.push_back(&n);
      return;
    }
    for (const auto& c : n.children) collect(c, leaves);
  }

  DiscreteDistribution resolve(const RawDist& d, std::size_t default_index, std::size_t J) const {
    try {
      if (d.gauss) return synthetic_row(d.index.value_or(default_index), synthetic_.ratio, synthetic_.sigma, J);
      if (d.table.size() != J) {
        fail_at(d.line, d.column,
                "emission has " + std::to_string(d.table.size()) + " entries, alphabet has " + std::to_string(J));
      }
      return DiscreteDistribution(d.table);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      fail_at(d.line, d.column, e.what());
    }
  }

  static EmissionSource source_of(const RawDist& d) {
    if (!d.gauss) return {};
    return {EmissionSource::Kind::Gauss, d.index};
  }

  Node build_node(const RawNode& raw, std::size_t& next_leaf, std::size_t J) const {
    if (raw.kind == NodeKind::Leaf) {
      const std::size_t index = next_leaf++;
      Node n = Node::leaf(raw.name, raw.ps, resolve(raw.emit, index, J));
      n.stats.source = source_of(raw.emit);
      return n;
    }
    std::vector<Node> children;
    for (const auto& c : raw.children) children.push_back(build_node(c, next_leaf, J));
    Node n;
    n.kind = raw.kind;
    n.threshold = raw.threshold;
    n.children = std::move(children);
    return n;
  }

  AbtDefinition build(const RawNode& root) const {
    std::vector<const RawNode*> leaves;
    collect(root, leaves);
    const std::size_t l = leaves.size();

    std::size_t J = 0;
    if (alphabet_) {
      J = *alphabet_;
    } else {
      for (const RawNode* leaf : leaves) {
        if (!leaf->emit.gauss) {
          J = leaf->emit.table.size();
          break;
        }
      }
      if (J == 0 && outputs_) {
        if (!outputs_->first.gauss) J = outputs_->first.table.size();
        else if (!outputs_->second.gauss) J = outputs_->second.table.size();
      }
      if (J == 0) J = default_symbol_count(l + 2, synthetic_.ratio, synthetic_.sigma);
    }

    std::size_t next_leaf = 0;
    Node tree = build_node(root, next_leaf, J);

    DiscreteDistribution out_s;
    DiscreteDistribution out_f;
    EmissionSource src_s;
    EmissionSource src_f;
    if (outputs_) {
      out_s = resolve(outputs_->first, l, J);
      out_f = resolve(outputs_->second, l + 1, J);
      src_s = source_of(outputs_->first);
      src_f = source_of(outputs_->second);
    } else {
      out_s = gaussian_row(synthetic_center(l, synthetic_.ratio, synthetic_.sigma), synthetic_.sigma, J);
      out_f = gaussian_row(synthetic_center(l + 1, synthetic_.ratio, synthetic_.sigma), synthetic_.sigma, J);
      const double top = synthetic_center(l + 1, synthetic_.ratio, synthetic_.sigma) + 4.0 * synthetic_.sigma;
      if (top <= static_cast<double>(J)) {
        src_s = {EmissionSource::Kind::Gauss, l};
        src_f = {EmissionSource::Kind::Gauss, l + 1};
      }
    }

    AbtDefinition abt(std::move(tree), J, std::move(out_s), std::move(out_f), synthetic_, src_s, src_f);
    const ValidationReport report = validate_abt(abt);
    if (!report.ok()) {
      const Violation& v = report.violations.front();
      std::string message = v.where + ": " + v.message;
      if (report.violations.size() > 1) {
        message += " (and " + std::to_string(report.violations.size() - 1) + " more)";
      }
      throw Error(message);
    }
    return abt;
  }

  Lexer lexer_;
  Token tok_{Token::Kind::End, "", 1, 1};
  std::optional<std::size_t> alphabet_;
  SyntheticParams synthetic_;
  std::optional<std::pair<RawDist, RawDist>> outputs_;
};

// ---------------------------------------------------------------------------

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string dist_text(const DiscreteDistribution& d, const EmissionSource& src) {
  if (src.kind == EmissionSource::Kind::Gauss) {
    return src.index ? "(gauss " + std::to_string(*src.index) + ")" : "(gauss)";
  }
  std::string s = "(table";
  for (double p : d.probs()) s += " " + number(p);
  return s + ")";
}

bool uses_gauss(const Node& n) {
  if (n.is_leaf()) return n.stats.source.kind == EmissionSource::Kind::Gauss;
  for (const auto& c : n.children) {
    if (uses_gauss(c)) return true;
  }
  return false;
}

void write_node(const Node& n, std::size_t depth, std::string& out) {
  out.append(2 * depth, ' ');
  if (n.is_leaf()) {
    out += "(leaf " + n.name + " :ps " + number(n.stats.ps) + " :emit " + dist_text(n.stats.emission, n.stats.source) + ")";
    return;
  }
  out += "(" + std::string(kind_name(n.kind));
  if (n.kind == NodeKind::Parallel) out += " :threshold " + number(n.threshold);
  for (const auto& c : n.children) {
    out += '\n';
    write_node(c, depth + 1, out);
  }
  out += ')';
}

}  // namespace

AbtDefinition parse_abt(std::string_view text) { return Parser(text).parse(); }

AbtDefinition load_abt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_abt(buf.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string serialize_abt(const AbtDefinition& abt) {
  std::string out = "(alphabet " + std::to_string(abt.n_symbols()) + ")\n";
  const bool gauss = uses_gauss(abt.root()) || abt.success_source().kind == EmissionSource::Kind::Gauss ||
                     abt.failure_source().kind == EmissionSource::Kind::Gauss;
  if (gauss) {
    out += "(ratio " + number(abt.synthetic().ratio) + ")\n";
    out += "(sigma " + number(abt.synthetic().sigma) + ")\n";
  }
  out += "(outputs " + dist_text(abt.success_emission(), abt.success_source()) + " " +
         dist_text(abt.failure_emission(), abt.failure_source()) + ")\n";
  write_node(abt.root(), 0, out);
  out += '\n';
  return out;
}

}  // namespace abthmm
