#include "abthmm/model_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "abthmm/error.hpp"

namespace abthmm {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const char* field) {
  if (!j.is_array() || j.size() != rows) throw Error(std::string("field '") + field + "' must have " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = j[r].get<std::vector<double>>();
    if (row.size() != cols) {
      throw Error(std::string("field '") + field + "' row " + std::to_string(r) + " must have " +
                  std::to_string(cols) + " entries");
    }
    std::copy(row.begin(), row.end(), m.row(r).begin());
  }
  return m;
}

Transition parse_edge(const std::string& text, std::size_t n) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error("malformed edge label '" + text + "'");
  Transition t;
  t.label = text.substr(0, colon);
  const char* first = text.data() + colon + 1;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, t.target);
  if (ec != std::errc() || ptr != last || t.target >= n) throw Error("malformed edge target in '" + text + "'");
  return t;
}

}  // namespace

std::string model_to_json(const LabeledHmm& lhmm, int indent) {
  const Hmm& h = lhmm.hmm;
  json j;
  j["n_states"] = h.n_states();
  j["n_symbols"] = h.n_symbols();
  j["pi"] = h.pi();
  j["a"] = matrix_json(h.a());
  j["b"] = matrix_json(h.b());
  j["labels"] = h.labels();
  json labels = json::array();
  json probs = json::array();
  for (const auto& row : lhmm.edges) {
    json l = json::array();
    json p = json::array();
    for (const auto& e : row) {
      l.push_back(e.label + ":" + std::to_string(e.target));
      p.push_back(e.prob);
    }
    labels.push_back(std::move(l));
    probs.push_back(std::move(p));
  }
  j["edge_labels"] = std::move(labels);
  j["edge_probs"] = std::move(probs);
  return j.dump(indent) + "\n";
}

LabeledHmm model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
  try {
    const auto n = j.at("n_states").get<std::size_t>();
    const auto J = j.at("n_symbols").get<std::size_t>();
    auto pi = j.at("pi").get<std::vector<double>>();
    if (pi.size() != n) throw Error("field 'pi' must have " + std::to_string(n) + " entries");
    Matrix a = matrix_from(j.at("a"), n, n, "a");
    Matrix b = matrix_from(j.at("b"), n, J, "b");
    std::vector<std::string> labels;
    if (j.contains("labels")) labels = j["labels"].get<std::vector<std::string>>();
    if (!labels.empty() && labels.size() != n) throw Error("field 'labels' must have " + std::to_string(n) + " entries");

    LabeledHmm out;
    out.hmm = Hmm(std::move(pi), std::move(a), std::move(b), std::move(labels));
    out.edges.resize(n);
    out.o_s = out.o_f = npos;
    if (j.contains("edge_labels")) {
      const json& el = j["edge_labels"];
      if (!el.is_array() || el.size() != n) throw Error("field 'edge_labels' must have " + std::to_string(n) + " rows");
      const json* ep = j.contains("edge_probs") ? &j["edge_probs"] : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        for (const auto& s : el[i]) out.edges[i].push_back(parse_edge(s.get<std::string>(), n));
        if (ep) {
          const auto p = (*ep).at(i).get<std::vector<double>>();
          if (p.size() != out.edges[i].size()) throw Error("edge_probs row " + std::to_string(i) + " does not match edge_labels");
          for (std::size_t e = 0; e < p.size(); ++e) out.edges[i][e].prob = p[e];
        } else {
          std::map<std::size_t, std::size_t> shared;
          for (const auto& e : out.edges[i]) ++shared[e.target];
          for (auto& e : out.edges[i]) e.prob = out.hmm.a()(i, e.target) / static_cast<double>(shared[e.target]);
        }
        if (out.edges[i].empty()) {
          if (out.o_s == npos) out.o_s = i;
          else if (out.o_f == npos) out.o_f = i;
          else throw Error("more than two states without edges");
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (out.hmm.a()(i, i) != 1.0) continue;
        if (out.o_s == npos) out.o_s = i;
        else if (out.o_f == npos) out.o_f = i;
      }
    }
    if (out.o_s == npos || out.o_f == npos) throw Error("model needs two terminal states");
    return out;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const LabeledHmm& lhmm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << model_to_json(lhmm);
  if (!out) throw Error("cannot write " + path.string());
}

LabeledHmm load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return model_from_json(buf.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace abthmm
