#include "abthmm/sim_lab.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "abthmm/error.hpp"
#include "abthmm/random.hpp"

namespace abthmm {

namespace {

std::string number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::size_t draw(const DiscreteDistribution& d, Rng& rng) { return draw_index(d.probs(), rng); }

// Calls fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            if (!failed.exchange(true)) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Rollouts

Dataset rollout_dataset(const AbtDefinition& abt, std::size_t n, std::uint64_t seed) {
  const ValidationReport report = validate_abt(abt);
  if (!report.ok()) throw Error("invalid tree: " + report.violations.front().message);
  const StateLayout layout = compute_layout(abt, default_state_cap());
  Dataset data;
  data.seed = seed;
  data.n_states = layout.n_states;
  std::vector<std::size_t> state_leaf(layout.n_states, npos);
  for (std::size_t leaf = 0; leaf < abt.n_leaves(); ++leaf) {
    if (layout.leaf_state[leaf] != npos) state_leaf[layout.leaf_state[leaf]] = leaf;
  }
  data.runs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const OutcomeSource source = [&](std::size_t leaf) {
      return uniform01(rng) < abt.leaf(leaf).stats.ps ? Outcome::Success : Outcome::Failure;
    };
    TickTrace trace = tick(abt, layout, source);
    Run run;
    run.outcome = trace.result;
    run.states = std::move(trace.states);
    run.states.push_back(trace.result == Outcome::Success ? layout.o_s : layout.o_f);
    run.obs.reserve(run.states.size());
    for (std::size_t s : run.states) {
      if (s == layout.o_s) {
        run.obs.push_back(draw(abt.success_emission(), rng));
      } else if (s == layout.o_f) {
        run.obs.push_back(draw(abt.failure_emission(), rng));
      } else if (layout.state_block[s] == npos) {
        run.obs.push_back(draw(abt.leaf(state_leaf[s]).stats.emission, rng));
      } else {
        const ParallelBlock& block = layout.blocks[layout.state_block[s]];
        const auto& status = block.decode(s - block.first_state);
        std::size_t joint = 0;
        for (std::size_t k = 0; k < status.size(); ++k) {
          const std::size_t m = block.child_leaves[k];
          const DiscreteDistribution& row = status[k] < m    ? abt.leaf(block.child_first_leaf[k] + status[k]).stats.emission
                                            : status[k] == m ? abt.success_emission()
                                                             : abt.failure_emission();
          joint = joint * abt.n_symbols() + draw(row, rng);
        }
        run.obs.push_back(block.symbol_offset + joint);
      }
    }
    data.runs.push_back(std::move(run));
  }
  return data;
}

std::vector<ObservationSequence> observations(const Dataset& data) {
  std::vector<ObservationSequence> out;
  out.reserve(data.runs.size());
  for (const auto& r : data.runs) out.push_back(r.obs);
  return out;
}

std::vector<PsEstimate> estimate_ps(const Dataset& data, const LabeledHmm& lhmm) {
  if (data.runs.empty()) throw Error("estimate_ps needs a non-empty dataset");
  const std::size_t n = lhmm.n_states();
  if (lhmm.edges.size() != n ||
      std::all_of(lhmm.edges.begin(), lhmm.edges.end(), [](const auto& e) { return e.empty(); })) {
    throw Error("estimate_ps needs a model with edge labels");
  }
  std::vector<PsEstimate> out(n);
  std::vector<std::size_t> s_target(n, npos);
  std::vector<std::size_t> f_target(n, npos);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = lhmm.edges[i];
    if (e.size() != 2) continue;
    for (const auto& t : e) {
      if (t.label == "S") s_target[i] = t.target;
      if (t.label == "F") f_target[i] = t.target;
    }
    if (s_target[i] == f_target[i]) s_target[i] = f_target[i] = npos;
  }
  for (const auto& run : data.runs) {
    for (std::size_t t = 0; t + 1 < run.states.size(); ++t) {
      const std::size_t s = run.states[t];
      if (s >= n || s_target[s] == npos) continue;
      const std::size_t next = run.states[t + 1];
      if (next == s_target[s]) {
        ++out[s].visits;
        ++out[s].successes;
      } else if (next == f_target[s]) {
        ++out[s].visits;
      } else {
        throw Error("run contains a transition the model does not have");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model perturbation

LabeledHmm perturb_hmm(const LabeledHmm& lhmm, const PerturbationSpec& spec) {
  if (!(spec.p_tilde >= 0.0 && spec.p_tilde <= 0.5)) throw Error("perturbation must lie in [0, 0.5]");
  if (spec.p_tilde == 0.0) return lhmm;
  Rng rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  const Matrix& a = lhmm.hmm.a();
  Matrix next = a;
  LabeledHmm out = lhmm;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (lhmm.is_terminal(i)) continue;
    const double r = coin(rng) ? 1.0 : -1.0;
    std::vector<std::size_t> nz;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0.0) nz.push_back(j);
    }
    if (nz.size() < 2) continue;
    const double p1 = a(i, nz[0]);
    const double q1 = std::clamp((1.0 + spec.p_tilde * r) * p1, kPerturbFloor, kPerturbCeil);
    next(i, nz[0]) = q1;
    if (nz.size() == 2) {
      next(i, nz[1]) = 1.0 - q1;
    } else {
      const double scale = (1.0 - q1) / (1.0 - p1);
      for (std::size_t k = 1; k < nz.size(); ++k) next(i, nz[k]) = a(i, nz[k]) * scale;
    }
    if (i < out.edges.size()) {
      for (auto& e : out.edges[i]) {
        const auto shared = std::count_if(out.edges[i].begin(), out.edges[i].end(),
                                          [&](const Transition& t) { return t.target == e.target; });
        if (shared == 1) {
          e.prob = next(i, e.target);
        } else if (a(i, e.target) != 0.0) {
          e.prob *= next(i, e.target) / a(i, e.target);
        }
      }
    }
  }
  out.hmm = lhmm.hmm.with_transitions(std::move(next));
  return out;
}

Hmm randomize_hmm(const Hmm& hmm, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = hmm.n_states();
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a(i, j) = uniform01(rng);
      total += a(i, j);
    }
    if (total <= 0.0) {
      for (std::size_t j = 0; j < n; ++j) a(i, j) = 1.0;
      total = static_cast<double>(n);
    }
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= total;
  }
  return hmm.with_transitions(std::move(a));
}

// ---------------------------------------------------------------------------
// Metrics

std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double sed(std::span<const std::size_t> estimate, std::span<const std::size_t> truth) {
  if (truth.empty()) throw Error("sed needs a non-empty reference sequence");
  return static_cast<double>(levenshtein(estimate, truth)) / static_cast<double>(truth.size());
}

double rms_nonzero(const Matrix& ref, const Matrix& est) {
  if (ref.rows() != est.rows() || ref.cols() != est.cols()) throw Error("rms_nonzero needs matrices of one shape");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ref.rows(); ++i) {
    for (std::size_t j = 0; j < ref.cols(); ++j) {
      if (ref(i, j) == 0.0) continue;
      const double d = ref(i, j) - est(i, j);
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw Error("rms_nonzero: reference matrix is all zero");
  return std::sqrt(sum / static_cast<double>(count));
}

namespace {

Node replace_emissions(const Node& node, const std::vector<DiscreteDistribution>& rows) {
  Node out = node;
  if (node.is_leaf()) {
    out.stats.emission = rows.at(node.leaf_index);
    out.stats.source = {EmissionSource::Kind::Gauss, std::nullopt};
    return out;
  }
  for (std::size_t i = 0; i < node.children.size(); ++i) out.children[i] = replace_emissions(node.children[i], rows);
  return out;
}

}  // namespace

AbtDefinition with_synthetic_emissions(const AbtDefinition& abt, double ratio, double sigma) {
  const std::size_t l = abt.n_leaves();
  const SyntheticEmissionSpec spec{l + 2, ratio, sigma, 0};
  const std::vector<DiscreteDistribution> rows = synth_emissions(spec);
  return AbtDefinition(replace_emissions(abt.root(), rows), rows.front().size(), rows[l], rows[l + 1],
                       SyntheticParams{ratio, sigma}, {EmissionSource::Kind::Gauss, l},
                       {EmissionSource::Kind::Gauss, l + 1});
}

// ---------------------------------------------------------------------------
// Sweeps

std::string_view sweep_kind_name(SweepKind kind) noexcept {
  switch (kind) {
    case SweepKind::Forward: return "forward";
    case SweepKind::Viterbi: return "viterbi";
    case SweepKind::BaumWelch: return "bw";
  }
  return "?";
}

SweepKind parse_sweep_kind(std::string_view name) {
  if (name == "forward") return SweepKind::Forward;
  if (name == "viterbi") return SweepKind::Viterbi;
  if (name == "bw") return SweepKind::BaumWelch;
  throw Error("unknown sweep kind '" + std::string(name) + "' (forward, viterbi, bw)");
}

std::string Perturbation::to_string() const { return random ? "random" : number(p_tilde); }

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view s, std::string_view key) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("config key '" + std::string(key) + "': '" + std::string(s) + "' is not a number");
  }
  return v;
}

std::uint64_t to_uint(std::string_view s, std::string_view key) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("config key '" + std::string(key) + "': '" + std::string(s) + "' is not a non-negative integer");
  }
  return v;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

Perturbation parse_perturbation(std::string_view text) {
  text = trim(text);
  if (text == "random") return {true, 0.0};
  const double p = to_double(text, "perturbations");
  if (!(p >= 0.0 && p <= 0.5)) throw Error("perturbation " + std::string(text) + " outside [0, 0.5]");
  return {false, p};
}

SweepConfig parse_sweep_config(std::string_view text, const std::filesystem::path& base_dir) {
  SweepConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_model = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view l = line;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw Error("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key(trim(l.substr(0, eq)));
    const std::string_view value = trim(l.substr(eq + 1));
    if (key == "model") {
      std::filesystem::path p{std::string(value)};
      cfg.model = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      have_model = true;
    } else if (key == "ratios") {
      cfg.ratios.clear();
      for (auto item : split_list(value)) {
        const double r = to_double(item, key);
        if (!(r >= 0.0)) throw Error("ratio must be non-negative");
        cfg.ratios.push_back(r);
      }
    } else if (key == "perturbations") {
      cfg.perturbations.clear();
      for (auto item : split_list(value)) cfg.perturbations.push_back(parse_perturbation(item));
    } else if (key == "n_sequences") {
      cfg.n_sequences = static_cast<std::size_t>(to_uint(value, key));
    } else if (key == "master_seed") {
      cfg.master_seed = to_uint(value, key);
    } else if (key == "sigma") {
      cfg.sigma = to_double(value, key);
      if (!(cfg.sigma > 0.0)) throw Error("sigma must be positive");
    } else if (key == "bw_max_iters") {
      cfg.bw_max_iters = static_cast<int>(to_uint(value, key));
    } else if (key == "bw_tol") {
      cfg.bw_tol = to_double(value, key);
    } else if (key == "bw_update") {
      if (value == "a") cfg.bw_update_all = false;
      else if (value == "all") cfg.bw_update_all = true;
      else throw Error("bw_update must be 'a' or 'all'");
    } else if (key == "threads") {
      cfg.threads = static_cast<unsigned>(to_uint(value, key));
    } else {
      throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!have_model) throw Error("config is missing 'model'");
  if (cfg.ratios.empty() || cfg.perturbations.empty()) throw Error("sweep grid is empty");
  if (cfg.n_sequences == 0) throw Error("n_sequences must be positive");
  return cfg;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sweep_config(buf.str(), path.parent_path());
}

namespace {

constexpr std::uint64_t kPerturbStream = 0x70657274ULL;

}  // namespace

SweepResult run_sweep(const AbtDefinition& abt, const SweepConfig& cfg, SweepKind kind) {
  if (cfg.ratios.empty() || cfg.perturbations.empty()) throw Error("sweep grid is empty");
  SweepResult result;
  const std::uint64_t perturb_seed = derive_seed(cfg.master_seed, kPerturbStream);
  for (std::size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
    const double ratio = cfg.ratios[ri];
    const AbtDefinition tree = with_synthetic_emissions(abt, ratio, cfg.sigma);
    const LabeledHmm reference = compile(tree, {default_state_cap()});
    const std::uint64_t data_seed = derive_seed(cfg.master_seed, ri);
    const Dataset data = rollout_dataset(tree, cfg.n_sequences, data_seed);
    const std::vector<ObservationSequence> obs = observations(data);
    const double n = static_cast<double>(obs.size());

    for (const Perturbation& p : cfg.perturbations) {
      const Hmm init = p.random ? randomize_hmm(reference.hmm, perturb_seed)
                                : perturb_hmm(reference, {p.p_tilde, perturb_seed}).hmm;
      MetricRow row;
      row.kind = kind;
      row.ratio = ratio;
      row.perturbation = p;
      row.n_states = reference.n_states();
      row.n_seqs = obs.size();
      row.seed = data_seed;
      switch (kind) {
        case SweepKind::Forward: {
          std::vector<double> lp(obs.size());
          parallel_for(obs.size(), cfg.threads, [&](std::size_t i) { lp[i] = forward_log_prob(init, obs[i]); });
          double total = 0.0;
          for (double v : lp) total += v;
          row.logp_per_seq = total / n;
          break;
        }
        case SweepKind::Viterbi: {
          std::vector<double> d(obs.size());
          parallel_for(obs.size(), cfg.threads, [&](std::size_t i) {
            d[i] = sed(viterbi_decode(init, obs[i]).states, data.runs[i].states);
          });
          double total = 0.0;
          for (double v : d) total += v;
          row.mean_sed = total / n;
          break;
        }
        case SweepKind::BaumWelch: {
          FitOptions opts;
          opts.max_iters = cfg.bw_max_iters;
          opts.tol = cfg.bw_tol;
          opts.update_pi = cfg.bw_update_all;
          opts.update_a = true;
          opts.update_b = cfg.bw_update_all;
          opts.threads = cfg.threads;
          FitResult fit = baum_welch_fit(init, obs, opts);
          row.rms_error = rms_nonzero(reference.hmm.a(), fit.model.a());
          row.bw_iters = fit.history.iterations;
          row.final_logp = fit.history.log_likelihood.back() / n;
          row.logp_per_seq = fit.history.log_likelihood.front() / n;
          result.histories.push_back(std::move(fit.history));
          break;
        }
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_metric_csv(std::ostream& out, std::span<const MetricRow> rows) {
  const auto opt = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };
  out << kMetricCsvHeader << '\n';
  for (const auto& r : rows) {
    out << sweep_kind_name(r.kind) << ',' << number(r.ratio) << ',' << r.perturbation.to_string() << ','
        << r.n_states << ',' << r.n_seqs << ',' << r.seed << ',' << opt(r.logp_per_seq) << ',' << opt(r.mean_sed)
        << ',' << opt(r.rms_error) << ',' << (r.bw_iters ? std::to_string(*r.bw_iters) : std::string()) << ','
        << opt(r.final_logp) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Divergence table

std::vector<DivergenceRow> divergence_table(std::span<const std::size_t> sizes, std::span<const double> ratios,
                                            double sigma, std::size_t gap) {
  std::vector<DivergenceRow> out;
  for (std::size_t n : sizes) {
    if (gap == 0 || gap >= n) throw Error("row gap must lie in [1, N)");
    for (double r : ratios) {
      const auto rows = synth_emissions({n, r, sigma, 0});
      DivergenceRow row;
      row.ratio = r;
      row.n_states = n;
      row.kld = kl_divergence(rows[0], rows[gap]);
      row.jsd = js_divergence(rows[0], rows[gap]);
      row.jsd_all = jsd_all(rows);
      out.push_back(row);
    }
  }
  return out;
}

void write_divergence_csv(std::ostream& out, std::span<const DivergenceRow> rows) {
  out << "ratio,n_states,kld,jsd,jsd_all\n";
  for (const auto& r : rows) {
    out << number(r.ratio) << ',' << r.n_states << ',' << number(r.kld) << ',' << number(r.jsd) << ','
        << number(r.jsd_all) << '\n';
  }
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "run,length,outcome,states,symbols\n";
  for (std::size_t i = 0; i < data.runs.size(); ++i) {
    const Run& r = data.runs[i];
    out << i << ',' << r.states.size() << ',' << (r.outcome == Outcome::Success ? "O_S" : "O_F") << ',';
    for (std::size_t k = 0; k < r.states.size(); ++k) out << (k ? " " : "") << r.states[k];
    out << ',';
    for (std::size_t k = 0; k < r.obs.size(); ++k) out << (k ? " " : "") << r.obs[k];
    out << '\n';
  }
}

}  // namespace abthmm
