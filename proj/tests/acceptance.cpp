// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance [data_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "abthmm/compiler.hpp"
#include "abthmm/divergence.hpp"
#include "abthmm/error.hpp"
#include "abthmm/hmm.hpp"
#include "abthmm/sim_lab.hpp"
#include "support.hpp"

using namespace abthmm;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240501;

struct Verdict {
  std::vector<std::string> problems;
  std::ostringstream detail;

  bool pass() const { return problems.empty(); }
  void require(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
  std::string text() const {
    if (pass()) return detail.str();
    std::string out;
    for (std::size_t i = 0; i < problems.size() && i < 4; ++i) out += (i ? "; " : "") + problems[i];
    if (problems.size() > 4) out += "; +" + std::to_string(problems.size() - 4) + " more";
    return out;
  }
};

fs::path g_data;

AbtDefinition exemplar6() { return load_abt(g_data / "exemplar6.abt"); }
AbtDefinition exemplar16() { return load_abt(g_data / "exemplar16.abt"); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<AbtDefinition> random_trees() {
  Rng rng(kSeed);
  std::vector<AbtDefinition> out;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t l = 1 + static_cast<std::size_t>(uniform01(rng) * 12.0);
    out.push_back(abthmm::testing::random_canonical_tree(l, 3, rng, true));
  }
  return out;
}

// Transition frequencies counted over rollouts.
Matrix bigram_freq(const Dataset& d, std::size_t n, std::vector<double>& from) {
  Matrix counts(n, n);
  from.assign(n, 0.0);
  for (const Run& r : d.runs) {
    for (std::size_t t = 0; t + 1 < r.states.size(); ++t) {
      counts(r.states[t], r.states[t + 1]) += 1.0;
      from[r.states[t]] += 1.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (from[i] > 0) counts(i, j) /= from[i];
    }
  }
  return counts;
}

// Metric of the cell (ratio index, perturbation index) in a sweep laid out
// ratio-major.
const MetricRow& cell(const SweepResult& r, std::size_t n_perts, std::size_t ri, std::size_t pi) {
  return r.rows.at(ri * n_perts + pi);
}

SweepConfig grid(std::size_t n, bool with_random) {
  SweepConfig cfg;
  cfg.n_sequences = n;
  cfg.master_seed = kSeed;
  cfg.perturbations = {{false, 0.0}, {false, 0.1}, {false, 0.25}, {false, 0.5}};
  if (with_random) cfg.perturbations.push_back({true, 0.0});
  return cfg;
}

// ---------------------------------------------------------------------------

void counting(Verdict& v) {
  v.require(count_bts(10) == 1857945600, "count_bts(10) = " + count_bts(10).str());
  const std::size_t expect[] = {1, 4, 24, 192};
  for (std::size_t l = 1; l <= 4; ++l) {
    const std::size_t got = enumerate_structures(l).size();
    v.require(got == expect[l - 1], "l=" + std::to_string(l) + " enumerated " + std::to_string(got));
  }
  v.detail << "count(10) = " << count_bts(10) << ", enumerated 1/4/24/192";
}

void constraints(Verdict& v) {
  std::size_t ok = 0;
  for (const AbtDefinition& t : random_trees()) {
    const LabeledHmm m = compile(t);
    const ConstraintReport r = check_constraints(m.hmm.a(), m.o_s, m.o_f);
    if (r.ok()) ++ok;
  }
  v.require(ok == 1000, std::to_string(1000 - ok) + " trees violate the constraints");
  v.detail << ok << "/1000 trees pass";
}

void round_trip(Verdict& v) {
  std::size_t ok = 0;
  for (const AbtDefinition& t : random_trees()) {
    const LabeledHmm m = compile(t);
    const AbtDefinition back = decompile(m);
    const LabeledHmm again = compile(back);
    if (back.root() == canonicalize(t.root()) && again.hmm.a() == m.hmm.a() && again.edges == m.edges) ++ok;
  }
  v.require(ok == 1000, std::to_string(1000 - ok) + " trees fail the round trip");
  v.detail << ok << "/1000 trees round-trip";
}

void semantics(Verdict& v) {
  double worst = 0.0;
  std::string where;
  for (const auto& abt : {exemplar6(), exemplar16()}) {
    const LabeledHmm m = compile(abt);
    const Dataset d = rollout_dataset(abt, 15000, kSeed);
    std::vector<double> from;
    const Matrix f = bigram_freq(d, m.n_states(), from);
    for (std::size_t i = 0; i < m.n_states(); ++i) {
      if (m.is_terminal(i)) continue;
      for (std::size_t j = 0; j < m.n_states(); ++j) {
        const double p = m.hmm.a()(i, j);
        if (p == 0.0) {
          v.require(f(i, j) == 0.0, "transition outside the model");
          continue;
        }
        const double err = std::abs(f(i, j) - p);
        if (err > worst) {
          worst = err;
          where = "N=" + std::to_string(m.n_states()) + " A[" + std::to_string(i) + "][" + std::to_string(j) +
                  "] over " + fmt(from[i], 0) + " visits, z=" + fmt(err / std::sqrt(p * (1 - p) / from[i]), 2);
        }
      }
    }
  }
  v.require(worst <= 0.02, "max |freq - A| = " + fmt(worst) + " at " + where);
  v.detail << "max |freq - A| = " << fmt(worst) << " (tol 0.02) at " << where;
}

void table1(Verdict& v) {
  const std::vector<std::size_t> sizes{6, 16};
  const std::vector<double> ratios{0.0, 0.25, 1.0, 2.5, 5.0};
  const auto rows = divergence_table(sizes, ratios, 2.0, 1);
  for (const auto& r : rows) {
    if (r.ratio == 0.0) v.require(r.kld == 0.0 && r.jsd == 0.0 && r.jsd_all == 0.0, "R=0 row not exactly 0");
  }
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t k = 1; k < ratios.size(); ++k) {
      const auto& prev = rows[s * ratios.size() + k - 1];
      const auto& cur = rows[s * ratios.size() + k];
      v.require(cur.kld > 0.0, "KLD not positive");
      v.require(cur.kld > prev.kld, "KLD not increasing at N=" + std::to_string(cur.n_states));
    }
  }
  const auto& six = rows[4];
  const auto& sixteen = rows[9];
  v.require(std::abs(six.jsd - 1.00) <= 0.02, "N=6 R=5 JSD = " + fmt(six.jsd) + " (want 1.00 +/- 0.02)");
  v.require(std::abs(six.jsd_all - 2.54) <= 0.10, "N=6 R=5 JSD_ALL = " + fmt(six.jsd_all));
  v.require(six.jsd_all <= std::log2(6.0), "N=6 JSD_ALL above log2 6");
  v.require(std::abs(sixteen.jsd_all - 3.95) <= 0.10, "N=16 R=5 JSD_ALL = " + fmt(sixteen.jsd_all));
  v.require(sixteen.jsd_all <= 4.0, "N=16 JSD_ALL above 4");
  if (v.pass()) {
    v.detail << "N=6 R=5 JSD=" << fmt(six.jsd, 3) << " JSD_ALL=" << fmt(six.jsd_all, 3) << "; N=16 R=5 JSD_ALL="
             << fmt(sixteen.jsd_all, 3);
  }
}

void hmm_oracles(Verdict& v) {
  Rng rng(kSeed);
  std::size_t fwd_ok = 0, vit_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t N = 1 + rng() % 5;
    const std::size_t J = 1 + rng() % 4;
    const std::size_t T = 1 + rng() % 6;
    const Hmm h = abthmm::testing::random_hmm(N, J, rng, 0.3);
    std::vector<std::size_t> obs(T);
    for (auto& o : obs) o = rng() % J;
    double total = 0.0;
    double best = -1.0;
    std::vector<std::size_t> best_path;
    abthmm::testing::for_each_path(N, T, [&](const std::vector<std::size_t>& path) {
      const double p = abthmm::testing::path_prob(h, path, obs);
      total += p;
      if (p > best) {
        best = p;
        best_path = path;
      }
    });
    const double lp = forward_log_prob(h, obs);
    if (std::abs(lp - std::log(total)) <= 1e-8) ++fwd_ok;
    const ViterbiResult vr = viterbi_decode(h, obs);
    // Equal-probability paths are all valid argmaxes.
    const double got = abthmm::testing::path_prob(h, vr.states, obs);
    if (std::abs(got - best) <= 1e-12 * best && std::abs(vr.log_prob - std::log(best)) <= 1e-8) ++vit_ok;
  }
  v.require(fwd_ok == 200, std::to_string(200 - fwd_ok) + " forward mismatches");
  v.require(vit_ok == 200, std::to_string(200 - vit_ok) + " viterbi mismatches");
  v.detail << "forward " << fwd_ok << "/200, viterbi " << vit_ok << "/200";
}

void baum_welch(Verdict& v) {
  // Monotone log-likelihood over every cell of both grids.
  std::size_t cells = 0;
  for (const auto& abt : {exemplar6(), exemplar16()}) {
    const SweepResult r = run_sweep(abt, grid(1000, true), SweepKind::BaumWelch);
    for (const FitHistory& h : r.histories) {
      ++cells;
      for (std::size_t k = 1; k < h.log_likelihood.size(); ++k) {
        const double prev = h.log_likelihood[k - 1];
        const double slack = 1e-9 * std::max(1.0, std::abs(prev));
        if (h.log_likelihood[k] < prev - slack) {
          v.require(false, "logP decreased in a cell");
          break;
        }
      }
    }
  }
  // Structural zeros survive a fit from a perturbed start.
  {
    const AbtDefinition abt = with_synthetic_emissions(exemplar16(), 1.0);
    const LabeledHmm ref = compile(abt);
    const Dataset d = rollout_dataset(abt, 1000, kSeed);
    const auto obs = observations(d);
    FitOptions opts;
    opts.update_pi = false;
    opts.update_b = false;
    const FitResult fit = baum_welch_fit(perturb_hmm(ref, {0.5, kSeed}).hmm, obs, opts);
    for (std::size_t i = 0; i < ref.n_states(); ++i) {
      for (std::size_t j = 0; j < ref.n_states(); ++j) {
        if (ref.hmm.a()(i, j) == 0.0 && fit.model.a()(i, j) != 0.0) v.require(false, "structural zero filled");
      }
    }
  }
  // Unperturbed start on 15,000 sequences stays put.
  double worst = 0.0;
  SweepConfig cfg = grid(15000, false);
  cfg.perturbations = {{false, 0.0}};
  for (const auto& abt : {exemplar6(), exemplar16()}) {
    const SweepResult r = run_sweep(abt, cfg, SweepKind::BaumWelch);
    for (const auto& row : r.rows) {
      worst = std::max(worst, *row.rms_error);
      if (*row.rms_error >= 0.02) {
        v.require(false, "p=0 start N=" + std::to_string(row.n_states) + " R=" + fmt(row.ratio, 2) +
                             " RMS=" + fmt(*row.rms_error) + " (logP/seq " + fmt(*row.logp_per_seq) + " -> " +
                             fmt(*row.final_logp) + ")");
      }
    }
  }
  if (v.pass()) v.detail << cells << " cells monotone, zeros kept, p=0 start max RMS = " << fmt(worst);
}

void viterbi_trends(Verdict& v) {
  const SweepConfig cfg = grid(1000, true);
  const SweepResult r = run_sweep(exemplar16(), cfg, SweepKind::Viterbi);
  const std::size_t np = cfg.perturbations.size();
  const std::size_t nr = cfg.ratios.size();
  const double perfect = *cell(r, np, nr - 1, 0).mean_sed;
  v.require(perfect < 0.01, "R=5 p=0 SED = " + fmt(perfect));
  for (std::size_t pi = 0; pi + 1 < np; ++pi) {
    for (std::size_t ri = 1; ri < nr; ++ri) {
      const double prev = *cell(r, np, ri - 1, pi).mean_sed;
      const double cur = *cell(r, np, ri, pi).mean_sed;
      if (cur > prev) {
        v.require(false, "SED rises with R at p=" + cfg.perturbations[pi].to_string() + " R=" +
                             fmt(cfg.ratios[ri], 2) + " (" + fmt(prev) + " -> " + fmt(cur) + ")");
      }
    }
  }
  for (std::size_t ri = 0; ri < nr; ++ri) {
    if (cfg.ratios[ri] < 1.0) continue;
    for (std::size_t pi = 1; pi + 1 < np; ++pi) {
      const double prev = *cell(r, np, ri, pi - 1).mean_sed;
      const double cur = *cell(r, np, ri, pi).mean_sed;
      if (cur < prev) {
        v.require(false, "SED falls with p at R=" + fmt(cfg.ratios[ri], 2) + " p=" +
                             cfg.perturbations[pi].to_string() + " (" + fmt(prev) + " -> " + fmt(cur) + ")");
      }
    }
  }
  if (v.pass()) v.detail << "R=5 p=0 SED = " << fmt(perfect) << ", trends hold over " << r.rows.size() << " cells";
}

void forward_trend(Verdict& v) {
  const SweepConfig cfg = grid(1000, false);
  const std::size_t np = cfg.perturbations.size();
  std::size_t checked = 0;
  for (const auto& abt : {exemplar6(), exemplar16()}) {
    const SweepResult r = run_sweep(abt, cfg, SweepKind::Forward);
    for (std::size_t ri = 0; ri < cfg.ratios.size(); ++ri) {
      for (std::size_t pi = 1; pi < np; ++pi) {
        ++checked;
        const double prev = *cell(r, np, ri, pi - 1).logp_per_seq;
        const double cur = *cell(r, np, ri, pi).logp_per_seq;
        if (cur > prev) {
          v.require(false, "logP rises with p at N=" + std::to_string(r.rows[0].n_states) + " R=" +
                               fmt(cfg.ratios[ri], 2) + " p=" + cfg.perturbations[pi].to_string());
        }
      }
    }
  }
  if (v.pass()) v.detail << checked << " adjacent pairs non-increasing";
}

void estimation(Verdict& v) {
  double worst = 0.0;
  std::size_t leaves = 0;
  for (const auto& abt : {exemplar6(), exemplar16()}) {
    const LabeledHmm m = compile(abt);
    const Dataset d = rollout_dataset(abt, 15000, kSeed);
    const auto est = estimate_ps(d, m);
    for (std::size_t i = 0; i < abt.n_leaves(); ++i) {
      if (est[i].visits < 500) continue;
      ++leaves;
      const double err = std::abs(*est[i].value() - abt.leaf(i).stats.ps);
      worst = std::max(worst, err);
      const double ps = abt.leaf(i).stats.ps;
      const double z = err / std::sqrt(ps * (1 - ps) / static_cast<double>(est[i].visits));
      if (err > 0.02) {
        v.require(false, abt.leaf(i).name + " off by " + fmt(err) + " over " + std::to_string(est[i].visits) +
                             " visits, z=" + fmt(z, 2));
      }
    }
  }
  if (v.pass()) v.detail << leaves << " leaves, max error " << fmt(worst);
}

void retry_parallel(Verdict& v) {
  std::ostringstream notes;
  for (double p : {0.2, 0.5, 0.8}) {
    std::ostringstream src;
    src << "(retry (leaf a :ps " << p << " :emit (table 1)))";
    const Dataset d = rollout_dataset(parse_abt(src.str()), 10000, kSeed);
    double visits = 0.0;
    for (const Run& r : d.runs) visits += static_cast<double>(r.states.size() - 1);
    const double mean = visits / 10000.0;
    const double rel = std::abs(mean * p - 1.0);
    v.require(rel <= 0.05, "retry p=" + fmt(p, 1) + " mean visits " + fmt(mean));
    notes << "p=" << fmt(p, 1) << ": " << fmt(mean, 3) << " visits; ";
  }
  const AbtDefinition par = parse_abt(
      "(parallel :threshold 0.5 (leaf a :ps 0.5 :emit (table 1)) (leaf b :ps 0.5 :emit (table 1)))");
  const Dataset d = rollout_dataset(par, 10000, kSeed);
  double wins = 0.0;
  for (const Run& r : d.runs) wins += r.outcome == Outcome::Success ? 1.0 : 0.0;
  const double ps = wins / 10000.0;
  v.require(std::abs(ps - 0.75) <= 0.01, "parallel P(O_S) = " + fmt(ps));
  if (v.pass()) v.detail << notes.str() << "parallel P(O_S) = " << fmt(ps, 3);
}

void three_state(Verdict& v) {
  Matrix a(3, 3);
  a(0, 0) = 1.0;
  a(1, 2) = 1.0;
  a(2, 0) = 0.5;
  a(2, 2) = 0.5;
  Matrix b(3, 2);
  b(0, 1) = 1.0;
  b(1, 0) = 1.0;
  b(2, 0) = 1.0;
  const Hmm h({0.0, 1.0, 0.0}, a, b);
  Rng rng(kSeed);
  const std::vector<std::size_t> absorbing{0};
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const SampledSequence s = sample_sequence(h, absorbing, rng);
    total += sed(viterbi_decode(h, s.obs).states, s.states);
  }
  const double mean = total / 1000.0;
  v.require(mean < 0.05, "mean SED = " + fmt(mean));
  if (v.pass()) v.detail << "mean SED = " << fmt(mean);
}

struct Criterion {
  int id;
  const char* name;
  double max_seconds;  ///< <= 0: no runtime bound
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  g_data = argc > 1 ? fs::path(argv[1]) : abthmm::testing::data_dir();
  const std::vector<Criterion> criteria{
      {1, "counting", 1.0, counting},
      {2, "compile constraints", 10.0, constraints},
      {3, "round trip", 0.0, round_trip},
      {4, "compile/semantics equivalence", 30.0, semantics},
      {5, "divergence table", 5.0, table1},
      {6, "forward/viterbi oracles", 30.0, hmm_oracles},
      {7, "baum-welch properties", 0.0, baum_welch},
      {8, "viterbi trends", 300.0, viterbi_trends},
      {9, "forward trend", 0.0, forward_trend},
      {10, "frequentist estimation", 0.0, estimation},
      {11, "retry/parallel", 0.0, retry_parallel},
      {12, "three-state distinguishability", 0.0, three_state},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    Verdict v;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.max_seconds > 0.0 && secs >= c.max_seconds) {
      v.require(false, "took " + fmt(secs, 2) + " s (limit " + fmt(c.max_seconds, 0) + " s)");
    }
    failures += v.pass() ? 0 : 1;
    std::cout << (v.pass() ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << v.text() << " ["
              << fmt(secs, 2) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria pass" << std::endl;
  return failures == 0 ? 0 : 1;
}
