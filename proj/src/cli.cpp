#include "abthmm/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "abthmm/compiler.hpp"
#include "abthmm/error.hpp"
#include "abthmm/model_io.hpp"
#include "abthmm/sim_lab.hpp"

namespace abthmm {

namespace {

constexpr std::uint64_t kDefaultSeed = 20240501;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("cannot write " + path);
}

std::string shape_text(const StructureShape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.n_leaves(); ++i) {
    if (i) out += ' ';
    out += s.orientation[i] == Orientation::SuccessNext ? 'S' : 'F';
    out += std::to_string(s.second_col[i]);
  }
  return out;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v >= 0.0)) throw CLI::ValidationError("--ratios", "bad ratio '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--ratios", "empty list");
  return out;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Behavior tree to hidden Markov model toolkit", "abthmm"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string input;
  std::string output;

  auto* compile_cmd = app.add_subcommand("compile", "Compile a tree file into a labeled HMM file");
  compile_cmd->add_option("tree", input, "ABT source file")->required()->check(CLI::ExistingFile);
  compile_cmd->add_option("-o,--output", output, "Model file to write")->required();

  auto* check_cmd = app.add_subcommand("check", "Check a model against the tree-matrix constraints");
  check_cmd->add_option("model", input, "Model file")->required()->check(CLI::ExistingFile);

  std::size_t leaves = 0;
  auto* count_cmd = app.add_subcommand("count", "Number of trees with l leaves");
  count_cmd->add_option("-l,--leaves", leaves, "Leaf count")->required()->check(CLI::PositiveNumber);

  bool realizable_only = false;
  auto* enum_cmd = app.add_subcommand("enumerate", "List every transition-matrix shape for l leaves");
  enum_cmd->add_option("-l,--leaves", leaves, "Leaf count")
      ->required()
      ->check(CLI::Range(std::size_t{1}, kMaxEnumerationLeaves));
  enum_cmd->add_flag("--realizable", realizable_only, "Only shapes some tree compiles to");
  enum_cmd->add_option("-o,--output", output, "Write the list to a file");

  std::size_t runs = 15000;
  std::uint64_t seed = kDefaultSeed;
  auto* sim_cmd = app.add_subcommand("simulate", "Roll out a tree and write the runs as CSV");
  sim_cmd->add_option("tree", input, "ABT source file")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("-n,--num", runs, "Number of runs")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", seed, "Random seed");
  sim_cmd->add_option("-o,--output", output, "CSV file to write")->required();

  std::string kind_name;
  std::string config_path;
  std::string ratios_text;
  std::vector<std::string> perturbations;
  std::optional<std::size_t> sweep_runs;
  std::optional<std::uint64_t> sweep_seed;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run an experiment grid and write one CSV row per cell");
  sweep_cmd->add_option("--kind", kind_name, "forward, viterbi or bw")
      ->required()
      ->check(CLI::IsMember({"forward", "viterbi", "bw"}));
  sweep_cmd->add_option("--config", config_path, "key=value config file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--ratios", ratios_text, "Override the ratio grid, comma-separated");
  sweep_cmd->add_option("--perturbations", perturbations, "Override the perturbation grid")->delimiter(',');
  sweep_cmd->add_option("-n,--num", sweep_runs, "Override n_sequences")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sweep_seed, "Override master_seed");
  sweep_cmd->add_option("-o,--output", output, "CSV file (default <config>_<kind>.csv)");

  std::vector<std::size_t> sizes{6, 16};
  std::string table_ratios = "0,0.25,1,2.5,5";
  double sigma = 2.0;
  std::size_t gap = 1;
  auto* table_cmd = app.add_subcommand("table1", "Divergences between synthetic emission rows");
  table_cmd->add_option("--sizes", sizes, "State counts")->delimiter(',')->check(CLI::Range(2, 1 << 16));
  table_cmd->add_option("--ratios", table_ratios, "Ratios, comma-separated");
  table_cmd->add_option("--sigma", sigma, "Kernel width")->check(CLI::PositiveNumber);
  table_cmd->add_option("--gap", gap, "Compare rows 0 and gap")->check(CLI::PositiveNumber);
  table_cmd->add_option("-o,--output", output, "CSV file (default table1.csv)");

  auto* decompile_cmd = app.add_subcommand("decompile", "Rebuild the tree from a labeled HMM file");
  decompile_cmd->add_option("model", input, "Model file")->required()->check(CLI::ExistingFile);
  decompile_cmd->add_option("-o,--output", output, "ABT file to write")->required();

  std::vector<double> table_ratio_values;
  std::vector<double> sweep_ratio_values;
  try {
    app.parse(argc, argv);
    if (table_cmd->parsed()) table_ratio_values = parse_ratios(table_ratios);
    if (sweep_cmd->parsed() && !ratios_text.empty()) sweep_ratio_values = parse_ratios(ratios_text);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (compile_cmd->parsed()) {
      const AbtDefinition abt = load_abt(input);
      const LabeledHmm lhmm = compile(abt, {default_state_cap()});
      save_model(output, lhmm);
      out << "compiled " << abt.n_leaves() << " leaves into " << lhmm.n_states() << " states, "
          << lhmm.hmm.n_symbols() << " symbols -> " << output << '\n';
      return 0;
    }
    if (check_cmd->parsed()) {
      const LabeledHmm lhmm = load_model(input);
      const bool labeled = std::any_of(lhmm.edges.begin(), lhmm.edges.end(), [](const auto& e) { return !e.empty(); });
      const ConstraintReport report = labeled ? check_constraints(lhmm) : check_constraints(lhmm.hmm.a(), lhmm.o_s, lhmm.o_f);
      out << "upper_diagonal: " << (report.upper_diagonal ? "yes" : "no") << '\n'
          << "two_nonzero_per_row: " << (report.two_nonzero_per_row ? "yes" : "no") << '\n'
          << "superdiagonal_nonzero: " << (report.superdiagonal_nonzero ? "yes" : "no") << '\n'
          << report.to_string() << (report.ok() ? "PASS" : "FAIL") << '\n';
      return report.ok() ? 0 : 1;
    }
    if (count_cmd->parsed()) {
      out << count_bts(leaves) << '\n';
      return 0;
    }
    if (enum_cmd->parsed()) {
      std::ostringstream list;
      std::size_t total = 0;
      for_each_structure(leaves, [&](const StructureShape& s) {
        if (realizable_only) {
          try {
            (void)decompile(shape_to_hmm(s));
          } catch (const Error&) {
            return true;
          }
        }
        list << shape_text(s) << '\n';
        ++total;
        return true;
      });
      if (output.empty()) {
        out << list.str();
      } else {
        write_file(output, list.str());
      }
      out << total << " shapes\n";
      return 0;
    }
    if (sim_cmd->parsed()) {
      const AbtDefinition abt = load_abt(input);
      const Dataset data = rollout_dataset(abt, runs, seed);
      std::ostringstream csv;
      write_dataset_csv(csv, data);
      write_file(output, csv.str());
      std::size_t successes = 0;
      std::size_t steps = 0;
      for (const auto& r : data.runs) {
        successes += r.outcome == Outcome::Success ? 1 : 0;
        steps += r.states.size();
      }
      out << runs << " runs, P(O_S) = " << static_cast<double>(successes) / static_cast<double>(runs)
          << ", mean length " << static_cast<double>(steps) / static_cast<double>(runs) << " -> " << output << '\n';
      return 0;
    }
    if (sweep_cmd->parsed()) {
      SweepConfig cfg = load_sweep_config(config_path);
      if (!sweep_ratio_values.empty()) cfg.ratios = sweep_ratio_values;
      if (!perturbations.empty()) {
        cfg.perturbations.clear();
        for (const auto& p : perturbations) cfg.perturbations.push_back(parse_perturbation(p));
      }
      if (sweep_runs) cfg.n_sequences = *sweep_runs;
      if (sweep_seed) cfg.master_seed = *sweep_seed;
      const SweepKind kind = parse_sweep_kind(kind_name);
      const AbtDefinition abt = load_abt(cfg.model);
      const SweepResult result = run_sweep(abt, cfg, kind);
      if (output.empty()) output = std::filesystem::path(config_path).stem().string() + "_" + kind_name + ".csv";
      std::ostringstream csv;
      write_metric_csv(csv, result.rows);
      write_file(output, csv.str());
      for (const auto& r : result.rows) {
        out << kind_name << " R=" << r.ratio << " p=" << r.perturbation.to_string();
        if (r.logp_per_seq) out << " logP/seq=" << *r.logp_per_seq;
        if (r.mean_sed) out << " SED=" << *r.mean_sed;
        if (r.rms_error) out << " RMS=" << *r.rms_error << " iters=" << *r.bw_iters;
        out << '\n';
      }
      out << result.rows.size() << " cells -> " << output << '\n';
      return 0;
    }
    if (table_cmd->parsed()) {
      const auto rows = divergence_table(sizes, table_ratio_values, sigma, gap);
      if (output.empty()) output = "table1.csv";
      std::ostringstream csv;
      write_divergence_csv(csv, rows);
      write_file(output, csv.str());
      out << std::fixed << std::setprecision(2);
      out << "  ratio  N      KLD    JSD  JSD_ALL\n";
      for (const auto& r : rows) {
        out << std::setw(7) << r.ratio << std::setw(3) << r.n_states << std::setw(9) << r.kld << std::setw(7) << r.jsd
            << std::setw(9) << r.jsd_all << '\n';
      }
      out << "-> " << output << '\n';
      return 0;
    }
    if (decompile_cmd->parsed()) {
      const LabeledHmm lhmm = load_model(input);
      const AbtDefinition abt = decompile(lhmm);
      write_file(output, serialize_abt(abt));
      out << "decompiled " << abt.n_leaves() << " leaves -> " << output << '\n';
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace abthmm
