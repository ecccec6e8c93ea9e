// critkit command-line front end. Argument parsing only; every computation
// goes through critkit::run so the library and the tool produce the same
// reports.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "critkit/cli_io.hpp"
#include "critkit/error.hpp"
#include "json.hpp"

namespace {

constexpr critkit::Command kCommands[] = {
    critkit::Command::Classify,     critkit::Command::Green,       critkit::Command::HardyWeight,
    critkit::Command::GroundState,  critkit::Command::AlphaProfile, critkit::Command::Decay,
    critkit::Command::VerifyDecay,  critkit::Command::Excessive,   critkit::Command::Harnack,
    critkit::Command::Check,
};

const std::map<std::string, std::string> kDescriptions{
    {"classify", "Subcritical / critical classification along an exhaustion"},
    {"green", "Green operator applied to a function (finite or divergent)"},
    {"hardy-weight", "Hardy weight g / Gg with sampled and pencil verification"},
    {"ground-state", "Agmon ground state of a critical exhaustion"},
    {"alpha-profile", "Certified weak Hardy / Poincare profile alpha(r)"},
    {"decay", "Decay rate xi(t) from an alpha profile"},
    {"verify-decay", "Sampled check of the semigroup decay bound"},
    {"excessive", "Excessive function from resolvent limits"},
    {"harnack", "lambda(T), super-eigen witness and weak Harnack certificate of a kernel"},
    {"check", "Seeded sweeps of the structural form properties"},
};

const std::map<std::string, std::string> kOptionHelp{
    {"max_radius", "Ignore exhaustion levels above this radius"},
    {"window_radius", "Ground-state window radius around the root"},
    {"hardy_samples", "Samples for the Hardy weight check"},
    {"certificates", "Attach ground state / Hardy weight (true or false)"},
    {"f", "Function: ones, resolvent, root, delta:<ids>, file:<path>"},
    {"g", "Source function (same syntax as --f)"},
    {"h", "Reference function h (same syntax as --f)"},
    {"w", "Weight function w (same syntax as --f)"},
    {"samples", "Number of random samples"},
    {"allow_perturbed", "Fall back to a perturbed form when G diverges"},
    {"mode", "hardy or poincare"},
    {"r_min", "Smallest r of the grid"},
    {"r_max", "Largest r of the grid (default: the weight mass)"},
    {"per_decade", "Grid points per decade of r"},
    {"starts", "Multistart count for the lower bound"},
    {"iterations", "Projected gradient iterations per start"},
    {"profile", "alpha-profile report to read instead of recomputing"},
    {"t", "Comma-separated times"},
    {"xi", "decay report whose xi(t) is verified"},
    {"reference", "Comma-separated reference vertex ids"},
    {"stabilization", "Relative tail change accepted by the construction"},
    {"p", "Exponent p > 1"},
    {"target_mass", "Fraction of mu kept in the Harnack set"},
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

bool split_kv(const std::string& item, std::string& key, std::string& value) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  key = item.substr(0, eq);
  value = item.substr(eq + 1);
  return true;
}

int config_failure(const std::string& command, const std::string& message) {
  nlohmann::json report{{"schema", critkit::kReportSchema},
                        {"command", command},
                        {"error", {{"code", "ConfigError"}, {"message", message}}},
                        {"exit_code", 1},
                        {"provenance", {{"tool", "critkit"}, {"version", critkit::version()}}}};
  std::cout << report.dump(2) << "\n";
  return 1;
}

struct Raw {
  std::string graph;
  std::vector<std::string> graph_seq;
  std::string family;
  std::vector<std::string> family_params;
  std::string kernel;
  std::string root;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tolerances;
  std::string output;
  std::string format = "json";
  bool timing = false;
  unsigned threads = 0;
  std::map<std::string, std::string> options;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"critkit: criticality toolkit for discrete Schroedinger forms"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", std::string(critkit::version()));

  Raw raw;
  std::map<CLI::App*, critkit::Command> commands;
  for (critkit::Command cmd : kCommands) {
    const std::string name(critkit::to_string(cmd));
    CLI::App* sub = app.add_subcommand(name, kDescriptions.at(name));
    commands[sub] = cmd;

    sub->add_option("--graph", raw.graph, "Graph document (JSON)");
    sub->add_option("--graph-seq", raw.graph_seq, "Graph documents forming an exhaustion, innermost first");
    sub->add_option("--family", raw.family, "Built-in family: lattice, birth_death, dirichlet_path");
    sub->add_option("--param", raw.family_params, "Family parameter key=value (repeatable)");
    sub->add_option("--kernel", raw.kernel, "Dense kernel matrix file");
    sub->add_option("--root", raw.root, "Root vertex id");
    sub->add_option("--seed", raw.seed, "Random seed (required by sampling commands)");
    sub->add_option("--tol", raw.tolerances, "Tolerance override key=value (repeatable)");
    sub->add_option("--output", raw.output, "Output path prefix; writes <prefix>.json and <prefix>.csv");
    sub->add_option("--format", raw.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--timing", raw.timing, "Record wall time in the report");
    sub->add_option("--threads", raw.threads, "Worker threads (0: automatic)");
    for (const std::string& key : critkit::command_options(cmd)) {
      sub->add_option("--" + dashed(key), raw.options[key], kOptionHelp.at(key));
    }
  }

  std::string command_name;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return config_failure(argc > 1 ? argv[1] : "", e.what());
  }

  critkit::JobConfig job;
  for (const auto& [sub, cmd] : commands) {
    if (sub->parsed()) {
      job.command = cmd;
      command_name = sub->get_name();
      for (const std::string& key : critkit::command_options(cmd)) {
        if (sub->count("--" + dashed(key)) > 0) job.params[key] = raw.options[key];
      }
    }
  }

  job.input.graph = raw.graph;
  job.input.graph_sequence = raw.graph_seq;
  job.input.family = raw.family;
  job.input.kernel = raw.kernel;
  job.input.root = raw.root;
  for (const std::string& item : raw.family_params) {
    std::string k, v;
    if (!split_kv(item, k, v)) return config_failure(command_name, "--param expects key=value, got '" + item + "'");
    job.input.family_params[k] = v;
  }
  for (const std::string& item : raw.tolerances) {
    std::string k, v;
    if (!split_kv(item, k, v)) return config_failure(command_name, "--tol expects key=value, got '" + item + "'");
    try {
      std::size_t used = 0;
      job.tolerance_overrides[k] = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      return config_failure(command_name, "--tol " + k + ": not a number: '" + v + "'");
    }
  }
  job.seed = raw.seed;
  job.output = raw.output;
  job.format = raw.format;
  job.timing = raw.timing;
  job.threads = raw.threads;
  job.environment = critkit::capture_environment();

  const critkit::RunResult result = critkit::run(job);
  try {
    critkit::write_outputs(job, result);
  } catch (const critkit::Error& e) {
    std::cerr << "critkit: " << e.what() << "\n";
    return 1;
  }
  if (result.exit_code == 1 && !job.output.empty()) {
    std::cerr << "critkit: " << command_name << " failed; see " << job.output << ".json\n";
  }
  return result.exit_code;
}
