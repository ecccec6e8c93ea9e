#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "critkit/criticality.hpp"
#include "critkit/excessive_harnack.hpp"
#include "critkit/families.hpp"
#include "critkit/form.hpp"

namespace critkit {

inline constexpr std::string_view kGraphFormat = "critkit.graph/1";
inline constexpr std::string_view kReportSchema = "critkit.report/1";

std::string_view version() noexcept;

// Graph documents are JSON objects:
//   {"format": "critkit.graph/1",            (optional)
//    "vertices": ["a", "b", ...],
//    "edges": [["a", "b", 1.0], ...],
//    "mu": {"a": 2.0},                       (optional, default 1)
//    "potential": {"b": 0.5},                (optional, default 0)
//    "dirichlet": ["b"]}                     (optional)
// Syntax and schema problems raise ParseError with a line/column or a field
// path; problems found by build_form are re-raised as ValidationError.
GraphSpec parse_graph_text(std::string_view text, std::string_view origin = "<string>");
GraphForm parse_graph_string(std::string_view text, std::string_view origin = "<string>",
                             const Tolerances& tol = {});
GraphForm parse_graph_file(const std::string& path, const Tolerances& tol = {});

/// Canonical document: sorted ids, u < v edges, explicit mu and potential.
/// Parsing the output and emitting again reproduces it byte for byte.
std::string emit_graph(const GraphForm& form);

/// Dense kernel: one row per line, entries separated by whitespace or commas,
/// '#' starts a comment. Optional sidecars `<path>.nu` and `<path>.mu` hold one
/// measure value per line (default: counting measure).
KernelOperator parse_kernel_file(const std::string& path, double p = 2.0);

/// Exhaustion whose level R (R = 1, 2, ...) is the R-th graph file.
Exhaustion from_file_sequence(std::vector<std::string> paths, std::string root, const Tolerances& tol = {});

enum class Command {
  Classify,
  Green,
  HardyWeight,
  GroundState,
  AlphaProfile,
  Decay,
  VerifyDecay,
  Excessive,
  Harnack,
  Check,
};

std::string_view to_string(Command c) noexcept;
/// Throws ConfigError for unknown names.
Command parse_command(std::string_view name);
/// Option keys accepted in JobConfig::params for a command.
std::vector<std::string> command_options(Command c);
/// Commands whose results depend on random sampling; they require a seed.
bool is_randomized(Command c, const std::map<std::string, std::string>& params);

struct InputSpec {
  std::string graph;                        // graph document
  std::vector<std::string> graph_sequence;  // exhaustion from files
  std::string family;                       // built-in family name
  FamilyParams family_params;
  std::string kernel;                       // kernel matrix file (harnack)
  std::string root;                         // root vertex for file inputs
};

struct JobConfig {
  Command command = Command::Classify;
  InputSpec input;
  std::optional<std::uint64_t> seed;
  std::map<std::string, double> tolerance_overrides;  // keys as in Tolerances
  std::map<std::string, std::string> params;          // command options
  std::map<std::string, std::string> environment;     // CRITKIT_* variables
  std::string output;                                  // path prefix; empty: stdout
  std::string format = "json";                         // json or csv
  bool timing = false;                                 // adds wall time (breaks byte stability)
  unsigned threads = 0;
};

/// The CRITKIT_THREADS and CRITKIT_TOL_<NAME> variables of the process.
std::map<std::string, std::string> capture_environment();

/// Defaults, then environment, then command-line overrides. Throws
/// ConfigError for unknown keys or unparsable values.
Tolerances resolve_tolerances(const JobConfig& job);

struct RunResult {
  int exit_code = 0;   // 0 success, 2 inconclusive, 1 error
  std::string report;  // JSON document, newline terminated
  std::string table;   // CSV table (empty if the command has none)
};

/// Runs one job. Never throws; errors become an error report with exit 1.
RunResult run(const JobConfig& job);

/// Writes the outputs of a run: `<prefix>.json` (and `<prefix>.csv` for the
/// csv format), or the report / table on stdout when the prefix is empty.
void write_outputs(const JobConfig& job, const RunResult& result);

struct PropertyCheck {
  std::string name;
  std::size_t samples = 0;
  std::size_t violations = 0;
  double max_violation = 0.0;
};

/// Seeded sweeps of the structural properties: first Beurling-Deny, the
/// lattice inequality, the resolvent identity, resolvent contraction and the
/// agreement of the algebraic and resolvent-grid excessivity tests.
std::vector<PropertyCheck> check_properties(const GraphForm& form, std::size_t n_samples, std::uint64_t seed,
                                            const Tolerances& tol = {});

}  // namespace critkit
