#include "critkit/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "critkit/error.hpp"
#include "critkit/hardy.hpp"
#include "critkit/resolvent.hpp"
#include "critkit/weak_ineq.hpp"
#include "json.hpp"

extern char** environ;

namespace critkit {

using json = nlohmann::json;

std::string_view version() noexcept { return "0.1.0"; }

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

[[noreturn]] void field_error(std::string_view origin, const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ParseError, std::string(origin) + ": " + field + ": " + what);
}

double number_field(std::string_view origin, const json& v, const std::string& field) {
  if (!v.is_number()) field_error(origin, field, "expected a number");
  return v.get<double>();
}

std::string string_field(std::string_view origin, const json& v, const std::string& field) {
  if (!v.is_string()) field_error(origin, field, "expected a string");
  return v.get<std::string>();
}

std::map<std::string, double> number_map(std::string_view origin, const json& v, const std::string& field) {
  if (!v.is_object()) field_error(origin, field, "expected an object mapping vertex ids to numbers");
  std::map<std::string, double> out;
  for (const auto& [k, x] : v.items()) out[k] = number_field(origin, x, field + "." + k);
  return out;
}

std::vector<std::string> string_list(std::string_view origin, const json& v, const std::string& field) {
  if (!v.is_array()) field_error(origin, field, "expected a list of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(string_field(origin, v[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

// Numbers that may be infinite or NaN are written as strings.
json jnum(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double from_jnum(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error(ErrorCode::ParseError, "expected a number");
}

json jvec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(jnum(x));
  return a;
}

json free_values(const GraphForm& form, const VertexFunction& f) {
  json o = json::object();
  for (Index v : form.free_vertices()) o[form.vertices()[static_cast<std::size_t>(v)]] = jnum(f[v]);
  return o;
}

json labeled(const LabeledFunction& f) {
  json o = json::object();
  for (std::size_t i = 0; i < f.ids.size(); ++i) o[f.ids[i]] = jnum(f.values[static_cast<Index>(i)]);
  return o;
}

std::string fmt(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// Vertex ids may contain commas (lattice coordinates).
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

GraphSpec parse_graph_text(std::string_view text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                std::string(origin) + ": " + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": malformed JSON");
  }
  if (!doc.is_object()) field_error(origin, "<document>", "expected an object");
  static const std::set<std::string> known{"format", "vertices", "edges", "mu", "potential", "dirichlet"};
  for (const auto& [k, v] : doc.items()) {
    if (!known.count(k)) field_error(origin, k, "unknown field");
  }
  if (doc.contains("format") && string_field(origin, doc["format"], "format") != kGraphFormat) {
    field_error(origin, "format", "unsupported format (expected " + std::string(kGraphFormat) + ")");
  }
  if (!doc.contains("vertices")) field_error(origin, "vertices", "missing");
  GraphSpec spec;
  spec.vertices = string_list(origin, doc["vertices"], "vertices");
  if (doc.contains("edges")) {
    const json& edges = doc["edges"];
    if (!edges.is_array()) field_error(origin, "edges", "expected a list of [u, v, b]");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string f = "edges[" + std::to_string(i) + "]";
      const json& e = edges[i];
      if (!e.is_array() || e.size() != 3) field_error(origin, f, "expected [u, v, b]");
      spec.edges.push_back({string_field(origin, e[0], f + "[0]"), string_field(origin, e[1], f + "[1]"),
                            number_field(origin, e[2], f + "[2]")});
    }
  }
  if (doc.contains("mu")) spec.mu = number_map(origin, doc["mu"], "mu");
  if (doc.contains("potential")) spec.potential = number_map(origin, doc["potential"], "potential");
  if (doc.contains("dirichlet")) spec.dirichlet = string_list(origin, doc["dirichlet"], "dirichlet");
  return spec;
}

GraphForm parse_graph_string(std::string_view text, std::string_view origin, const Tolerances& tol) {
  const GraphSpec spec = parse_graph_text(text, origin);
  try {
    return build_form(spec, tol);
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError,
                std::string(origin) + ": " + std::string(to_string(e.code())) + ": " + e.what());
  }
}

GraphForm parse_graph_file(const std::string& path, const Tolerances& tol) {
  return parse_graph_string(read_file(path), path, tol);
}

std::string emit_graph(const GraphForm& form) {
  const GraphSpec s = form.spec();
  json doc;
  doc["format"] = kGraphFormat;
  doc["vertices"] = s.vertices;
  json edges = json::array();
  for (const auto& e : s.edges) edges.push_back(json::array({e.u, e.v, e.weight}));
  doc["edges"] = edges;
  doc["mu"] = s.mu;
  doc["potential"] = s.potential;
  doc["dirichlet"] = s.dirichlet;
  return dump(doc);
}

namespace {

std::vector<double> parse_number_row(const std::string& line, const std::string& where) {
  std::vector<double> row;
  std::string cleaned = line.substr(0, line.find('#'));
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  in.imbue(std::locale::classic());
  std::string tok;
  while (in >> tok) {
    double x = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw Error(ErrorCode::ParseError, where + ": not a number: '" + tok + "'");
    }
    row.push_back(x);
  }
  return row;
}

std::vector<std::vector<double>> parse_rows(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    auto row = parse_number_row(line, path + ": line " + std::to_string(n));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

Vector sidecar(const std::string& path, Index n) {
  std::ifstream probe(path);
  if (!probe) return Vector::Ones(n);
  std::vector<double> values;
  for (const auto& row : parse_rows(path)) values.insert(values.end(), row.begin(), row.end());
  if (static_cast<Index>(values.size()) != n) {
    throw Error(ErrorCode::ParseError, path + ": expected " + std::to_string(n) + " values, found " +
                                           std::to_string(values.size()));
  }
  return Eigen::Map<const Vector>(values.data(), n);
}

}  // namespace

KernelOperator parse_kernel_file(const std::string& path, double p) {
  const auto rows = parse_rows(path);
  if (rows.empty()) throw Error(ErrorCode::ParseError, path + ": empty kernel");
  KernelOperator op;
  op.kernel.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(i + 1) + " has " +
                                             std::to_string(rows[i].size()) + " entries, expected " +
                                             std::to_string(rows[0].size()));
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) op.kernel(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  op.nu = sidecar(path + ".nu", op.kernel.rows());
  op.mu = sidecar(path + ".mu", op.kernel.cols());
  op.p = p;
  try {
    op.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, path + ": " + std::string(to_string(e.code())) + ": " + e.what());
  }
  return op;
}

Exhaustion from_file_sequence(std::vector<std::string> paths, std::string root, const Tolerances& tol) {
  if (paths.empty()) throw Error(ErrorCode::BadParams, "empty graph sequence");
  if (root.empty()) throw Error(ErrorCode::BadParams, "a graph sequence needs a root vertex");
  auto forms = std::make_shared<std::vector<GraphForm>>();
  for (const auto& p : paths) forms->push_back(parse_graph_file(p, tol));
  Exhaustion ex;
  for (std::size_t i = 0; i < paths.size(); ++i) ex.radii.push_back(static_cast<int>(i + 1));
  ex.generator = [forms](int r) {
    if (r < 1 || r > static_cast<int>(forms->size())) throw Error(ErrorCode::BadParams, "no such level");
    return (*forms)[static_cast<std::size_t>(r - 1)];
  };
  ex.root = std::move(root);
  ex.label = "files";
  return ex;
}

// ---------------------------------------------------------------------------
// Jobs

namespace {

constexpr std::pair<Command, std::string_view> kCommandNames[] = {
    {Command::Classify, "classify"},         {Command::Green, "green"},
    {Command::HardyWeight, "hardy-weight"},  {Command::GroundState, "ground-state"},
    {Command::AlphaProfile, "alpha-profile"}, {Command::Decay, "decay"},
    {Command::VerifyDecay, "verify-decay"},  {Command::Excessive, "excessive"},
    {Command::Harnack, "harnack"},           {Command::Check, "check"},
};

const std::map<Command, std::set<std::string>>& allowed_params() {
  static const std::map<Command, std::set<std::string>> table{
      {Command::Classify, {"max_radius", "window_radius", "hardy_samples", "certificates"}},
      {Command::Green, {"f"}},
      {Command::HardyWeight, {"g", "samples", "allow_perturbed"}},
      {Command::GroundState, {"max_radius", "window_radius"}},
      {Command::AlphaProfile, {"mode", "w", "h", "r_min", "r_max", "per_decade", "starts", "iterations"}},
      {Command::Decay,
       {"profile", "t", "mode", "w", "h", "r_min", "r_max", "per_decade", "starts", "iterations"}},
      {Command::VerifyDecay,
       {"xi", "t", "samples", "h", "r_min", "r_max", "per_decade", "starts", "iterations"}},
      {Command::Excessive, {"g", "reference", "stabilization"}},
      {Command::Harnack, {"p", "target_mass", "samples"}},
      {Command::Check, {"samples"}},
  };
  return table;
}

struct TolField {
  const char* name;
  double Tolerances::*member;
};

constexpr TolField kTolFields[] = {
    {"psd_rel", &Tolerances::psd_rel},       {"ineq", &Tolerances::ineq},
    {"green", &Tolerances::green},           {"cap", &Tolerances::cap},
    {"cap_stable", &Tolerances::cap_stable}, {"ground_state", &Tolerances::ground_state},
    {"excessive", &Tolerances::excessive},   {"eig", &Tolerances::eig},
    {"solve", &Tolerances::solve},           {"divergence_factor", &Tolerances::divergence_factor},
};

double parse_double(const std::string& text, const std::string& what) {
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ConfigError, what + ": not a number: '" + text + "'");
  }
  return x;
}

long long parse_int(const std::string& text, const std::string& what) {
  long long x = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ConfigError, what + ": not an integer: '" + text + "'");
  }
  return x;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

class Params {
 public:
  explicit Params(const std::map<std::string, std::string>& p) : p_(p) {}
  [[nodiscard]] bool has(const std::string& k) const { return p_.count(k) != 0; }
  [[nodiscard]] std::string str(const std::string& k, const std::string& def) const {
    auto it = p_.find(k);
    return it == p_.end() ? def : it->second;
  }
  [[nodiscard]] double num(const std::string& k, double def) const {
    return has(k) ? parse_double(p_.at(k), k) : def;
  }
  [[nodiscard]] long long integer(const std::string& k, long long def, long long lo = 0) const {
    const long long v = has(k) ? parse_int(p_.at(k), k) : def;
    if (v < lo) throw Error(ErrorCode::ConfigError, k + " must be at least " + std::to_string(lo));
    return v;
  }
  [[nodiscard]] bool flag(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const std::string& v = p_.at(k);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::ConfigError, k + ": expected true or false");
  }
  [[nodiscard]] std::vector<double> numbers(const std::string& k, const std::vector<double>& def) const {
    if (!has(k)) return def;
    std::vector<double> out;
    for (const auto& s : split(p_.at(k), ',')) out.push_back(parse_double(s, k));
    return out;
  }

 private:
  const std::map<std::string, std::string>& p_;
};

/// Vertex function specs: ones, resolvent (G_1 1), root, delta:<id>[,<id>],
/// file:<path> (JSON object id -> value).
VertexFunction resolve_function(const GraphForm& form, const std::string& spec, const std::string& root,
                                const Tolerances& tol) {
  if (spec == "ones") return form.ones();
  if (spec == "resolvent") return resolvent_apply(form, 1.0, form.ones(), tol);
  VertexFunction f = form.zeros();
  if (spec == "root") {
    if (root.empty()) throw Error(ErrorCode::ConfigError, "'root' needs a root vertex");
    f[form.require_index(root)] = 1.0;
    return f;
  }
  if (spec.rfind("delta:", 0) == 0) {
    for (const auto& id : split(spec.substr(6), ',')) f[form.require_index(id)] = 1.0;
    return f;
  }
  if (spec.rfind("file:", 0) == 0) {
    const std::string path = spec.substr(5);
    const json doc = [&] {
      try {
        return json::parse(read_file(path));
      } catch (const json::parse_error&) {
        throw Error(ErrorCode::ParseError, path + ": malformed JSON");
      }
    }();
    for (const auto& [id, v] : number_map(path, doc, "<document>")) f[form.require_index(id)] = v;
    form.check_domain(f);
    return f;
  }
  throw Error(ErrorCode::ConfigError, "unknown function spec '" + spec + "'");
}

struct Context {
  const JobConfig& job;
  Tolerances tol;
  Params params;
  unsigned threads;
  json result = json::object();
  std::string table;
  bool inconclusive = false;
};

Exhaustion load_exhaustion(const Context& ctx) {
  const InputSpec& in = ctx.job.input;
  if (!in.family.empty()) {
    Exhaustion ex = builtin_family(in.family, in.family_params);
    if (!in.root.empty()) ex.root = in.root;
    return ex;
  }
  if (!in.graph_sequence.empty()) return from_file_sequence(in.graph_sequence, in.root, ctx.tol);
  if (!in.graph.empty()) {
    if (in.root.empty()) throw Error(ErrorCode::ConfigError, "a single graph input needs --root");
    return constant_exhaustion(parse_graph_file(in.graph, ctx.tol), in.root);
  }
  throw Error(ErrorCode::ConfigError, "no graph input (use a graph file, a graph sequence or a family)");
}

struct LoadedForm {
  GraphForm form;
  std::string root;
};

LoadedForm load_form(const Context& ctx) {
  const InputSpec& in = ctx.job.input;
  if (!in.graph.empty()) return {parse_graph_file(in.graph, ctx.tol), in.root};
  if (!in.family.empty() || !in.graph_sequence.empty()) {
    const Exhaustion ex = load_exhaustion(ctx);
    return {ex.level(ex.radii.back()), ex.root};
  }
  throw Error(ErrorCode::ConfigError, "no graph input (use a graph file, a graph sequence or a family)");
}

json assessment_json(const CapacityAssessment& a) {
  return {{"verdict", to_string(a.verdict)},
          {"monotone", a.monotone},
          {"extrapolated_limit", jnum(a.extrapolated_limit)},
          {"limit_spread", jnum(a.limit_spread)},
          {"growth_exponent", jnum(a.growth_exponent)},
          {"loglog_exponent", jnum(a.loglog_exponent)},
          {"reason", a.reason}};
}

json ground_state_json(const GroundState& gs) {
  return {{"values", labeled(gs.values)},
          {"radius", gs.radius},
          {"last_change", jnum(gs.last_change)},
          {"residual", jnum(gs.residual)},
          {"converged", gs.converged}};
}

ClassifyConfig classify_config(const Context& ctx) {
  ClassifyConfig cfg;
  cfg.tol = ctx.tol;
  cfg.max_radius = static_cast<int>(ctx.params.integer("max_radius", 0));
  cfg.window_radius = static_cast<int>(ctx.params.integer("window_radius", 3));
  cfg.hardy_samples = static_cast<std::size_t>(ctx.params.integer("hardy_samples", 200));
  cfg.attach_certificates = ctx.params.flag("certificates", true);
  cfg.seed = ctx.job.seed.value_or(0);
  cfg.threads = ctx.threads;
  return cfg;
}

void cmd_classify(Context& ctx) {
  const Exhaustion ex = load_exhaustion(ctx);
  const ClassificationReport rep = classify(ex, classify_config(ctx));
  json& r = ctx.result;
  r["verdict"] = to_string(rep.verdict);
  r["root"] = rep.root;
  json trace = json::array();
  ctx.table = "radius,capacity\n";
  for (const auto& [radius, cap] : rep.capacity_trace) {
    trace.push_back(json::array({radius, jnum(cap)}));
    ctx.table += std::to_string(radius) + "," + fmt(cap) + "\n";
  }
  r["capacity_trace"] = trace;
  r["assessment"] = assessment_json(rep.assessment);
  r["ground_state"] = rep.ground_state ? ground_state_json(*rep.ground_state) : json(nullptr);
  r["hardy_weight"] = rep.hardy_weight ? labeled(*rep.hardy_weight) : json(nullptr);
  r["hardy_rho"] = rep.hardy_rho ? jnum(*rep.hardy_rho) : json(nullptr);
  r["notes"] = rep.notes;
  ctx.inconclusive = rep.verdict == Verdict::Inconclusive;
}

void cmd_green(Context& ctx) {
  const LoadedForm in = load_form(ctx);
  const VertexFunction f = resolve_function(in.form, ctx.params.str("f", "ones"), in.root, ctx.tol);
  const GreenResult g = green_apply(in.form, f, {}, ctx.tol);
  json& r = ctx.result;
  r["status"] = g.status == GreenStatus::Finite ? "Finite" : "Diverges";
  r["direct"] = g.direct;
  r["loglog_slope"] = jnum(g.loglog_slope);
  json trace = json::array();
  for (const auto& [a, v] : g.alpha_trace) trace.push_back(json::array({jnum(a), jnum(v)}));
  r["alpha_trace"] = trace;
  r["value"] = g.value ? free_values(in.form, *g.value) : json(nullptr);
  ctx.table = "vertex,value\n";
  if (g.value) {
    for (Index v : in.form.free_vertices())
      ctx.table += csv_field(in.form.vertices()[static_cast<std::size_t>(v)]) + "," + fmt((*g.value)[v]) + "\n";
  }
}

void cmd_hardy_weight(Context& ctx) {
  const LoadedForm in = load_form(ctx);
  const VertexFunction g = resolve_function(in.form, ctx.params.str("g", "ones"), in.root, ctx.tol);
  HardyOptions opt;
  opt.allow_perturbed = ctx.params.flag("allow_perturbed", false);
  opt.n_samples = static_cast<std::size_t>(ctx.params.integer("samples", 1000));
  opt.seed = *ctx.job.seed;
  const HardyWeight hw = hardy_weight(in.form, g, opt, ctx.tol);
  json& r = ctx.result;
  r["weight"] = free_values(in.form, hw.weight);
  r["source_g"] = free_values(in.form, hw.source_g);
  r["alpha_used"] = jnum(hw.alpha_used);
  r["verification"] = {{"samples", hw.verification.samples},
                       {"rho_sampled", jnum(hw.verification.rho_sampled)},
                       {"pencil_max", hw.verification.pencil_max ? jnum(*hw.verification.pencil_max) : json(nullptr)},
                       {"passed", hw.verification.passed}};
  ctx.table = "vertex,weight\n";
  for (Index v : in.form.free_vertices())
    ctx.table += csv_field(in.form.vertices()[static_cast<std::size_t>(v)]) + "," + fmt(hw.weight[v]) + "\n";
}

void cmd_ground_state(Context& ctx) {
  const Exhaustion ex = load_exhaustion(ctx);
  const GroundState gs = agmon_ground_state(ex, classify_config(ctx));
  ctx.result["ground_state"] = ground_state_json(gs);
  ctx.result["root"] = ex.root;
  ctx.table = "vertex,value\n";
  for (std::size_t i = 0; i < gs.values.ids.size(); ++i)
    ctx.table += csv_field(gs.values.ids[i]) + "," + fmt(gs.values.values[static_cast<Index>(i)]) + "\n";
}

ProfileMode parse_mode(const std::string& m) {
  if (m == "hardy") return ProfileMode::Hardy;
  if (m == "poincare") return ProfileMode::Poincare;
  throw Error(ErrorCode::ConfigError, "mode must be hardy or poincare");
}

json profile_json(const GraphForm& form, const AlphaProfile& p) {
  return {{"mode", p.mode == ProfileMode::Hardy ? "hardy" : "poincare"},
          {"r_grid", jvec(p.r_grid)},
          {"alpha_cert", jvec(p.alpha_cert)},
          {"alpha_lb", jvec(p.alpha_lb)},
          {"alpha_max", jnum(p.alpha_max)},
          {"weight_mass", jnum(p.weight_mass)},
          {"budget_exhausted", p.budget_exhausted},
          {"warnings", p.warnings},
          {"w", free_values(form, p.w)},
          {"h", free_values(form, p.h)}};
}

AlphaProfile profile_from_json(const json& j) {
  AlphaProfile p;
  try {
    p.mode = parse_mode(j.at("mode").get<std::string>());
    for (const auto& x : j.at("r_grid")) p.r_grid.push_back(from_jnum(x));
    for (const auto& x : j.at("alpha_cert")) p.alpha_cert.push_back(from_jnum(x));
    for (const auto& x : j.at("alpha_lb")) p.alpha_lb.push_back(from_jnum(x));
    p.alpha_max = from_jnum(j.at("alpha_max"));
    p.weight_mass = from_jnum(j.at("weight_mass"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("profile: ") + e.what());
  }
  return p;
}

json load_report_result(const std::string& path, std::string_view command) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::ParseError, path + ": malformed JSON");
  }
  if (!doc.is_object() || doc.value("schema", "") != kReportSchema || doc.value("command", "") != command ||
      !doc.contains("result")) {
    throw Error(ErrorCode::ParseError, path + ": not a successful " + std::string(command) + " report");
  }
  return doc["result"];
}

AlphaProfile compute_profile(Context& ctx, const GraphForm& form, const std::string& root, ProfileMode mode) {
  const VertexFunction w = resolve_function(form, ctx.params.str("w", "ones"), root, ctx.tol);
  const VertexFunction h =
      resolve_function(form, ctx.params.str("h", mode == ProfileMode::Hardy ? "resolvent" : "ones"), root, ctx.tol);
  double mass = 0.0;
  for (Index v : form.free_vertices()) mass += h[v] * h[v] * w[v] * form.measure()[v];
  const double r_max = ctx.params.num("r_max", mass);
  const double r_min = ctx.params.num("r_min", 1e-12);
  if (!(r_min > 0.0) || !(r_max > r_min)) throw Error(ErrorCode::ConfigError, "need 0 < r_min < r_max");
  const auto grid = default_r_grid(r_max, r_min, static_cast<int>(ctx.params.integer("per_decade", 2, 1)));
  ProfileBudget budget;
  budget.starts = static_cast<std::size_t>(ctx.params.integer("starts", 50, 1));
  budget.iterations = static_cast<std::size_t>(ctx.params.integer("iterations", 200, 1));
  return alpha_profile(form, w, h, grid, mode, *ctx.job.seed, budget, ctx.tol, ctx.threads);
}

std::string profile_table(const AlphaProfile& p) {
  std::string t = "r,alpha_cert,alpha_lb\n";
  for (std::size_t i = 0; i < p.r_grid.size(); ++i)
    t += fmt(p.r_grid[i]) + "," + fmt(p.alpha_cert[i]) + "," + fmt(p.alpha_lb[i]) + "\n";
  return t;
}

void cmd_alpha_profile(Context& ctx) {
  const LoadedForm in = load_form(ctx);
  const AlphaProfile p = compute_profile(ctx, in.form, in.root, parse_mode(ctx.params.str("mode", "hardy")));
  ctx.result["profile"] = profile_json(in.form, p);
  ctx.table = profile_table(p);
}

const std::vector<double> kDefaultTimes{0.1, 1.0, 10.0};

json xi_json(const DecayCurve& xi) {
  json a = json::array();
  for (const auto& [t, x] : xi) a.push_back(json::array({jnum(t), jnum(x)}));
  return a;
}

std::string xi_table(const DecayCurve& xi) {
  std::string t = "t,xi\n";
  for (const auto& [tt, x] : xi) t += fmt(tt) + "," + fmt(x) + "\n";
  return t;
}

void cmd_decay(Context& ctx) {
  AlphaProfile p;
  if (ctx.params.has("profile")) {
    const std::string path = ctx.params.str("profile", "");
    p = profile_from_json(load_report_result(path, "alpha-profile").at("profile"));
    ctx.result["profile_source"] = path;
  } else {
    const LoadedForm in = load_form(ctx);
    p = compute_profile(ctx, in.form, in.root, parse_mode(ctx.params.str("mode", "hardy")));
    ctx.result["profile"] = profile_json(in.form, p);
  }
  const DecayCurve xi = decay_rate(p, ctx.params.numbers("t", kDefaultTimes));
  ctx.result["xi"] = xi_json(xi);
  ctx.table = xi_table(xi);
}

void cmd_verify_decay(Context& ctx) {
  const LoadedForm in = load_form(ctx);
  const VertexFunction h = resolve_function(in.form, ctx.params.str("h", "resolvent"), in.root, ctx.tol);
  DecayCurve xi;
  if (ctx.params.has("xi")) {
    const std::string path = ctx.params.str("xi", "");
    try {
      const json decay = load_report_result(path, "decay");
      for (const auto& pair : decay.at("xi"))
        xi.emplace_back(from_jnum(pair.at(0)), from_jnum(pair.at(1)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    ctx.result["xi_source"] = path;
  } else {
    const AlphaProfile p = compute_profile(ctx, in.form, in.root, ProfileMode::Hardy);
    xi = decay_rate(p, ctx.params.numbers("t", kDefaultTimes));
  }
  const DecayReport rep =
      verify_decay(in.form, h, xi, static_cast<std::size_t>(ctx.params.integer("samples", 200, 1)), *ctx.job.seed, ctx.tol);
  json& r = ctx.result;
  r["xi"] = xi_json(xi);
  r["samples"] = rep.samples;
  r["worst_margin"] = jnum(rep.worst_margin);
  r["tight"] = rep.tight;
  r["worst_by_t"] = xi_json(rep.worst_by_t);
  r["notes"] = json::array();
  if (rep.tight > 0) r["notes"].push_back(std::to_string(rep.tight) + " samples have a margin below 1e-3");
  ctx.table = "t,worst_margin\n";
  for (const auto& [t, m] : rep.worst_by_t) ctx.table += fmt(t) + "," + fmt(m) + "\n";
}

void cmd_excessive(Context& ctx) {
  ExcessiveOptions opt;
  opt.stabilization = ctx.params.num("stabilization", opt.stabilization);
  std::vector<std::string> reference;
  if (ctx.params.has("reference")) reference = split(ctx.params.str("reference", ""), ',');
  const std::string gspec = ctx.params.str("g", "ones");
  json& r = ctx.result;
  const InputSpec& in = ctx.job.input;
  if (in.graph.empty()) {
    const Exhaustion ex = load_exhaustion(ctx);
    const Tolerances tol = ctx.tol;
    const std::string root = ex.root;
    const ExhaustionExcessive out = construct_excessive(
        ex, [&](const GraphForm& f) { return resolve_function(f, gspec, root, tol); }, reference, opt, ctx.tol);
    json levels = json::array();
    for (const auto& l : out.levels)
      levels.push_back({{"radius", l.radius}, {"residual", jnum(l.residual)}, {"tail_change", jnum(l.tail_change)}});
    r["levels"] = levels;
    r["residual_monotone"] = out.residual_monotone;
    r["h"] = labeled(out.h);
    const GraphForm last = ex.level(ex.radii.back());
    VertexFunction h = last.zeros();
    for (std::size_t i = 0; i < out.h.ids.size(); ++i) h[last.require_index(out.h.ids[i])] = out.h.values[static_cast<Index>(i)];
    r["excessive"] = is_excessive(last, h, default_excessive_grid(last), ctx.tol).excessive;
    ctx.table = "vertex,value\n";
    for (std::size_t i = 0; i < out.h.ids.size(); ++i)
      ctx.table += csv_field(out.h.ids[i]) + "," + fmt(out.h.values[static_cast<Index>(i)]) + "\n";
    return;
  }
  const GraphForm form = parse_graph_file(in.graph, ctx.tol);
  const ExcessiveConstruction c =
      construct_excessive(form, resolve_function(form, gspec, in.root, ctx.tol), reference, opt, ctx.tol);
  r["h"] = free_values(form, c.h);
  r["reference"] = c.reference;
  r["alpha_last"] = jnum(c.alpha_last);
  r["tail_change"] = jnum(c.tail_change);
  r["residual"] = jnum(c.residual);
  r["excessive"] = is_excessive(form, c.h, default_excessive_grid(form), ctx.tol).excessive;
  ctx.table = "vertex,value\n";
  for (Index v : form.free_vertices()) ctx.table += csv_field(form.vertices()[static_cast<std::size_t>(v)]) + "," + fmt(c.h[v]) + "\n";
}

void cmd_harnack(Context& ctx) {
  if (ctx.job.input.kernel.empty()) throw Error(ErrorCode::ConfigError, "harnack needs a kernel file");
  const KernelOperator op = parse_kernel_file(ctx.job.input.kernel, ctx.params.num("p", 2.0));
  const LambdaResult lam = lambda_of(op);
  const HarnackCertificate cert = harnack_sets(op, ctx.params.num("target_mass", 0.5), lam.lambda);
  json& r = ctx.result;
  r["p"] = jnum(op.p);
  r["lambda"] = jnum(lam.lambda);
  r["lambda_lower"] = jnum(lam.lower);
  r["iterations"] = lam.iterations;
  r["witness"] = jvec(std::vector<double>(lam.witness.data(), lam.witness.data() + lam.witness.size()));
  r["super_eigen_excess"] = jnum(check_super_eigen(op, lam.lambda, lam.witness));
  r["certificate"] = {{"set", cert.set}, {"c", jnum(cert.c)}, {"D", jnum(cert.D)},
                      {"lambda", jnum(cert.lambda)}, {"mass", jnum(cert.mass)},
                      {"witness_gap", jnum(harnack_gap(op, cert, lam.witness))}};
  const Index n = op.mu.size();
  if (n > 1) {
    std::vector<Index> set = cert.set;
    if (static_cast<Index>(set.size()) == n) set = {0};
    const ErgodicityReport e =
        ergodicity_check(op, set, static_cast<std::size_t>(ctx.params.integer("samples", 100, 1)), *ctx.job.seed);
    r["ergodicity"] = {{"set", set}, {"samples_tried", e.samples_tried}, {"point", e.point},
                       {"lhs", jnum(e.lhs)}, {"rhs", jnum(e.rhs)}};
  } else {
    r["ergodicity"] = nullptr;
  }
  std::vector<char> in_set(static_cast<std::size_t>(n), 0);
  for (Index a : cert.set) in_set[static_cast<std::size_t>(a)] = 1;
  ctx.table = "point,witness,in_set\n";
  for (Index i = 0; i < n; ++i)
    ctx.table += std::to_string(i) + "," + fmt(lam.witness[i]) + "," + (in_set[static_cast<std::size_t>(i)] ? "1" : "0") + "\n";
}

void cmd_check(Context& ctx) {
  const LoadedForm in = load_form(ctx);
  const auto checks =
      check_properties(in.form, static_cast<std::size_t>(ctx.params.integer("samples", 1000, 1)), *ctx.job.seed, ctx.tol);
  json list = json::array();
  ctx.table = "property,samples,violations,max_violation\n";
  std::size_t total = 0;
  for (const auto& c : checks) {
    list.push_back({{"property", c.name}, {"samples", c.samples}, {"violations", c.violations},
                    {"max_violation", jnum(c.max_violation)}});
    ctx.table += c.name + "," + std::to_string(c.samples) + "," + std::to_string(c.violations) + "," + fmt(c.max_violation) + "\n";
    total += c.violations;
  }
  ctx.result["properties"] = list;
  ctx.result["passed"] = total == 0;
  if (total > 0) {
    ctx.result["error_hint"] = "structural property violated; the form data is inconsistent";
  }
}

json config_json(const JobConfig& job, const Tolerances& tol, bool tol_ok) {
  json input = json::object();
  if (!job.input.graph.empty()) input["graph"] = job.input.graph;
  if (!job.input.graph_sequence.empty()) input["graph_sequence"] = job.input.graph_sequence;
  if (!job.input.family.empty()) {
    input["family"] = job.input.family;
    input["family_params"] = job.input.family_params;
  }
  if (!job.input.kernel.empty()) input["kernel"] = job.input.kernel;
  if (!job.input.root.empty()) input["root"] = job.input.root;
  json tj = json::object();
  if (tol_ok)
    for (const auto& f : kTolFields) tj[f.name] = jnum(tol.*(f.member));
  json cli = json::object();
  for (const auto& [k, v] : job.tolerance_overrides) cli[k] = jnum(v);
  return {{"input", input},
          {"seed", job.seed ? json(*job.seed) : json(nullptr)},
          {"params", job.params},
          {"tolerances", tj},
          {"overrides", {{"cli", cli}, {"env", job.environment}}},
          {"threads", job.threads},
          {"format", job.format}};
}

}  // namespace

std::string_view to_string(Command c) noexcept {
  for (const auto& [cmd, name] : kCommandNames)
    if (cmd == c) return name;
  return "unknown";
}

Command parse_command(std::string_view name) {
  for (const auto& [cmd, n] : kCommandNames)
    if (n == name) return cmd;
  throw Error(ErrorCode::ConfigError, "unknown command '" + std::string(name) + "'");
}

std::vector<std::string> command_options(Command c) {
  const auto& keys = allowed_params().at(c);
  return {keys.begin(), keys.end()};
}

bool is_randomized(Command c, const std::map<std::string, std::string>& params) {
  switch (c) {
    case Command::Classify:
    case Command::HardyWeight:
    case Command::AlphaProfile:
    case Command::VerifyDecay:
    case Command::Harnack:
    case Command::Check:
      return true;
    case Command::Decay:
      return params.count("profile") == 0;
    default:
      return false;
  }
}

std::map<std::string, std::string> capture_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = entry.substr(0, eq);
    if (key == "CRITKIT_THREADS" || key.rfind("CRITKIT_TOL_", 0) == 0) env[key] = entry.substr(eq + 1);
  }
  return env;
}

Tolerances resolve_tolerances(const JobConfig& job) {
  Tolerances tol;
  auto set = [&](const std::string& key, double value, const std::string& origin) {
    for (const auto& f : kTolFields) {
      if (key == f.name) {
        if (!(value > 0.0) || !std::isfinite(value)) {
          throw Error(ErrorCode::ConfigError, origin + ": tolerance " + key + " must be positive");
        }
        tol.*(f.member) = value;
        return;
      }
    }
    throw Error(ErrorCode::ConfigError, origin + ": unknown tolerance '" + key + "'");
  };
  for (const auto& [k, v] : job.environment) {
    if (k.rfind("CRITKIT_TOL_", 0) != 0) continue;
    std::string key = k.substr(12);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    set(key, parse_double(v, k), k);
  }
  for (const auto& [k, v] : job.tolerance_overrides) set(k, v, "--tol");
  return tol;
}

RunResult run(const JobConfig& job) {
  const auto start = std::chrono::steady_clock::now();
  RunResult out;
  json report;
  report["schema"] = kReportSchema;
  report["command"] = to_string(job.command);
  Tolerances tol;
  bool tol_ok = false;
  try {
    tol = resolve_tolerances(job);
    tol_ok = true;
    if (job.format != "json" && job.format != "csv") throw Error(ErrorCode::ConfigError, "format must be json or csv");
    const auto& allowed = allowed_params().at(job.command);
    for (const auto& [k, v] : job.params) {
      if (!allowed.count(k)) {
        throw Error(ErrorCode::ConfigError, "option '" + k + "' does not apply to " + std::string(to_string(job.command)));
      }
    }
    if (is_randomized(job.command, job.params) && !job.seed) {
      throw Error(ErrorCode::ConfigError, std::string(to_string(job.command)) + " is randomized and needs --seed");
    }
    unsigned threads = job.threads;
    if (threads == 0 && job.environment.count("CRITKIT_THREADS")) {
      threads = static_cast<unsigned>(parse_int(job.environment.at("CRITKIT_THREADS"), "CRITKIT_THREADS"));
    }
    report["config"] = config_json(job, tol, true);
    report["config"]["threads"] = threads;
    Context ctx{job, tol, Params(job.params), threads, json::object(), {}, false};
    switch (job.command) {
      case Command::Classify: cmd_classify(ctx); break;
      case Command::Green: cmd_green(ctx); break;
      case Command::HardyWeight: cmd_hardy_weight(ctx); break;
      case Command::GroundState: cmd_ground_state(ctx); break;
      case Command::AlphaProfile: cmd_alpha_profile(ctx); break;
      case Command::Decay: cmd_decay(ctx); break;
      case Command::VerifyDecay: cmd_verify_decay(ctx); break;
      case Command::Excessive: cmd_excessive(ctx); break;
      case Command::Harnack: cmd_harnack(ctx); break;
      case Command::Check: cmd_check(ctx); break;
    }
    report["result"] = ctx.result;
    out.table = ctx.table;
    out.exit_code = ctx.inconclusive ? 2 : 0;
    if (job.command == Command::Check && !ctx.result.value("passed", true)) out.exit_code = 1;
  } catch (const Error& e) {
    report["config"] = config_json(job, tol, tol_ok);
    report["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
    out.exit_code = e.code() == ErrorCode::Inconclusive ? 2 : 1;
    if (e.code() == ErrorCode::Inconclusive) report["result"] = {{"verdict", "Inconclusive"}};
  } catch (const std::exception& e) {
    report["config"] = config_json(job, tol, tol_ok);
    report["error"] = {{"code", "InternalError"}, {"message", e.what()}};
    out.exit_code = 1;
  }
  report["exit_code"] = out.exit_code;
  json prov = {{"tool", "critkit"}, {"version", version()}, {"seed", job.seed ? json(*job.seed) : json(nullptr)}};
  if (job.timing) {
    prov["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  report["provenance"] = prov;
  out.report = dump(report);
  return out;
}

void write_outputs(const JobConfig& job, const RunResult& result) {
  if (job.output.empty()) {
    std::cout << (job.format == "csv" && !result.table.empty() && result.exit_code != 1 ? result.table : result.report);
    return;
  }
  write_file(job.output + ".json", result.report);
  if (job.format == "csv" && !result.table.empty()) write_file(job.output + ".csv", result.table);
}

// ---------------------------------------------------------------------------
// Structural property sweeps

std::vector<PropertyCheck> check_properties(const GraphForm& form, std::size_t n_samples, std::uint64_t seed,
                                            const Tolerances& tol) {
  if (n_samples == 0) throw Error(ErrorCode::BadParams, "n_samples must be positive");
  std::mt19937_64 rng(seed);
  std::vector<PropertyCheck> out;
  auto record = [](PropertyCheck& c, double violation, double limit) {
    ++c.samples;
    c.max_violation = std::max(c.max_violation, violation);
    if (violation > limit) ++c.violations;
  };

  {
    PropertyCheck c{"first_beurling_deny"};
    try {
      const FirstBdReport r = check_first_bd(form, n_samples, rng(), tol);
      c.samples = r.samples;
      c.max_violation = std::max(0.0, r.max_violation);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ViolationFound) throw;
      c.samples = n_samples;
      c.violations = 1;
      c.max_violation = std::numeric_limits<double>::infinity();
    }
    out.push_back(c);
  }
  {
    PropertyCheck c{"lattice_inequality"};
    for (std::size_t s = 0; s < n_samples; ++s) {
      const VertexFunction f = random_function(form, rng), g = random_function(form, rng);
      const double scale = std::max(evaluate(form, f) + evaluate(form, g), 1e-300);
      record(c, std::max(0.0, -check_lattice_inequality(form, f, g)) / scale, tol.ineq);
    }
    out.push_back(c);
  }
  const std::vector<double> alphas{0.01, 0.1, 1.0, 10.0};
  std::uniform_int_distribution<std::size_t> pick(0, alphas.size() - 1);
  {
    PropertyCheck c{"resolvent_identity"};
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double a = alphas[pick(rng)], b = alphas[pick(rng)];
      const VertexFunction f = random_function(form, rng);
      const VertexFunction ga = resolvent_apply(form, a, f, tol);
      const VertexFunction gb = resolvent_apply(form, b, f, tol);
      const VertexFunction gab = resolvent_apply(form, a, gb, tol);
      const double scale = std::max({ga.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff(), 1e-300});
      record(c, (ga - gb - (b - a) * gab).cwiseAbs().maxCoeff() / scale, 1e-8);
    }
    out.push_back(c);
  }
  {
    PropertyCheck c{"resolvent_contraction"};
    for (std::size_t s = 0; s < n_samples; ++s) {
      const VertexFunction f = random_function(form, rng);
      const ContractionReport r = check_resolvent_contraction(form, f, alphas[pick(rng)], tol);
      const double scale = std::max(norm_sq(form, f), 1e-300);
      record(c, std::max({0.0, (r.q_scaled - r.q_f) / scale, (r.defect_energy - r.q_f) / scale}), tol.ineq);
    }
    out.push_back(c);
  }
  {
    PropertyCheck c{"excessivity_equivalence"};
    const auto grid = default_excessive_grid(form);
    std::uniform_int_distribution<int> kind(0, 2);
    for (std::size_t s = 0; s < n_samples; ++s) {
      VertexFunction h = random_function(form, rng).cwiseAbs();
      const int k = kind(rng);
      if (k == 1) h = resolvent_apply(form, alphas[pick(rng)], h, tol);  // excessive only for c large enough
      if (k == 2) h = form.ones();
      const ExcessiveReport r = is_excessive(form, h, grid, tol);
      ++c.samples;
      if (!r.grid_agrees) {
        ++c.violations;
        c.max_violation = std::max(c.max_violation, std::abs(r.grid_max_violation - r.max_violation));
      }
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace critkit
