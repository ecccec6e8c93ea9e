#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "critkit/cli_io.hpp"
#include "critkit/criticality.hpp"
#include "critkit/error.hpp"
#include "critkit/excessive_harnack.hpp"
#include "critkit/families.hpp"
#include "critkit/hardy.hpp"
#include "critkit/resolvent.hpp"
#include "critkit/weak_ineq.hpp"

namespace py = pybind11;
using namespace critkit;

namespace {

// Values keyed by vertex id, which is how Python callers usually think
// about vertex functions.
py::dict as_dict(const GraphForm& form, const VertexFunction& f) {
  py::dict d;
  for (Index v : form.free_vertices()) d[py::str(form.vertices()[static_cast<std::size_t>(v)])] = f[v];
  return d;
}

py::dict as_dict(const LabeledFunction& f) {
  py::dict d;
  for (std::size_t i = 0; i < f.ids.size(); ++i) d[py::str(f.ids[i])] = f.values[static_cast<Index>(i)];
  return d;
}

}  // namespace

PYBIND11_MODULE(_critkit, m) {
  m.doc() = "Criticality toolkit for discrete Schroedinger forms on weighted graphs";
  m.attr("__version__") = std::string(version());

  // Messages carry the error code first ("BadParams: ...").
  static PyObject* critkit_error = py::exception<Error>(m, "CritkitError").release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(critkit_error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Tolerances>(m, "Tolerances")
      .def(py::init<>())
      .def_readwrite("psd_rel", &Tolerances::psd_rel)
      .def_readwrite("ineq", &Tolerances::ineq)
      .def_readwrite("green", &Tolerances::green)
      .def_readwrite("cap", &Tolerances::cap)
      .def_readwrite("cap_stable", &Tolerances::cap_stable)
      .def_readwrite("ground_state", &Tolerances::ground_state)
      .def_readwrite("excessive", &Tolerances::excessive)
      .def_readwrite("eig", &Tolerances::eig)
      .def_readwrite("solve", &Tolerances::solve)
      .def_readwrite("divergence_factor", &Tolerances::divergence_factor);

  py::class_<GraphForm>(m, "GraphForm")
      .def_static("from_json", [](const std::string& text, const Tolerances& tol) { return parse_graph_string(text, "<python>", tol); },
                  py::arg("text"), py::arg("tol") = Tolerances{})
      .def_static("from_file", &parse_graph_file, py::arg("path"), py::arg("tol") = Tolerances{})
      .def("to_json", &emit_graph)
      .def_property_readonly("vertices", &GraphForm::vertices)
      .def_property_readonly("size", &GraphForm::size)
      .def_property_readonly("free_vertices", &GraphForm::free_vertices)
      .def_property_readonly("measure", &GraphForm::measure)
      .def_property_readonly("potential", &GraphForm::potential)
      .def("index", &GraphForm::require_index)
      .def("ones", &GraphForm::ones)
      .def("zeros", &GraphForm::zeros)
      .def("to_dict", [](const GraphForm& f, const VertexFunction& v) { return as_dict(f, v); })
      .def("__len__", &GraphForm::size)
      .def("__repr__", [](const GraphForm& f) {
        return "<GraphForm " + std::to_string(f.size()) + " vertices, " + std::to_string(f.edges().size()) + " edges>";
      });

  m.def("energy", &evaluate, py::arg("form"), py::arg("f"), "q(f)");
  m.def("is_irreducible", &is_irreducible);
  m.def("resolvent_apply", &resolvent_apply, py::arg("form"), py::arg("alpha"), py::arg("f"),
        py::arg("tol") = Tolerances{});
  m.def("semigroup_apply", &semigroup_apply, py::arg("form"), py::arg("t"), py::arg("f"),
        py::arg("tol") = Tolerances{});
  m.def("apply_generator", &apply_generator);
  m.def(
      "green_apply",
      [](const GraphForm& form, const VertexFunction& f, const Tolerances& tol) {
        const GreenResult g = green_apply(form, f, {}, tol);
        py::dict out;
        out["status"] = g.status == GreenStatus::Finite ? "Finite" : "Diverges";
        out["value"] = g.value ? py::cast(*g.value) : py::none();
        out["direct"] = g.direct;
        out["alpha_trace"] = g.alpha_trace;
        return out;
      },
      py::arg("form"), py::arg("f"), py::arg("tol") = Tolerances{});
  m.def(
      "is_excessive",
      [](const GraphForm& form, const VertexFunction& h, const Tolerances& tol) {
        const ExcessiveReport r = is_excessive(form, h, default_excessive_grid(form), tol);
        return py::dict(py::arg("excessive") = r.excessive, py::arg("max_violation") = r.max_violation,
                        py::arg("grid_max_violation") = r.grid_max_violation, py::arg("grid_agrees") = r.grid_agrees);
      },
      py::arg("form"), py::arg("h"), py::arg("tol") = Tolerances{});

  py::class_<Exhaustion>(m, "Exhaustion")
      .def_readonly("radii", &Exhaustion::radii)
      .def_readonly("root", &Exhaustion::root)
      .def_readonly("label", &Exhaustion::label)
      .def("level", &Exhaustion::level);
  m.def("family", &builtin_family, py::arg("name"), py::arg("params") = FamilyParams{},
        "Built-in exhaustion: lattice, birth_death or dirichlet_path");
  m.def("constant_exhaustion", &constant_exhaustion);

  m.def(
      "classify",
      [](const Exhaustion& ex, std::uint64_t seed, int max_radius) {
        ClassifyConfig cfg;
        cfg.seed = seed;
        cfg.max_radius = max_radius;
        const ClassificationReport r = classify(ex, cfg);
        py::dict out;
        out["verdict"] = to_string(r.verdict);
        out["capacity_trace"] = r.capacity_trace;
        out["reason"] = r.assessment.reason;
        out["ground_state"] = r.ground_state ? py::object(as_dict(r.ground_state->values)) : py::none();
        out["hardy_weight"] = r.hardy_weight ? py::object(as_dict(*r.hardy_weight)) : py::none();
        return out;
      },
      py::arg("exhaustion"), py::arg("seed") = 0, py::arg("max_radius") = 0);

  m.def(
      "hardy_weight",
      [](const GraphForm& form, const VertexFunction& g, std::uint64_t seed, std::size_t samples) {
        HardyOptions opt;
        opt.seed = seed;
        opt.n_samples = samples;
        const HardyWeight w = hardy_weight(form, g, opt);
        py::dict out;
        out["weight"] = w.weight;
        out["passed"] = w.verification.passed;
        out["rho_sampled"] = w.verification.rho_sampled;
        out["pencil_max"] = w.verification.pencil_max ? py::cast(*w.verification.pencil_max) : py::none();
        return out;
      },
      py::arg("form"), py::arg("g"), py::arg("seed"), py::arg("samples") = 1000);

  py::enum_<ProfileMode>(m, "ProfileMode").value("Hardy", ProfileMode::Hardy).value("Poincare", ProfileMode::Poincare);
  py::class_<AlphaProfile>(m, "AlphaProfile")
      .def_readonly("mode", &AlphaProfile::mode)
      .def_readonly("r_grid", &AlphaProfile::r_grid)
      .def_readonly("alpha_cert", &AlphaProfile::alpha_cert)
      .def_readonly("alpha_lb", &AlphaProfile::alpha_lb)
      .def_readonly("alpha_max", &AlphaProfile::alpha_max)
      .def_readonly("weight_mass", &AlphaProfile::weight_mass)
      .def_readonly("warnings", &AlphaProfile::warnings);
  m.def("default_r_grid", &default_r_grid, py::arg("weight_mass"), py::arg("lo") = 1e-12, py::arg("per_decade") = 2);
  m.def(
      "alpha_profile",
      [](const GraphForm& form, const VertexFunction& w, const VertexFunction& h, const std::vector<double>& grid,
         ProfileMode mode, std::uint64_t seed, std::size_t starts, std::size_t iterations) {
        return alpha_profile(form, w, h, grid, mode, seed, ProfileBudget{starts, iterations});
      },
      py::arg("form"), py::arg("w"), py::arg("h"), py::arg("r_grid"), py::arg("mode"), py::arg("seed"),
      py::arg("starts") = 50, py::arg("iterations") = 200);
  m.def("decay_rate", &decay_rate, py::arg("profile"), py::arg("t_grid"));

  m.def(
      "kernel_lambda",
      [](const Matrix& kernel, const Vector& nu, const Vector& mu, double p) {
        const KernelOperator op{kernel, nu, mu, p};
        op.validate();
        const LambdaResult r = lambda_of(op);
        return py::make_tuple(r.lambda, r.witness);
      },
      py::arg("kernel"), py::arg("nu"), py::arg("mu"), py::arg("p") = 2.0,
      "lambda(T) = ||T||^p and a strictly positive super-eigen witness");

  m.def(
      "run",
      [](const std::string& command, const py::dict& options) {
        JobConfig job;
        job.command = parse_command(command);
        for (const auto& [k, v] : options) {
          const std::string key = py::str(k);
          if (key == "graph") job.input.graph = py::str(v);
          else if (key == "graph_sequence") job.input.graph_sequence = v.cast<std::vector<std::string>>();
          else if (key == "family") job.input.family = py::str(v);
          else if (key == "family_params") job.input.family_params = v.cast<FamilyParams>();
          else if (key == "kernel") job.input.kernel = py::str(v);
          else if (key == "root") job.input.root = py::str(v);
          else if (key == "seed") job.seed = v.cast<std::uint64_t>();
          else if (key == "tol") job.tolerance_overrides = v.cast<std::map<std::string, double>>();
          else if (key == "params") job.params = v.cast<std::map<std::string, std::string>>();
          else if (key == "format") job.format = py::str(v);
          else throw Error(ErrorCode::ConfigError, "unknown job option '" + key + "'");
        }
        const RunResult r = run(job);
        return py::make_tuple(r.exit_code, r.report, r.table);
      },
      py::arg("command"), py::arg("options") = py::dict(),
      "Runs a CLI job in process; returns (exit_code, report_json, csv_table).");
}
