#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "hc/config.hpp"
#include "hc/quadratic.hpp"
#include "hc/serialize.hpp"

namespace py = pybind11;
using namespace hc;

namespace {

py::array_t<double> array(const std::vector<double>& v) { return py::array_t<double>(v.size(), v.data()); }

py::array_t<double> matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  py::array_t<double> a({rows, cols});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::dict estimate_dict(const Estimate& e) {
  py::dict d;
  d["mean"] = e.mean;
  d["se"] = e.se;
  return d;
}

py::list warnings_list(const Warnings& ws) {
  py::list out;
  for (const auto& w : ws) {
    py::dict d;
    d["code"] = w.code;
    d["message"] = w.message;
    d["at"] = w.at;
    out.append(d);
  }
  return out;
}

py::dict gate_dict(const GateResult& g) {
  py::dict d;
  d["name"] = g.name;
  d["statistic"] = g.statistic;
  d["se"] = g.se;
  d["threshold"] = g.threshold;
  d["two_sided"] = g.two_sided;
  d["pass"] = g.pass;
  d["seed"] = g.seed;
  return d;
}

SimulationConfig sim_config(std::size_t n_paths, std::size_t n_steps, std::uint64_t seed, double payment_sign,
                            std::size_t threads) {
  SimulationConfig c;
  c.n_paths = n_paths;
  c.n_steps = n_steps;
  c.seed = seed;
  c.payment_sign = payment_sign;
  c.threads = threads;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Aggregate contracts for hierarchical principal-agent chains";
  py::register_exception<Error>(m, "HcError", PyExc_ValueError);
  m.attr("__version__") = HC_VERSION;

  m.def(
      "concave_envelope",
      [](std::vector<double> nodes, std::vector<double> values) {
        const auto env = concave_envelope_1d(GridFunction{std::move(nodes), std::move(values)});
        py::dict d;
        d["nodes"] = array(env.nodes);
        d["values"] = array(env.values);
        d["left_slope"] = array(env.left_slope);
        d["right_slope"] = array(env.right_slope);
        d["touching"] = std::vector<bool>(env.touching.begin(), env.touching.end());
        return d;
      },
      py::arg("nodes"), py::arg("values"), "Least concave majorant of a sampled function.");

  m.def(
      "quadratic_closed_form",
      [](std::vector<double> alphas, std::vector<double> betas, double alpha0) {
        QuadraticSpec q;
        q.alpha0 = alpha0;
        q.alphas = std::move(alphas);
        q.betas = std::move(betas);
        const auto a = quadratic_recursion(q);
        py::dict d;
        d["gamma"] = a.gamma;
        d["g1"] = a.levels.front().g;
        py::list curv;
        for (const auto& L : a.levels) curv.append(L.curvature);
        d["level_curvature"] = curv;
        return d;
      },
      py::arg("alphas"), py::arg("betas"), py::arg("alpha0") = 1.0);

  py::class_<RunConfig>(m, "RunConfig")
      .def_static(
          "parse", [](const std::string& text, const std::string& base_dir) { return parse_run_config(text, base_dir); },
          py::arg("text"), py::arg("base_dir") = ".")
      .def_static("load", [](const std::string& path) { return load_run_config(path); }, py::arg("path"))
      .def_property_readonly("hash", [](const RunConfig& c) { return hash_hex(c.hash); })
      .def_property_readonly("players", [](const RunConfig& c) { return c.hierarchy.size(); })
      .def_property_readonly("seed", [](const RunConfig& c) { return c.simulation.seed; })
      .def_property_readonly("output_dir", [](const RunConfig& c) { return c.output_dir.string(); });

  py::class_<AggregateContract>(m, "Contract")
      .def_static(
          "build", [](const RunConfig& c) { return build_aggregate(c.hierarchy, c.envelope); }, py::arg("config"),
          "Backward construction of the aggregate contract.")
      .def_static(
          "from_json", [](const std::string& text) { return contract_from_json(nlohmann::json::parse(text)); },
          py::arg("text"))
      .def("to_json", [](const AggregateContract& a) { return contract_to_json(a).dump(); })
      .def_property_readonly("players", &AggregateContract::size)
      .def_readonly("w_star", &AggregateContract::w_star)
      .def_property_readonly("gamma",
                             [](const AggregateContract& a) {
                               const std::size_t n = a.size();
                               std::vector<double> v(n * n);
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t k = 0; k < n; ++k) v[i * n + k] = a.gamma(i, k);
                               return matrix(v, n, n);
                             })
      .def(
          "envelope",
          [](const AggregateContract& a, std::size_t level) {
            if (level >= a.size()) throw validation_error("envelope: level out of range");
            const Level& L = a.levels[level];
            py::dict d;
            d["y"] = array(L.envelope.nodes);
            d["phi_hat"] = array(L.envelope.values);
            d["phi"] = array(L.fiber);
            d["touching"] = std::vector<bool>(L.envelope.touching.begin(), L.envelope.touching.end());
            const std::vector<double> coords(L.psi.coords().begin(), L.psi.coords().end());
            d["psi"] = matrix(coords, L.psi.size(), L.psi.dim());
            d["psi_valid"] = std::vector<bool>(L.psi.valid_mask().begin(), L.psi.valid_mask().end());
            return d;
          },
          py::arg("level") = 0, "Envelope, fiber supremum and touching-set parametrization of one level (0-based).")
      .def(
          "supergradient",
          [](const AggregateContract& a, double y) {
            const auto s = supergradient(a.phi1_hat(), y);
            return py::make_tuple(s.lo, s.hi);
          },
          py::arg("y"))
      .def_property_readonly("warnings", [](const AggregateContract& a) { return warnings_list(a.warnings); });

  py::class_<ValueFunction>(m, "ValueFunction")
      .def_property_readonly("w", [](const ValueFunction& v) { return array(v.w_nodes); })
      .def_property_readonly("t", [](const ValueFunction& v) { return array(v.t_nodes); })
      .def_property_readonly("v", [](const ValueFunction& v) { return matrix(v.v, v.nt(), v.nw()); })
      .def_property_readonly("s_star", [](const ValueFunction& v) { return matrix(v.s_star, v.nt(), v.nw()); })
      .def_property_readonly("y_star", [](const ValueFunction& v) { return matrix(v.y_star, v.nt(), v.nw()); })
      .def_readonly("substeps_per_layer", &ValueFunction::substeps_per_layer)
      .def_property_readonly("warnings", [](const ValueFunction& v) { return warnings_list(v.warnings); })
      .def("value", &ValueFunction::value, py::arg("w"), py::arg("t"));

  m.def(
      "solve",
      [](const AggregateContract& a, const RunConfig& c, std::optional<std::size_t> w_nodes) {
        HjbGrid g = c.hjb;
        if (w_nodes) g.w_nodes = *w_nodes;
        py::gil_scoped_release release;
        return solve_hjb(a, g);
      },
      py::arg("contract"), py::arg("config"), py::arg("w_nodes") = py::none(),
      "Solve the HJB equation on the configured grid.");

  m.def(
      "simulate",
      [](const AggregateContract& a, const ValueFunction& vf, std::size_t n_paths, std::size_t n_steps,
         std::uint64_t seed, double payment_sign, std::size_t threads) {
        const FeedbackPolicy pol = extract_policy(vf, a);
        PathBatch b;
        {
          py::gil_scoped_release release;
          b = simulate_contract(a, pol, sim_config(n_paths, n_steps, seed, payment_sign, threads));
        }
        const auto r = realized_utilities(b);
        py::dict d;
        py::list J;
        for (const auto& e : r.J) J.append(estimate_dict(e));
        d["J"] = J;
        d["aggregate"] = estimate_dict(r.aggregate);
        d["W_T"] = estimate_dict(r.W_T);
        d["R"] = matrix(b.R, b.n_paths, b.players);
        d["leakage_fraction"] = b.leakage_fraction;
        d["max_ledger_mismatch"] = b.max_ledger_mismatch;
        d["max_telescoping_error"] = b.max_telescoping_error;
        d["warnings"] = warnings_list(b.warnings);
        return d;
      },
      py::arg("contract"), py::arg("value_function"), py::arg("n_paths") = 10000, py::arg("n_steps") = 400,
      py::arg("seed") = 1, py::arg("payment_sign") = 1.0, py::arg("threads") = 1);

  m.def(
      "check_ic",
      [](const AggregateContract& a, const ValueFunction& vf, const std::string& deviation, double param,
         std::optional<std::size_t> player, std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
         double payment_sign) {
        const FeedbackPolicy pol = extract_policy(vf, a);
        const DeviationStrategy dev = DeviationStrategy::parse(deviation, param, player);
        IcOptions opt;
        opt.sim = sim_config(n_paths, n_steps, seed, payment_sign, 1);
        std::vector<GateResult> gates;
        {
          py::gil_scoped_release release;
          gates = check_incentive_compatibility(a, pol, dev, opt);
        }
        py::list out;
        for (const auto& g : gates) out.append(gate_dict(g));
        return out;
      },
      py::arg("contract"), py::arg("value_function"), py::arg("deviation") = "suggested", py::arg("param") = 0.0,
      py::arg("player") = py::none(), py::arg("n_paths") = 10000, py::arg("n_steps") = 100, py::arg("seed") = 1,
      py::arg("payment_sign") = 1.0,
      "Gate(s) for one deviation; `player` is 0-based, None deviates the whole sub-hierarchy.");

  m.def(
      "check_touching",
      [](const AggregateContract& a, std::size_t level, std::size_t samples, std::uint64_t seed) {
        const auto r = check_touching_necessity(a, level, samples, seed);
        py::dict d;
        d["vacuous"] = r.vacuous;
        d["samples"] = r.samples;
        d["witnesses"] = r.witnesses;
        d["worst_margin"] = r.worst_margin;
        d["pass"] = r.pass;
        return d;
      },
      py::arg("contract"), py::arg("level") = 0, py::arg("samples") = 100, py::arg("seed") = 1);
}
