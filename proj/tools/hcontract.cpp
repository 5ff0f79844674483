// hcontract: configuration-driven front end.
//
//   hcontract build    --config run.json   contract.json, summary.json, phi1.csv
//   hcontract solve    --config run.json   value_function.{bin,csv}, solve_summary.json
//   hcontract simulate --config run.json   paths.csv, simulation_summary.json
//   hcontract verify   --config run.json   verification_report.json [, convergence_report.csv]
//   hcontract report   --config run.json   report.json, report.md
//
// Exit codes: 0 ok, 1 validation, 2 numerical failure, 3 gate failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hc/config.hpp"
#include "hc/quadratic.hpp"
#include "hc/serialize.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitGate = 3;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

struct Context {
  RunConfig cfg;
  fs::path out;
};

// The seed override is applied to the JSON document so the config hash
// reflects it.
Context load(const Options& opt) {
  std::ifstream in(opt.config);
  if (!in) throw validation_error("config: cannot open '" + opt.config + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (opt.seed) {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw validation_error(std::string("config: ") + e.what());
    }
    if (doc.is_object()) {
      doc["simulation"]["seed"] = *opt.seed;
      if (doc.contains("verification") && doc["verification"].contains("seed"))
        doc["verification"]["seed"] = *opt.seed;
    }
    text = doc.dump();
  }
  const fs::path file(opt.config);
  Context ctx{parse_run_config(text, file.parent_path().empty() ? fs::path(".") : file.parent_path()), {}};
  if (opt.threads) {
    if (*opt.threads == 0) throw validation_error("--threads: must be >= 1");
    ctx.cfg.simulation.threads = *opt.threads;
    ctx.cfg.verification.sim.threads = *opt.threads;
  }
  ctx.out = opt.out.empty() ? ctx.cfg.output_dir : fs::path(opt.out);
  fs::create_directories(ctx.out);
  return ctx;
}

// Each stage is keyed by the config sections it depends on, so later
// stages can tell a stale upstream artifact from a current one.
json build_inputs(const RunConfig& c) {
  return {{"hierarchy", spec_to_json(c.hierarchy)},
          {"envelope", {{"y_nodes", c.envelope.y_nodes}, {"coarse_points", c.envelope.coarse_points}}}};
}

json solve_inputs(const RunConfig& c) {
  const HjbGrid& g = c.hjb;
  json j = build_inputs(c);
  j["hjb"] = {{"w_min", g.w_min},
              {"w_max", g.w_max},
              {"w_nodes", g.w_nodes},
              {"time_layers", g.time_layers},
              {"search", g.search == ControlSearch::exhaustive ? "exhaustive" : "coarse_to_fine"},
              {"coarse_points", g.coarse_points},
              {"cfl_safety", g.cfl_safety},
              {"max_total_substeps", g.max_total_substeps}};
  if (g.control_domain) j["hjb"]["control_domain"] = {g.control_domain->lo, g.control_domain->hi};
  return j;
}

ArtifactHeader stage_header(const json& inputs, std::uint64_t seed) {
  ArtifactHeader h;
  h.config_hash = fnv1a(inputs.dump());
  h.seed = seed;
  return h;
}

ArtifactHeader run_header(const Context& ctx, std::uint64_t seed) {
  ArtifactHeader h;
  h.config_hash = ctx.cfg.hash;
  h.seed = seed;
  return h;
}

json warnings_json(const Warnings& ws) {
  json a = json::array();
  for (const auto& w : ws) {
    json x{{"code", w.code}, {"message", w.message}};
    if (std::isfinite(w.at)) x["at"] = w.at;
    a.push_back(x);
  }
  return a;
}

json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}}; }

json finite(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw validation_error("cannot write '" + file.string() + "'");
  os << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

json read_json(const fs::path& file, const std::string& producer) {
  if (!fs::exists(file))
    throw validation_error("missing " + file.filename().string() + " in " + file.parent_path().string() +
                           "; run `hcontract " + producer + "` first");
  std::ifstream in(file);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw validation_error(file.string() + ": " + e.what());
  }
}

void check_fresh(const ArtifactHeader& found, const ArtifactHeader& expected, const fs::path& file,
                 const std::string& producer) {
  if (found.config_hash != expected.config_hash)
    throw validation_error(file.filename().string() + " is stale (built from config " + hash_hex(found.config_hash) +
                           ", current " + hash_hex(expected.config_hash) + "); rerun `hcontract " + producer + "`");
}

AggregateContract load_contract(const Context& ctx) {
  const fs::path file = ctx.out / "contract.json";
  const json j = read_json(file, "build");
  if (!j.contains("header")) throw validation_error(file.string() + ": missing header");
  check_fresh(header_from_json(j["header"]), stage_header(build_inputs(ctx.cfg), 0), file, "build");
  return contract_from_json(j);
}

ValueFunction load_value_function(const Context& ctx) {
  const fs::path file = ctx.out / "value_function.bin";
  if (!fs::exists(file))
    throw validation_error("missing value_function.bin in " + ctx.out.string() + "; run `hcontract solve` first");
  std::ifstream in(file, std::ios::binary);
  ArtifactHeader h;
  ValueFunction vf = read_value_function_binary(in, &h);
  check_fresh(h, stage_header(solve_inputs(ctx.cfg), 0), file, "solve");
  return vf;
}

// Least-squares slope of psi_1 and curvature of phi_hat_1 through the
// origin, over nodes whose maximizers are interior. For quadratic specs these
// are g_1 and gamma.
json phi1_fit(const AggregateContract& agg) {
  const Level& L = agg.levels.front();
  const std::size_t d = L.psi.dim();
  std::vector<double> num(d, 0.0);
  double yy = 0.0, yyyy = 0.0, phi_yy = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < L.envelope.size(); ++i) {
    if (!L.psi.valid(i) || L.truncated[i] || !L.envelope.touching[i]) continue;
    const double y = L.envelope.nodes[i];
    const auto p = L.psi.point(i);
    for (std::size_t k = 0; k < d; ++k) num[k] += p[k] * y;
    yy += y * y;
    yyyy += y * y * y * y;
    phi_yy += (L.envelope.values[i] - agg.phi1_hat()(0.0)) * y * y;
    ++used;
  }
  json j{{"nodes_used", used}};
  if (yy > 0.0) {
    json g = json::array();
    for (double x : num) g.push_back(x / yy);
    j["g1"] = g;
    j["gamma"] = -2.0 * phi_yy / yyyy;
  }
  return j;
}

std::optional<QuadraticSpec> as_quadratic(const HierarchySpec& spec) {
  QuadraticSpec q;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& p = spec.players[i];
    if (p.utility.kind() != Utility::Kind::quadratic || p.reservation != 0.0) return std::nullopt;
    q.alphas.push_back(p.utility.alpha());
    if (i + 1 < spec.size()) q.betas.push_back(p.beta);
  }
  return q;
}

int cmd_build(const Context& ctx) {
  Warnings ws;
  ctx.cfg.hierarchy.validate(&ws);
  AggregateContract agg = build_aggregate(ctx.cfg.hierarchy, ctx.cfg.envelope);
  const ArtifactHeader h = stage_header(build_inputs(ctx.cfg), 0);

  json c = contract_to_json(agg);
  c["header"] = h.to_json();
  write_json(ctx.out / "contract.json", c);

  const std::size_t n = agg.size();
  json s;
  s["header"] = h.to_json();
  s["players"] = n;
  json gamma = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < n; ++k) row.push_back(agg.gamma(i, k));
    gamma.push_back(row);
  }
  s["gamma_table"] = gamma;
  s["w_star"] = agg.w_star;
  const auto& phi = agg.phi1_hat();
  s["phi1"] = {{"domain", {phi.domain().lo, phi.domain().hi}},
               {"max", *std::max_element(phi.values.begin(), phi.values.end())},
               {"fit", phi1_fit(agg)}};
  s["psi1_identity"] = n == 1;
  if (const auto q = as_quadratic(agg.spec)) {
    const auto qa = quadratic_recursion(*q);
    s["quadratic_closed_form"] = {{"g1", qa.levels.front().g}, {"gamma", qa.gamma}};
  }
  s["warnings"] = warnings_json(agg.warnings);
  write_json(ctx.out / "summary.json", s);

  std::ofstream csv(ctx.out / "phi1.csv", std::ios::binary);
  write_phi1_csv(csv, agg, h);
  std::cout << "built contract for " << n << " player(s); w1* = " << format_double(agg.w_star[0]) << "\n";
  return kExitOk;
}

int cmd_solve(const Context& ctx) {
  const AggregateContract agg = load_contract(ctx);
  const ValueFunction vf = solve_hjb(agg, ctx.cfg.hjb);
  const ArtifactHeader h = stage_header(solve_inputs(ctx.cfg), 0);
  {
    std::ofstream bin(ctx.out / "value_function.bin", std::ios::binary);
    write_value_function_binary(bin, vf, h);
  }
  {
    std::ofstream csv(ctx.out / "value_function.csv", std::ios::binary);
    write_value_function_csv(csv, vf, h);
  }
  const double w0 = agg.w_star[0];
  json s;
  s["header"] = h.to_json();
  s["w_star"] = w0;
  s["value_at_w_star"] = vf.value(w0, 0.0);
  s["w_nodes"] = vf.nw();
  s["time_layers"] = vf.nt() - 1;
  s["substeps_per_layer"] = vf.substeps_per_layer;
  s["warnings"] = warnings_json(vf.warnings);
  write_json(ctx.out / "solve_summary.json", s);
  std::cout << "v(w1*, 0) = " << format_double(vf.value(w0, 0.0)) << "\n";
  return kExitOk;
}

void write_paths_csv(const fs::path& file, const PathBatch& b, const ArtifactHeader& h) {
  std::ofstream os(file, std::ios::binary);
  h.write_csv_comment(os);
  const std::size_t n = b.players;
  os << "path,step,t,W";
  for (std::size_t k = 1; k <= n; ++k) os << ",X" << k;
  for (std::size_t k = 1; k <= n; ++k) os << ",A" << k;
  os << "\n";
  for (std::size_t p = 0; p < b.records.size(); ++p) {
    const Trajectory& tr = b.records[p];
    for (std::size_t m = 0; m <= tr.steps; ++m) {
      os << p << ',' << m << ',' << format_double(tr.t0 + static_cast<double>(m) * tr.dt) << ','
         << format_double(tr.W[m]);
      for (std::size_t k = 0; k < n; ++k) os << ',' << format_double(tr.X[m * n + k]);
      // Efforts are piecewise constant on [t_m, t_m+1); the last row repeats.
      const std::size_t step = m < tr.steps ? m : tr.steps - 1;
      for (std::size_t k = 0; k < n; ++k) os << ',' << format_double(tr.a[step * n + k]);
      os << "\n";
    }
  }
}

int cmd_simulate(const Context& ctx) {
  const AggregateContract agg = load_contract(ctx);
  const ValueFunction vf = load_value_function(ctx);
  const FeedbackPolicy policy = extract_policy(vf, agg);
  const SimulationConfig& sc = ctx.cfg.simulation;
  const PathBatch b = simulate_contract(agg, policy, sc);
  const UtilityReport r = realized_utilities(b);
  const ArtifactHeader h = run_header(ctx, sc.seed);

  write_paths_csv(ctx.out / "paths.csv", b, h);

  json s;
  s["header"] = h.to_json();
  s["n_paths"] = b.n_paths;
  s["n_steps"] = b.n_steps;
  s["dt"] = b.dt;
  json J = json::array();
  for (std::size_t k = 0; k < r.J.size(); ++k) {
    json e = estimate_json(r.J[k]);
    e["player"] = k;
    if (k > 0) e["reservation"] = agg.spec.players[k - 1].reservation;
    J.push_back(e);
  }
  s["utilities"] = J;
  s["aggregate"] = estimate_json(r.aggregate);
  s["W_T"] = estimate_json(r.W_T);
  s["hjb_value_at_w_star"] = vf.value(agg.w_star[0], 0.0);
  s["leakage_fraction"] = b.leakage_fraction;
  s["max_telescoping_error"] = b.max_telescoping_error;
  s["max_ledger_mismatch"] = b.max_ledger_mismatch;
  s["warnings"] = warnings_json(b.warnings);
  write_json(ctx.out / "simulation_summary.json", s);
  std::cout << "J0 = " << format_double(r.J[0].mean) << " (se " << format_double(r.J[0].se) << ") over "
            << b.n_paths << " paths\n";
  return kExitOk;
}

json gate_json(const GateResult& g) {
  return {{"name", g.name},      {"statistic", finite(g.statistic)}, {"se", finite(g.se)},
          {"threshold", finite(g.threshold)}, {"two_sided", g.two_sided}, {"pass", g.pass},
          {"seed", g.seed}};
}

void write_convergence_csv(const fs::path& file, const ConvergenceReport& rep, const ArtifactHeader& h) {
  std::ofstream os(file, std::ios::binary);
  h.write_csv_comment(os);
  os << "study,rung,parameter,value,error,order\n";
  for (const auto& r : rep.rows)
    os << r.study << ',' << r.rung << ',' << format_double(r.parameter) << ',' << format_double(r.value) << ','
       << format_double(r.error) << ',' << (std::isnan(r.order) ? std::string() : format_double(r.order)) << "\n";
}

int cmd_verify(const Context& ctx) {
  const AggregateContract agg = load_contract(ctx);
  const ValueFunction vf = load_value_function(ctx);
  const FeedbackPolicy policy = extract_policy(vf, agg);
  const VerifyConfig& vc = ctx.cfg.verification;
  const IcOptions opt{vc.sim, vc.n_se};
  const ArtifactHeader h = run_header(ctx, vc.sim.seed);

  std::vector<GateResult> gates = check_incentive_compatibility(agg, policy, {}, opt);
  const auto devs = vc.default_deviations ? default_deviations(agg) : vc.deviations;
  for (const auto& d : devs)
    for (auto& g : check_incentive_compatibility(agg, policy, d, opt)) gates.push_back(std::move(g));

  json report;
  report["header"] = h.to_json();
  report["payment_sign"] = vc.sim.payment_sign;

  {
    const PathBatch b = simulate_contract(agg, policy, vc.sim);
    GateResult g;
    g.name = "ledger:R1_vs_WT";
    g.statistic = b.max_ledger_mismatch;
    g.threshold = 1e-10;
    g.two_sided = true;
    g.pass = b.max_ledger_mismatch <= 1e-10;
    g.seed = vc.sim.seed;
    gates.push_back(g);
  }

  const TouchingReport tr = check_touching_necessity(agg, vc.touching.level, vc.touching.samples, vc.sim.seed);
  report["touching"] = {{"level", tr.level + 1},         {"vacuous", tr.vacuous},
                        {"samples", tr.samples},         {"witnesses", tr.witnesses},
                        {"worst_margin", finite(tr.worst_margin)}, {"tolerance", tr.tolerance},
                        {"pass", tr.pass}};
  {
    GateResult g;
    g.name = "touching:player" + std::to_string(tr.level + 1);
    g.statistic = tr.vacuous ? 0.0 : tr.worst_margin;
    g.threshold = tr.vacuous ? 0.0 : -tr.tolerance;
    g.pass = tr.pass;
    g.seed = vc.sim.seed;
    gates.push_back(g);
  }

  if (vc.continuation) {
    const auto pts = continuation_check(agg, policy, vc.sim, vc.continuation->times, vc.continuation->n_inner);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const ContinuationPoint& p = pts[i];
      GateResult g;
      g.name = "continuation:t=" + format_double(vc.continuation->times[i]) + "T";
      g.statistic = p.conditional.mean - p.W;
      g.se = p.conditional.se;
      g.threshold = vc.n_se * p.conditional.se + 1e-10 * (1.0 + std::abs(p.W));
      g.two_sided = true;
      g.pass = std::abs(g.statistic) <= g.threshold;
      g.seed = vc.sim.seed;
      gates.push_back(g);
    }
  }

  if (vc.convergence) {
    ConvergenceLadders L = *vc.convergence;
    const ConvergenceReport rep = convergence_report(agg, L);
    write_convergence_csv(ctx.out / "convergence_report.csv", rep, run_header(ctx, L.seed));
    GateResult g;
    g.name = "convergence:hjb_order";
    g.statistic = rep.hjb_order;
    g.threshold = 0.9;
    g.pass = rep.hjb_order >= 0.9;
    g.seed = L.seed;
    gates.push_back(g);
    gates.push_back({"convergence:mc_se_scaling", 0.0, 0.0, 0.0, false, rep.mc_scaling_ok, L.seed});
    gates.push_back({"convergence:euler_monotone", 0.0, 0.0, 0.0, false, rep.euler_monotone, L.seed});
  }

  bool all = true;
  json arr = json::array();
  for (const auto& g : gates) {
    arr.push_back(gate_json(g));
    all = all && g.pass;
    std::cout << (g.pass ? "PASS " : "FAIL ") << g.name << "  stat=" << format_double(g.statistic)
              << " thr=" << format_double(g.threshold) << "\n";
  }
  report["gates"] = arr;
  report["all_pass"] = all;
  write_json(ctx.out / "verification_report.json", report);
  return all ? kExitOk : kExitGate;
}

int cmd_report(const Context& ctx) {
  const json summary = read_json(ctx.out / "summary.json", "build");
  const json solve = read_json(ctx.out / "solve_summary.json", "solve");
  const json sim = read_json(ctx.out / "simulation_summary.json", "simulate");
  const json ver = read_json(ctx.out / "verification_report.json", "verify");
  load_contract(ctx);  // staleness check

  json r;
  r["header"] = run_header(ctx, ctx.cfg.simulation.seed).to_json();
  r["w_star"] = summary["w_star"];
  r["gamma_table"] = summary["gamma_table"];
  r["phi1_fit"] = summary["phi1"]["fit"];
  r["hjb_value_at_w_star"] = solve["value_at_w_star"];
  r["mc_J0"] = sim["utilities"][0];
  r["leakage_fraction"] = sim["leakage_fraction"];
  std::size_t passed = 0, total = 0;
  for (const auto& g : ver["gates"]) {
    ++total;
    if (g["pass"].get<bool>()) ++passed;
  }
  r["gates_passed"] = passed;
  r["gates_total"] = total;
  write_json(ctx.out / "report.json", r);

  std::ostringstream md;
  md << "# hcontract report\n\n";
  md << "config hash `" << hash_hex(ctx.cfg.hash) << "`, version " << HC_VERSION << "\n\n";
  md << "| quantity | value |\n|---|---|\n";
  md << "| w1* | " << r["w_star"][0].dump() << " |\n";
  md << "| v(w1*, 0) | " << r["hjb_value_at_w_star"].dump() << " |\n";
  md << "| MC J0 | " << r["mc_J0"]["mean"].dump() << " (se " << r["mc_J0"]["se"].dump() << ") |\n";
  md << "| leakage | " << r["leakage_fraction"].dump() << " |\n";
  md << "| gates | " << passed << "/" << total << " |\n\n";
  md << "| gate | statistic | threshold | result |\n|---|---|---|---|\n";
  for (const auto& g : ver["gates"])
    md << "| " << g["name"].get<std::string>() << " | " << g["statistic"].dump() << " | " << g["threshold"].dump()
       << " | " << (g["pass"].get<bool>() ? "pass" : "FAIL") << " |\n";
  write_text(ctx.out / "report.md", md.str());
  std::cout << "report: " << passed << "/" << total << " gates pass\n";
  return kExitOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation:
    case ErrorKind::domain: return kExitValidation;
    case ErrorKind::numerical:
    case ErrorKind::internal: return kExitNumerical;
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical contract builder, solver and verifier"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--out", opt.out, "Output directory (overrides output_dir)");
  app.add_option("--seed", opt.seed, "Random seed (overrides the config)");
  app.add_option("--threads", opt.threads, "Worker threads for simulation");

  int (*handler)(const Context&) = nullptr;
  app.add_subcommand("build", "Build the aggregate contract")->callback([&] { handler = cmd_build; });
  app.add_subcommand("solve", "Solve the HJB equation")->callback([&] { handler = cmd_solve; });
  app.add_subcommand("simulate", "Simulate the contracted hierarchy")->callback([&] { handler = cmd_simulate; });
  app.add_subcommand("verify", "Run the verification gates")->callback([&] { handler = cmd_verify; });
  app.add_subcommand("report", "Collect artifacts into a report")->callback([&] { handler = cmd_report; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    return handler(load(opt));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
