#include "hc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hc/serialize.hpp"

namespace hc {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw validation_error(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw validation_error(path + "." + key + ": unknown field");
}

double num(const json& j, const char* key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw validation_error(path + "." + key + ": expected a number");
  return j.at(key).get<double>();
}

std::size_t count(const json& j, const char* key, const std::string& path, std::size_t fallback,
                  std::size_t min_value) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min_value)) {
    std::ostringstream os;
    os << path << "." << key << ": expected an integer >= " << min_value;
    throw validation_error(os.str());
  }
  return v.get<std::size_t>();
}

std::vector<std::size_t> counts(const json& j, const char* key, const std::string& path,
                                std::vector<std::size_t> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() < 3) throw validation_error(path + "." + key + ": expected at least three integers");
  std::vector<std::size_t> out;
  for (const auto& x : v) {
    if (!x.is_number_integer() || x.get<long long>() < 1)
      throw validation_error(path + "." + key + ": expected positive integers");
    out.push_back(x.get<std::size_t>());
  }
  return out;
}

bool flag(const json& j, const char* key, const std::string& path, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw validation_error(path + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

Interval interval(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw validation_error(path + ": expected [lo, hi]");
  const Interval d{v[0].get<double>(), v[1].get<double>()};
  if (!(d.lo < d.hi)) throw validation_error(path + ": need lo < hi");
  return d;
}

// Replaces {"kind": "grid", "file": ...} by inline nodes/values.
void resolve_grid_files(json& hierarchy, const std::filesystem::path& base) {
  if (!hierarchy.is_object() || !hierarchy.contains("players") || !hierarchy["players"].is_array()) return;
  auto& players = hierarchy["players"];
  for (std::size_t i = 0; i < players.size(); ++i) {
    if (!players[i].is_object() || !players[i].contains("utility")) continue;
    json& u = players[i]["utility"];
    if (!u.is_object() || !u.contains("file")) continue;
    const std::string path = "hierarchy.players[" + std::to_string(i) + "].utility.file";
    if (!u["file"].is_string()) throw validation_error(path + ": expected a string");
    std::filesystem::path f = u["file"].get<std::string>();
    if (f.is_relative()) f = base / f;
    std::ifstream in(f);
    if (!in) throw validation_error(path + ": cannot open '" + f.string() + "'");
    std::vector<double> nodes, values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      double a, r;
      char comma;
      if (!(ls >> a >> comma >> r) || comma != ',') {
        if (nodes.empty() && lineno <= 2) continue;  // header row
        throw validation_error(path + ": line " + std::to_string(lineno) + " is not 'a,r'");
      }
      nodes.push_back(a);
      values.push_back(r);
    }
    u.erase("file");
    u["kind"] = "grid";
    u["nodes"] = nodes;
    u["values"] = values;
  }
}

SimulationConfig parse_sim(const json& j, const std::string& path, SimulationConfig s) {
  s.n_paths = count(j, "n_paths", path, s.n_paths, 2);
  s.n_steps = count(j, "n_steps", path, s.n_steps, 1);
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw validation_error(path + ".seed: expected a non-negative integer");
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  s.record_paths = count(j, "record_paths", path, s.record_paths, 0);
  s.threads = count(j, "threads", path, s.threads, 1);
  s.noise_substeps = count(j, "noise_substeps", path, s.noise_substeps, 1);
  return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << "config: JSON syntax error at byte " << e.byte << ": " << e.what();
    throw validation_error(os.str());
  }
  reject_unknown(doc, "config",
                 {"version", "hierarchy", "envelope", "hjb", "simulation", "verification", "output_dir"});
  if (!doc.contains("version") || !doc["version"].is_number_integer() || doc["version"].get<int>() != kConfigVersion)
    throw validation_error("config.version: expected " + std::to_string(kConfigVersion));
  if (!doc.contains("hierarchy")) throw validation_error("config.hierarchy: missing");
  resolve_grid_files(doc["hierarchy"], base_dir);

  RunConfig cfg;
  reject_unknown(doc["hierarchy"], "hierarchy", {"sigma", "horizon", "terminal", "players"});
  cfg.hierarchy = spec_from_json(doc["hierarchy"], "hierarchy");

  const json env = doc.value("envelope", json::object());
  reject_unknown(env, "envelope", {"y_nodes", "coarse_points"});
  cfg.envelope.y_nodes = count(env, "y_nodes", "envelope", cfg.envelope.y_nodes, 3);
  cfg.envelope.coarse_points = static_cast<int>(count(env, "coarse_points", "envelope", 33, 5));

  const json hj = doc.value("hjb", json::object());
  reject_unknown(hj, "hjb",
                 {"w_min", "w_max", "w_nodes", "dw", "time_layers", "dt", "control_domain", "search", "coarse_points",
                  "cfl_safety", "max_total_substeps"});
  HjbGrid& g = cfg.hjb;
  g.w_min = num(hj, "w_min", "hjb", g.w_min);
  g.w_max = num(hj, "w_max", "hjb", g.w_max);
  if (!(g.w_min < g.w_max)) throw validation_error("hjb.w_max: must exceed hjb.w_min");
  if (hj.contains("dw") && hj.contains("w_nodes")) throw validation_error("hjb.dw: give either dw or w_nodes");
  if (hj.contains("dw")) {
    const double dw = num(hj, "dw", "hjb", 0.0);
    if (!(dw > 0.0)) throw validation_error("hjb.dw: must be > 0");
    const double cells = (g.w_max - g.w_min) / dw;
    if (std::abs(cells - std::round(cells)) > 1e-9 * cells)
      throw validation_error("hjb.dw: must divide w_max - w_min");
    g.w_nodes = static_cast<std::size_t>(std::llround(cells)) + 1;
  }
  g.w_nodes = count(hj, "w_nodes", "hjb", g.w_nodes, 3);
  if (hj.contains("dt") && hj.contains("time_layers")) throw validation_error("hjb.dt: give either dt or time_layers");
  if (hj.contains("dt")) {
    const double dt = num(hj, "dt", "hjb", 0.0);
    if (!(dt > 0.0)) throw validation_error("hjb.dt: must be > 0");
    g.time_layers = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.hierarchy.horizon / dt - 1e-9)));
  }
  g.time_layers = count(hj, "time_layers", "hjb", g.time_layers, 1);
  if (hj.contains("control_domain")) g.control_domain = interval(hj["control_domain"], "hjb.control_domain");
  if (hj.contains("search")) {
    const std::string s = hj["search"].is_string() ? hj["search"].get<std::string>() : "";
    if (s == "exhaustive") g.search = ControlSearch::exhaustive;
    else if (s == "coarse_to_fine") g.search = ControlSearch::coarse_to_fine;
    else throw validation_error("hjb.search: expected exhaustive or coarse_to_fine");
  }
  g.coarse_points = count(hj, "coarse_points", "hjb", g.coarse_points, 2);
  g.cfl_safety = num(hj, "cfl_safety", "hjb", g.cfl_safety);
  g.max_total_substeps = count(hj, "max_total_substeps", "hjb", g.max_total_substeps, 1);
  g.validate();

  const json sim = doc.value("simulation", json::object());
  reject_unknown(sim, "simulation", {"n_paths", "n_steps", "seed", "record_paths", "threads", "noise_substeps"});
  cfg.simulation = parse_sim(sim, "simulation", SimulationConfig{});
  if (!sim.contains("record_paths")) cfg.simulation.record_paths = 20;

  const json ver = doc.value("verification", json::object());
  reject_unknown(ver, "verification",
                 {"n_paths", "n_steps", "seed", "threads", "n_se", "deviations", "mutate_y_sign", "touching",
                  "continuation", "convergence"});
  VerifyConfig& v = cfg.verification;
  SimulationConfig vs = cfg.simulation;
  vs.record_paths = 0;
  v.sim = parse_sim(ver, "verification", vs);
  v.n_se = num(ver, "n_se", "verification", v.n_se);
  if (!(v.n_se > 0.0)) throw validation_error("verification.n_se: must be > 0");
  v.mutate_y_sign = flag(ver, "mutate_y_sign", "verification", false);
  if (v.mutate_y_sign) v.sim.payment_sign = -1.0;
  if (ver.contains("deviations")) {
    const json& d = ver["deviations"];
    if (d.is_string() && d.get<std::string>() == "default") {
      v.default_deviations = true;
    } else if (d.is_array()) {
      v.default_deviations = false;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const std::string p = "verification.deviations[" + std::to_string(i) + "]";
        reject_unknown(d[i], p, {"kind", "param", "player"});
        if (!d[i].contains("kind") || !d[i]["kind"].is_string()) throw validation_error(p + ".kind: missing");
        std::optional<std::size_t> who;
        if (d[i].contains("player") && !(d[i]["player"].is_string() && d[i]["player"] == "aggregate")) {
          const std::size_t k = count(d[i], "player", p, 1, 1);
          if (k > cfg.hierarchy.size()) throw validation_error(p + ".player: out of range");
          who = k - 1;
        }
        try {
          v.deviations.push_back(DeviationStrategy::parse(d[i]["kind"], num(d[i], "param", p, 0.0), who));
        } catch (const Error& e) {
          throw validation_error(p + ": " + e.what());
        }
      }
    } else {
      throw validation_error("verification.deviations: expected \"default\" or an array");
    }
  }
  if (ver.contains("touching")) {
    const json& t = ver["touching"];
    reject_unknown(t, "verification.touching", {"level", "samples"});
    const std::size_t lvl = count(t, "level", "verification.touching", 1, 1);
    if (lvl > cfg.hierarchy.size()) throw validation_error("verification.touching.level: out of range");
    v.touching.level = lvl - 1;
    v.touching.samples = count(t, "samples", "verification.touching", v.touching.samples, 1);
  }
  if (ver.contains("continuation")) {
    const json& c = ver["continuation"];
    reject_unknown(c, "verification.continuation", {"times", "n_inner"});
    ContinuationConfig cc;
    if (c.contains("times")) {
      cc.times.clear();
      for (const auto& x : c["times"]) {
        if (!x.is_number() || !(x.get<double>() > 0.0 && x.get<double>() < 1.0))
          throw validation_error("verification.continuation.times: fractions must lie in (0, 1)");
        cc.times.push_back(x.get<double>());
      }
    }
    cc.n_inner = count(c, "n_inner", "verification.continuation", cc.n_inner, 2);
    v.continuation = cc;
  }
  if (ver.contains("convergence")) {
    const json& c = ver["convergence"];
    reject_unknown(c, "verification.convergence", {"w_nodes", "n_paths", "n_steps", "euler_paths", "seed"});
    ConvergenceLadders L;
    L.base_grid = cfg.hjb;
    L.w_nodes = counts(c, "w_nodes", "verification.convergence", L.w_nodes);
    L.n_paths = counts(c, "n_paths", "verification.convergence", L.n_paths);
    L.n_steps = counts(c, "n_steps", "verification.convergence", L.n_steps);
    L.euler_paths = count(c, "euler_paths", "verification.convergence", L.euler_paths, 2);
    L.seed = count(c, "seed", "verification.convergence", L.seed, 0);
    v.convergence = L;
  }

  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw validation_error("config.output_dir: expected a string");
    cfg.output_dir = doc["output_dir"].get<std::string>();
  }

  json canonical = doc;
  canonical.erase("output_dir");
  if (canonical.contains("simulation")) canonical["simulation"].erase("threads");
  if (canonical.contains("verification")) canonical["verification"].erase("threads");
  cfg.hash = fnv1a(canonical.dump());
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw validation_error("config: cannot open '" + file.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), file.parent_path().empty() ? "." : file.parent_path());
}

}  // namespace hc
