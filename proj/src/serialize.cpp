#include "hc/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace hc {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'H', 'C', 'V', 'F'};
constexpr std::uint32_t kBinaryVersion = 1;

json vec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

std::vector<double> unvec(const json& a, double missing) {
  std::vector<double> v;
  v.reserve(a.size());
  for (const auto& x : a) v.push_back(x.is_null() ? missing : x.get<double>());
  return v;
}

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw validation_error(path + "." + key + ": missing");
  return j.at(key);
}

double number(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number()) throw validation_error(path + "." + key + ": expected a number");
  return v.get<double>();
}

double number_or(const json& j, const char* key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  return number(j, key, path);
}

std::vector<double> numbers(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_array()) throw validation_error(path + "." + key + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw validation_error(path + "." + key + ": expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

json utility_to_json(const Utility& u) {
  json j;
  j["kind"] = u.tag();
  switch (u.kind()) {
    case Utility::Kind::quadratic: j["alpha"] = u.params()[0]; break;
    case Utility::Kind::power:
      j["coef"] = u.params()[0];
      j["exponent"] = u.params()[1];
      break;
    case Utility::Kind::polynomial: j["coeffs"] = u.params(); break;
    case Utility::Kind::grid:
      j["nodes"] = u.grid().nodes;
      j["values"] = u.grid().values;
      break;
  }
  return j;
}

Utility utility_from_json(const json& j, const std::string& path) {
  const json& kind = need(j, "kind", path);
  if (!kind.is_string()) throw validation_error(path + ".kind: expected a string");
  const std::string k = kind.get<std::string>();
  if (k == "quadratic") return Utility::quadratic(number(j, "alpha", path));
  if (k == "power") return Utility::power(number(j, "coef", path), number(j, "exponent", path));
  if (k == "polynomial") {
    auto c = numbers(j, "coeffs", path);
    if (c.empty()) throw validation_error(path + ".coeffs: need at least one coefficient");
    return Utility::polynomial(std::move(c));
  }
  if (k == "grid") {
    GridFunction g{numbers(j, "nodes", path), numbers(j, "values", path)};
    try {
      return Utility::sampled(std::move(g));
    } catch (const Error& e) {
      throw validation_error(path + ": " + e.what());
    }
  }
  throw validation_error(path + ".kind: unknown utility kind '" + k + "'");
}

template <class T>
void put(std::ostream& os, const T& x) {
  os.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T x{};
  if (!is.read(reinterpret_cast<char*>(&x), sizeof(T))) throw validation_error("value function cache: truncated file");
  return x;
}

void put_vec(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_vec(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw validation_error("value function cache: truncated file");
  return v;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  const auto r = std::to_chars(buf, buf + 16, h, 16);
  std::string s(buf, r.ptr);
  return std::string(16 - s.size(), '0') + s;
}

json ArtifactHeader::to_json() const {
  return {{"config_hash", hash_hex(config_hash)}, {"seed", seed}, {"version", version}};
}

void ArtifactHeader::write_csv_comment(std::ostream& os) const {
  os << "# config_hash=" << hash_hex(config_hash) << "\n# seed=" << seed << "\n# version=" << version << "\n";
}

ArtifactHeader header_from_json(const json& j) {
  ArtifactHeader h;
  h.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  h.seed = j.at("seed").get<std::uint64_t>();
  h.version = j.at("version").get<std::string>();
  return h;
}

json spec_to_json(const HierarchySpec& spec) {
  json j;
  j["sigma"] = spec.sigma;
  j["horizon"] = spec.horizon;
  json t;
  t["kind"] = spec.terminal.tag();
  if (spec.terminal.kind() == TerminalUtility::Kind::quadratic) t["alpha0"] = spec.terminal.param();
  if (spec.terminal.kind() == TerminalUtility::Kind::linear) t["slope"] = spec.terminal.param();
  j["terminal"] = t;
  j["players"] = json::array();
  for (const auto& p : spec.players) {
    j["players"].push_back({{"utility", utility_to_json(p.utility)},
                            {"beta", p.beta},
                            {"reservation", p.reservation},
                            {"effort_domain", {p.effort_domain.lo, p.effort_domain.hi}}});
  }
  return j;
}

HierarchySpec spec_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw validation_error(path + ": expected an object");
  HierarchySpec spec;
  spec.sigma = number_or(j, "sigma", path, spec.sigma);
  spec.horizon = number_or(j, "horizon", path, spec.horizon);
  if (j.contains("terminal")) {
    const json& t = j.at("terminal");
    const std::string tp = path + ".terminal";
    const json& kind = need(t, "kind", tp);
    const std::string k = kind.is_string() ? kind.get<std::string>() : "";
    if (k == "quadratic") spec.terminal = TerminalUtility::quadratic(number(t, "alpha0", tp));
    else if (k == "linear") spec.terminal = TerminalUtility::linear(number(t, "slope", tp));
    else if (k == "zero") spec.terminal = TerminalUtility::zero();
    else throw validation_error(tp + ".kind: expected quadratic, linear or zero");
  }
  const json& players = need(j, "players", path);
  if (!players.is_array() || players.empty()) throw validation_error(path + ".players: need a non-empty array");
  for (std::size_t i = 0; i < players.size(); ++i) {
    const std::string pp = path + ".players[" + std::to_string(i) + "]";
    const json& pj = players[i];
    PlayerSpec p;
    p.utility = utility_from_json(need(pj, "utility", pp), pp + ".utility");
    p.beta = number_or(pj, "beta", pp, 0.0);
    p.reservation = number_or(pj, "reservation", pp, 0.0);
    if (pj.contains("effort_domain")) {
      const auto d = numbers(pj, "effort_domain", pp);
      if (d.size() != 2) throw validation_error(pp + ".effort_domain: expected [lo, hi]");
      p.effort_domain = {d[0], d[1]};
    }
    spec.players.push_back(std::move(p));
  }
  spec.validate();
  return spec;
}

json contract_to_json(const AggregateContract& agg) {
  json j;
  j["format"] = "hiercontract.contract";
  j["spec"] = spec_to_json(agg.spec);
  j["grid"] = {{"y_nodes", agg.grid.y_nodes}, {"coarse_points", agg.grid.coarse_points}};
  const std::size_t n = agg.size();
  json gamma = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < n; ++k) row.push_back(agg.gamma(i, k));
    gamma.push_back(row);
  }
  j["gamma"] = gamma;
  j["w_star"] = agg.w_star;
  j["levels"] = json::array();
  for (const auto& L : agg.levels) {
    json l;
    l["nodes"] = vec(L.envelope.nodes);
    l["envelope"] = vec(L.envelope.values);
    l["left_slope"] = vec(L.envelope.left_slope);
    l["right_slope"] = vec(L.envelope.right_slope);
    l["touching"] = L.envelope.touching;
    l["psi_dim"] = L.psi.dim();
    l["psi_coords"] = vec(std::vector<double>(L.psi.coords().begin(), L.psi.coords().end()));
    l["psi_valid"] = std::vector<std::uint8_t>(L.psi.valid_mask().begin(), L.psi.valid_mask().end());
    l["fiber"] = vec(L.fiber);
    l["inner"] = vec(L.inner);
    l["truncated"] = L.truncated;
    j["levels"].push_back(l);
  }
  j["warnings"] = json::array();
  for (const auto& w : agg.warnings)
    j["warnings"].push_back({{"code", w.code}, {"message", w.message}, {"at", std::isfinite(w.at) ? json(w.at) : json(nullptr)}});
  return j;
}

AggregateContract contract_from_json(const json& j) {
  try {
    if (j.value("format", "") != "hiercontract.contract") throw validation_error("contract: unrecognized format");
    AggregateContract agg;
    agg.spec = spec_from_json(j.at("spec"), "contract.spec");
    agg.grid.y_nodes = j.at("grid").at("y_nodes").get<std::size_t>();
    agg.grid.coarse_points = j.at("grid").at("coarse_points").get<int>();
    const std::size_t n = agg.spec.size();
    agg.gamma = GammaTable(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) agg.gamma(i, k) = j.at("gamma").at(i).at(k).get<double>();
    agg.w_star = j.at("w_star").get<std::vector<double>>();
    for (const auto& l : j.at("levels")) {
      Level L;
      L.envelope.nodes = unvec(l.at("nodes"), kNegInf);
      L.envelope.values = unvec(l.at("envelope"), kNegInf);
      L.envelope.left_slope = unvec(l.at("left_slope"), kNegInf);
      L.envelope.right_slope = unvec(l.at("right_slope"), kNegInf);
      L.envelope.touching = l.at("touching").get<std::vector<std::uint8_t>>();
      L.psi = EffortParametrization(L.envelope.nodes, l.at("psi_dim").get<std::size_t>(),
                                    unvec(l.at("psi_coords"), std::numeric_limits<double>::quiet_NaN()),
                                    l.at("psi_valid").get<std::vector<std::uint8_t>>());
      L.fiber = unvec(l.at("fiber"), kNegInf);
      L.inner = unvec(l.at("inner"), std::numeric_limits<double>::quiet_NaN());
      L.truncated = l.at("truncated").get<std::vector<std::uint8_t>>();
      agg.levels.push_back(std::move(L));
    }
    if (agg.levels.size() != n) throw validation_error("contract: level count does not match the player count");
    for (const auto& w : j.at("warnings")) {
      Warning x{w.at("code").get<std::string>(), w.at("message").get<std::string>()};
      if (!w.at("at").is_null()) x.at = w.at("at").get<double>();
      agg.warnings.push_back(std::move(x));
    }
    agg.refresh();
    return agg;
  } catch (const json::exception& e) {
    throw validation_error(std::string("contract: malformed cache: ") + e.what());
  }
}

void write_value_function_csv(std::ostream& os, const ValueFunction& vf, const ArtifactHeader& h) {
  h.write_csv_comment(os);
  os << "w,t,v,s_star,y_star\n";
  for (std::size_t ti = 0; ti < vf.nt(); ++ti)
    for (std::size_t wi = 0; wi < vf.nw(); ++wi) {
      const std::size_t k = vf.at(ti, wi);
      os << format_double(vf.w_nodes[wi]) << ',' << format_double(vf.t_nodes[ti]) << ',' << format_double(vf.v[k])
         << ',' << format_double(vf.s_star[k]) << ',' << format_double(vf.y_star[k]) << '\n';
    }
}

void write_value_function_binary(std::ostream& os, const ValueFunction& vf, const ArtifactHeader& h) {
  os.write(kMagic, 4);
  put(os, kBinaryVersion);
  put(os, h.config_hash);
  put(os, h.seed);
  put<std::uint64_t>(os, vf.nw());
  put<std::uint64_t>(os, vf.nt());
  put<std::uint64_t>(os, vf.substeps_per_layer);
  put_vec(os, vf.w_nodes);
  put_vec(os, vf.t_nodes);
  put_vec(os, vf.v);
  put_vec(os, vf.s_star);
  put_vec(os, vf.y_star);
}

ValueFunction read_value_function_binary(std::istream& is, ArtifactHeader* h) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw validation_error("value function cache: bad magic, not a value function cache");
  const auto version = get<std::uint32_t>(is);
  if (version != kBinaryVersion)
    throw validation_error("value function cache: unsupported version " + std::to_string(version));
  ArtifactHeader hdr;
  hdr.config_hash = get<std::uint64_t>(is);
  hdr.seed = get<std::uint64_t>(is);
  if (h) *h = hdr;
  const auto nw = get<std::uint64_t>(is);
  const auto nt = get<std::uint64_t>(is);
  if (nw < 3 || nt < 1 || nw > (1u << 26) || nt > (1u << 26) || nw * nt > (1ull << 30))
    throw validation_error("value function cache: implausible dimensions");
  ValueFunction vf;
  vf.substeps_per_layer = get<std::uint64_t>(is);
  vf.w_nodes = get_vec(is, nw);
  vf.t_nodes = get_vec(is, nt);
  vf.v = get_vec(is, nw * nt);
  vf.s_star = get_vec(is, nw * nt);
  vf.y_star = get_vec(is, nw * nt);
  return vf;
}

void write_phi1_csv(std::ostream& os, const AggregateContract& agg, const ArtifactHeader& h) {
  h.write_csv_comment(os);
  const auto& L = agg.levels.front();
  os << "y,phi_hat,phi,touching,slope_lo,slope_hi";
  for (std::size_t k = 0; k < L.psi.dim(); ++k) os << ",psi" << k + 1;
  os << '\n';
  for (std::size_t i = 0; i < L.envelope.size(); ++i) {
    os << format_double(L.envelope.nodes[i]) << ',' << format_double(L.envelope.values[i]) << ','
       << format_double(L.fiber[i]) << ',' << int(L.envelope.touching[i]) << ','
       << format_double(L.envelope.right_slope[i]) << ',' << format_double(L.envelope.left_slope[i]);
    const auto p = L.psi.point(i);
    for (std::size_t k = 0; k < L.psi.dim(); ++k) os << ',' << (L.psi.valid(i) ? format_double(p[k]) : "");
    os << '\n';
  }
}

}  // namespace hc
