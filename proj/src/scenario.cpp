#include "mgrid/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mgrid {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError("missing field '" + std::string(key) + "' in " + where);
  }
  return obj.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + " must be a number");
  return v.get<double>();
}

Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(where + " must be a 3-vector");
  return Vec3(number(v[0], where), number(v[1], where), number(v[2], where));
}

int dgu_id(const json& v, int n, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + " must be an integer DGU id");
  const int id = v.get<int>();
  // Ids are 1-based in files. Out-of-range ids are reported by validate().
  (void)n;
  return id - 1;
}

std::vector<std::pair<double, double>> parse_load(const json& entry, double horizon,
                                                  const std::string& where) {
  if (entry.contains("constant")) {
    return {{0.0, number(entry.at("constant"), where + ".constant")}};
  }
  if (entry.contains("toggle")) {
    const json& tg = entry.at("toggle");
    const double low = number(require(tg, "low", where), where + ".toggle.low");
    const double high = number(require(tg, "high", where), where + ".toggle.high");
    const double period = number(require(tg, "period", where), where + ".toggle.period");
    const double first =
        tg.contains("first_switch") ? number(tg.at("first_switch"), where) : period;
    return LoadSchedule::toggle(low, high, period, first, horizon).breakpoints();
  }
  if (entry.contains("breakpoints")) {
    std::vector<std::pair<double, double>> bp;
    for (const auto& p : entry.at("breakpoints")) {
      if (!p.is_array() || p.size() != 2)
        throw ConfigError(where + ".breakpoints entries must be [t, value]");
      bp.emplace_back(number(p[0], where), number(p[1], where));
    }
    return bp;
  }
  throw ConfigError(where + " needs one of constant, toggle, breakpoints");
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  Scenario s;
  s.name = doc.value("name", std::string("unnamed"));

  const json& sim = require(doc, "sim", "scenario");
  s.horizon = number(require(sim, "horizon", "sim"), "sim.horizon");
  s.dt = number(require(sim, "dt", "sim"), "sim.dt");
  s.seed = sim.value("seed", std::uint64_t{0});
  const std::string init = sim.value("initial", std::string("equilibrium"));
  if (init == "equilibrium") {
    s.initial = InitialState::kEquilibrium;
  } else if (init == "zero") {
    s.initial = InitialState::kZero;
  } else {
    throw ConfigError("sim.initial must be 'equilibrium' or 'zero'");
  }

  const json& dgus = require(doc, "dgus", "scenario");
  if (!dgus.is_array() || dgus.empty()) throw ConfigError("dgus must be a non-empty array");
  s.n_dgus = static_cast<int>(dgus.size());
  for (std::size_t k = 0; k < dgus.size(); ++k) {
    const std::string where = "dgus[" + std::to_string(k) + "]";
    const json& d = dgus[k];
    DguParams p;
    p.R_t = number(require(d, "R_t", where), where + ".R_t");
    p.L_t = number(require(d, "L_t", where), where + ".L_t");
    p.C_t = number(require(d, "C_t", where), where + ".C_t");
    p.V_ref = number(require(d, "V_ref", where), where + ".V_ref");
    p.I_t_s = number(require(d, "I_t_s", where), where + ".I_t_s");
    p.K = vec3(require(d, "K", where), where + ".K").transpose();
    s.dgus.push_back(p);
  }

  for (const auto& l : require(doc, "lines", "scenario")) {
    PowerLine line;
    line.a = dgu_id(require(l, "from", "lines[]"), s.n_dgus, "lines[].from");
    line.b = dgu_id(require(l, "to", "lines[]"), s.n_dgus, "lines[].to");
    line.R = number(require(l, "R", "lines[]"), "lines[].R");
    line.t_connect = l.contains("t_connect") ? number(l.at("t_connect"), "lines[].t_connect")
                                             : 0.0;
    s.lines.push_back(line);
  }

  const json& noise = require(doc, "noise", "scenario");
  NoiseBounds nb;
  nb.w_bar = vec3(require(noise, "w_bar", "noise"), "noise.w_bar");
  nb.rho_bar = vec3(require(noise, "rho_bar", "noise"), "noise.rho_bar");
  s.noise.assign(s.n_dgus, nb);
  if (noise.contains("scale")) s.noise_scale = number(noise.at("scale"), "noise.scale");

  s.loads.assign(s.n_dgus, {{0.0, 0.0}});
  if (doc.contains("loads")) {
    for (const auto& entry : doc.at("loads")) {
      const int d = dgu_id(require(entry, "dgu", "loads[]"), s.n_dgus, "loads[].dgu");
      if (d < 0 || d >= s.n_dgus) throw ConfigError("loads[] references an unknown DGU");
      s.loads[d] = parse_load(entry, s.horizon, "loads[dgu " + std::to_string(d + 1) + "]");
    }
  }

  const json& cons = require(doc, "consensus", "scenario");
  s.consensus.k_I = number(require(cons, "k_I", "consensus"), "consensus.k_I");

  s.slope.assign(s.n_dgus, 0.0);
  if (doc.contains("watermark")) {
    const json& wm = doc.at("watermark");
    s.T_bar = number(require(wm, "T_bar", "watermark"), "watermark.T_bar");
    const bool enabled = wm.value("enabled", true);
    if (wm.contains("slope_exponent_per_dgu")) {
      const json& e = wm.at("slope_exponent_per_dgu");
      if (!e.is_array() || static_cast<int>(e.size()) != s.n_dgus)
        throw ConfigError("watermark.slope_exponent_per_dgu needs one entry per DGU");
      for (int k = 0; k < s.n_dgus; ++k)
        s.slope[k] = std::pow(10.0, number(e[k], "watermark.slope_exponent_per_dgu"));
    } else if (wm.contains("slope_per_dgu")) {
      const json& e = wm.at("slope_per_dgu");
      if (!e.is_array() || static_cast<int>(e.size()) != s.n_dgus)
        throw ConfigError("watermark.slope_per_dgu needs one entry per DGU");
      for (int k = 0; k < s.n_dgus; ++k) s.slope[k] = number(e[k], "watermark.slope_per_dgu");
    }
    if (!enabled) std::fill(s.slope.begin(), s.slope.end(), 0.0);
  }

  if (doc.contains("attacks")) {
    for (const auto& a : doc.at("attacks")) {
      ReplayAttackConfig atk;
      atk.from = dgu_id(require(a, "from", "attacks[]"), s.n_dgus, "attacks[].from");
      atk.to = dgu_id(require(a, "to", "attacks[]"), s.n_dgus, "attacks[].to");
      atk.T0 = number(require(a, "t_record", "attacks[]"), "attacks[].t_record");
      atk.Ta = number(require(a, "t_attack", "attacks[]"), "attacks[].t_attack");
      atk.T = number(require(a, "period", "attacks[]"), "attacks[].period");
      s.attacks.push_back(atk);
    }
  }

  double lambda = 5.0;
  if (doc.contains("detector")) {
    const json& det = doc.at("detector");
    if (det.contains("lambda")) lambda = number(det.at("lambda"), "detector.lambda");
  }
  s.lambda.assign(s.n_dgus, lambda);
  if (doc.contains("detector") && doc.at("detector").contains("lambda_per_dgu")) {
    const json& lp = doc.at("detector").at("lambda_per_dgu");
    if (!lp.is_array() || static_cast<int>(lp.size()) != s.n_dgus)
      throw ConfigError("detector.lambda_per_dgu needs one entry per DGU");
    for (int k = 0; k < s.n_dgus; ++k) s.lambda[k] = number(lp[k], "detector.lambda_per_dgu");
  }
  return s;
}

Scenario load_scenario(const std::string& path) { return parse_scenario(read_text_file(path)); }

std::string override_scenario_value(const std::string& text, const std::string& dotted_path,
                                    double value) {
  json doc = json::parse(text);
  json* node = &doc;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty parameter path");
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::string& key = parts[k];
    const bool last = k + 1 == parts.size();
    if (node->is_array()) {
      const std::size_t idx = std::stoul(key);
      if (idx >= node->size()) throw ConfigError("index out of range in " + dotted_path);
      node = &(*node)[idx];
    } else {
      if (!node->is_object()) throw ConfigError("cannot descend into " + dotted_path);
      if (!last && !node->contains(key)) throw ConfigError("unknown path " + dotted_path);
      node = &(*node)[key];
    }
  }
  *node = value;
  return doc.dump(2);
}

Vec3 isolated_equilibrium(const DguParams& p, double I_L, double alpha) {
  const DguMatrices m = build_matrices(p, MicrogridTopology(1, {}), 0);
  const Mat3 A_K = closed_loop_matrix(m, p.K);
  const Eigen::Vector2d d(I_L, p.V_ref);
  return A_K.fullPivLu().solve(-(m.M * d + m.G * alpha));
}

bool has_errors(const std::vector<Violation>& v) {
  return std::any_of(v.begin(), v.end(), [](const Violation& x) { return x.is_error(); });
}

std::string format_violations(const std::vector<Violation>& v) {
  std::ostringstream out;
  for (const auto& x : v) {
    out << (x.is_error() ? "error" : "warning") << ": " << x.field << ": " << x.message
        << "\n";
  }
  return out.str();
}

std::vector<Violation> validate(const Scenario& s) {
  std::vector<Violation> out;
  auto error = [&](std::string field, std::string msg) {
    out.push_back({Violation::Severity::kError, std::move(field), std::move(msg)});
  };
  auto warning = [&](std::string field, std::string msg) {
    out.push_back({Violation::Severity::kWarning, std::move(field), std::move(msg)});
  };
  const int n = s.n_dgus;

  if (!(s.dt > 0.0)) error("sim.dt", "must be positive");
  if (!(s.horizon >= 0.0)) error("sim.horizon", "must be non-negative");

  bool lines_ok = true;
  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < s.lines.size(); ++k) {
    const auto& l = s.lines[k];
    const std::string f = "lines[" + std::to_string(k) + "]";
    if (l.a < 0 || l.a >= n || l.b < 0 || l.b >= n) {
      error(f, "references an unknown DGU");
      lines_ok = false;
      continue;
    }
    if (l.a == l.b) {
      error(f, "self-loop");
      lines_ok = false;
    }
    if (!(l.R > 0.0)) {
      error(f + ".R", "line resistance must be positive");
      lines_ok = false;
    }
    if (l.t_connect < 0.0) error(f + ".t_connect", "must be non-negative");
    if (!seen.insert({std::min(l.a, l.b), std::max(l.a, l.b)}).second) {
      error(f, "duplicate line");
      lines_ok = false;
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto& p = s.dgus[i];
    const std::string f = "dgus[" + std::to_string(i) + "]";
    bool params_ok = true;
    if (!(p.R_t > 0.0)) { error(f + ".R_t", "must be positive"); params_ok = false; }
    if (!(p.L_t > 0.0)) { error(f + ".L_t", "must be positive"); params_ok = false; }
    if (!(p.C_t > 0.0)) { error(f + ".C_t", "must be positive"); params_ok = false; }
    if (!(p.I_t_s > 0.0)) error(f + ".I_t_s", "current rating must be positive");
    if (!params_ok) continue;
    const MicrogridTopology isolated(n, {});
    const double a0 = spectral_abscissa(closed_loop_matrix(build_matrices(p, isolated, i), p.K));
    if (!(a0 < 0.0)) {
      error(f + ".K", "closed loop A_ii + B K is not Hurwitz (max Re = " +
                          std::to_string(a0) + ")");
    }
    if (lines_ok && !s.lines.empty()) {
      const MicrogridTopology topo(n, s.lines);
      const double a1 = spectral_abscissa(closed_loop_matrix(build_matrices(p, topo, i), p.K));
      if (!(a1 < 0.0)) {
        error(f + ".K", "closed loop with all lines connected is not Hurwitz (max Re = " +
                            std::to_string(a1) + ")");
      }
    }
    if (s.dt > 0.0) {
      double tau = p.L_t / p.R_t;
      for (const auto& l : s.lines) {
        if ((l.a == i || l.b == i) && l.R > 0.0) tau = std::min(tau, l.R * p.C_t);
      }
      if (s.dt > tau / 20.0) {
        warning("sim.dt", "stiff: dt = " + std::to_string(s.dt) + " exceeds 1/20 of the " +
                              "fastest time constant of DGU " + std::to_string(i + 1) +
                              " (" + std::to_string(tau) + " s)");
      }
    }
  }

  if (!(s.noise_scale >= 0.0 && s.noise_scale <= 1.0))
    error("noise.scale", "must lie in [0, 1]");
  for (int i = 0; i < n; ++i) {
    const auto& nb = s.noise[i];
    if ((nb.w_bar.array() < 0.0).any() || (nb.rho_bar.array() < 0.0).any())
      error("noise", "bounds must be non-negative");
    if (!(s.lambda[i] > 0.0))
      error("detector.lambda[" + std::to_string(i) + "]", "must be positive");
    if (s.slope[i] < 0.0)
      error("watermark.slope[" + std::to_string(i) + "]", "must be non-negative");
    const auto& bp = s.loads[i];
    const std::string f = "loads[dgu " + std::to_string(i + 1) + "]";
    if (bp.empty() || bp.front().first != 0.0) error(f, "first breakpoint must be at t = 0");
    for (std::size_t k = 1; k < bp.size(); ++k) {
      if (!(bp[k].first > bp[k - 1].first)) {
        error(f, "breakpoints must be strictly increasing");
        break;
      }
    }
  }

  if (!(s.consensus.k_I > 0.0)) error("consensus.k_I", "must be positive");
  if (!(s.T_bar > 0.0)) error("watermark.T_bar", "must be positive");

  double last_event = 0.0;
  for (const auto& l : s.lines) last_event = std::max(last_event, l.t_connect);
  for (std::size_t k = 0; k < s.attacks.size(); ++k) {
    const auto& a = s.attacks[k];
    const std::string f = "attacks[" + std::to_string(k) + "]";
    if (a.from < 0 || a.from >= n || a.to < 0 || a.to >= n) {
      error(f, "references an unknown DGU");
      continue;
    }
    const PowerLine* line = nullptr;
    for (const auto& l : s.lines) {
      if ((l.a == a.from && l.b == a.to) || (l.a == a.to && l.b == a.from)) line = &l;
    }
    if (line == nullptr) error(f, "no communication link between the DGUs");
    if (!(a.T0 < a.Ta)) error(f, "t_record must precede t_attack");
    if (!(a.T > 0.0)) error(f + ".period", "must be positive");
    if (a.T > a.Ta - a.T0 + 1e-12) error(f + ".period", "exceeds t_attack - t_record");
    if (a.T > s.T_bar + 1e-12) error(f + ".period", "exceeds the watermark bound T_bar");
    if (line != nullptr && a.T0 < line->t_connect)
      error(f + ".t_record", "recording starts before the link is connected");
    last_event = std::max(last_event, a.Ta);
  }
  if (s.horizon > 0.0 && s.horizon <= last_event)
    warning("sim.horizon", "ends before the last scheduled event");
  return out;
}

}  // namespace mgrid
