#include "mgrid/artifact_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace mgrid {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const char* const kComp[3] = {"V", "It", "v"};

// Shortest text that round-trips; NaN spelled "nan" so rows stay rectangular.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::size_t> kept_steps(std::size_t steps, int stride) {
  if (stride < 1) throw ConfigError("export stride must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t s = 0; s < steps; s += stride) idx.push_back(s);
  if (steps > 0 && idx.back() != steps - 1) idx.push_back(steps - 1);
  return idx;
}

std::string link_tag(const LinkInfo& l) {
  return std::to_string(l.from + 1) + "_" + std::to_string(l.to + 1);
}

void append_vec(std::string& row, const Vec3& v) {
  for (int c = 0; c < 3; ++c) {
    row += ',';
    row += num(v[c]);
  }
}

json vec_json(const Vec3& v) {
  json a = json::array();
  for (int c = 0; c < 3; ++c) a.push_back(std::isnan(v[c]) ? json(nullptr) : json(v[c]));
  return a;
}

Vec3 vec_from(const json& a) {
  Vec3 v;
  for (int c = 0; c < 3; ++c) v[c] = a.at(c).is_null() ? kNaN : a.at(c).get<double>();
  return v;
}

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json attack_json(const ReplayAttackConfig& a) {
  return {{"from", a.from}, {"to", a.to}, {"T0", a.T0}, {"Ta", a.Ta}, {"T", a.T}};
}

ReplayAttackConfig attack_from(const json& j) {
  return {j.at("from").get<int>(), j.at("to").get<int>(), j.at("T0").get<double>(),
          j.at("Ta").get<double>(), j.at("T").get<double>()};
}

std::optional<double> opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

// Splits one CSV row of numbers.
std::vector<double> parse_row(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    out.push_back(cell == "nan" ? kNaN : std::stod(cell));
  }
  return out;
}

std::vector<std::vector<double>> read_csv(const std::string& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = parse_row(line);
    if (row.size() != columns) throw ConfigError("malformed row in " + path);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

ExportFormat parse_export_format(const std::string& name) {
  if (name == "csv") return ExportFormat::kCsv;
  if (name == "json") return ExportFormat::kJson;
  throw ConfigError("unknown export format '" + name + "' (expected csv or json)");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed for " + path);
}

std::string summary_to_json(const RunSummary& s) {
  json j;
  j["scenario"] = s.scenario;
  j["seed"] = s.seed;
  j["dt"] = s.dt;
  j["horizon"] = s.horizon;
  j["steps"] = s.steps;
  j["T_bar"] = s.T_bar;
  j["slope"] = s.slope;
  j["rating"] = s.rating;
  j["sharing_spread"] = s.sharing_spread;
  j["links"] = json::array();
  for (const auto& l : s.links) {
    json lj;
    lj["from"] = l.from;
    lj["to"] = l.to;
    lj["c"] = l.c;
    lj["attacked"] = l.attacked;
    lj["attack"] = l.attack ? attack_json(*l.attack) : json(nullptr);
    lj["alarm"] = {{"raised", l.alarm.raised},
                   {"t", l.alarm.t},
                   {"component", l.alarm.component}};
    lj["latency"] = opt_json(l.latency);
    if (l.stealth) {
      lj["stealth"] = {{"e_a", vec_json(l.stealth->e_a)},
                       {"e_bar", vec_json(l.stealth->e_bar)},
                       {"stealthy", l.stealth->stealthy}};
    } else {
      lj["stealth"] = nullptr;
    }
    lj["guaranteed_detection"] = opt_json(l.guaranteed_detection);
    lj["max_residual_ratio"] = l.max_residual_ratio;
    lj["bound_violations"] = l.bound_violations;
    j["links"].push_back(lj);
  }
  j["final_states"] = json::array();
  for (const auto& st : s.final_states) {
    j["final_states"].push_back({{"x", vec_json(st.x)}, {"alpha", st.alpha}});
  }
  j["events"] = json::array();
  for (const auto& e : s.events) {
    j["events"].push_back({{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
  }
  return j.dump(2) + "\n";
}

RunSummary summary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("summary is not valid JSON: ") + e.what());
  }
  try {
    RunSummary s;
    s.scenario = j.at("scenario").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.dt = j.at("dt").get<double>();
    s.horizon = j.at("horizon").get<double>();
    s.steps = j.at("steps").get<long>();
    s.T_bar = j.at("T_bar").get<double>();
    s.slope = j.at("slope").get<std::vector<double>>();
    s.rating = j.at("rating").get<std::vector<double>>();
    s.sharing_spread = j.at("sharing_spread").get<double>();
    for (const auto& lj : j.at("links")) {
      LinkSummary l;
      l.from = lj.at("from").get<int>();
      l.to = lj.at("to").get<int>();
      l.c = lj.at("c").get<double>();
      l.attacked = lj.at("attacked").get<bool>();
      if (!lj.at("attack").is_null()) l.attack = attack_from(lj.at("attack"));
      const auto& a = lj.at("alarm");
      l.alarm = Alarm{a.at("raised").get<bool>(), a.at("t").get<double>(),
                      a.at("component").get<int>()};
      l.latency = opt_double(lj, "latency");
      if (!lj.at("stealth").is_null()) {
        const auto& so = lj.at("stealth");
        l.stealth = StealthOracle{vec_from(so.at("e_a")), vec_from(so.at("e_bar")),
                                  so.at("stealthy").get<bool>()};
      }
      l.guaranteed_detection = opt_double(lj, "guaranteed_detection");
      l.max_residual_ratio = lj.at("max_residual_ratio").get<double>();
      l.bound_violations = lj.at("bound_violations").get<long>();
      s.links.push_back(l);
    }
    for (const auto& fj : j.at("final_states")) {
      DguState st;
      st.x = vec_from(fj.at("x"));
      st.alpha = fj.at("alpha").get<double>();
      s.final_states.push_back(st);
    }
    for (const auto& ej : j.at("events")) {
      s.events.push_back({ej.at("t").get<double>(), ej.at("kind").get<std::string>(),
                          ej.at("detail").get<std::string>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed summary: ") + e.what());
  }
}

void export_run(const RunArtifact& a, const std::string& dir, const ExportOptions& opt) {
  fs::create_directories(dir);
  const fs::path root(dir);
  const int n = a.n_dgus;
  const std::size_t nl = a.n_links();
  const auto idx = kept_steps(a.steps(), opt.stride);

  write_text_file((root / "summary.json").string(), summary_to_json(a.summary));
  {
    std::string ev = "t,kind,detail\n";
    for (const auto& e : a.summary.events) ev += num(e.t) + "," + e.kind + "," + e.detail + "\n";
    write_text_file((root / "events.csv").string(), ev);
  }

  if (opt.format == ExportFormat::kJson) {
    json j;
    j["n_dgus"] = n;
    j["links"] = json::array();
    for (const auto& l : a.links) {
      j["links"].push_back({{"from", l.from}, {"to", l.to}, {"t_connect", l.t_connect},
                            {"c", l.wm.c}, {"T_bar", l.wm.T_bar}});
    }
    json steps = json::array();
    for (std::size_t s : idx) {
      json row;
      row["t"] = a.time[s];
      json st = json::array(), y = json::array(), tx = json::array();
      for (int i = 0; i < n; ++i) {
        st.push_back({{"x", vec_json(a.state(s, i).x)}, {"alpha", a.state(s, i).alpha}});
        y.push_back(vec_json(a.output(s, i)));
        tx.push_back(vec_json(a.sent_output(s, i)));
      }
      json rx = json::array(), dec = json::array(), res = json::array();
      for (std::size_t l = 0; l < nl; ++l) {
        rx.push_back(vec_json(a.received[s * nl + l]));
        dec.push_back(vec_json(a.decoded[s * nl + l]));
        const auto& r = a.residual(s, l);
        res.push_back({{"r", vec_json(r.r)}, {"r_bar", vec_json(r.r_bar)}, {"alarm", r.alarm}});
      }
      row["states"] = st;
      row["outputs"] = y;
      row["sent"] = tx;
      row["received"] = rx;
      row["decoded"] = dec;
      row["residuals"] = res;
      steps.push_back(row);
    }
    j["steps"] = steps;
    write_text_file((root / "traces.json").string(), j.dump() + "\n");
    return;
  }

  // states.csv and outputs.csv
  std::string states = "t", outputs = "t", frames = "t";
  for (int i = 1; i <= n; ++i) {
    const std::string id = std::to_string(i);
    states += ",V_" + id + ",It_" + id + ",v_" + id + ",alpha_" + id;
    for (int c = 0; c < 3; ++c) {
      outputs += std::string(",y") + kComp[c] + "_" + id;
      frames += std::string(",sent") + kComp[c] + "_" + id;
    }
  }
  for (const auto& l : a.links) {
    for (int c = 0; c < 3; ++c) frames += std::string(",rx") + kComp[c] + "_" + link_tag(l);
    for (int c = 0; c < 3; ++c) frames += std::string(",dec") + kComp[c] + "_" + link_tag(l);
  }
  states += "\n";
  outputs += "\n";
  frames += "\n";
  for (std::size_t s : idx) {
    const std::string t = num(a.time[s]);
    std::string rs = t, ro = t, rf = t;
    for (int i = 0; i < n; ++i) {
      append_vec(rs, a.state(s, i).x);
      rs += "," + num(a.state(s, i).alpha);
      append_vec(ro, a.output(s, i));
      append_vec(rf, a.sent_output(s, i));
    }
    for (std::size_t l = 0; l < nl; ++l) {
      append_vec(rf, a.received[s * nl + l]);
      append_vec(rf, a.decoded[s * nl + l]);
    }
    states += rs + "\n";
    outputs += ro + "\n";
    frames += rf + "\n";
  }
  write_text_file((root / "states.csv").string(), states);
  write_text_file((root / "outputs.csv").string(), outputs);
  write_text_file((root / "frames.csv").string(), frames);

  for (std::size_t l = 0; l < nl; ++l) {
    std::string text = "t,r_V,r_It,r_v,rbar_V,rbar_It,rbar_v,alarm\n";
    for (std::size_t s : idx) {
      const auto& r = a.residual(s, l);
      std::string row = num(a.time[s]);
      append_vec(row, r.r);
      append_vec(row, r.r_bar);
      row += r.alarm ? ",1\n" : ",0\n";
      text += row;
    }
    write_text_file((root / ("residuals_" + link_tag(a.links[l]) + ".csv")).string(), text);
  }
}

RunArtifact load_run(const std::string& dir) {
  const fs::path root(dir);
  RunArtifact a;
  a.summary = summary_from_json(read_text_file((root / "summary.json").string()));
  a.n_dgus = static_cast<int>(a.summary.final_states.size());
  const int n = a.n_dgus;
  for (const auto& ls : a.summary.links) {
    LinkInfo li;
    li.from = ls.from;
    li.to = ls.to;
    li.wm = WatermarkConfig{ls.c, a.summary.T_bar};
    li.attack = ls.attack;
    a.links.push_back(li);
  }
  const std::size_t nl = a.links.size();

  if (fs::exists(root / "traces.json")) {
    const json j = json::parse(read_text_file((root / "traces.json").string()));
    for (std::size_t l = 0; l < nl; ++l) {
      a.links[l].t_connect = j.at("links").at(l).at("t_connect").get<double>();
    }
    for (const auto& row : j.at("steps")) {
      a.time.push_back(row.at("t").get<double>());
      for (int i = 0; i < n; ++i) {
        DguState st;
        st.x = vec_from(row.at("states").at(i).at("x"));
        st.alpha = row.at("states").at(i).at("alpha").get<double>();
        a.states.push_back(st);
        a.outputs.push_back(vec_from(row.at("outputs").at(i)));
        a.sent.push_back(vec_from(row.at("sent").at(i)));
      }
      for (std::size_t l = 0; l < nl; ++l) {
        a.received.push_back(vec_from(row.at("received").at(l)));
        a.decoded.push_back(vec_from(row.at("decoded").at(l)));
        const auto& rj = row.at("residuals").at(l);
        ResidualRecord r;
        r.t = a.time.back();
        r.r = vec_from(rj.at("r"));
        r.r_bar = vec_from(rj.at("r_bar"));
        r.alarm = rj.at("alarm").get<bool>();
        a.residuals.push_back(r);
      }
    }
    return a;
  }

  const auto states = read_csv((root / "states.csv").string(), 1 + 4 * n);
  const auto outputs = read_csv((root / "outputs.csv").string(), 1 + 3 * n);
  const auto frames = read_csv((root / "frames.csv").string(), 1 + 3 * n + 6 * nl);
  if (outputs.size() != states.size() || frames.size() != states.size()) {
    throw ConfigError("trace files in " + dir + " have different lengths");
  }
  std::vector<std::vector<std::vector<double>>> res(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    res[l] = read_csv((root / ("residuals_" + link_tag(a.links[l]) + ".csv")).string(), 8);
    if (res[l].size() != states.size()) {
      throw ConfigError("residual trace of link " + link_tag(a.links[l]) + " has wrong length");
    }
  }
  auto vec_at = [](const std::vector<double>& row, std::size_t off) {
    return Vec3(row[off], row[off + 1], row[off + 2]);
  };
  for (std::size_t s = 0; s < states.size(); ++s) {
    a.time.push_back(states[s][0]);
    for (int i = 0; i < n; ++i) {
      DguState st;
      st.x = vec_at(states[s], 1 + 4 * i);
      st.alpha = states[s][4 + 4 * i];
      a.states.push_back(st);
      a.outputs.push_back(vec_at(outputs[s], 1 + 3 * i));
      a.sent.push_back(vec_at(frames[s], 1 + 3 * i));
    }
    for (std::size_t l = 0; l < nl; ++l) {
      const std::size_t off = 1 + 3 * n + 6 * l;
      a.received.push_back(vec_at(frames[s], off));
      a.decoded.push_back(vec_at(frames[s], off + 3));
      ResidualRecord r;
      r.t = res[l][s][0];
      r.r = vec_at(res[l][s], 1);
      r.r_bar = vec_at(res[l][s], 4);
      r.alarm = res[l][s][7] != 0.0;
      a.residuals.push_back(r);
    }
  }
  // CSV keeps no link metadata; the first live frame marks the connection.
  for (std::size_t l = 0; l < nl; ++l) {
    for (std::size_t s = 0; s < a.steps(); ++s) {
      if (a.received[s * nl + l].allFinite()) {
        a.links[l].t_connect = a.time[s];
        break;
      }
    }
  }
  return a;
}

}  // namespace mgrid
