// mgsim: simulate, validate, sweep and analyze microgrid scenarios.
//
// Exit codes: 0 ok, 1 validation or configuration error, 2 numerical abort.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgrid/analysis.hpp"
#include "mgrid/artifact_io.hpp"
#include "mgrid/engine.hpp"
#include "mgrid/scenario.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string link_name(int from, int to) {
  return std::to_string(from + 1) + "->" + std::to_string(to + 1);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Loads and validates; prints violations to stderr. Returns nullopt when
// errors are present.
std::optional<mgrid::Scenario> checked(const std::string& text, bool quiet_warnings = false) {
  mgrid::Scenario s = mgrid::parse_scenario(text);
  const auto v = mgrid::validate(s);
  if (!v.empty() && !(quiet_warnings && !mgrid::has_errors(v))) {
    std::cerr << mgrid::format_violations(v);
  }
  if (mgrid::has_errors(v)) return std::nullopt;
  return s;
}

void print_summary(const mgrid::RunSummary& s) {
  std::cout << "scenario " << s.scenario << "  seed " << s.seed << "  steps " << s.steps
            << "  sharing spread " << fmt(s.sharing_spread) << "\n";
  for (const auto& l : s.links) {
    std::cout << "  link " << link_name(l.from, l.to) << "  c=" << fmt(l.c);
    if (l.attacked) std::cout << "  attacked";
    if (l.alarm.raised) {
      std::cout << "  ALARM t=" << fmt(l.alarm.t) << " ("
                << mgrid::component_name(l.alarm.component) << ")";
      if (l.latency) std::cout << " latency " << fmt(*l.latency);
    }
    if (l.guaranteed_detection) std::cout << "  T_d=" << fmt(*l.guaranteed_detection);
    if (l.stealth) std::cout << "  stealthy=" << (l.stealth->stealthy ? "yes" : "no");
    std::cout << "\n";
  }
}

int cmd_simulate(const std::string& file, std::optional<std::uint64_t> seed,
                 const std::string& out, const std::string& format, int stride) {
  auto sc = checked(mgrid::read_text_file(file));
  if (!sc) return kExitConfig;
  if (seed) sc->seed = *seed;
  mgrid::ExportOptions eo;
  eo.format = mgrid::parse_export_format(format);
  eo.stride = stride;
  const mgrid::RunArtifact art = mgrid::run(*sc);
  const std::string dir =
      out.empty() ? "runs/" + sc->name + "-seed" + std::to_string(sc->seed) : out;
  mgrid::export_run(art, dir, eo);
  print_summary(art.summary);
  std::cout << "artifacts written to " << dir << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& file) {
  const mgrid::Scenario s = mgrid::load_scenario(file);
  const auto v = mgrid::validate(s);
  std::cout << mgrid::format_violations(v);
  const bool bad = mgrid::has_errors(v);
  std::cout << (bad ? "invalid" : "valid") << "\n";
  return bad ? kExitConfig : kExitOk;
}

struct ParamSweep {
  std::string path;
  std::vector<double> values;
};

ParamSweep parse_param(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw mgrid::ConfigError("--param expects path=v1,v2,...");
  }
  ParamSweep p;
  p.path = spec.substr(0, eq);
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      p.values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw mgrid::ConfigError("not a number in --param: '" + item + "'");
    }
  }
  if (p.values.empty()) throw mgrid::ConfigError("--param lists no values");
  return p;
}

int cmd_sweep(const std::string& file, const std::string& param, int seeds,
              std::optional<std::uint64_t> seed0, const std::string& out) {
  if (seeds < 1) throw mgrid::ConfigError("--seeds must be >= 1");
  const std::string text = mgrid::read_text_file(file);
  const ParamSweep sweep = parse_param(param);
  std::string table = "value,seed,alarms,first_alarm_link,first_latency,sharing_spread,"
                      "max_residual_ratio\n";
  for (double value : sweep.values) {
    auto sc = checked(mgrid::override_scenario_value(text, sweep.path, value), true);
    if (!sc) return kExitConfig;
    const std::uint64_t base = seed0 ? *seed0 : sc->seed;
    for (int k = 0; k < seeds; ++k) {
      sc->seed = base + static_cast<std::uint64_t>(k);
      const auto art = mgrid::run(*sc, mgrid::RunOptions{false});
      int alarms = 0;
      std::string first_link = "";
      std::optional<double> first_t, first_latency;
      double ratio = 0.0;
      for (const auto& l : art.summary.links) {
        ratio = std::max(ratio, l.max_residual_ratio);
        if (!l.alarm.raised) continue;
        ++alarms;
        if (!first_t || l.alarm.t < *first_t) {
          first_t = l.alarm.t;
          first_link = link_name(l.from, l.to);
          first_latency = l.latency;
        }
      }
      table += fmt(value) + "," + std::to_string(sc->seed) + "," + std::to_string(alarms) +
               "," + first_link + "," + (first_latency ? fmt(*first_latency) : "") + "," +
               fmt(art.summary.sharing_spread) + "," + fmt(ratio) + "\n";
    }
  }
  std::cout << "# " << sweep.path << "\n" << table;
  if (!out.empty()) {
    fs::create_directories(out);
    mgrid::write_text_file((fs::path(out) / "sweep.csv").string(), table);
  }
  return kExitOk;
}

json stats_json(const mgrid::SignalStats& s) {
  return {{"count", s.count},     {"mean", s.mean},
          {"variance", s.variance}, {"min", s.min},
          {"max", s.max},         {"histogram", {{"edges", s.histogram.edges},
                                                 {"counts", s.histogram.counts}}}};
}

int component_index(const std::string& name) {
  for (int k = 0; k < 3; ++k) {
    if (name == mgrid::component_name(k)) return k;
  }
  if (name == "It") return mgrid::kCurrent;
  throw mgrid::ConfigError("unknown component '" + name + "' (expected V, I_t or v)");
}

int cmd_analyze(const std::string& dir, double t0, double t1, int dgu,
                const std::string& component, double f_max) {
  const mgrid::RunArtifact run = mgrid::load_run(dir);
  const fs::path root(dir);
  const int comp = component_index(component);
  if (dgu < 1 || dgu > run.n_dgus) throw mgrid::ConfigError("--dgu out of range");

  // stats.json
  const auto cmp = mgrid::compare_stats(run, t0, t1);
  json stats;
  stats["window"] = {t0, t1};
  stats["max_mean_shift_pct"] = cmp.max_mean_shift_pct;
  stats["max_variance_shift_pct"] = cmp.max_variance_shift_pct;
  stats["entries"] = json::array();
  for (const auto& e : cmp.entries) {
    stats["entries"].push_back({{"dgu", e.dgu + 1},
                                {"component", mgrid::component_name(e.component)},
                                {"mean_shift_pct", e.mean_shift_pct},
                                {"variance_shift_pct", e.variance_shift_pct},
                                {"actual", stats_json(e.actual)},
                                {"communicated", stats_json(e.communicated)}});
  }
  mgrid::write_text_file((root / "stats.json").string(), stats.dump(2) + "\n");

  // spectrum.csv
  const auto spec = mgrid::spectrum(run, dgu - 1, comp, t0, t1);
  std::string csv = "f,communicated,actual,watermark\n";
  for (std::size_t k = 0; k < spec.frequency.size() && spec.frequency[k] <= f_max; ++k) {
    csv += fmt(spec.frequency[k]) + "," + fmt(spec.communicated[k]) + "," +
           fmt(spec.actual[k]) + "," + fmt(spec.watermark[k]) + "\n";
  }
  mgrid::write_text_file((root / "spectrum.csv").string(), csv);

  // detections.json
  json det = json::array();
  for (const auto& d : mgrid::detection_report(run)) {
    det.push_back({{"from", d.from + 1},
                   {"to", d.to + 1},
                   {"c", d.c},
                   {"attacked", d.attacked},
                   {"alarmed", d.alarmed},
                   {"t_alarm", opt(d.t_alarm)},
                   {"latency", opt(d.latency)},
                   {"component", d.component >= 0 ? json(mgrid::component_name(d.component))
                                                  : json(nullptr)},
                   {"guaranteed_detection", opt(d.guaranteed_detection)}});
  }
  mgrid::write_text_file((root / "detections.json").string(), det.dump(2) + "\n");

  // Plot data: residuals vs thresholds, current sharing, voltages, histogram.
  const std::size_t every = std::max<std::size_t>(1, run.steps() / 4000);
  for (std::size_t l = 0; l < run.n_links(); ++l) {
    const auto& li = run.links[l];
    std::string dat = "# t |r_V| rbar_V |r_It| rbar_It |r_v| rbar_v alarm\n";
    for (std::size_t s = 0; s < run.steps(); s += every) {
      const auto& r = run.residual(s, l);
      dat += fmt(run.time[s]);
      for (int k = 0; k < 3; ++k) dat += " " + fmt(std::abs(r.r[k])) + " " + fmt(r.r_bar[k]);
      dat += r.alarm ? " 1\n" : " 0\n";
    }
    mgrid::write_text_file((root / ("plot_residual_" + std::to_string(li.from + 1) + "_" +
                                     std::to_string(li.to + 1) + ".dat"))
                               .string(),
                           dat);
  }
  std::string sharing = "# t", volts = "# t";
  for (int i = 1; i <= run.n_dgus; ++i) {
    sharing += " I_t/I_t_s_" + std::to_string(i);
    volts += " V_" + std::to_string(i);
  }
  sharing += "\n";
  volts += "\n";
  for (std::size_t s = 0; s < run.steps(); s += every) {
    sharing += fmt(run.time[s]);
    volts += fmt(run.time[s]);
    for (int i = 0; i < run.n_dgus; ++i) {
      sharing += " " + fmt(run.state(s, i).I_t() / run.summary.rating.at(i));
      volts += " " + fmt(run.state(s, i).V());
    }
    sharing += "\n";
    volts += "\n";
  }
  mgrid::write_text_file((root / "plot_currents.dat").string(), sharing);
  mgrid::write_text_file((root / "plot_voltages.dat").string(), volts);

  const auto& h = cmp.at(dgu - 1, comp);
  std::string hist = "# edge_lo edge_hi count\n# communicated\n";
  for (std::size_t b = 0; b < h.communicated.histogram.counts.size(); ++b) {
    hist += fmt(h.communicated.histogram.edges[b]) + " " +
            fmt(h.communicated.histogram.edges[b + 1]) + " " +
            std::to_string(h.communicated.histogram.counts[b]) + "\n";
  }
  hist += "\n\n# actual\n";
  for (std::size_t b = 0; b < h.actual.histogram.counts.size(); ++b) {
    hist += fmt(h.actual.histogram.edges[b]) + " " + fmt(h.actual.histogram.edges[b + 1]) +
            " " + std::to_string(h.actual.histogram.counts[b]) + "\n";
  }
  mgrid::write_text_file((root / "plot_histogram.dat").string(), hist);

  const double wm_peak = spec.watermark[spec.bin_of(spec.f_delta)];
  const double comm_peak = spec.peak(spec.communicated, f_max);
  std::cout << "window [" << fmt(t0) << ", " << fmt(t1) << "]\n"
            << "  max mean shift " << fmt(cmp.max_mean_shift_pct) << " %\n"
            << "  max variance shift " << fmt(cmp.max_variance_shift_pct) << " %\n"
            << "  spectrum DGU " << dgu << " " << component << ": watermark at f_delta "
            << fmt(wm_peak) << ", communicated low-frequency peak " << fmt(comm_peak)
            << "\n";
  for (const auto& d : mgrid::detection_report(run)) {
    if (!d.attacked && !d.alarmed) continue;
    std::cout << "  link " << link_name(d.from, d.to)
              << (d.alarmed ? "  alarm t=" + fmt(*d.t_alarm) : std::string("  no alarm"))
              << (d.latency ? "  latency " + fmt(*d.latency) : std::string()) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC microgrid simulator with watermarked replay-attack detection"};
  app.require_subcommand(1);

  std::string file, out, format = "csv", param, dir, component = "v";
  std::optional<std::uint64_t> seed;
  int stride = 1, seeds = 1, dgu = 1;
  double t0 = 5.0, t1 = 9.0, f_max = 5.0;

  auto* sim = app.add_subcommand("simulate", "run a scenario and export its artifacts");
  sim->add_option("scenario", file, "scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "noise seed (overrides the scenario)");
  sim->add_option("--out", out, "output directory");
  sim->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sim->add_option("--stride", stride, "export every n-th step")->check(CLI::PositiveNumber);

  auto* val = app.add_subcommand("validate", "check a scenario and list violations");
  val->add_option("scenario", file, "scenario file")->required()->check(CLI::ExistingFile);

  auto* sw = app.add_subcommand("sweep", "run a parameter sweep over seeds");
  sw->add_option("scenario", file, "scenario file")->required()->check(CLI::ExistingFile);
  sw->add_option("--param", param, "dotted.path=v1,v2,...")->required();
  sw->add_option("--seeds", seeds, "seeds per value")->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "first seed (defaults to the scenario seed)");
  sw->add_option("--out", out, "directory for sweep.csv");

  auto* an = app.add_subcommand("analyze", "statistics, spectra and detections of a run");
  an->add_option("run_dir", dir, "directory written by simulate")
      ->required()
      ->check(CLI::ExistingDirectory);
  an->add_option("--t0", t0, "window start [s]");
  an->add_option("--t1", t1, "window end [s]");
  an->add_option("--dgu", dgu, "DGU for spectrum and histogram (1-based)");
  an->add_option("--component", component, "V, I_t or v");
  an->add_option("--fmax", f_max, "highest frequency written to spectrum.csv [Hz]");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(file, seed, out, format, stride);
    if (*val) return cmd_validate(file);
    if (*sw) return cmd_sweep(file, param, seeds, seed, out);
    if (*an) return cmd_analyze(dir, t0, t1, dgu, component, f_max);
  } catch (const mgrid::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const mgrid::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
