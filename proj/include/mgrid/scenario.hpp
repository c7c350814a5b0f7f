#pragma once

// Scenario description: network, parameters, loads, controllers, watermarks,
// attacks and integration settings, loaded from a JSON scenario file.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mgrid/comm.hpp"
#include "mgrid/control.hpp"
#include "mgrid/grid_model.hpp"

namespace mgrid {

enum class InitialState { kEquilibrium, kZero };

struct Scenario {
  std::string name;
  int n_dgus = 0;
  std::vector<DguParams> dgus;
  std::vector<PowerLine> lines;
  std::vector<NoiseBounds> noise;  // per DGU, as assumed by the detectors
  double noise_scale = 1.0;        // sampled amplitude relative to the bounds
  std::vector<std::vector<std::pair<double, double>>> loads;  // breakpoints per DGU
  ConsensusConfig consensus;
  std::vector<double> slope;  // watermark slope c_i used on every outgoing link
  double T_bar = 1.0;
  std::vector<ReplayAttackConfig> attacks;
  std::vector<double> lambda;  // UIO decay rate per observing DGU
  double horizon = 0.0;
  double dt = 1e-4;
  std::uint64_t seed = 0;
  InitialState initial = InitialState::kEquilibrium;

  MicrogridTopology topology() const { return MicrogridTopology(n_dgus, lines); }
  WatermarkConfig watermark_of(int sender) const { return {slope[sender], T_bar}; }
  LoadSchedule load_of(int dgu) const { return LoadSchedule(loads[dgu]); }
};

struct Violation {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::string field;
  std::string message;

  bool is_error() const { return severity == Severity::kError; }
};

/// Every structural and invariant violation, errors and warnings alike.
std::vector<Violation> validate(const Scenario& s);
bool has_errors(const std::vector<Violation>& v);
std::string format_violations(const std::vector<Violation>& v);

/// Parses scenario JSON text. Malformed documents (missing sections, wrong
/// types) throw ConfigError; semantic checks are left to validate().
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);
std::string read_text_file(const std::string& path);

/// Sets a dotted path such as "watermark.slope_exponent_per_dgu.2" or
/// "consensus.k_I" inside scenario JSON text and returns the edited text.
std::string override_scenario_value(const std::string& json_text,
                                    const std::string& dotted_path, double value);

/// Equilibrium of an isolated DGU under primary control for a given load and
/// secondary input.
Vec3 isolated_equilibrium(const DguParams& p, double I_L, double alpha);

}  // namespace mgrid
