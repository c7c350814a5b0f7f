#pragma once

// Fixed-step closed-loop simulation: plant, primary and secondary control,
// watermarked links, replay attackers and UIO detectors.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgrid/comm.hpp"
#include "mgrid/grid_model.hpp"
#include "mgrid/scenario.hpp"
#include "mgrid/uio.hpp"

namespace mgrid {

/// Directed communication link sender -> receiver. The receiver runs the
/// UIO observing the sender.
struct LinkInfo {
  int from = 0;
  int to = 0;
  double t_connect = 0.0;
  WatermarkConfig wm;
  std::optional<ReplayAttackConfig> attack;
};

struct Event {
  double t = 0.0;
  std::string kind;  // connect, load, attack_start, alarm
  std::string detail;
};

struct StealthOracle {
  Vec3 e_a = Vec3::Zero();
  Vec3 e_bar = Vec3::Zero();
  bool stealthy = false;
};

struct LinkSummary {
  int from = 0;
  int to = 0;
  double c = 0.0;
  bool attacked = false;
  std::optional<ReplayAttackConfig> attack;
  Alarm alarm;
  std::optional<double> latency;  // t_alarm - Ta when attacked and alarmed
  std::optional<StealthOracle> stealth;
  std::optional<double> guaranteed_detection;
  double max_residual_ratio = 0.0;  // max_k,t |r_k| / r_bar_k
  long bound_violations = 0;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double horizon = 0.0;
  long steps = 0;
  double T_bar = 0.0;
  std::vector<double> slope;   // watermark slope per sender
  std::vector<double> rating;  // I_t_s per DGU
  std::vector<LinkSummary> links;
  std::vector<DguState> final_states;
  double sharing_spread = 0.0;  // (max - min) / |mean| of I_t / I_t_s at the end
  std::vector<Event> events;
};

/// Per-step traces on one shared time grid. Link-indexed families follow
/// RunArtifact::links; entries are NaN while a link is down.
struct RunArtifact {
  int n_dgus = 0;
  std::vector<LinkInfo> links;
  std::vector<double> time;
  std::vector<DguState> states;    // [step * n_dgus + dgu]
  std::vector<Vec3> outputs;       // measured y
  std::vector<Vec3> sent;          // y + Delta as put on the wire by the sender
  std::vector<Vec3> received;      // [step * n_links + link], after the attacker
  std::vector<Vec3> decoded;
  std::vector<ResidualRecord> residuals;
  RunSummary summary;

  std::size_t n_links() const { return links.size(); }
  std::size_t steps() const { return time.size(); }
  const DguState& state(std::size_t step, int dgu) const {
    return states[step * n_dgus + dgu];
  }
  const Vec3& output(std::size_t step, int dgu) const { return outputs[step * n_dgus + dgu]; }
  const Vec3& sent_output(std::size_t step, int dgu) const { return sent[step * n_dgus + dgu]; }
  const ResidualRecord& residual(std::size_t step, std::size_t link) const {
    return residuals[step * links.size() + link];
  }
  int link_index(int from, int to) const;
};

struct RunOptions {
  bool keep_traces = true;
};

/// Simulation world. step() performs, in order: noise sampling, measurement,
/// encode / attack / decode on every active link, detector updates,
/// control computation, one RK4 step of plants and secondary states.
class Simulation {
 public:
  explicit Simulation(const Scenario& scenario, RunOptions options = {});
  ~Simulation();
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  /// Observes at the current time and, unless `integrate` is false, advances
  /// by dt. Throws NumericalError on a non-finite state.
  void step(bool integrate = true);

  double time() const;
  long step_index() const;
  const std::vector<DguState>& states() const;
  const std::vector<double>& last_alpha_rates() const;

  /// Runs the whole horizon and hands over the artifact.
  RunArtifact run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Convenience wrapper: validates (throws ConfigError listing every error),
/// then runs.
RunArtifact run(const Scenario& scenario, RunOptions options = {});

/// Directed links implied by the lines, ordered by (from, to).
std::vector<LinkInfo> communication_links(const Scenario& s);

}  // namespace mgrid
