#include "mgrid/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mgrid/control.hpp"

namespace mgrid {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string link_name(int from, int to) {
  return std::to_string(from + 1) + "->" + std::to_string(to + 1);
}

}  // namespace

int RunArtifact::link_index(int from, int to) const {
  for (std::size_t l = 0; l < links.size(); ++l) {
    if (links[l].from == from && links[l].to == to) return static_cast<int>(l);
  }
  return -1;
}

std::vector<LinkInfo> communication_links(const Scenario& s) {
  std::vector<LinkInfo> out;
  for (const auto& line : s.lines) {
    for (int dir = 0; dir < 2; ++dir) {
      LinkInfo li;
      li.from = dir == 0 ? line.a : line.b;
      li.to = dir == 0 ? line.b : line.a;
      li.t_connect = line.t_connect;
      li.wm = s.watermark_of(li.from);
      for (const auto& a : s.attacks) {
        if (a.from == li.from && a.to == li.to) li.attack = a;
      }
      out.push_back(li);
    }
  }
  std::sort(out.begin(), out.end(), [](const LinkInfo& a, const LinkInfo& b) {
    return std::tie(a.from, a.to) < std::tie(b.from, b.to);
  });
  return out;
}

struct Simulation::Impl {
  Scenario sc;
  RunOptions opt;
  MicrogridTopology topo;
  int n = 0;
  std::vector<LoadSchedule> loads;
  std::vector<NoiseSampler> samplers;
  std::vector<DguState> st;
  std::vector<LinkInfo> links;
  std::vector<std::unique_ptr<ReplayAttacker>> attackers;
  std::vector<UioBundle> uio;
  std::vector<DetectorState> det;
  std::vector<bool> frozen;
  std::vector<bool> attack_started;
  std::vector<std::optional<Vec3>> replay_origin_state;
  std::vector<DguMatrices> mats;
  std::vector<bool> line_up;
  std::vector<double> last_load;
  std::vector<double> alpha_rate;
  long k = 0;
  RunArtifact art;

  // Per-step scratch.
  std::vector<Vec3> y, w, y_hat;
  std::vector<bool> link_up;

  Impl(const Scenario& s, RunOptions o) : sc(s), opt(o), topo(s.topology()), n(s.n_dgus) {
    for (int i = 0; i < n; ++i) {
      loads.push_back(s.load_of(i));
      samplers.emplace_back(s.seed, i);
    }
    st.resize(n);
    for (int i = 0; i < n; ++i) {
      if (s.initial == InitialState::kEquilibrium) {
        st[i].x = isolated_equilibrium(s.dgus[i], loads[i].value(0.0), 0.0);
      }
    }
    links = communication_links(s);
    for (const auto& li : links) {
      attackers.push_back(li.attack ? std::make_unique<ReplayAttacker>(*li.attack, 0.5 * s.dt)
                                    : nullptr);
      // DGU `to` observes DGU `from` with its own decay rate.
      const DguMatrices observed = build_matrices(s.dgus[li.from], topo, li.from);
      uio.push_back(build_uio(observed, s.dgus[li.from].K, s.lambda[li.to]));
    }
    const std::size_t nl = links.size();
    det.resize(nl);
    frozen.assign(nl, false);
    attack_started.assign(nl, false);
    replay_origin_state.assign(nl, std::nullopt);
    line_up.assign(s.lines.size(), false);
    last_load.assign(n, kNaN);
    alpha_rate.assign(n, 0.0);
    y.resize(n);
    w.resize(n);
    y_hat.resize(nl);
    link_up.assign(nl, false);
    refresh_matrices(0.0);

    art.n_dgus = n;
    art.links = links;
    art.summary.scenario = s.name;
    art.summary.seed = s.seed;
    art.summary.dt = s.dt;
    art.summary.horizon = s.horizon;
    art.summary.T_bar = s.T_bar;
    art.summary.slope = s.slope;
    for (const auto& d : s.dgus) art.summary.rating.push_back(d.I_t_s);
    for (const auto& li : links) {
      LinkSummary ls;
      ls.from = li.from;
      ls.to = li.to;
      ls.c = li.wm.c;
      ls.attacked = li.attack.has_value();
      ls.attack = li.attack;
      art.summary.links.push_back(ls);
    }
  }

  double now() const { return static_cast<double>(k) * sc.dt; }

  void refresh_matrices(double t) {
    mats.clear();
    for (int i = 0; i < n; ++i) mats.push_back(build_matrices(sc.dgus[i], topo, i, t));
  }

  void log(double t, std::string kind, std::string detail) {
    art.summary.events.push_back({t, std::move(kind), std::move(detail)});
  }

  void handle_events(double t) {
    bool changed = false;
    for (std::size_t l = 0; l < sc.lines.size(); ++l) {
      if (!line_up[l] && sc.lines[l].t_connect <= t + 1e-12) {
        line_up[l] = true;
        changed = true;
        log(t, "connect",
            "line " + std::to_string(sc.lines[l].a + 1) + "-" + std::to_string(sc.lines[l].b + 1));
      }
    }
    if (changed) refresh_matrices(t + 1e-12);
    for (int i = 0; i < n; ++i) {
      const double v = loads[i].value(t + 1e-12);
      if (!std::isnan(last_load[i]) && v != last_load[i]) {
        std::ostringstream d;
        d << "DGU " << i + 1 << " load " << last_load[i] << " -> " << v << " A";
        log(t, "load", d.str());
      }
      last_load[i] = v;
    }
  }

  void observe_links(double t) {
    for (std::size_t l = 0; l < links.size(); ++l) {
      const auto& li = links[l];
      link_up[l] = li.t_connect <= t + 1e-12;
      if (!link_up[l]) {
        if (opt.keep_traces) {
          art.received.push_back(Vec3::Constant(kNaN));
          art.decoded.push_back(Vec3::Constant(kNaN));
        }
        continue;
      }
      LinkFrame frame = encode(y[li.from], t, li.wm);
      if (attackers[l]) {
        const auto& atk = attackers[l]->config();
        if (!replay_origin_state[l] && std::abs(t - (atk.Ta - atk.T)) <= 0.5 * sc.dt) {
          replay_origin_state[l] = st[li.from].x;
        }
        if (attackers[l]->active(t) && !attack_started[l]) {
          attack_started[l] = true;
          log(t, "attack_start", "replay on link " + link_name(li.from, li.to));
        }
        frame = attackers[l]->transform(frame);
      }
      y_hat[l] = decode(frame, t, li.wm);
      if (opt.keep_traces) {
        art.received.push_back(frame.payload);
        art.decoded.push_back(y_hat[l]);
      }
    }
  }

  void run_detectors(double t) {
    for (std::size_t l = 0; l < links.size(); ++l) {
      auto& summary = art.summary.links[l];
      if (!link_up[l]) {
        if (opt.keep_traces) art.residuals.push_back({t, Vec3::Constant(kNaN),
                                                      Vec3::Constant(kNaN), false});
        continue;
      }
      const auto& li = links[l];
      const NoiseBounds& bounds = sc.noise[li.from];
      if (!det[l].started) det[l] = start_detector(uio[l], bounds, y_hat[l], t);

      if (li.attack && attack_started[l] && !summary.stealth) {
        evaluate_oracles(l, t);
      }

      const bool was_raised = det[l].alarm.raised;
      const ResidualRecord rec = detector_step(det[l], uio[l], bounds, y_hat[l], t, sc.dt);
      for (int c = 0; c < 3; ++c) {
        const double ratio = std::abs(rec.r[c]) / rec.r_bar[c];
        summary.max_residual_ratio = std::max(summary.max_residual_ratio, ratio);
        if (std::abs(rec.r[c]) > rec.r_bar[c]) ++summary.bound_violations;
      }
      if (!was_raised && det[l].alarm.raised) {
        summary.alarm = det[l].alarm;
        if (li.attack) summary.latency = det[l].alarm.t - li.attack->Ta;
        frozen[l] = true;
        log(t, "alarm", "DGU " + std::to_string(li.to + 1) + " flags link " +
                            link_name(li.from, li.to) + " on " +
                            component_name(det[l].alarm.component));
      }
      if (opt.keep_traces) art.residuals.push_back(rec);
    }
  }

  void evaluate_oracles(std::size_t l, double t) {
    const auto& li = links[l];
    const auto& atk = *li.attack;
    auto& summary = art.summary.links[l];
    const NoiseBounds& bounds = sc.noise[li.from];
    const DetectorState& d = det[l];
    const Vec3 delta = delta_offset(t, replay_index(t, atk), atk.T, li.wm);
    StealthOracle so;
    if (replay_origin_state[l]) {
      const Vec3 x_hat_plain = d.z + uio[l].H * (y_hat[l] - delta);
      so.e_a = *replay_origin_state[l] - x_hat_plain;
    } else {
      so.e_a = Vec3::Constant(kNaN);
    }
    so.e_bar = threshold_value(t - d.t_start, uio[l], bounds, d.e_bar0).e_bar;
    so.stealthy = replay_origin_state[l].has_value() && stealth_check(so.e_a, so.e_bar);
    summary.stealth = so;

    const UioBundle bundle = uio[l];
    const double t_start = d.t_start;
    const Vec3 e_bar0 = d.e_bar0;
    const ThresholdFn r_bar = [bundle, bounds, t_start, e_bar0](double tt) {
      return threshold_value(tt - t_start, bundle, bounds, e_bar0).r_bar;
    };
    summary.guaranteed_detection =
        guaranteed_detection_time(uio[l], li.wm, atk, r_bar, sc.horizon, sc.dt);
  }

  void compute_control(std::vector<double>& u) {
    std::vector<NeighborReport> reports;
    for (int i = 0; i < n; ++i) {
      u[i] = primary_input(y[i], sc.dgus[i].K);
      reports.clear();
      for (std::size_t l = 0; l < links.size(); ++l) {
        if (links[l].to != i || !link_up[l] || frozen[l]) continue;
        reports.push_back({y_hat[l], sc.dgus[links[l].from].I_t_s});
      }
      alpha_rate[i] = consensus_rate(y[i], sc.dgus[i].I_t_s, reports, sc.consensus);
    }
  }

  void integrate(double t, const std::vector<double>& u) {
    const double dt = sc.dt;
    std::vector<double> I_L(n);
    for (int i = 0; i < n; ++i) I_L[i] = loads[i].value(t + 1e-12);

    using Stage = std::vector<Vec3>;
    std::vector<NeighborState> nb;
    auto deriv = [&](const Stage& X, double stage_time) {
      Stage dX(n);
      for (int i = 0; i < n; ++i) {
        nb.clear();
        for (const auto& c : mats[i].couplings) nb.push_back({c.neighbor, X[c.neighbor]});
        DguInputs in;
        in.u = u[i];
        in.alpha = st[i].alpha + stage_time * alpha_rate[i];
        in.I_L = I_L[i];
        in.V_ref = sc.dgus[i].V_ref;
        in.neighbors = nb;
        dX[i] = dgu_vector_field(X[i], in, mats[i], w[i]);
      }
      return dX;
    };
    Stage X0(n), tmp(n);
    for (int i = 0; i < n; ++i) X0[i] = st[i].x;
    const Stage k1 = deriv(X0, 0.0);
    for (int i = 0; i < n; ++i) tmp[i] = X0[i] + 0.5 * dt * k1[i];
    const Stage k2 = deriv(tmp, 0.5 * dt);
    for (int i = 0; i < n; ++i) tmp[i] = X0[i] + 0.5 * dt * k2[i];
    const Stage k3 = deriv(tmp, 0.5 * dt);
    for (int i = 0; i < n; ++i) tmp[i] = X0[i] + dt * k3[i];
    const Stage k4 = deriv(tmp, dt);
    for (int i = 0; i < n; ++i) {
      st[i].x = X0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      st[i].alpha += dt * alpha_rate[i];
      if (!st[i].x.allFinite() || !std::isfinite(st[i].alpha)) {
        std::ostringstream msg;
        msg << "non-finite state of DGU " << i + 1 << " at t = " << t + dt;
        throw NumericalError(msg.str());
      }
    }
  }

  void step(bool do_integrate) {
    const double t = now();
    handle_events(t);
    for (int i = 0; i < n; ++i) {
      NoiseBounds drawn = sc.noise[i];
      drawn.w_bar *= sc.noise_scale;
      drawn.rho_bar *= sc.noise_scale;
      const auto s = samplers[i].sample(drawn);
      w[i] = s.w;
      y[i] = measure(st[i].x, s.rho);
    }
    if (opt.keep_traces) {
      art.time.push_back(t);
      for (int i = 0; i < n; ++i) {
        art.states.push_back(st[i]);
        art.outputs.push_back(y[i]);
        art.sent.push_back(y[i] + watermark_value(t, sc.watermark_of(i)));
      }
    }
    observe_links(t);
    run_detectors(t);
    std::vector<double> u(n);
    compute_control(u);
    if (do_integrate) {
      integrate(t, u);
      ++k;
    }
  }

  RunArtifact finish() {
    art.summary.steps = k;
    art.summary.final_states = st;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = st[i].I_t() / sc.dgus[i].I_t_s;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      mean += r / n;
    }
    art.summary.sharing_spread = mean != 0.0 ? (hi - lo) / std::abs(mean) : hi - lo;
    return std::move(art);
  }
};

Simulation::Simulation(const Scenario& scenario, RunOptions options)
    : impl_(std::make_unique<Impl>(scenario, options)) {}

Simulation::~Simulation() = default;

void Simulation::step(bool integrate) { impl_->step(integrate); }
double Simulation::time() const { return impl_->now(); }
long Simulation::step_index() const { return impl_->k; }
const std::vector<DguState>& Simulation::states() const { return impl_->st; }
const std::vector<double>& Simulation::last_alpha_rates() const { return impl_->alpha_rate; }

RunArtifact Simulation::run() {
  const auto& sc = impl_->sc;
  if (sc.horizon > 0.0) {
    const long steps = std::lround(sc.horizon / sc.dt);
    if (impl_->opt.keep_traces) {
      const std::size_t rows = static_cast<std::size_t>(steps + 1);
      impl_->art.time.reserve(rows);
      impl_->art.states.reserve(rows * impl_->n);
      impl_->art.outputs.reserve(rows * impl_->n);
      impl_->art.sent.reserve(rows * impl_->n);
      impl_->art.received.reserve(rows * impl_->links.size());
      impl_->art.decoded.reserve(rows * impl_->links.size());
      impl_->art.residuals.reserve(rows * impl_->links.size());
    }
    for (long s = 0; s <= steps; ++s) impl_->step(s < steps);
  }
  return impl_->finish();
}

RunArtifact run(const Scenario& scenario, RunOptions options) {
  const auto violations = validate(scenario);
  if (has_errors(violations)) throw ConfigError(format_violations(violations));
  Simulation sim(scenario, options);
  return sim.run();
}

}  // namespace mgrid
