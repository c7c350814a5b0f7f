#include "mgrid/comm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mgrid {
namespace {

// Guards floor() against representation error at exact multiples.
constexpr double kFloorSlack = 1e-9;

double sawtooth(double t, double c, double T_bar) {
  const double period = 2.0 * T_bar;
  const double nu = std::floor(t / period + kFloorSlack);
  return c * std::max(0.0, t - nu * period);
}

}  // namespace

void check_attack(const ReplayAttackConfig& atk) {
  if (!(atk.T0 < atk.Ta)) throw ConfigError("attack needs t_record < t_attack");
  if (!(atk.T > 0.0)) throw ConfigError("attack period must be positive");
  if (atk.T > atk.Ta - atk.T0 + 1e-12)
    throw ConfigError("attack period exceeds the recorded window t_attack - t_record");
}

Vec3 watermark_value(double t, const WatermarkConfig& wm) {
  return Vec3::Constant(sawtooth(t, wm.c, wm.T_bar));
}

LinkFrame encode(const Vec3& y, double t, const WatermarkConfig& wm) {
  return LinkFrame{t, y + watermark_value(t, wm)};
}

Vec3 decode(const LinkFrame& frame, double t, const WatermarkConfig& wm) {
  return frame.payload - watermark_value(t, wm);
}

int replay_index(double t, const ReplayAttackConfig& atk) {
  if (t < atk.Ta) return 0;
  return static_cast<int>(std::floor((t - atk.Ta) / atk.T + kFloorSlack)) + 1;
}

ReplayAttacker::ReplayAttacker(ReplayAttackConfig cfg, double time_tolerance)
    : cfg_(cfg), tolerance_(time_tolerance) {
  check_attack(cfg_);
}

const LinkFrame& ReplayAttacker::recorded_at(double t) const {
  auto it = std::lower_bound(
      buffer_.begin(), buffer_.end(), t - tolerance_,
      [](const LinkFrame& f, double v) { return f.t < v; });
  if (it == buffer_.end() || std::abs(it->t - t) > tolerance_) {
    throw NumericalError("replay buffer has no frame recorded at t = " +
                         std::to_string(t));
  }
  return *it;
}

LinkFrame ReplayAttacker::transform(const LinkFrame& live) {
  if (live.t < cfg_.Ta) {
    if (live.t >= cfg_.T0 - tolerance_) buffer_.push_back(live);
    return live;
  }
  const int n = replay_index(live.t, cfg_);
  return recorded_at(live.t - n * cfg_.T);
}

Vec3 delta_offset(double t, int n, double T, const WatermarkConfig& wm) {
  return watermark_value(t - n * T, wm) - watermark_value(t, wm);
}

std::vector<DeltaSegment> delta_segments(const WatermarkConfig& wm,
                                         const ReplayAttackConfig& atk,
                                         double t_end) {
  std::vector<DeltaSegment> out;
  const double period = 2.0 * wm.T_bar;
  double tau = atk.Ta;
  while (tau < t_end) {
    const int n = replay_index(tau, atk);
    const double next_n = atk.Ta + n * atk.T;
    const double next_live = period * (std::floor(tau / period + kFloorSlack) + 1.0);
    const double src = tau - n * atk.T;
    const double next_replayed =
        n * atk.T + period * (std::floor(src / period + kFloorSlack) + 1.0);
    double next = std::min({next_n, next_live, next_replayed, t_end});
    if (next <= tau) next = std::nextafter(tau, std::numeric_limits<double>::infinity());
    const double mid = 0.5 * (tau + next);
    out.push_back({tau, next, delta_offset(mid, n, atk.T, wm)});
    tau = next;
  }
  return out;
}

}  // namespace mgrid
