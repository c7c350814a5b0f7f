#pragma once

// Point-to-point links between DGUs: sawtooth watermark encode/decode and a
// man-in-the-middle replay attacker sitting on the wire.

#include <vector>

#include "mgrid/types.hpp"

namespace mgrid {

/// Sawtooth watermark of one directed link: slope `c`, period 2 * T_bar.
struct WatermarkConfig {
  double c = 0.0;
  double T_bar = 1.0;
};

struct ReplayAttackConfig {
  int from = 0;  // zero-based sender
  int to = 0;    // zero-based receiver
  double T0 = 0.0;  // record start
  double Ta = 0.0;  // attack start
  double T = 0.0;   // replay period
};

/// Throws ConfigError if T0 < Ta and 0 < T <= Ta - T0 do not hold.
void check_attack(const ReplayAttackConfig& atk);

struct LinkFrame {
  double t = 0.0;
  Vec3 payload = Vec3::Zero();
};

/// c * (t mod 2 T_bar) on every component.
Vec3 watermark_value(double t, const WatermarkConfig& wm);

LinkFrame encode(const Vec3& y, double t, const WatermarkConfig& wm);
Vec3 decode(const LinkFrame& frame, double t, const WatermarkConfig& wm);

/// Replay counter n = floor((t - Ta) / T) + 1 for t >= Ta, 0 before.
int replay_index(double t, const ReplayAttackConfig& atk);

/// Records live frames on [T0, Ta) and, from Ta on, substitutes the frame
/// recorded at t - n T. Before Ta the live frame passes through untouched.
class ReplayAttacker {
 public:
  /// `time_tolerance` is the largest timestamp mismatch accepted when
  /// looking up a recorded frame (half a simulation step in practice).
  ReplayAttacker(ReplayAttackConfig cfg, double time_tolerance);

  LinkFrame transform(const LinkFrame& live);

  const ReplayAttackConfig& config() const { return cfg_; }
  bool active(double t) const { return t >= cfg_.Ta; }
  std::size_t buffered() const { return buffer_.size(); }

 private:
  const LinkFrame& recorded_at(double t) const;

  ReplayAttackConfig cfg_;
  double tolerance_;
  std::vector<LinkFrame> buffer_;
};

/// delta(t) = Delta(t - n T) - Delta(t).
Vec3 delta_offset(double t, int n, double T, const WatermarkConfig& wm);

struct DeltaSegment {
  double t0 = 0.0;
  double t1 = 0.0;
  Vec3 value = Vec3::Zero();
};

/// The watermark mismatch seen by the receiver under replay, as the exact
/// piecewise-constant sequence of segments covering [Ta, t_end].
std::vector<DeltaSegment> delta_segments(const WatermarkConfig& wm,
                                         const ReplayAttackConfig& atk,
                                         double t_end);

}  // namespace mgrid
