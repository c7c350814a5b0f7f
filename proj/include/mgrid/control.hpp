#pragma once

// Decentralized primary voltage control and consensus-based secondary
// control for proportional current sharing.

#include <span>

#include "mgrid/types.hpp"

namespace mgrid {

struct ConsensusConfig {
  double k_I = 1.0;
};

/// u = K y.
inline double primary_input(const Vec3& y, const RowVec3& K) { return K * y; }

/// Decoded measurement of one neighbour together with its current rating.
struct NeighborReport {
  Vec3 y_hat = Vec3::Zero();
  double I_t_s = 1.0;
};

/// alpha_dot = -k_I * sum_j (I_t / I_t_s - I_t_j / I_t_s_j), computed on the
/// terminal-current component only.
double consensus_rate(const Vec3& own_y, double own_I_t_s,
                      std::span<const NeighborReport> neighbors,
                      const ConsensusConfig& cfg);

}  // namespace mgrid
