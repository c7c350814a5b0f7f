#include "mgrid/control.hpp"

namespace mgrid {

double consensus_rate(const Vec3& own_y, double own_I_t_s,
                      std::span<const NeighborReport> neighbors,
                      const ConsensusConfig& cfg) {
  const double own_ratio = own_y[kCurrent] / own_I_t_s;
  double rate = 0.0;
  for (const auto& n : neighbors) {
    rate -= cfg.k_I * (own_ratio - n.y_hat[kCurrent] / n.I_t_s);
  }
  return rate;
}

}  // namespace mgrid
