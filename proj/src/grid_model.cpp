#include "mgrid/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgrid {

MicrogridTopology::MicrogridTopology(int n_dgus, std::vector<PowerLine> lines)
    : n_dgus_(n_dgus), lines_(std::move(lines)) {
  if (n_dgus_ <= 0) throw ConfigError("topology needs at least one DGU");
  for (const auto& l : lines_) {
    if (l.a == l.b) throw ConfigError("self-loop on DGU " + std::to_string(l.a + 1));
    if (l.a < 0 || l.b < 0 || l.a >= n_dgus_ || l.b >= n_dgus_)
      throw ConfigError("line references an unknown DGU");
    if (!(l.R > 0.0)) throw ConfigError("line resistance must be positive");
  }
}

const PowerLine* MicrogridTopology::find_line(int a, int b) const {
  for (const auto& l : lines_) {
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return &l;
  }
  return nullptr;
}

std::vector<int> MicrogridTopology::neighbors(int dgu,
                                              std::optional<double> at_time) const {
  std::vector<int> out;
  for (const auto& l : lines_) {
    if (at_time && l.t_connect > *at_time) continue;
    if (l.a == dgu) out.push_back(l.b);
    if (l.b == dgu) out.push_back(l.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool MicrogridTopology::connected(int a, int b, double t) const {
  const PowerLine* l = find_line(a, b);
  return l != nullptr && l->t_connect <= t;
}

double MicrogridTopology::resistance(int a, int b) const {
  const PowerLine* l = find_line(a, b);
  if (l == nullptr) {
    throw ConfigError("no line between DGU " + std::to_string(a + 1) + " and DGU " +
                      std::to_string(b + 1));
  }
  return l->R;
}

LoadSchedule::LoadSchedule(std::vector<std::pair<double, double>> breakpoints)
    : breakpoints_(std::move(breakpoints)) {
  if (breakpoints_.empty()) throw ConfigError("load schedule is empty");
  if (breakpoints_.front().first != 0.0)
    throw ConfigError("load schedule must start at t = 0");
  for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
    if (!(breakpoints_[k].first > breakpoints_[k - 1].first))
      throw ConfigError("load breakpoints must be strictly increasing");
  }
}

LoadSchedule LoadSchedule::constant(double value) {
  return LoadSchedule({{0.0, value}});
}

LoadSchedule LoadSchedule::toggle(double low, double high, double period,
                                  double first_switch, double until) {
  if (!(period > 0.0)) throw ConfigError("toggle period must be positive");
  if (first_switch < 0.0) throw ConfigError("toggle start must be non-negative");
  std::vector<std::pair<double, double>> bp{{0.0, low}};
  bool at_high = false;
  for (int k = 0;; ++k) {
    const double t = first_switch + k * period;
    if (t > until) break;
    at_high = !at_high;
    if (t == 0.0) {
      bp.front().second = at_high ? high : low;
    } else {
      bp.emplace_back(t, at_high ? high : low);
    }
  }
  return LoadSchedule(std::move(bp));
}

double LoadSchedule::value(double t) const {
  auto it = std::upper_bound(
      breakpoints_.begin(), breakpoints_.end(), t,
      [](double lhs, const std::pair<double, double>& bp) { return lhs < bp.first; });
  if (it == breakpoints_.begin()) return breakpoints_.front().second;
  return std::prev(it)->second;
}

const Mat3* DguMatrices::coupling_to(int neighbor) const {
  for (const auto& c : couplings) {
    if (c.neighbor == neighbor) return &c.A_ij;
  }
  return nullptr;
}

DguMatrices build_matrices(const DguParams& p, const MicrogridTopology& topology,
                           int dgu, std::optional<double> at_time) {
  if (dgu < 0 || dgu >= topology.n_dgus()) throw ConfigError("DGU index out of range");
  DguMatrices m;
  double conductance_sum = 0.0;
  for (int j : topology.neighbors(dgu, at_time)) {
    const double R = topology.resistance(dgu, j);
    const double g = 1.0 / (R * p.C_t);
    conductance_sum += g;
    NeighborCoupling c{j, Mat3::Zero()};
    c.A_ij(0, 0) = g;
    m.couplings.push_back(c);
  }
  // clang-format off
  m.A_ii << -conductance_sum, 1.0 / p.C_t,    0.0,
            -1.0 / p.L_t,     -p.R_t / p.L_t, 0.0,
            -1.0,             0.0,            0.0;
  m.M << -1.0 / p.C_t, 0.0,
          0.0,         0.0,
          0.0,         1.0;
  // clang-format on
  m.B << 0.0, 1.0 / p.L_t, 0.0;
  m.G = m.M.col(1);
  m.C.setIdentity();
  return m;
}

Mat3 closed_loop_matrix(const DguMatrices& m, const RowVec3& K) {
  return m.A_ii + m.B * K;
}

double spectral_abscissa(const Mat3& A) {
  Eigen::EigenSolver<Mat3> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

Vec3 dgu_vector_field(const Vec3& x, const DguInputs& in, const DguMatrices& m,
                      const Vec3& w) {
  Vec3 xi = Vec3::Zero();
  for (const auto& n : in.neighbors) {
    const Mat3* A_ij = m.coupling_to(n.neighbor);
    if (A_ij != nullptr) xi += *A_ij * n.x;
  }
  const Eigen::Vector2d d(in.I_L, in.V_ref);
  return m.A_ii * x + m.B * in.u + m.G * in.alpha + m.M * d + xi + w;
}

NoiseSampler::NoiseSampler(std::uint64_t seed, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x6d67u};
  rng_.seed(seq);
}

double NoiseSampler::symmetric(double bound) {
  const double u = std::generate_canonical<double, 53>(rng_);
  return (2.0 * u - 1.0) * bound;
}

NoiseSampler::Sample NoiseSampler::sample(const NoiseBounds& bounds) {
  Sample s;
  for (int k = 0; k < 3; ++k) s.w[k] = symmetric(bounds.w_bar[k]);
  for (int k = 0; k < 3; ++k) s.rho[k] = symmetric(bounds.rho_bar[k]);
  return s;
}

}  // namespace mgrid
