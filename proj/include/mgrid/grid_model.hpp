#pragma once

// Averaged electrical model of a DC microgrid made of DGUs (voltage source,
// buck converter, RLC filter) coupled by purely resistive lines.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mgrid/types.hpp"

namespace mgrid {

struct DguParams {
  double R_t = 0.0;    // filter resistance [Ohm]
  double L_t = 0.0;    // filter inductance [H]
  double C_t = 0.0;    // shunt capacitance [F]
  double V_ref = 0.0;  // voltage reference [V]
  double I_t_s = 1.0;  // current-sharing rating [A]
  RowVec3 K = RowVec3::Zero();  // primary state-feedback gain
};

/// x = [V, I_t, v] plus the secondary control state alpha.
struct DguState {
  Vec3 x = Vec3::Zero();
  double alpha = 0.0;

  double V() const { return x[kVoltage]; }
  double I_t() const { return x[kCurrent]; }
  double v() const { return x[kIntegrator]; }
};

struct PowerLine {
  int a = 0;  // zero-based DGU indices
  int b = 0;
  double R = 0.0;          // [Ohm]
  double t_connect = 0.0;  // line and communication link come up together
};

class MicrogridTopology {
 public:
  MicrogridTopology() = default;
  MicrogridTopology(int n_dgus, std::vector<PowerLine> lines);

  int n_dgus() const { return n_dgus_; }
  const std::vector<PowerLine>& lines() const { return lines_; }

  /// Neighbours of `dgu`. With a time, only lines connected at or before it.
  std::vector<int> neighbors(int dgu, std::optional<double> at_time = {}) const;
  bool connected(int a, int b, double t) const;
  /// Throws ConfigError when the pair has no line.
  double resistance(int a, int b) const;
  const PowerLine* find_line(int a, int b) const;

 private:
  int n_dgus_ = 0;
  std::vector<PowerLine> lines_;
};

struct NoiseBounds {
  Vec3 w_bar = Vec3::Zero();
  Vec3 rho_bar = Vec3::Zero();
};

/// Piecewise-constant load current, right-continuous at breakpoints.
class LoadSchedule {
 public:
  LoadSchedule() = default;
  /// Breakpoints must start at t = 0 and be strictly increasing.
  explicit LoadSchedule(std::vector<std::pair<double, double>> breakpoints);

  static LoadSchedule constant(double value);
  /// Alternates low/high, switching every `period` seconds starting at
  /// `first_switch`, up to `until`.
  static LoadSchedule toggle(double low, double high, double period,
                             double first_switch, double until);

  double value(double t) const;
  const std::vector<std::pair<double, double>>& breakpoints() const {
    return breakpoints_;
  }

 private:
  std::vector<std::pair<double, double>> breakpoints_{{0.0, 0.0}};
};

struct NeighborCoupling {
  int neighbor = 0;
  Mat3 A_ij = Mat3::Zero();
};

struct DguMatrices {
  Mat3 A_ii = Mat3::Zero();
  Vec3 B = Vec3::Zero();
  Vec3 G = Vec3::Zero();
  Eigen::Matrix<double, 3, 2> M = Eigen::Matrix<double, 3, 2>::Zero();
  Mat3 C = Mat3::Identity();
  std::vector<NeighborCoupling> couplings;

  const Mat3* coupling_to(int neighbor) const;
};

/// Model matrices of DGU `dgu`. The neighbour set is every line touching the
/// DGU, or only those connected at `at_time` when given.
DguMatrices build_matrices(const DguParams& params,
                           const MicrogridTopology& topology, int dgu,
                           std::optional<double> at_time = {});

/// A_ii + B K.
Mat3 closed_loop_matrix(const DguMatrices& m, const RowVec3& K);

double spectral_abscissa(const Mat3& A);
inline bool is_hurwitz(const Mat3& A) { return spectral_abscissa(A) < 0.0; }

struct NeighborState {
  int neighbor = 0;
  Vec3 x = Vec3::Zero();
};

struct DguInputs {
  double u = 0.0;
  double alpha = 0.0;
  double I_L = 0.0;
  double V_ref = 0.0;
  std::span<const NeighborState> neighbors;
};

/// x_dot = A_ii x + B u + G alpha + M [I_L, V_ref] + sum_j A_ij x_j + w.
Vec3 dgu_vector_field(const Vec3& x, const DguInputs& in, const DguMatrices& m,
                      const Vec3& w);

/// y = C x + rho with C = I.
inline Vec3 measure(const Vec3& x, const Vec3& rho) { return x + rho; }

/// Uniform bounded noise, one independent stream per DGU.
class NoiseSampler {
 public:
  NoiseSampler(std::uint64_t seed, int stream);

  struct Sample {
    Vec3 w;
    Vec3 rho;
  };
  Sample sample(const NoiseBounds& bounds);

 private:
  double symmetric(double bound);
  std::mt19937_64 rng_;
};

}  // namespace mgrid
