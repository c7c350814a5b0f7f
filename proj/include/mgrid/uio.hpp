#pragma once

// Unknown Input Observer run by DGU i on each neighbour j: synthesis, online
// estimation, the time-varying detection threshold, and the analytic oracles
// for replay stealthiness and watermark-guaranteed detection.

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "mgrid/comm.hpp"
#include "mgrid/grid_model.hpp"
#include "mgrid/types.hpp"

namespace mgrid {

struct UioBundle {
  Mat3 F = Mat3::Zero();
  Mat3 S = Mat3::Zero();
  Mat3 H = Mat3::Zero();
  Mat3 K_hat = Mat3::Zero();
  Mat3 K1 = Mat3::Zero();
  Eigen::MatrixXd E_bar;
  /// B_j K_j of the observed DGU, needed by the threshold.
  Mat3 BK = Mat3::Zero();
  double kappa = 1.0;
  double mu = 1.0;
};

/// Orthonormal basis of the column space of [M_j | G_j | A_jk for all k].
Eigen::MatrixXd build_unknown_input_matrix(const DguMatrices& m);

/// Projector construction for C = I: H = E E^T, S = I - H, F = -lambda I,
/// K1 = S A_K - F, K_hat = K1 + F H. Throws ConfigError for lambda <= 0.
UioBundle synthesize_uio(const Mat3& A_K, const Mat3& BK,
                         const Eigen::MatrixXd& E_bar, double lambda);

/// Convenience: E_bar, A_K and B K from the observed DGU's model.
UioBundle build_uio(const DguMatrices& observed, const RowVec3& K, double lambda);

struct Threshold {
  Vec3 e_bar;
  Vec3 r_bar;
};

/// |S| w_bar + |S B K - K_hat| rho_bar, the constant integrand of the bound.
Vec3 threshold_drive(const UioBundle& uio, const NoiseBounds& bounds);

/// Closed form of the estimation-error bound t seconds after the observer
/// started, and the residual threshold r_bar = e_bar + rho_bar.
Threshold threshold_value(double t, const UioBundle& uio, const NoiseBounds& bounds,
                          const Vec3& e_bar0);

struct Alarm {
  bool raised = false;
  double t = 0.0;
  int component = -1;
};

struct DetectorState {
  Vec3 z = Vec3::Zero();
  Vec3 x_hat = Vec3::Zero();  // estimate at the last processed sample
  Vec3 e_bar = Vec3::Zero();
  Vec3 e_bar0 = Vec3::Zero();
  double t_start = 0.0;
  bool started = false;
  Alarm alarm;
};

struct ResidualRecord {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 r_bar = Vec3::Zero();
  bool alarm = false;
};

/// Initialises the observer on its first decoded sample so that
/// x_hat(t0) = y_hat(t0); e_bar(0) = |y_hat - x_hat| + rho_bar.
DetectorState start_detector(const UioBundle& uio, const NoiseBounds& bounds,
                             const Vec3& y_hat0, double t0);

/// Evaluates residual and threshold at t, latches the alarm on the first
/// component-wise crossing, then advances z over [t, t + dt] with one RK4 step
/// of z_dot = F z + K_hat y_hat (y_hat held).
ResidualRecord detector_step(DetectorState& state, const UioBundle& uio,
                             const NoiseBounds& bounds, const Vec3& y_hat,
                             double t, double dt);

/// Replay stays below the threshold on [Ta, Ta + T) if |e_a(Ta)| <= e_bar(Ta).
bool stealth_check(const Vec3& e_a_Ta, const Vec3& e_bar_Ta);

/// | S delta(t) - int_{Ta}^{t} exp(F (t - tau)) K_hat delta(tau) dtau |, with the
/// integral evaluated exactly over the piecewise-constant segments.
Vec3 detectability_lhs(double t, const UioBundle& uio,
                       const std::vector<DeltaSegment>& delta, double Ta);

using ThresholdFn = std::function<Vec3(double)>;

/// First time on the grid {k * dt} in [Ta, horizon] where any component of the
/// detectability term exceeds 2 r_bar(t). Empty when never crossed.
std::optional<double> guaranteed_detection_time(const UioBundle& uio,
                                                const WatermarkConfig& wm,
                                                const ReplayAttackConfig& atk,
                                                const ThresholdFn& r_bar,
                                                double horizon, double dt);

}  // namespace mgrid
