#include "mgrid/uio.hpp"

#include <algorithm>
#include <cmath>

namespace mgrid {
namespace {

constexpr double kRankTolerance = 1e-10;

bool is_scalar_dynamics(const UioBundle& uio) {
  const Mat3 expected = -uio.mu * Mat3::Identity();
  return (uio.F - expected).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + uio.mu);
}

}  // namespace

Eigen::MatrixXd build_unknown_input_matrix(const DguMatrices& m) {
  const int cols = 3 + 3 * static_cast<int>(m.couplings.size());
  Eigen::MatrixXd stacked(3, cols);
  stacked.leftCols<2>() = m.M;
  stacked.col(2) = m.G;
  for (std::size_t k = 0; k < m.couplings.size(); ++k) {
    stacked.block<3, 3>(0, 3 + 3 * static_cast<int>(k)) = m.couplings[k].A_ij;
  }
  // Column scale differs by orders of magnitude (1/C vs 1), so normalise
  // before ranking.
  for (int c = 0; c < stacked.cols(); ++c) {
    const double n = stacked.col(c).norm();
    if (n > 0.0) stacked.col(c) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int k = 0; k < sv.size(); ++k) {
    if (sv[k] > kRankTolerance * sv[0]) ++rank;
  }
  Eigen::MatrixXd E = svd.matrixU().leftCols(rank);
  // Snap rounding dust so axis-aligned spans give exact projectors, then
  // re-orthonormalise.
  E = E.unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
  E = Eigen::HouseholderQR<Eigen::MatrixXd>(E).householderQ() *
      Eigen::MatrixXd::Identity(3, rank);
  E = E.unaryExpr([](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; });
  // Canonical sign: largest-magnitude entry of each column positive.
  for (int c = 0; c < E.cols(); ++c) {
    Eigen::Index r = 0;
    E.col(c).cwiseAbs().maxCoeff(&r);
    if (E(r, c) < 0.0) E.col(c) *= -1.0;
  }
  return E;
}

UioBundle synthesize_uio(const Mat3& A_K, const Mat3& BK, const Eigen::MatrixXd& E_bar,
                         double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("UIO decay rate lambda must be positive");
  if (E_bar.rows() != 3) throw ConfigError("unknown-input matrix must have 3 rows");
  UioBundle u;
  u.E_bar = E_bar;
  u.BK = BK;
  u.H = E_bar * E_bar.transpose();
  u.S = Mat3::Identity() - u.H;
  u.F = -lambda * Mat3::Identity();
  u.K1 = u.S * A_K - u.F;
  u.K_hat = u.K1 + u.F * u.H;
  u.kappa = 1.0;
  u.mu = lambda;
  return u;
}

UioBundle build_uio(const DguMatrices& observed, const RowVec3& K, double lambda) {
  const Mat3 BK = observed.B * K;
  return synthesize_uio(observed.A_ii + BK, BK, build_unknown_input_matrix(observed),
                        lambda);
}

Vec3 threshold_drive(const UioBundle& uio, const NoiseBounds& bounds) {
  return uio.S.cwiseAbs() * bounds.w_bar +
         (uio.S * uio.BK - uio.K_hat).cwiseAbs() * bounds.rho_bar;
}

Threshold threshold_value(double t, const UioBundle& uio, const NoiseBounds& bounds,
                          const Vec3& e_bar0) {
  const Vec3 h_rho = uio.H.cwiseAbs() * bounds.rho_bar;
  const double decay = std::exp(-uio.mu * t);
  Threshold th;
  th.e_bar = uio.kappa * decay * (e_bar0 + h_rho) + h_rho +
             (uio.kappa / uio.mu) * (1.0 - decay) * threshold_drive(uio, bounds);
  th.r_bar = th.e_bar + bounds.rho_bar;
  return th;
}

DetectorState start_detector(const UioBundle& uio, const NoiseBounds& bounds,
                             const Vec3& y_hat0, double t0) {
  DetectorState s;
  s.z = uio.S * y_hat0;
  s.x_hat = s.z + uio.H * y_hat0;
  s.e_bar0 = (y_hat0 - s.x_hat).cwiseAbs() + bounds.rho_bar;
  s.e_bar = s.e_bar0;
  s.t_start = t0;
  s.started = true;
  return s;
}

ResidualRecord detector_step(DetectorState& s, const UioBundle& uio,
                             const NoiseBounds& bounds, const Vec3& y_hat, double t,
                             double dt) {
  s.x_hat = s.z + uio.H * y_hat;
  ResidualRecord rec;
  rec.t = t;
  rec.r = y_hat - s.x_hat;
  const Threshold th = threshold_value(t - s.t_start, uio, bounds, s.e_bar0);
  s.e_bar = th.e_bar;
  rec.r_bar = th.r_bar;
  if (!s.alarm.raised) {
    for (int k = 0; k < 3; ++k) {
      if (std::abs(rec.r[k]) > rec.r_bar[k]) {
        s.alarm = Alarm{true, t, k};
        break;
      }
    }
  }
  rec.alarm = s.alarm.raised;

  const Vec3 forcing = uio.K_hat * y_hat;
  auto f = [&](const Vec3& z) -> Vec3 { return uio.F * z + forcing; };
  const Vec3 k1 = f(s.z);
  const Vec3 k2 = f(s.z + 0.5 * dt * k1);
  const Vec3 k3 = f(s.z + 0.5 * dt * k2);
  const Vec3 k4 = f(s.z + dt * k3);
  s.z += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return rec;
}

bool stealth_check(const Vec3& e_a_Ta, const Vec3& e_bar_Ta) {
  return (e_a_Ta.cwiseAbs().array() <= e_bar_Ta.array()).all();
}

Vec3 detectability_lhs(double t, const UioBundle& uio,
                       const std::vector<DeltaSegment>& delta, double Ta) {
  if (!is_scalar_dynamics(uio)) {
    throw ConfigError("detectability evaluation expects F = -lambda I");
  }
  if (t < Ta || delta.empty()) return Vec3::Zero();
  Vec3 integral = Vec3::Zero();
  Vec3 delta_now = Vec3::Zero();
  for (const auto& seg : delta) {
    if (seg.t0 > t) break;
    if (t < seg.t1 || &seg == &delta.back()) delta_now = seg.value;
    const double b = std::min(seg.t1, t);
    // int_{t0}^{b} exp(-mu (t - tau)) dtau
    const double w =
        (std::exp(-uio.mu * (t - b)) - std::exp(-uio.mu * (t - seg.t0))) / uio.mu;
    integral += w * (uio.K_hat * seg.value);
  }
  return (uio.S * delta_now - integral).cwiseAbs();
}

std::optional<double> guaranteed_detection_time(const UioBundle& uio,
                                                const WatermarkConfig& wm,
                                                const ReplayAttackConfig& atk,
                                                const ThresholdFn& r_bar, double horizon,
                                                double dt) {
  if (wm.c == 0.0 || horizon < atk.Ta) return std::nullopt;
  const auto segments = delta_segments(wm, atk, horizon + dt);
  const long first = static_cast<long>(std::ceil(atk.Ta / dt - 1e-9));
  const long last = static_cast<long>(std::floor(horizon / dt + 1e-9));
  for (long k = first; k <= last; ++k) {
    const double t = k * dt;
    const Vec3 lhs = detectability_lhs(t, uio, segments, atk.Ta);
    if ((lhs.array() > 2.0 * r_bar(t).array()).any()) return t;
  }
  return std::nullopt;
}

}  // namespace mgrid
