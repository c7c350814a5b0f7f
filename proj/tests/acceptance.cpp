// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mgrid/analysis.hpp"
#include "mgrid/artifact_io.hpp"
#include "mgrid/engine.hpp"
#include "mgrid/scenario.hpp"
#include "mgrid/uio.hpp"

namespace fs = std::filesystem;
using namespace mgrid;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Scenario bundled(const std::string& name) {
  return load_scenario(std::string(MGRID_SCENARIO_DIR) + "/" + name + ".scenario");
}

UioBundle link_bundle(const Scenario& s, const LinkInfo& li) {
  const DguMatrices observed = build_matrices(s.dgus[li.from], s.topology(), li.from);
  return build_uio(observed, s.dgus[li.from].K, s.lambda[li.to]);
}

std::string link_name(const LinkInfo& li) {
  return std::to_string(li.from + 1) + "->" + std::to_string(li.to + 1);
}

Outcome uio_algebra() {
  Outcome o;
  const Scenario s = bundled("nominal");
  double worst = 0.0;
  for (const auto& li : communication_links(s)) {
    const DguMatrices m = build_matrices(s.dgus[li.from], s.topology(), li.from);
    const UioBundle u = link_bundle(s, li);
    const Mat3 A_K = m.A_ii + m.B * s.dgus[li.from].K;
    const double lambda = s.lambda[li.to];
    const auto nc = static_cast<Eigen::Index>(m.couplings.size());
    Eigen::MatrixXd E(3, m.M.cols() + 1 + nc);
    E << m.M, m.G, Eigen::MatrixXd::Zero(3, nc);
    for (Eigen::Index c = 0; c < nc; ++c) E.col(m.M.cols() + 1 + c) = m.couplings[c].A_ij.col(0);
    const std::vector<double> residues{
        (u.S * u.E_bar).cwiseAbs().maxCoeff(),
        (u.H * E - E).cwiseAbs().maxCoeff(),
        (u.S - (Mat3::Identity() - u.H)).cwiseAbs().maxCoeff(),
        (u.F - (u.S * A_K - u.K1)).cwiseAbs().maxCoeff(),
        (u.K_hat - (u.K1 + u.F * u.H)).cwiseAbs().maxCoeff(),
        (u.F + lambda * Mat3::Identity()).cwiseAbs().maxCoeff(),
        (u.H * u.H - u.H).cwiseAbs().maxCoeff(),
    };
    for (double r : residues) worst = std::max(worst, r / std::max(1.0, A_K.cwiseAbs().maxCoeff()));
    const double re = Eigen::EigenSolver<Mat3>(u.F).eigenvalues().real().maxCoeff();
    o.require(re < 0.0, "F not Hurwitz on link " + link_name(li));
  }
  o.require(worst < 1e-12, "algebraic residual " + fmt("%.3g", worst));
  o.note("8 links, worst relative residual " + fmt("%.2g", worst));
  return o;
}

Outcome nominal_false_alarms() {
  Outcome o;
  long alarms = 0, violations = 0;
  double worst_ratio = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Scenario s = bundled("nominal");
    s.seed = seed;
    const RunArtifact a = run(s, RunOptions{false});
    for (const auto& l : a.summary.links) {
      alarms += l.alarm.raised;
      violations += l.bound_violations;
      worst_ratio = std::max(worst_ratio, l.max_residual_ratio);
    }
  }
  o.require(alarms == 0, std::to_string(alarms) + " alarms");
  o.require(violations == 0, std::to_string(violations) + " bound violations");
  o.note("20 seeds, 0 alarms, max |r|/r_bar " + fmt("%.3f", worst_ratio));
  return o;
}

Outcome stealthy_without_watermark() {
  Outcome o;
  const RunArtifact a = run(bundled("paper_fig4"), RunOptions{false});
  int attacked = 0;
  for (const auto& l : a.summary.links) {
    o.require(!l.alarm.raised, "alarm on link " + std::to_string(l.from + 1) + "->" +
                                   std::to_string(l.to + 1));
    if (!l.attacked) continue;
    ++attacked;
    o.require(l.stealth && l.stealth->stealthy, "stealth condition fails on an attacked link");
  }
  o.require(attacked == 2, "expected two attacked links");
  o.note("2 attacked links stealthy, no alarms");
  return o;
}

Outcome watermark_detects_replay() {
  Outcome o;
  const RunArtifact a = run(bundled("paper_fig2"), RunOptions{false});
  std::vector<const LinkSummary*> hit;
  for (const auto& l : a.summary.links) {
    if (!l.attacked) {
      o.require(!l.alarm.raised, "alarm on an unattacked link");
      continue;
    }
    hit.push_back(&l);
    const std::string name = std::to_string(l.from + 1) + "->" + std::to_string(l.to + 1);
    o.require(l.alarm.raised, "no alarm on " + name);
    o.require(l.latency && std::isfinite(*l.latency) && *l.latency >= 0.0,
              "latency not finite on " + name);
    o.require(l.guaranteed_detection.has_value(), "no guaranteed detection time on " + name);
    if (l.alarm.raised && l.guaranteed_detection) {
      o.require(l.alarm.t <= *l.guaranteed_detection + 1e-12,
                "alarm after guaranteed time on " + name);
    }
    if (l.latency) o.note(name + " latency " + fmt("%.4f s", *l.latency));
    if (l.guaranteed_detection) o.note("T_d " + fmt("%.4f", *l.guaranteed_detection));
  }
  o.require(hit.size() == 2, "expected two attacked links");
  if (hit.size() == 2 && hit[0]->latency && hit[1]->latency && hit[0]->c != hit[1]->c) {
    const auto* steep = hit[0]->c > hit[1]->c ? hit[0] : hit[1];
    const auto* flat = steep == hit[0] ? hit[1] : hit[0];
    o.require(*steep->latency <= *flat->latency, "latency ordering does not follow slope");
  }
  return o;
}

Outcome threshold_closed_form() {
  Outcome o;
  const Scenario s = bundled("nominal");
  const double h = 1e-5, horizon = 20.0;
  const long n = std::lround(horizon / h);
  double worst = 0.0;
  for (const auto& li : communication_links(s)) {
    const UioBundle u = link_bundle(s, li);
    const NoiseBounds& b = s.noise[li.from];
    const double mu = s.lambda[li.to];  // F = -lambda I: kappa = 1
    const Vec3 e0 = b.rho_bar;
    const Vec3 drive = u.S.cwiseAbs() * b.w_bar + (u.S * u.BK - u.K_hat).cwiseAbs() * b.rho_bar;
    const Vec3 h_rho = u.H.cwiseAbs() * b.rho_bar;
    // Cumulative trapezoid of exp(mu tau) on [0, t].
    double J = 0.0;
    for (long k = 0; k <= n; ++k) {
      const double t = k * h;
      if (k > 0) J += 0.5 * h * (std::exp(mu * (t - h)) + std::exp(mu * t));
      if (k % 25000 != 0) continue;
      const Vec3 oracle =
          std::exp(-mu * t) * (e0 + h_rho) + h_rho + std::exp(-mu * t) * J * drive;
      const Vec3 closed = threshold_value(t, u, b, e0).e_bar;
      for (int c = 0; c < 3; ++c) {
        const double scale = std::max(std::abs(oracle[c]), 1e-300);
        worst = std::max(worst, std::abs(closed[c] - oracle[c]) / scale);
      }
    }
  }
  o.require(worst < 1e-8, "max relative error " + fmt("%.3g", worst));
  o.note("41 grid points x 8 links, max relative error " + fmt("%.2g", worst));
  return o;
}

double trajectory_difference(const RunArtifact& a, const RunArtifact& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    worst = std::max(worst, (a.states[k].x - b.states[k].x).norm() / b.states[k].x.norm());
    worst = std::max(worst, std::abs(a.states[k].alpha - b.states[k].alpha) /
                                std::max(1.0, std::abs(b.states[k].alpha)));
  }
  return worst;
}

Outcome watermark_transparency() {
  Outcome o;
  Scenario marked = bundled("nominal"), plain = bundled("nominal");
  for (double& c : marked.slope) c = std::pow(10.0, -3.2);
  for (double& c : plain.slope) c = 0.0;
  const RunArtifact a = run(marked), b = run(plain);
  const double diff = trajectory_difference(a, b);
  o.require(a.states.size() == b.states.size() && diff < 1e-9,
            "trajectory difference " + fmt("%.3g", diff));
  Scenario quiet = bundled("nominal");
  quiet.noise_scale = 0.0;
  const RunArtifact q = run(quiet, RunOptions{false});
  o.require(q.summary.sharing_spread < 1e-3,
            "noise-free sharing spread " + fmt("%.3g", q.summary.sharing_spread));
  o.note("max relative difference " + fmt("%.2g", diff) + ", noise-free spread " +
         fmt("%.2g", q.summary.sharing_spread));
  return o;
}

Outcome watermark_statistics() {
  Outcome o;
  const Scenario s = bundled("nominal");
  const RunArtifact a = run(s);
  const StatsComparison cmp = compare_stats(a, 5.0, 9.0);
  o.require(cmp.max_mean_shift_pct <= 0.45, "mean shift " + fmt("%.4f%%", cmp.max_mean_shift_pct));
  o.require(cmp.max_variance_shift_pct <= 3.0,
            "variance shift " + fmt("%.4f%%", cmp.max_variance_shift_pct));
  for (int i = 0; i < s.n_dgus; ++i) {
    for (int c = 0; c < 3; ++c) {
      o.require(2.0 * s.slope[i] * s.T_bar < s.noise[i].rho_bar[c] / 4.0,
                "watermark range of DGU " + std::to_string(i + 1) + " not below rho_bar / 4");
    }
  }
  const SpectrumReport rep = spectrum(a, 0, 2, 5.0, 9.0);
  const double mark = rep.watermark[rep.bin_of(rep.f_delta)];
  const double peak = rep.peak(rep.communicated, 5.0);
  o.require(10.0 * mark <= peak, "watermark line " + fmt("%.3g", mark) +
                                     " vs low-frequency peak " + fmt("%.3g", peak));
  o.note("mean shift " + fmt("%.3f%%", cmp.max_mean_shift_pct) + ", variance shift " +
         fmt("%.3f%%", cmp.max_variance_shift_pct) + ", spectral ratio " +
         fmt("%.1f", peak / mark));
  return o;
}

Outcome reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "mgrid_acceptance";
  fs::remove_all(root);
  const Scenario s = bundled("paper_fig2");
  const ExportOptions opt{ExportFormat::kCsv, 10};
  export_run(run(s), (root / "a").string(), opt);
  export_run(run(s), (root / "b").string(), opt);
  int files = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++files;
    const auto other = root / "b" / e.path().filename();
    o.require(fs::exists(other) &&
                  read_text_file(e.path().string()) == read_text_file(other.string()),
              "export differs: " + e.path().filename().string());
  }
  fs::remove_all(root);

  Scenario coarse = bundled("nominal");
  coarse.noise_scale = 0.0;
  Scenario fine = coarse;
  fine.dt = coarse.dt / 2.0;
  const RunArtifact a = run(coarse, RunOptions{false}), b = run(fine, RunOptions{false});
  double worst = 0.0;
  for (int i = 0; i < coarse.n_dgus; ++i) {
    const auto& x = a.summary.final_states[i];
    const auto& y = b.summary.final_states[i];
    worst = std::max(worst, (x.x - y.x).norm() / y.x.norm());
    worst = std::max(worst, std::abs(x.alpha - y.alpha) / std::max(1.0, std::abs(y.alpha)));
  }
  o.require(worst < 1e-6, "dt halving changes final state by " + fmt("%.3g", worst));
  o.note(std::to_string(files) + " files byte-identical, dt halving " + fmt("%.2g", worst));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"UIO decoupling algebra on every link", uio_algebra},
      {"no false alarms over 20 nominal seeds", nominal_false_alarms},
      {"replay without watermark is stealthy", stealthy_without_watermark},
      {"watermark exposes replay within guaranteed time", watermark_detects_replay},
      {"threshold closed form matches quadrature", threshold_closed_form},
      {"watermark leaves control trajectories unchanged", watermark_transparency},
      {"watermark hides in output statistics", watermark_statistics},
      {"runs are reproducible and converged in dt", reproducibility},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", k + 1, o.pass ? "PASS" : "FAIL",
                criteria[k].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
