#include "mgrid/engine.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mgrid {
namespace {

using testing::bundled;

Scenario Quiet(Scenario s) {
  s.noise_scale = 0.0;
  for (int i = 0; i < s.n_dgus; ++i) s.loads[i] = {{0.0, s.loads[i].front().second}};
  return s;
}

TEST(Links, OneDirectedLinkPerLineEndOrderedBySender) {
  const auto links = communication_links(bundled("nominal"));
  ASSERT_EQ(links.size(), 8u);
  for (std::size_t l = 1; l < links.size(); ++l) {
    EXPECT_TRUE(std::pair(links[l - 1].from, links[l - 1].to) <
                std::pair(links[l].from, links[l].to));
  }
  const auto fig2 = communication_links(bundled("paper_fig2"));
  int attacked = 0;
  for (const auto& li : fig2) {
    if (li.attack) {
      ++attacked;
      EXPECT_EQ(li.to, 3);
    }
  }
  EXPECT_EQ(attacked, 2);
}

TEST(Engine, ZeroHorizonGivesEmptyTraces) {
  const RunArtifact a = run(bundled("nominal", 0.0));
  EXPECT_EQ(a.steps(), 0u);
  EXPECT_TRUE(a.states.empty());
  EXPECT_TRUE(a.residuals.empty());
  EXPECT_EQ(a.summary.steps, 0);
  ASSERT_EQ(a.summary.final_states.size(), 4u);
}

TEST(Engine, TraceShapesMatchHorizon) {
  const RunArtifact a = run(bundled("nominal", 0.05));
  EXPECT_EQ(a.steps(), 501u);
  EXPECT_EQ(a.states.size(), 501u * 4);
  EXPECT_EQ(a.received.size(), 501u * 8);
  EXPECT_EQ(a.residuals.size(), 501u * 8);
  EXPECT_DOUBLE_EQ(a.time.back(), 0.05);
  EXPECT_EQ(a.summary.steps, 500);
}

TEST(Engine, LinksAreSilentBeforeConnection) {
  Simulation sim(bundled("nominal"));
  while (sim.time() < 0.999) {
    sim.step();
    for (double r : sim.last_alpha_rates()) ASSERT_EQ(r, 0.0);
  }
  for (const auto& s : sim.states()) EXPECT_EQ(s.alpha, 0.0);

  const RunArtifact a = run(bundled("nominal", 1.01));
  const int l = a.link_index(1, 3);
  for (std::size_t k = 0; k < a.steps(); ++k) {
    const bool up = a.time[k] >= 1.0 - 1e-12;
    ASSERT_EQ(a.received[k * a.n_links() + l].allFinite(), up) << a.time[k];
    ASSERT_EQ(std::isnan(a.residual(k, l).r[0]), !up);
  }
  ASSERT_FALSE(a.summary.events.empty());
  EXPECT_EQ(a.summary.events.front().kind, "connect");
  EXPECT_NEAR(a.summary.events.front().t, 1.0, 1e-12);
}

TEST(Engine, IsolatedEquilibriumIsAFixedPointWithoutNoise) {
  const Scenario s = Quiet(bundled("nominal", 0.9));
  const RunArtifact a = run(s);
  for (int i = 0; i < 4; ++i) {
    const Vec3 x0 = isolated_equilibrium(s.dgus[i], s.loads[i][0].second, 0.0);
    EXPECT_LT((a.summary.final_states[i].x - x0).norm(), 1e-9 * x0.norm()) << i;
  }
}

TEST(Engine, SameSeedSameRun) {
  const RunArtifact a = run(bundled("paper_fig2", 1.5));
  const RunArtifact b = run(bundled("paper_fig2", 1.5));
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    ASSERT_EQ(a.states[k].x, b.states[k].x);
    ASSERT_EQ(a.states[k].alpha, b.states[k].alpha);
  }
  Scenario other = bundled("paper_fig2", 1.5);
  other.seed = 8;
  EXPECT_NE(run(other).summary.final_states[0].x, a.summary.final_states[0].x);
}

TEST(Engine, MeasurementsStayWithinNoiseBound) {
  const Scenario s = bundled("nominal", 1.5);
  const RunArtifact a = run(s);
  for (std::size_t k = 0; k < a.steps(); ++k) {
    for (int i = 0; i < 4; ++i) {
      const Vec3 err = a.output(k, i) - a.state(k, i).x;
      ASSERT_TRUE((err.cwiseAbs().array() <= s.noise[i].rho_bar.array()).all());
    }
  }
}

TEST(Engine, SentFramesCarryTheWatermark) {
  const Scenario s = bundled("nominal", 1.5);
  const RunArtifact a = run(s);
  for (std::size_t k = 0; k < a.steps(); ++k) {
    for (int i = 0; i < 4; ++i) {
      const Vec3 d = a.sent_output(k, i) - a.output(k, i);
      const Vec3 wm = watermark_value(a.time[k], s.watermark_of(i));
      ASSERT_LT((d - wm).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Engine, ReceivedEqualsSentWithoutAttack) {
  const RunArtifact a = run(bundled("nominal", 1.5));
  for (std::size_t k = 0; k < a.steps(); ++k) {
    for (std::size_t l = 0; l < a.n_links(); ++l) {
      const Vec3& rx = a.received[k * a.n_links() + l];
      if (!rx.allFinite()) continue;
      ASSERT_EQ(rx, a.sent_output(k, a.links[l].from));
      ASSERT_LT((a.decoded[k * a.n_links() + l] - a.output(k, a.links[l].from))
                    .cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Engine, AttackerIsTransparentBeforeAttackAndReplaysAfter) {
  Scenario s = bundled("paper_fig2", 9.6);
  Scenario clean = s;
  clean.attacks.clear();
  const RunArtifact a = run(s);
  const RunArtifact b = run(clean);
  const long shift = std::lround(1.8 / s.dt);
  for (const auto& atk : s.attacks) {
    const int l = a.link_index(atk.from, atk.to);
    for (std::size_t k = 0; k < a.steps(); ++k) {
      const Vec3& rx = a.received[k * a.n_links() + l];
      if (a.time[k] < atk.Ta - 1e-9) {
        const Vec3& clean_rx = b.received[k * b.n_links() + l];
        ASSERT_EQ(rx.allFinite(), clean_rx.allFinite());
        if (rx.allFinite()) ASSERT_EQ(rx, clean_rx) << a.time[k];
      } else {
        ASSERT_EQ(rx, a.sent_output(k - shift, atk.from)) << a.time[k];
      }
    }
  }
  int starts = 0;
  for (const auto& e : a.summary.events) starts += e.kind == "attack_start";
  EXPECT_EQ(starts, 2);
}

TEST(Engine, EstimationErrorStaysWithinBound) {
  const Scenario s = bundled("nominal", 6.0);
  const RunArtifact a = run(s);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.steps(); ++k) {
    for (std::size_t l = 0; l < a.n_links(); ++l) {
      const ResidualRecord& r = a.residual(k, l);
      if (!r.r.allFinite()) continue;
      const Vec3 y_hat = a.decoded[k * a.n_links() + l];
      const Vec3 x_hat = y_hat - r.r;
      const Vec3 e = a.state(k, a.links[l].from).x - x_hat;
      const Vec3 e_bar = r.r_bar - s.noise[a.links[l].from].rho_bar;
      worst = std::max(worst, (e.cwiseAbs().array() / e_bar.array()).maxCoeff());
    }
  }
  EXPECT_LE(worst, 1.0);
  EXPECT_GT(worst, 0.0);
  for (const auto& ls : a.summary.links) {
    EXPECT_FALSE(ls.alarm.raised);
    EXPECT_EQ(ls.bound_violations, 0);
  }
}

TEST(Engine, ConsensusRatesSumToZero) {
  Simulation sim(bundled("nominal"));
  double worst = 0.0;
  while (sim.time() < 2.5) {
    sim.step();
    const auto& r = sim.last_alpha_rates();
    worst = std::max(worst, std::abs(std::accumulate(r.begin(), r.end(), 0.0)));
  }
  EXPECT_LT(worst, 1e-9);
  double alpha_sum = 0.0;
  for (const auto& st : sim.states()) alpha_sum += st.alpha;
  EXPECT_LT(std::abs(alpha_sum), 1e-9);
}

TEST(Engine, WatermarkDoesNotChangeTheTrajectory) {
  Scenario marked = bundled("nominal", 4.0);
  Scenario plain = marked;
  for (double& c : plain.slope) c = 0.0;
  for (double& c : marked.slope) c = std::pow(10.0, -3.2);
  const RunArtifact a = run(marked), b = run(plain);
  double worst = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    worst = std::max(worst, (a.states[k].x - b.states[k].x).norm() / b.states[k].x.norm());
    worst = std::max(worst, std::abs(a.states[k].alpha - b.states[k].alpha) /
                                std::max(1.0, std::abs(b.states[k].alpha)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Engine, UnstableStepRaisesNumericalError) {
  Scenario s = bundled("nominal");
  s.dt = 0.01;
  Simulation sim(s);
  EXPECT_THROW(
      {
        for (int k = 0; k < 5000; ++k) sim.step();
      },
      NumericalError);
}

TEST(Engine, InvalidScenarioIsRejectedBeforeRunning) {
  Scenario s = bundled("nominal", 1.0);
  s.consensus.k_I = -1.0;
  EXPECT_THROW(run(s), ConfigError);
}

TEST(Engine, NetworkSettlesToProportionalSharing) {
  const Scenario s = Quiet(bundled("nominal", 14.0));
  const RunArtifact a = run(s);
  const std::size_t last = a.steps() - 1;
  double rate = 0.0;
  for (int i = 0; i < 4; ++i) {
    rate = std::max(rate, (a.state(last, i).x - a.state(last - 1, i).x).norm() / s.dt);
  }
  EXPECT_LT(rate, 1e-6);

  double load = 0.0, supply = 0.0;
  for (int i = 0; i < 4; ++i) {
    const DguState& st = a.summary.final_states[i];
    load += s.loads[i][0].second;
    supply += st.I_t();
    EXPECT_NEAR(st.V(), s.dgus[i].V_ref + st.alpha, 1e-6);
  }
  EXPECT_NEAR(supply, load, 1e-6);
  EXPECT_LT(a.summary.sharing_spread, 1e-6);
  for (const auto& ls : a.summary.links) EXPECT_FALSE(ls.alarm.raised);
}

}  // namespace
}  // namespace mgrid
