#include <gtest/gtest.h>

#include "coda/belief_state.hpp"
#include "coda/errors.hpp"
#include "support.hpp"

using namespace coda;
using coda::testing::random_task;

namespace {

BenchmarkTask two_models(std::vector<float> p, std::size_t D, std::size_t C) {
  std::vector<std::string> it;
  for (std::size_t i = 0; i < D; ++i) it.push_back("i" + std::to_string(i));
  return BenchmarkTask({"a", "b"}, it, C, std::move(p));
}

}  // namespace

TEST(Consensus, Unanimity) {
  const auto s = consensus(two_models({1, 0, 1, 0}, 1, 2));
  EXPECT_DOUBLE_EQ(s.score_sums(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.score_sums(0, 1), 0.0);
  EXPECT_EQ(s.consensus_labels[0], 0);
}

TEST(Consensus, SumsScores) {
  const auto s = consensus(two_models({0.6f, 0.4f, 0.1f, 0.9f}, 1, 2));
  EXPECT_NEAR(s.score_sums(0, 0), 0.7, 1e-6);
  EXPECT_NEAR(s.score_sums(0, 1), 1.3, 1e-6);
  EXPECT_EQ(s.consensus_labels[0], 1);
}

TEST(Consensus, TieGoesToLowestClass) {
  const auto s = consensus(two_models({0.5f, 0.5f, 0.5f, 0.5f}, 1, 2));
  EXPECT_EQ(s.consensus_labels[0], 0);
}

TEST(EmpiricalConfusions, PerfectAgreementIsDiagonal) {
  // Item classes 0, 1, 1, 2; both models one-hot and correct.
  const std::vector<int> cls{0, 1, 1, 2};
  std::vector<float> p(2 * 4 * 3, 0.0f);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 4; ++i) p[(k * 4 + i) * 3 + cls[i]] = 1.0f;
  }
  const auto task = two_models(p, 4, 3);
  const auto m = empirical_confusions(task, consensus(task));
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t cp = 0; cp < 3; ++cp) {
      EXPECT_DOUBLE_EQ(m(0, c, cp), c == cp ? (c == 1 ? 2.0 : 1.0) : 0.0);
    }
  }
}

TEST(EmpiricalConfusions, SingleSoftRow) {
  // Consensus 0 (0.7 + 0.9 vs 0.3 + 0.1).
  const auto task = two_models({0.7f, 0.3f, 0.9f, 0.1f}, 1, 2);
  const auto m = empirical_confusions(task, consensus(task));
  EXPECT_NEAR(m(0, 0, 0), 0.7, 1e-7);
  EXPECT_NEAR(m(0, 0, 1), 0.3, 1e-7);
  EXPECT_EQ(m(0, 1, 0), 0.0);
  EXPECT_EQ(m(0, 1, 1), 0.0);
}

TEST(EmpiricalConfusions, MatchesNaiveLoop) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto task = random_task(3, 50, 4, seed, 0.25);
    const auto summary = consensus(task);
    const auto m = empirical_confusions(task, summary);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t cp = 0; cp < 4; ++cp) {
          double ref = 0.0;
          for (std::size_t i = 0; i < 50; ++i) {
            // Recompute the consensus label independently.
            std::size_t star = 0;
            double best = -1.0;
            for (std::size_t cc = 0; cc < 4; ++cc) {
              double s = 0.0;
              for (std::size_t l = 0; l < 3; ++l) s += task.predictions()[(l * 50 + i) * 4 + cc];
              if (s > best) {
                best = s;
                star = cc;
              }
            }
            if (star == c) ref += task.predictions()[(k * 50 + i) * 4 + cp];
          }
          EXPECT_NEAR(m(k, c, cp), ref, 1e-6);
        }
      }
    }
  }
}

TEST(EmpiricalConfusions, TotalMassEqualsItemCount) {
  const auto task = random_task(4, 60, 5, 3);
  const auto m = empirical_confusions(task, consensus(task));
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      for (double v : m.row(k, c)) s += v;
    }
    EXPECT_NEAR(s, 60.0, 1e-4);
  }
}

TEST(BuildPrior, AlphaZeroIsScaledBeta) {
  const auto task = random_task(3, 20, 4, 1);
  PriorConfig cfg{0.0, 0.5, PriorMode::consensus};
  const auto st = build_prior(empirical_confusions(task, consensus(task)), cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t cp = 0; cp < 4; ++cp) {
        EXPECT_DOUBLE_EQ(st.theta()(k, c, cp), c == cp ? 2.0 : (1.0 / 3.0) / 0.5);
        EXPECT_EQ(st.theta()(k, c, cp), st.theta()(0, c, cp));
      }
    }
  }
}

TEST(BuildPrior, Arithmetic) {
  Tensor3<double> m(2, 2, 2, 0.0);
  m(0, 0, 0) = 10;
  m(0, 0, 1) = 30;
  const auto st = build_prior(m, PriorConfig{0.1, 0.5, PriorMode::consensus});
  EXPECT_DOUBLE_EQ(st.theta()(0, 0, 0), 4.0);
  EXPECT_DOUBLE_EQ(st.theta()(0, 0, 1), 8.0);
  EXPECT_EQ(st.origin(), PriorMode::consensus);
}

TEST(BuildPrior, DiagonalEqualsUniformForTwoClasses) {
  const auto task = random_task(3, 30, 2, 4);
  const auto m = empirical_confusions(task, consensus(task));
  const auto d = build_prior(m, PriorConfig{0.1, 0.5, PriorMode::diagonal});
  const auto u = build_prior(m, PriorConfig{0.1, 0.5, PriorMode::uniform});
  EXPECT_EQ(d.theta(), u.theta());
}

TEST(BuildPrior, UniformModeIsAllOnesOverT) {
  const auto task = random_task(2, 10, 3, 5);
  const auto st = build_prior(empirical_confusions(task, consensus(task)),
                              PriorConfig{0.7, 0.25, PriorMode::uniform});
  for (double v : st.theta().data()) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(BuildPrior, MonotoneInAlpha) {
  const auto task = random_task(3, 40, 4, 6, 0.3);
  const auto m = empirical_confusions(task, consensus(task));
  const double alphas[] = {0.0, 0.05, 0.1, 0.5, 2.0};
  for (std::size_t a = 1; a < 5; ++a) {
    const auto lo = build_prior(m, PriorConfig{alphas[a - 1], 0.5, PriorMode::consensus});
    const auto hi = build_prior(m, PriorConfig{alphas[a], 0.5, PriorMode::consensus});
    for (std::size_t j = 0; j < m.data().size(); ++j) {
      if (m.data()[j] > 0.0) EXPECT_GE(hi.theta().data()[j], lo.theta().data()[j]);
    }
  }
}

TEST(BuildPrior, RejectsBadConfig) {
  Tensor3<double> m(2, 2, 2, 0.0);
  EXPECT_THROW(build_prior(m, PriorConfig{-0.1, 0.5, PriorMode::consensus}), ConfigError);
  EXPECT_THROW(build_prior(m, PriorConfig{0.1, 0.0, PriorMode::consensus}), ConfigError);
}

TEST(ApplyLabel, UnitStepAddsOne) {
  // Model a predicts class 2, model b predicts class 0.
  const auto task = two_models({0, 0, 1, 1, 0, 0}, 1, 3);
  BeliefState st(Tensor3<double>(2, 3, 3, 1.0), 1.0, PriorMode::uniform);
  const auto before = st.theta();
  st.apply_label(task, 0, 0, 1.0);
  EXPECT_DOUBLE_EQ(st.theta()(0, 0, 2), 2.0);
  EXPECT_DOUBLE_EQ(st.theta()(1, 0, 0), 2.0);
  std::size_t changed = 0;
  for (std::size_t j = 0; j < before.data().size(); ++j) {
    changed += st.theta().data()[j] != before.data()[j];
  }
  EXPECT_EQ(changed, 2u);  // one cell per model
}

TEST(ApplyLabel, DefaultEtaIncrement) {
  const auto task = two_models({0, 1, 0, 1}, 1, 2);
  auto st = initial_belief(task, PriorConfig{});
  EXPECT_DOUBLE_EQ(st.eta(), 0.01);
  const double v = st.theta()(0, 0, 1);
  st.apply_label(task, 0, 0);
  EXPECT_DOUBLE_EQ(st.theta()(0, 0, 1), v + 0.01);
}

TEST(ApplyLabel, RangeErrors) {
  const auto task = two_models({0, 1, 0, 1}, 1, 2);
  auto st = initial_belief(task, PriorConfig{});
  EXPECT_THROW(st.apply_label(task, 1, 0), ConfigError);
  EXPECT_THROW(st.apply_label(task, 0, 2), ConfigError);
}

TEST(Snapshot, RestoreIsBitExact) {
  const auto task = random_task(3, 20, 4, 9);
  auto st = initial_belief(task, PriorConfig{});
  const auto orig = st;
  const auto fp = st.fingerprint();
  const auto tok = st.snapshot();
  st.apply_label(task, 3, 1);
  EXPECT_NE(st.fingerprint(), fp);
  st.restore(tok);
  EXPECT_EQ(st, orig);
  EXPECT_EQ(st.fingerprint(), fp);
}

TEST(Snapshot, NoMutationRestoreIsNoop) {
  const auto task = random_task(2, 5, 3, 1);
  auto st = initial_belief(task, PriorConfig{});
  const auto orig = st;
  st.restore(st.snapshot());
  EXPECT_EQ(st, orig);
}

TEST(Snapshot, NestedLifo) {
  const auto task = random_task(3, 20, 4, 2);
  auto st = initial_belief(task, PriorConfig{});
  const auto orig = st;
  const auto outer = st.snapshot();
  st.apply_label(task, 0, 1);
  const auto mid = st;
  const auto inner = st.snapshot();
  st.apply_label(task, 1, 2);
  st.restore(inner);
  EXPECT_EQ(st, mid);
  st.restore(outer);
  EXPECT_EQ(st, orig);
}

TEST(Snapshot, StaleTokenRejected) {
  auto a = coda::testing::random_belief(2, 3, 1);
  const auto b = coda::testing::random_belief(3, 3, 2);
  EXPECT_THROW(a.restore(b.snapshot()), ConfigError);
}

TEST(MeanConfusions, Examples) {
  Tensor3<double> t(2, 2, 2, 1.0);
  t(0, 0, 0) = 4;
  t(0, 0, 1) = 8;
  BeliefState st(t, 0.01, PriorMode::consensus);
  const auto m = st.mean_confusions();
  EXPECT_DOUBLE_EQ(m(0, 0, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m(0, 0, 1), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m(1, 1, 0), 0.5);
}

TEST(MeanConfusions, RowsAreStochastic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto st = coda::testing::random_belief(4, 6, seed, 1e-3, 1e3);
    const auto m = st.mean_confusions();
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t c = 0; c < 6; ++c) {
        double s = 0.0;
        for (double v : m.row(k, c)) s += v;
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(BeliefState, RejectsNonPositive) {
  Tensor3<double> t(2, 2, 2, 1.0);
  t(1, 1, 0) = 0.0;
  EXPECT_THROW(BeliefState(t, 0.01, PriorMode::uniform), ConfigError);
  EXPECT_THROW(BeliefState(Tensor3<double>(2, 2, 2, 1.0), 0.0, PriorMode::uniform), ConfigError);
}

TEST(BeliefState, PersistenceRoundTripsAtFloatPrecision) {
  coda::testing::TempDir dir;
  const auto st = coda::testing::random_belief(3, 4, 8);
  save_belief(st, dir.path() / "belief");
  const auto back = load_belief(dir.path() / "belief");
  EXPECT_EQ(back.eta(), st.eta());
  EXPECT_EQ(back.origin(), st.origin());
  for (std::size_t j = 0; j < st.theta().data().size(); ++j) {
    EXPECT_EQ(back.theta().data()[j], static_cast<double>(static_cast<float>(st.theta().data()[j])));
  }
}
