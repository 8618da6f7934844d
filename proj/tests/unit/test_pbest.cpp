#include <gtest/gtest.h>

#include <numeric>

#include <omp.h>

#include "coda/errors.hpp"
#include "coda/pbest.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace coda;
using coda::testing::random_belief;
using coda::testing::random_task;

namespace {

BetaMixture single_class(std::vector<std::pair<double, double>> ab) {
  BetaMixture m{Matrix<double>(ab.size(), 1), Matrix<double>(ab.size(), 1), {1.0}};
  for (std::size_t k = 0; k < ab.size(); ++k) {
    m.a(k, 0) = ab[k].first;
    m.b(k, 0) = ab[k].second;
  }
  return m;
}

BetaMixture random_mixture(std::size_t H, std::size_t C, std::uint64_t seed, double lo = 0.5,
                           double hi = 50.0) {
  SplitMix64 rng(seed);
  BetaMixture m{Matrix<double>(H, C), Matrix<double>(H, C), std::vector<double>(C)};
  for (auto& v : m.a.data()) v = lo + (hi - lo) * rng.uniform();
  for (auto& v : m.b.data()) v = lo + (hi - lo) * rng.uniform();
  double s = 0.0;
  for (auto& w : m.weights) s += (w = 0.1 + rng.uniform());
  for (auto& w : m.weights) w /= s;
  return m;
}

BeliefState identity_belief(std::size_t H, std::size_t C, double scale = 1e6) {
  Tensor3<double> t(H, C, C, 1e-9);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t c = 0; c < C; ++c) t(k, c, c) = scale;
  }
  return BeliefState(t, 0.01, PriorMode::consensus);
}

}  // namespace

TEST(ClassMarginal, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto task = random_task(3, 20, 4, seed, 0.3);
    const auto st = random_belief(3, 4, seed + 50);
    const auto pi = class_marginal(task, st);
    const auto ref = oracle::class_marginal_loop(task, st);
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(pi.pi[c], ref[c], 1e-6);
      EXPECT_GE(pi.pi[c], 0.0);
      s += pi.pi[c];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(ClassMarginal, IdentityPassesArgmaxFrequencies) {
  const auto task = random_task(3, 40, 4, 2, 1.0);  // all one-hot
  const auto st = identity_belief(3, 4);
  const auto pi = class_marginal(task, st);
  std::vector<double> freq(4, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < 40; ++i) freq[task.hard_predictions()(k, i)] += 1.0 / 120.0;
  }
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(pi.pi[c], freq[c], 1e-9);
}

TEST(ItemPosterior, MatchesLoopAndAveragesToMarginal) {
  const auto task = random_task(3, 20, 4, 8, 0.2);
  const auto st = random_belief(3, 4, 9);
  std::vector<double> avg(4, 0.0);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto row = item_class_posterior(task, st, i);
    const auto ref = oracle::item_posterior_loop(task, st, i);
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(row[c], ref[c], 1e-6);
      avg[c] += row[c] / 20.0;
      s += row[c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto pi = class_marginal(task, st);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(avg[c], pi.pi[c], 1e-9);
}

TEST(ItemPosterior, UnanimousOneHot) {
  std::vector<float> p(3 * 1 * 4, 0.0f);
  for (std::size_t k = 0; k < 3; ++k) p[k * 4 + 2] = 1.0f;
  BenchmarkTask task({"a", "b", "c"}, {"x"}, 4, p);
  const auto row = item_class_posterior(task, identity_belief(3, 4), 0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(row[c], c == 2 ? 1.0 : 0.0, 1e-9);
  EXPECT_THROW(item_class_posterior(task, identity_belief(3, 4), 1), ConfigError);
}

TEST(DiagonalBetas, Examples) {
  Tensor3<double> t(2, 2, 2, 1.0);
  t(0, 0, 0) = 4;
  t(0, 0, 1) = 8;
  const auto b = diagonal_betas(BeliefState(t, 0.01, PriorMode::consensus));
  EXPECT_EQ(b.a(0, 0), 4.0);
  EXPECT_EQ(b.b(0, 0), 8.0);
  const auto u = diagonal_betas(BeliefState(Tensor3<double>(2, 3, 3, 1.0), 0.01, PriorMode::uniform));
  EXPECT_EQ(u.a(1, 2), 1.0);
  EXPECT_EQ(u.b(1, 2), 2.0);
}

TEST(DiagonalBetas, MeanIsDiagonalOfMeanConfusions) {
  const auto st = random_belief(4, 5, 3);
  const auto b = diagonal_betas(st);
  const auto m = st.mean_confusions();
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(b.a(k, c) / (b.a(k, c) + b.b(k, c)), m(k, c, c), 1e-12);
    }
  }
}

TEST(Quadrature, GridShape) {
  QuadratureGrid g(5);
  EXPECT_EQ(g.nodes()[0], kEndpointClip);
  EXPECT_EQ(g.nodes()[4], 1.0 - kEndpointClip);
  EXPECT_DOUBLE_EQ(g.nodes()[2], 0.5);
  EXPECT_DOUBLE_EQ(std::accumulate(g.weights().begin(), g.weights().end(), 0.0), 1.0);
  EXPECT_THROW(QuadratureGrid(2), ConfigError);
}

TEST(Quadrature, SingularComponentMassTelescopes) {
  QuadratureGrid g(257);
  for (auto [a, b] : {std::pair{0.5, 20.0}, {20.0, 0.5}, {0.6, 0.7}}) {
    const auto curve = tabulate_component(a, b, g);
    const double total = std::accumulate(curve.mass.begin(), curve.mass.end(), 0.0);
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (double m : curve.mass) EXPECT_GE(m, 0.0);
  }
}

TEST(PBest, IdenticalModelsSplitEvenly) {
  const auto st = random_belief(1, 3, 4);
  Tensor3<double> t(2, 3, 3);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t cp = 0; cp < 3; ++cp) t(k, c, cp) = st.theta()(0, c, cp);
    }
  }
  const auto pb = compute_pbest(BeliefState(t, 0.01, PriorMode::consensus), ClassMarginal{{0.2, 0.3, 0.5}});
  EXPECT_NEAR(pb.probs[0], 0.5, 1e-6);
  EXPECT_NEAR(pb.probs[1], 0.5, 1e-6);
}

TEST(PBest, ClosedFormTwoThirds) {
  // P(X1 > X2) = int_0^1 2x * x dx = 2/3 for X1 ~ Beta(2,1), X2 ~ Beta(1,1).
  const auto pb = compute_pbest(single_class({{2.0, 1.0}, {1.0, 1.0}}));
  EXPECT_NEAR(pb.probs[0], 2.0 / 3.0, 1e-3);
  EXPECT_NEAR(pb.probs[1], 1.0 / 3.0, 1e-3);
  const auto mc = oracle::monte_carlo_pbest(single_class({{2.0, 1.0}, {1.0, 1.0}}), 200000, 3);
  EXPECT_NEAR(mc[0], 2.0 / 3.0, 0.005);
}

TEST(PBest, MatchesMonteCarlo) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto mix = random_mixture(3, 3, seed);
    const auto pb = compute_pbest(mix);
    const auto mc = oracle::monte_carlo_pbest(mix, 100000, seed + 10);
    EXPECT_LE(oracle::total_variation(pb.probs, mc), 0.015) << "seed " << seed;
  }
}

TEST(PBest, SerialReferenceAgrees) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto mix = random_mixture(5, 4, seed, 0.5, 80.0);
    const auto a = compute_pbest(mix, 513);
    const auto b = compute_pbest_serial(mix, 513);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.probs[k], b.probs[k], 1e-12);
    EXPECT_NEAR(a.raw_mass, b.raw_mass, 1e-12);
  }
}

TEST(PBest, IndependentOfThreadCount) {
  const auto mix = random_mixture(7, 5, 17);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto one = compute_pbest(mix, 1025);
  omp_set_num_threads(4);
  const auto four = compute_pbest(mix, 1025);
  omp_set_num_threads(saved);
  EXPECT_EQ(one.probs, four.probs);
}

TEST(PBest, RawMassNearOneOnFineGrid) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mix = random_mixture(4, 3, seed, 1.0, 50.0);
    const auto pb = compute_pbest(mix, 4097);
    EXPECT_NEAR(pb.raw_mass, 1.0, 0.01);
    EXPECT_NEAR(std::accumulate(pb.probs.begin(), pb.probs.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(PBest, PermutationEquivariant) {
  const auto st = random_belief(5, 3, 21);
  const ClassMarginal pi{{0.5, 0.3, 0.2}};
  const auto base = compute_pbest(st, pi);
  const std::vector<std::size_t> order{3, 0, 4, 1, 2};
  Tensor3<double> t(5, 3, 3);
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t cp = 0; cp < 3; ++cp) t(j, c, cp) = st.theta()(order[j], c, cp);
    }
  }
  const auto perm = compute_pbest(BeliefState(t, 0.01, PriorMode::consensus), pi);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(perm.probs[j], base.probs[order[j]], 1e-12);
}

TEST(PBest, DuplicateModelSplitsMass) {
  const auto mix = random_mixture(3, 2, 5, 1.0, 40.0);
  BetaMixture dup{Matrix<double>(4, 2), Matrix<double>(4, 2), mix.weights};
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t src = k < 3 ? k : 0;
    for (std::size_t c = 0; c < 2; ++c) {
      dup.a(k, c) = mix.a(src, c);
      dup.b(k, c) = mix.b(src, c);
    }
  }
  const auto p = compute_pbest(mix, 4097);
  const auto q = compute_pbest(dup, 4097);
  EXPECT_NEAR(q.probs[0], q.probs[3], 1e-9);
  // A new competitor can only take mass away.
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(q.probs[k], p.probs[k] + 1e-9);
}

TEST(PBest, MonotoneInDiagonalConcentration) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto mix = random_mixture(3, 3, seed + 30, 1.0, 30.0);
    const auto before = compute_pbest(mix);
    mix.a(1, seed % 3) += 5.0;
    const auto after = compute_pbest(mix);
    EXPECT_GE(after.probs[1], before.probs[1] - 1e-6);
  }
}

TEST(PBest, RejectsBadInput) {
  EXPECT_THROW(compute_pbest(single_class({{1.0, 1.0}})), ConfigError);
  EXPECT_THROW(compute_pbest(single_class({{1.0, 1.0}, {2.0, 2.0}}), 2), ConfigError);
  const auto st = random_belief(2, 3, 1);
  EXPECT_THROW(compute_pbest(st, ClassMarginal{{0.5, 0.5}}), ConfigError);
}

TEST(MeanAccuracy, IdentityAndUniform) {
  const ClassMarginal pi{{0.1, 0.6, 0.3}};
  for (double v : mean_accuracy(identity_belief(3, 3, 1e12), pi)) EXPECT_NEAR(v, 1.0, 1e-9);
  const BeliefState u(Tensor3<double>(3, 3, 3, 2.0), 0.01, PriorMode::uniform);
  for (double v : mean_accuracy(u, pi)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(MeanAccuracy, ConcentratedRankingMatchesPBest) {
  // Class-independent accuracies, so each mixture collapses to one sharp Beta.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SplitMix64 rng(seed + 70);
    const std::size_t H = 4, C = 3;
    Tensor3<double> t(H, C, C, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
      const double acc = 0.4 + 0.5 * rng.uniform();
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t cp = 0; cp < C; ++cp) {
          t(k, c, cp) = 5000.0 * (c == cp ? acc : (1.0 - acc) / (C - 1));
        }
      }
    }
    const BeliefState sharp(t, 0.01, PriorMode::consensus);
    const ClassMarginal pi{{0.3, 0.3, 0.4}};
    const auto acc = mean_accuracy(sharp, pi);
    const auto best = static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    EXPECT_EQ(select_model(compute_pbest(sharp, pi, 4097)), best);
  }
}

TEST(SelectModel, ArgmaxLowestTie) {
  EXPECT_EQ(select_model(PBest{{0.2, 0.7, 0.1}, 3, 1.0}), 1u);
  EXPECT_EQ(select_model(PBest{{0.5, 0.5}, 3, 1.0}), 0u);
  EXPECT_EQ(select_model(PBest{{0.25, 0.25, 0.25, 0.25}, 3, 1.0}), 0u);
}

TEST(CurveBank, RefreshesOnlyChangedComponents) {
  const auto task = random_task(4, 30, 3, 2);
  auto st = initial_belief(task, PriorConfig{});
  CurveBank bank(129);
  bank.refresh(st, st.eta(), true);
  EXPECT_EQ(bank.last_recomputed(), 12u);
  bank.refresh(st, st.eta(), true);
  EXPECT_EQ(bank.last_recomputed(), 0u);
  st.apply_label(task, 0, 1);
  bank.refresh(st, st.eta(), true);
  // Each model changed row 1 only.
  EXPECT_EQ(bank.last_recomputed(), 4u);
  const auto pi = class_marginal(task, st);
  EXPECT_EQ(pbest_from_bank(bank, pi).probs, compute_pbest(st, pi, 129).probs);
}
