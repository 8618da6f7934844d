#include "coda/acquisition.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "coda/errors.hpp"
#include "coda/rng.hpp"

namespace coda {

AcquisitionKind parse_acquisition_kind(const std::string& s) {
  if (s == "eig") return AcquisitionKind::eig;
  if (s == "random") return AcquisitionKind::random;
  if (s == "uncertainty") return AcquisitionKind::uncertainty;
  throw ConfigError("unknown acquisition method: " + s);
}

std::string to_string(AcquisitionKind k) {
  switch (k) {
    case AcquisitionKind::eig: return "eig";
    case AcquisitionKind::random: return "random";
    case AcquisitionKind::uncertainty: return "uncertainty";
  }
  return "eig";
}

double entropy(std::span<const double> dist) {
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<double> hypothetical_entropies(BeliefState& state, const BenchmarkTask& task,
                                           const Marginalizer& marginalizer, std::size_t item,
                                           std::size_t grid_size) {
  if (item >= task.num_items()) throw ConfigError("item index out of range");
  const std::size_t C = state.num_classes();
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto token = state.snapshot();
    state.apply_label(task, item, c, 1.0);
    const auto pb = compute_pbest(state, marginalizer.evaluate(task, state), grid_size);
    out[c] = entropy(pb.probs);
    state.restore(token);
  }
  return out;
}

double eig_score(BeliefState& state, const BenchmarkTask& task, const Marginalizer& marginalizer,
                 std::size_t item, std::size_t grid_size, const std::vector<bool>& labeled) {
  if (item >= task.num_items()) throw ConfigError("item index out of range");
  if (!labeled.empty() && labeled.at(item)) {
    throw ConflictError("item " + std::to_string(item) + " is already labeled");
  }
  const double h0 = entropy(compute_pbest(state, marginalizer.evaluate(task, state), grid_size).probs);
  const auto post = item_class_posterior(task, state, item);
  const auto hyp = hypothetical_entropies(state, task, marginalizer, item, grid_size);
  double expected = 0.0;
  for (std::size_t c = 0; c < hyp.size(); ++c) expected += post[c] * hyp[c];
  return h0 - expected;
}

ProfileIndex::ProfileIndex(const BenchmarkTask& task) {
  const auto& hard = task.hard_predictions();
  const std::size_t H = task.num_models();
  std::map<std::vector<int>, std::size_t> ids;
  item_profile_.resize(task.num_items());
  std::vector<int> prof(H);
  for (std::size_t i = 0; i < task.num_items(); ++i) {
    for (std::size_t k = 0; k < H; ++k) prof[k] = hard(k, i);
    auto [it, inserted] = ids.try_emplace(prof, profiles_.size());
    if (inserted) profiles_.push_back(prof);
    item_profile_[i] = it->second;
  }
}

std::string ProfileIndex::key(std::size_t p) const {
  std::string out;
  for (std::size_t k = 0; k < profiles_[p].size(); ++k) {
    if (k) out += ',';
    out += std::to_string(profiles_[p][k]);
  }
  return out;
}

EigScorer::EigScorer(const BenchmarkTask& task, std::size_t grid_size)
    : task_(task), profiles_(task), bank_(grid_size) {}

namespace {

// Scratch for one hypothesis evaluation.
struct HypothesisScratch {
  std::vector<double> mass, cdf, quad, probs, mu;
  std::vector<char> is_touched;
  std::vector<std::size_t> touched;

  HypothesisScratch(std::size_t H, std::size_t C, std::size_t G)
      : mass(H * G), cdf(H * G), probs(H), mu(C, 0.0), is_touched(C, 0) {
    touched.reserve(H);
  }
};

}  // namespace

std::vector<EigScore> EigScorer::score(const BeliefState& state, const Marginalizer& marginalizer,
                                       std::span<const std::size_t> items,
                                       EigInstrumentation* instrumentation) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t H = state.num_models();
  const std::size_t C = state.num_classes();
  if (H != task_.num_models() || C != task_.num_classes()) {
    throw ConfigError("belief state shape does not match task");
  }
  const double inc = 1.0 * state.eta();
  bank_.refresh(state, inc, true);
  const std::size_t G = bank_.grid().size();

  const auto M = state.mean_confusions();
  const auto pi = marginalizer.evaluate(task_, state);
  const double h0 = entropy(pbest_from_bank(bank_, pi).probs);

  // Distinct profiles among the requested items, in ascending profile id.
  std::vector<std::size_t> wanted;
  {
    std::vector<bool> seen(profiles_.num_profiles(), false);
    for (std::size_t i : items) {
      if (i >= task_.num_items()) throw ConfigError("item index out of range");
      const std::size_t p = profiles_.profile_of(i);
      if (!seen[p]) {
        seen[p] = true;
        wanted.push_back(p);
      }
    }
    std::sort(wanted.begin(), wanted.end());
  }
  std::vector<std::size_t> slot(profiles_.num_profiles(), 0);
  for (std::size_t s = 0; s < wanted.size(); ++s) slot[wanted[s]] = s;

  // A virtual label c on an item moves row c of every model k by inc at
  // column hard(k, i). Under a recomputed marginal this shifts pi by
  //   rho_c(c') + sum_k lambda(k,c) [c' == hard(k,i)],
  // with lambda(k,c) = mean_pred(k,c) * inc / (|H| (S(k,c) + inc)) and
  // rho_c(c') = -sum_k lambda(k,c) M(k,c,c').
  const bool recompute = !marginalizer.is_frozen();
  const auto& mp = task_.mean_predictions();
  Matrix<double> lambda(H, C, 0.0);
  if (recompute) {
    const auto& theta = state.theta();
    for (std::size_t k = 0; k < H; ++k) {
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (double v : theta.row(k, c)) s += v;
        lambda(k, c) = mp(k, c) * inc / (static_cast<double>(H) * (s + inc));
      }
    }
  }

  std::vector<double> entropies(wanted.size() * C, 0.0);
  std::vector<double> base_weights(C);
  std::vector<double> a_mass(H * G), a_cdf(H * G);

  for (std::size_t c = 0; c < C; ++c) {
    // Profile-independent part of the hypothetical mixture for class c.
    for (std::size_t cp = 0; cp < C; ++cp) {
      double rho = 0.0;
      for (std::size_t k = 0; k < H; ++k) rho -= lambda(k, c) * M(k, c, cp);
      base_weights[cp] = pi.pi[cp] + rho;
    }
#pragma omp parallel for schedule(static)
    for (std::size_t l = 0; l < H; ++l) {
      double* m = a_mass.data() + l * G;
      double* f = a_cdf.data() + l * G;
      std::fill(m, m + G, 0.0);
      std::fill(f, f + G, 0.0);
      for (std::size_t cp = 0; cp < C; ++cp) {
        const auto& curve = bank_.curve(l, cp, CurveBank::kBase);
        const double w = base_weights[cp];
        for (std::size_t j = 0; j < G; ++j) {
          m[j] += w * curve.mass[j];
          f[j] += w * curve.cdf[j];
        }
      }
    }

#pragma omp parallel
    {
      HypothesisScratch scratch(H, C, G);
#pragma omp for schedule(dynamic, 4)
      for (std::size_t s = 0; s < wanted.size(); ++s) {
        const auto& prof = profiles_.profile(wanted[s]);
        scratch.touched.clear();
        if (recompute) {
          for (std::size_t k = 0; k < H; ++k) {
            const auto cp = static_cast<std::size_t>(prof[k]);
            if (!scratch.is_touched[cp]) {
              scratch.is_touched[cp] = 1;
              scratch.touched.push_back(cp);
            }
            scratch.mu[cp] += lambda(k, c);
          }
          std::sort(scratch.touched.begin(), scratch.touched.end());
        }
        const double wc = base_weights[c] + scratch.mu[c];
        for (std::size_t l = 0; l < H; ++l) {
          double* m = scratch.mass.data() + l * G;
          double* f = scratch.cdf.data() + l * G;
          const double* am = a_mass.data() + l * G;
          const double* af = a_cdf.data() + l * G;
          std::copy(am, am + G, m);
          std::copy(af, af + G, f);
          for (std::size_t cp : scratch.touched) {
            const double w = scratch.mu[cp];
            const auto& curve = bank_.curve(l, cp, CurveBank::kBase);
            for (std::size_t j = 0; j < G; ++j) {
              m[j] += w * curve.mass[j];
              f[j] += w * curve.cdf[j];
            }
          }
          const auto variant = static_cast<std::size_t>(prof[l]) == c ? CurveBank::kDiagPlus
                                                                      : CurveBank::kOffPlus;
          const auto& base = bank_.curve(l, c, CurveBank::kBase);
          const auto& moved = bank_.curve(l, c, variant);
          for (std::size_t j = 0; j < G; ++j) {
            m[j] += wc * (moved.mass[j] - base.mass[j]);
            f[j] += wc * (moved.cdf[j] - base.cdf[j]);
          }
        }
        for (std::size_t cp : scratch.touched) {
          scratch.mu[cp] = 0.0;
          scratch.is_touched[cp] = 0;
        }

        integrate_max_draw(H, G, scratch.mass.data(), scratch.cdf.data(), scratch.quad,
                           scratch.probs.data());
        double total = 0.0;
        for (double v : scratch.probs) total += v;
        for (double& v : scratch.probs) v /= total;
        entropies[s * C + c] = entropy(scratch.probs);
      }
    }
  }

  std::vector<EigScore> out;
  out.reserve(items.size());
  for (std::size_t i : items) {
    const std::size_t p = profiles_.profile_of(i);
    const auto post = item_class_posterior(task_, M, i);
    const double* ent = entropies.data() + slot[p] * C;
    double expected = 0.0;
    for (std::size_t c = 0; c < C; ++c) expected += post[c] * ent[c];
    out.push_back({i, h0 - expected, profiles_.key(p)});
  }

  if (instrumentation) {
    instrumentation->pbest_evaluations += wanted.size() * C;
    instrumentation->profiles += wanted.size();
    instrumentation->items += items.size();
    instrumentation->components_retabulated += bank_.last_recomputed();
    instrumentation->seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return out;
}

std::vector<EigScore> eig_scores_memoized(const BeliefState& state, const BenchmarkTask& task,
                                          const Marginalizer& marginalizer,
                                          std::span<const std::size_t> items,
                                          std::size_t grid_size,
                                          EigInstrumentation* instrumentation) {
  EigScorer scorer(task, grid_size);
  return scorer.score(state, marginalizer, items, instrumentation);
}

std::vector<double> uncertainty_scores(const BenchmarkTask& task) {
  const std::size_t H = task.num_models();
  const std::size_t C = task.num_classes();
  std::vector<double> out(task.num_items());
  std::vector<double> mean(C);
  for (std::size_t i = 0; i < task.num_items(); ++i) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t k = 0; k < H; ++k) {
      const auto p = task.prediction(k, i);
      for (std::size_t c = 0; c < C; ++c) mean[c] += p[c];
    }
    for (double& v : mean) v /= static_cast<double>(H);
    out[i] = entropy(mean);
  }
  return out;
}

std::size_t select_next(const BeliefState& state, const BenchmarkTask& task,
                        const std::vector<bool>& labeled, const AcquisitionMethod& method,
                        std::size_t step, std::size_t grid_size, const Marginalizer& marginalizer,
                        EigScorer* scorer, EigInstrumentation* instrumentation) {
  if (labeled.size() != task.num_items()) throw ConfigError("labeled mask has the wrong length");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (!labeled[i]) pool.push_back(i);
  }
  if (pool.empty()) throw ConfigError("every item is already labeled");

  switch (method.kind) {
    case AcquisitionKind::random: {
      SplitMix64 rng(mix_seed(method.rng_seed, step));
      return pool[rng.below(pool.size())];
    }
    case AcquisitionKind::uncertainty: {
      const auto scores = uncertainty_scores(task);
      std::size_t best = pool.front();
      for (std::size_t i : pool) {
        if (scores[i] > scores[best]) best = i;
      }
      return best;
    }
    case AcquisitionKind::eig: {
      if (method.candidate_subsample > 0 && pool.size() > method.candidate_subsample) {
        SplitMix64 rng(mix_seed(method.rng_seed ^ 0x5EEDCAFEULL, step));
        for (std::size_t s = 0; s < method.candidate_subsample; ++s) {
          const auto j = s + rng.below(pool.size() - s);
          std::swap(pool[s], pool[j]);
        }
        pool.resize(method.candidate_subsample);
        std::sort(pool.begin(), pool.end());
      }
      std::vector<EigScore> scores;
      if (scorer) {
        scores = scorer->score(state, marginalizer, pool, instrumentation);
      } else {
        scores = eig_scores_memoized(state, task, marginalizer, pool, grid_size, instrumentation);
      }
      std::size_t best = 0;
      for (std::size_t s = 1; s < scores.size(); ++s) {
        if (scores[s].score > scores[best].score) best = s;
      }
      return scores[best].item;
    }
  }
  throw ConfigError("unknown acquisition method");
}

}  // namespace coda
