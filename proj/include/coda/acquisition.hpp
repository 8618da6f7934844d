#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coda/belief_state.hpp"
#include "coda/benchmark_store.hpp"
#include "coda/pbest.hpp"

namespace coda {

enum class AcquisitionKind { eig, random, uncertainty };
AcquisitionKind parse_acquisition_kind(const std::string& s);
std::string to_string(AcquisitionKind k);

struct AcquisitionMethod {
  AcquisitionKind kind = AcquisitionKind::eig;
  std::uint64_t rng_seed = 0;
  /// When > 0, EIG scores only a seeded random subset of this many unlabeled items.
  std::size_t candidate_subsample = 0;

  friend bool operator==(const AcquisitionMethod&, const AcquisitionMethod&) = default;
};

/// How the class marginal is obtained for P_Best: recomputed from the belief
/// state it is asked about, or held fixed.
class Marginalizer {
 public:
  static Marginalizer recompute() { return Marginalizer(); }
  static Marginalizer frozen(ClassMarginal pi) {
    Marginalizer m;
    m.frozen_ = true;
    m.value_ = std::move(pi);
    return m;
  }

  [[nodiscard]] bool is_frozen() const { return frozen_; }
  [[nodiscard]] ClassMarginal evaluate(const BenchmarkTask& task, const BeliefState& state) const {
    return frozen_ ? value_ : class_marginal(task, state);
  }

 private:
  Marginalizer() = default;
  bool frozen_ = false;
  ClassMarginal value_;
};

/// Shannon entropy in nats, 0 log 0 = 0.
double entropy(std::span<const double> dist);

struct EigScore {
  std::size_t item = 0;
  double score = 0.0;
  std::string profile_key;
};

/// Per-call counters reported to the harness.
struct EigInstrumentation {
  std::size_t pbest_evaluations = 0;  // hypothetical P_Best evaluations
  std::size_t profiles = 0;
  std::size_t items = 0;
  std::size_t components_retabulated = 0;
  double seconds = 0.0;
};

/// Entropy of P_Best after a virtual label c on item, for every c. The state
/// is updated and restored from a snapshot for each hypothesis.
std::vector<double> hypothetical_entropies(BeliefState& state, const BenchmarkTask& task,
                                           const Marginalizer& marginalizer, std::size_t item,
                                           std::size_t grid_size = kDefaultGridSize);

/// H(P_Best) - sum_c pi(c | x_item) H(P_Best^c). Leaves state bit-identical.
/// Throws ConflictError if item is marked in `labeled`.
double eig_score(BeliefState& state, const BenchmarkTask& task, const Marginalizer& marginalizer,
                 std::size_t item, std::size_t grid_size = kDefaultGridSize,
                 const std::vector<bool>& labeled = {});

/// Groups items by their vector of hard predictions across models.
class ProfileIndex {
 public:
  explicit ProfileIndex(const BenchmarkTask& task);
  [[nodiscard]] std::size_t num_profiles() const { return profiles_.size(); }
  [[nodiscard]] std::size_t profile_of(std::size_t item) const { return item_profile_[item]; }
  [[nodiscard]] const std::vector<int>& profile(std::size_t p) const { return profiles_[p]; }
  [[nodiscard]] std::string key(std::size_t p) const;

 private:
  std::vector<std::vector<int>> profiles_;
  std::vector<std::size_t> item_profile_;
};

/// Memoized EIG: hypothetical entropies are computed once per distinct
/// profile from a cached CurveBank, with the class-marginal shift of each
/// virtual update applied as a sparse correction. OpenMP-parallel over
/// profiles; results do not depend on the thread count.
class EigScorer {
 public:
  EigScorer(const BenchmarkTask& task, std::size_t grid_size);

  std::vector<EigScore> score(const BeliefState& state, const Marginalizer& marginalizer,
                              std::span<const std::size_t> items,
                              EigInstrumentation* instrumentation = nullptr);

  [[nodiscard]] const ProfileIndex& profiles() const { return profiles_; }
  [[nodiscard]] std::size_t grid_size() const { return bank_.grid().size(); }

 private:
  const BenchmarkTask& task_;
  ProfileIndex profiles_;
  CurveBank bank_;
};

std::vector<EigScore> eig_scores_memoized(const BeliefState& state, const BenchmarkTask& task,
                                          const Marginalizer& marginalizer,
                                          std::span<const std::size_t> items,
                                          std::size_t grid_size = kDefaultGridSize,
                                          EigInstrumentation* instrumentation = nullptr);

/// Entropy of the models' mean prediction for every item.
std::vector<double> uncertainty_scores(const BenchmarkTask& task);

/// Chooses the next item to label. `step` seeds the random baseline so that
/// draws are reproducible per (seed, step). An EigScorer may be passed to
/// reuse its curve cache across steps. Throws ConfigError when every item
/// is labeled.
std::size_t select_next(const BeliefState& state, const BenchmarkTask& task,
                        const std::vector<bool>& labeled, const AcquisitionMethod& method,
                        std::size_t step, std::size_t grid_size, const Marginalizer& marginalizer,
                        EigScorer* scorer = nullptr,
                        EigInstrumentation* instrumentation = nullptr);

}  // namespace coda
