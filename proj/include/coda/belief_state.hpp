#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coda/benchmark_store.hpp"
#include "coda/tensor.hpp"

namespace coda {

inline constexpr double kDefaultAlpha = 0.1;
inline constexpr double kDefaultTemperature = 0.5;
inline constexpr double kDefaultEta = 0.01;

enum class PriorMode { uniform, diagonal, consensus };
PriorMode parse_prior_mode(const std::string& s);
std::string to_string(PriorMode m);

struct PriorConfig {
  double alpha = kDefaultAlpha;
  double temperature = kDefaultTemperature;
  PriorMode mode = PriorMode::consensus;

  /// Throws ConfigError unless alpha >= 0 and temperature > 0.
  void validate() const;

  friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

/// Per-item class score sums across models and their argmax.
struct ConsensusSummary {
  std::vector<int> consensus_labels;  // length |D|
  Matrix<double> score_sums;          // |D| x C
};

ConsensusSummary consensus(const BenchmarkTask& task);

/// Soft confusion counts against consensus labels, |H| x C x C:
/// entry (k, c, c') sums model k's score for c' over items whose consensus is c.
Tensor3<double> empirical_confusions(const BenchmarkTask& task, const ConsensusSummary& summary);

/// Saved copy of a belief tensor. Restoring is exact.
class BeliefSnapshot {
 public:
  [[nodiscard]] std::size_t num_models() const { return models_; }
  [[nodiscard]] std::size_t num_classes() const { return classes_; }

 private:
  friend class BeliefState;
  BeliefSnapshot(std::size_t models, std::size_t classes, std::vector<double> theta)
      : models_(models), classes_(classes), theta_(std::move(theta)) {}
  std::size_t models_;
  std::size_t classes_;
  std::vector<double> theta_;
};

/// Dirichlet concentrations over each model's confusion-matrix rows:
/// theta(k, c, c') for true class c and predicted class c'.
class BeliefState {
 public:
  BeliefState(Tensor3<double> theta, double eta, PriorMode origin);

  [[nodiscard]] std::size_t num_models() const { return theta_.dim0(); }
  [[nodiscard]] std::size_t num_classes() const { return theta_.dim1(); }
  [[nodiscard]] double eta() const { return eta_; }
  [[nodiscard]] PriorMode origin() const { return origin_; }
  [[nodiscard]] const Tensor3<double>& theta() const { return theta_; }

  /// For each model, adds scale * eta to theta(k, true_class, argmax prediction of k on item).
  void apply_label(const BenchmarkTask& task, std::size_t item, std::size_t true_class,
                   double scale = 1.0);

  [[nodiscard]] BeliefSnapshot snapshot() const;
  /// Throws ConfigError when the snapshot was taken from a differently shaped state.
  void restore(const BeliefSnapshot& token);

  /// Posterior-mean confusion matrices (rows normalized).
  [[nodiscard]] Tensor3<double> mean_confusions() const;

  /// FNV-1a over the raw bytes of theta; used to check state hygiene.
  [[nodiscard]] std::uint64_t fingerprint() const;

  friend bool operator==(const BeliefState&, const BeliefState&) = default;

 private:
  Tensor3<double> theta_;
  double eta_;
  PriorMode origin_;
};

/// theta = (beta + alpha * empirical) / T, where beta is 1 on the diagonal
/// and 1/(C-1) elsewhere. uniform mode uses beta = 1 everywhere and ignores
/// alpha; diagonal mode ignores alpha.
BeliefState build_prior(const Tensor3<double>& empirical, const PriorConfig& config,
                        double eta = kDefaultEta);

/// Consensus -> empirical confusions -> prior, in one call.
BeliefState initial_belief(const BenchmarkTask& task, const PriorConfig& config,
                           double eta = kDefaultEta);

/// Writes <prefix>.f32le (theta as float32) and <prefix>.json (shape, eta, origin).
void save_belief(const BeliefState& state, const std::filesystem::path& prefix);
BeliefState load_belief(const std::filesystem::path& prefix);

}  // namespace coda
