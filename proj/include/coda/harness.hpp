#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coda/acquisition.hpp"
#include "coda/belief_state.hpp"
#include "coda/benchmark_store.hpp"
#include "coda/pbest.hpp"

namespace coda {

enum class SelectorKind { pbest, empirical_risk };
/// Accepts "pbest", "empirical_risk" and the short form "risk".
SelectorKind parse_selector(const std::string& s);
std::string to_string(SelectorKind s);

inline constexpr std::size_t kDefaultBudget = 100;

struct RunConfig {
  AcquisitionMethod method;  // rng_seed is replaced by each run's seed
  SelectorKind selector = SelectorKind::pbest;
  std::size_t budget = kDefaultBudget;
  PriorConfig prior;
  double eta = kDefaultEta;
  std::size_t grid_size = kDefaultGridSize;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  bool freeze_marginal = false;

  /// Throws ConfigError. With a task, also checks budget <= |D|.
  void validate(const BenchmarkTask* task = nullptr) const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing fields keep their defaults. Throws ConfigError on bad values.
RunConfig run_config_from_json(const nlohmann::json& j);

/// The belief/acquisition loop shared by simulations and labeling sessions.
/// Holds a reference to the task, which must outlive the engine.
class SelectionEngine {
 public:
  struct Options {
    AcquisitionMethod method;
    PriorConfig prior;
    double eta = kDefaultEta;
    std::size_t grid_size = kDefaultGridSize;
    bool freeze_marginal = false;
  };

  SelectionEngine(const BenchmarkTask& task, Options options);
  SelectionEngine(const SelectionEngine&) = delete;
  SelectionEngine& operator=(const SelectionEngine&) = delete;

  [[nodiscard]] const BenchmarkTask& task() const { return task_; }
  [[nodiscard]] const Options& options() const { return options_; }
  [[nodiscard]] const BeliefState& belief() const { return belief_; }
  [[nodiscard]] const std::vector<bool>& labeled() const { return labeled_; }
  [[nodiscard]] std::size_t num_labeled() const { return num_labeled_; }

  [[nodiscard]] ClassMarginal marginal() const;
  /// P_Best of the current beliefs; cached until the next update.
  const PBest& pbest();
  [[nodiscard]] std::vector<double> mean_accuracy() const;

  /// Item to query at `step`. Throws ConfigError when no item is left.
  std::size_t next_query(std::size_t step, EigInstrumentation* instrumentation = nullptr);

  /// Marks item labeled and applies the belief update. Throws ConflictError
  /// if the item is already labeled, ConfigError on a bad class.
  void apply_label(std::size_t item, std::size_t true_class);
  /// Reverts apply_label given the snapshot taken just before it.
  void revert_label(std::size_t item, const BeliefSnapshot& before);

 private:
  const BenchmarkTask& task_;
  Options options_;
  BeliefState belief_;
  Marginalizer marginalizer_;
  std::vector<bool> labeled_;
  std::size_t num_labeled_ = 0;
  std::unique_ptr<EigScorer> scorer_;
  std::optional<PBest> pbest_;
};

struct TrueBest {
  std::size_t model = 0;
  std::vector<std::size_t> correct;  // per model, over all items
  std::vector<double> accuracy;
};

/// 0/1-loss accuracies from hard predictions; argmax with lowest-index ties.
/// Throws DataError without labels.
TrueBest true_best(const BenchmarkTask& task);

/// accuracy(best) - accuracy(chosen), in percentage points.
double regret_at(const TrueBest& truth, std::size_t num_items, std::size_t chosen);
double regret_at(const BenchmarkTask& task, std::size_t chosen, std::size_t best);

struct SelectionRun {
  std::uint64_t seed = 0;
  std::vector<std::size_t> queried_items;
  std::vector<std::size_t> chosen_models;
  std::vector<double> regret;             // percentage points
  std::vector<double> cumulative_regret;  // prefix sums of regret
  std::vector<std::vector<double>> pbest_trace;  // empty for the risk selector
  std::vector<double> wall_time_per_step;
  std::vector<std::size_t> pbest_evaluations;  // hypothetical evaluations per step
};

/// Simulates `config.budget` steps with oracle labels. At each step the
/// choice is recorded before that step's label is applied.
SelectionRun run_selection(const BenchmarkTask& task, const RunConfig& config, std::uint64_t seed);

/// One run per config seed, in seed order. jobs = 0 uses the OpenMP default.
std::vector<SelectionRun> run_many(const BenchmarkTask& task, const RunConfig& config,
                                   std::size_t jobs = 0);

struct UnsupervisedResult {
  std::size_t model = 0;
  std::string model_id;
  PBest pbest;
  std::vector<double> mean_accuracy;
  std::optional<double> regret_at_0;  // only when the task has labels
};

UnsupervisedResult run_unsupervised(const BenchmarkTask& task, const PriorConfig& prior,
                                    std::size_t grid_size = kDefaultGridSize,
                                    double eta = kDefaultEta);

struct RunSummary {
  RunConfig config;
  std::size_t num_models = 0;
  std::size_t num_items = 0;
  std::size_t num_classes = 0;
  std::size_t best_model = 0;
  std::size_t budget = 0;
  std::size_t num_runs = 0;
  std::vector<double> mean_regret, std_regret;
  std::vector<double> mean_cum_regret, std_cum_regret;
  std::vector<double> success_rate, near_optimal_rate;
  std::vector<double> final_cum_regret;  // per run, in run order

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

/// Regret within this many percentage points counts as near-optimal.
inline constexpr double kNearOptimalPoints = 1.0;

/// Per-step mean and population standard deviation across runs. Throws
/// ConfigError when runs are empty or budgets differ.
RunSummary aggregate(const std::vector<SelectionRun>& runs, const BenchmarkTask& task,
                     const RunConfig& config);

/// Writes steps.csv, summary.json and runs.csv (deterministic given inputs)
/// plus timing.json (wall-clock, varies) into dir. Throws DataError if the
/// directory cannot be written.
void export_report(const RunSummary& summary, const std::vector<SelectionRun>& runs,
                   const std::filesystem::path& dir);

nlohmann::json to_json(const RunSummary& summary);
RunSummary summary_from_json(const nlohmann::json& j);
RunSummary load_summary(const std::filesystem::path& summary_json);

}  // namespace coda
