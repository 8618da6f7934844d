#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coda/tensor.hpp"

namespace coda {

/// Rows whose sum is within this distance of 1 are kept bit-for-bit at load.
inline constexpr double kNormalizedRowTolerance = 1e-6;

/// Predictions of |H| candidate models on |D| unlabeled items over C classes,
/// plus optional ground-truth labels. Immutable once constructed.
class BenchmarkTask {
 public:
  /// Validates shapes, rejects negative or non-finite scores and out-of-range
  /// labels, and rescales soft rows to unit sum. Throws DataError.
  BenchmarkTask(std::vector<std::string> model_ids, std::vector<std::string> item_ids,
                std::size_t num_classes, std::vector<float> predictions,
                std::optional<std::vector<int>> oracle_labels = std::nullopt,
                std::vector<std::string> item_uris = {},
                std::vector<std::string> class_names = {});

  [[nodiscard]] std::size_t num_models() const { return model_ids_.size(); }
  [[nodiscard]] std::size_t num_items() const { return item_ids_.size(); }
  [[nodiscard]] std::size_t num_classes() const { return num_classes_; }

  [[nodiscard]] const std::vector<std::string>& model_ids() const { return model_ids_; }
  [[nodiscard]] const std::vector<std::string>& item_ids() const { return item_ids_; }
  [[nodiscard]] const std::vector<std::string>& item_uris() const { return item_uris_; }
  [[nodiscard]] const std::vector<std::string>& class_names() const { return class_names_; }

  /// Prediction vector of model k on item i (length C).
  [[nodiscard]] std::span<const float> prediction(std::size_t k, std::size_t i) const {
    return {predictions_.data() + (k * item_ids_.size() + i) * num_classes_, num_classes_};
  }
  /// Flat (model, item, class) row-major storage.
  [[nodiscard]] const std::vector<float>& predictions() const { return predictions_; }

  [[nodiscard]] bool has_labels() const { return oracle_labels_.has_value(); }
  [[nodiscard]] const std::optional<std::vector<int>>& oracle_labels() const {
    return oracle_labels_;
  }

  /// argmax class per (model, item); cached at construction.
  [[nodiscard]] const Matrix<int>& hard_predictions() const { return hard_; }
  /// Per-model prediction vector averaged over items, |H| x C.
  [[nodiscard]] const Matrix<double>& mean_predictions() const { return mean_pred_; }
  /// Number of rows that were rescaled during construction.
  [[nodiscard]] std::size_t rescaled_rows() const { return rescaled_rows_; }

  /// Returns a copy with oracle labels removed.
  [[nodiscard]] BenchmarkTask without_labels() const;
  /// Returns a copy with models reordered: new model j is old model order[j].
  [[nodiscard]] BenchmarkTask permute_models(std::span<const std::size_t> order) const;

  friend bool operator==(const BenchmarkTask& a, const BenchmarkTask& b) {
    return a.model_ids_ == b.model_ids_ && a.item_ids_ == b.item_ids_ &&
           a.num_classes_ == b.num_classes_ && a.predictions_ == b.predictions_ &&
           a.oracle_labels_ == b.oracle_labels_;
  }

 private:
  std::vector<std::string> model_ids_;
  std::vector<std::string> item_ids_;
  std::size_t num_classes_;
  std::vector<float> predictions_;
  std::optional<std::vector<int>> oracle_labels_;
  std::vector<std::string> item_uris_;
  std::vector<std::string> class_names_;
  Matrix<int> hard_;
  Matrix<double> mean_pred_;
  std::size_t rescaled_rows_ = 0;
};

/// argmax over each prediction row, ties to the lowest class index.
Matrix<int> hard_predictions(const BenchmarkTask& task);
int argmax_class(std::span<const float> row);

enum class PredictionFormat { f32le, csv };
PredictionFormat parse_prediction_format(const std::string& s);
std::string to_string(PredictionFormat f);

/// Loads a manifest JSON and the files it references (paths relative to the
/// manifest's directory). Throws DataError on any inconsistency.
BenchmarkTask load_benchmark(const std::filesystem::path& manifest_path);

/// Writes manifest.json, predictions and (if present) labels.csv into dir.
/// Returns the manifest path.
std::filesystem::path save_benchmark(const BenchmarkTask& task, const std::filesystem::path& dir,
                                     PredictionFormat format = PredictionFormat::f32le);

/// Ground-truth generator: confusion matrices and class prevalence define a
/// Dawid-Skene style process that emits soft scores.
struct SyntheticSpec {
  std::size_t num_models = 0;
  std::size_t num_items = 0;
  std::size_t num_classes = 0;
  Tensor3<double> true_confusions;  // |H| x C x C, rows sum to 1
  std::vector<double> class_prevalence;
  double sharpness = 4.0;
  std::uint64_t seed = 0;
};

/// Builds a spec whose model k has diagonal accuracies[k] and errors spread
/// uniformly over the other classes. Empty prevalence means uniform.
SyntheticSpec make_synthetic_spec(const std::vector<double>& accuracies, std::size_t num_items,
                                  std::size_t num_classes, std::uint64_t seed,
                                  double sharpness = 4.0, std::vector<double> prevalence = {});

/// Pure function of spec. Throws ConfigError on non-stochastic inputs.
BenchmarkTask generate_synthetic(const SyntheticSpec& spec);

struct ValidationReport {
  struct RowViolation {
    std::size_t model;
    std::size_t item;
    double row_sum;
  };
  std::vector<RowViolation> normalization_violations;
  std::vector<bool> hard_predictor;          // per model: every row one-hot
  std::vector<std::size_t> argmax_counts;    // per class, over all models and items
  std::vector<std::size_t> uncovered_classes;  // never an argmax
  std::vector<std::size_t> label_counts;     // per class, empty without labels
  std::size_t rescaled_rows = 0;

  [[nodiscard]] std::vector<std::string> warnings(const BenchmarkTask& task) const;
};

ValidationReport validate(const BenchmarkTask& task);

}  // namespace coda
