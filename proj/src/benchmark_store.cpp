#include "coda/benchmark_store.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "coda/errors.hpp"
#include "coda/io.hpp"
#include "coda/rng.hpp"

namespace coda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError(std::string("duplicate ") + what + " id: " + id);
  }
}

std::unordered_map<std::string, std::size_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> m;
  m.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], i);
  return m;
}

std::size_t sample_categorical(std::span<const double> probs, SplitMix64& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    acc += probs[c];
    if (u < acc) return c;
  }
  // u landed in the rounding gap above the last cumulative sum
  for (std::size_t c = probs.size(); c-- > 0;) {
    if (probs[c] > 0.0) return c;
  }
  return probs.size() - 1;
}

}  // namespace

int argmax_class(std::span<const float> row) {
  return static_cast<int>(argmax_lowest(row));
}

BenchmarkTask::BenchmarkTask(std::vector<std::string> model_ids, std::vector<std::string> item_ids,
                             std::size_t num_classes, std::vector<float> predictions,
                             std::optional<std::vector<int>> oracle_labels,
                             std::vector<std::string> item_uris,
                             std::vector<std::string> class_names)
    : model_ids_(std::move(model_ids)),
      item_ids_(std::move(item_ids)),
      num_classes_(num_classes),
      predictions_(std::move(predictions)),
      oracle_labels_(std::move(oracle_labels)),
      item_uris_(std::move(item_uris)),
      class_names_(std::move(class_names)) {
  const std::size_t H = model_ids_.size();
  const std::size_t D = item_ids_.size();
  const std::size_t C = num_classes_;
  if (H < 2) throw DataError("a benchmark task needs at least 2 models");
  if (D < 1) throw DataError("a benchmark task needs at least 1 item");
  if (C < 2) throw DataError("a benchmark task needs at least 2 classes");
  require_unique(model_ids_, "model");
  require_unique(item_ids_, "item");
  if (predictions_.size() != H * D * C) {
    throw DataError("shape mismatch: expected " + std::to_string(H * D * C) +
                    " prediction values, got " + std::to_string(predictions_.size()));
  }
  if (!item_uris_.empty() && item_uris_.size() != D) {
    throw DataError("item_uris length does not match item count");
  }
  if (!class_names_.empty() && class_names_.size() != C) {
    throw DataError("class_names length does not match num_classes");
  }
  if (oracle_labels_) {
    if (oracle_labels_->size() != D) throw DataError("label count does not match item count");
    for (std::size_t i = 0; i < D; ++i) {
      const int y = (*oracle_labels_)[i];
      if (y < 0 || static_cast<std::size_t>(y) >= C) {
        throw DataError("label index " + std::to_string(y) + " out of range for item " +
                        item_ids_[i]);
      }
    }
  }

  for (std::size_t r = 0; r < H * D; ++r) {
    float* row = predictions_.data() + r * C;
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (!std::isfinite(row[c])) {
        throw DataError("non-finite score for model " + model_ids_[r / D] + ", item " +
                        item_ids_[r % D]);
      }
      if (row[c] < 0.0f) {
        throw DataError("negative score for model " + model_ids_[r / D] + ", item " +
                        item_ids_[r % D]);
      }
      sum += row[c];
    }
    if (!(sum > 0.0)) {
      throw DataError("all-zero prediction row for model " + model_ids_[r / D] + ", item " +
                      item_ids_[r % D]);
    }
    if (std::abs(sum - 1.0) > kNormalizedRowTolerance) {
      for (std::size_t c = 0; c < C; ++c) row[c] = static_cast<float>(row[c] / sum);
      ++rescaled_rows_;
    }
  }

  hard_ = Matrix<int>(H, D);
  mean_pred_ = Matrix<double>(H, C, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t i = 0; i < D; ++i) {
      const auto p = prediction(k, i);
      hard_(k, i) = argmax_class(p);
      for (std::size_t c = 0; c < C; ++c) mean_pred_(k, c) += p[c];
    }
    for (std::size_t c = 0; c < C; ++c) mean_pred_(k, c) /= static_cast<double>(D);
  }
}

BenchmarkTask BenchmarkTask::without_labels() const {
  return BenchmarkTask(model_ids_, item_ids_, num_classes_, predictions_, std::nullopt, item_uris_,
                       class_names_);
}

BenchmarkTask BenchmarkTask::permute_models(std::span<const std::size_t> order) const {
  const std::size_t H = num_models();
  const std::size_t stride = num_items() * num_classes_;
  if (order.size() != H) throw ConfigError("permutation length does not match model count");
  std::vector<bool> seen(H, false);
  std::vector<std::string> ids;
  std::vector<float> preds;
  preds.reserve(predictions_.size());
  for (std::size_t j = 0; j < H; ++j) {
    const std::size_t k = order[j];
    if (k >= H || seen[k]) throw ConfigError("invalid model permutation");
    seen[k] = true;
    ids.push_back(model_ids_[k]);
    preds.insert(preds.end(), predictions_.begin() + static_cast<std::ptrdiff_t>(k * stride),
                 predictions_.begin() + static_cast<std::ptrdiff_t>((k + 1) * stride));
  }
  return BenchmarkTask(std::move(ids), item_ids_, num_classes_, std::move(preds), oracle_labels_,
                       item_uris_, class_names_);
}

Matrix<int> hard_predictions(const BenchmarkTask& task) { return task.hard_predictions(); }

PredictionFormat parse_prediction_format(const std::string& s) {
  if (s == "f32le") return PredictionFormat::f32le;
  if (s == "csv") return PredictionFormat::csv;
  throw DataError("unknown predictions_format: " + s);
}

std::string to_string(PredictionFormat f) {
  return f == PredictionFormat::f32le ? "f32le" : "csv";
}

namespace {

std::vector<std::string> string_list(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw DataError(std::string("manifest field '") + field + "' must be an array of strings");
  }
  std::vector<std::string> out;
  for (const auto& v : j[field]) {
    if (!v.is_string()) throw DataError(std::string("manifest field '") + field + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<float> read_csv_predictions(const fs::path& path,
                                        const std::vector<std::string>& model_ids,
                                        const std::vector<std::string>& item_ids, std::size_t C) {
  const std::string text = io::read_file(path);
  const auto model_index = index_of(model_ids);
  const auto item_index = index_of(item_ids);
  const std::size_t D = item_ids.size();
  std::vector<float> preds(model_ids.size() * D * C, 0.0f);
  std::vector<bool> filled(model_ids.size() * D, false);
  std::size_t line_no = 0;
  for (auto line : io::split_lines(text)) {
    ++line_no;
    const auto fields = io::split_csv(line);
    if (fields.size() != C + 2) {
      throw DataError("shape mismatch: " + path.string() + " line " + std::to_string(line_no) +
                      " has " + std::to_string(fields.size() - 2) + " scores, manifest declares " +
                      std::to_string(C) + " classes");
    }
    float probe = 0.0f;
    const auto m = model_index.find(std::string(fields[0]));
    if (m == model_index.end()) {
      if (line_no == 1 && !io::parse_float(fields[2], probe)) continue;  // header
      throw DataError("unknown model id '" + std::string(fields[0]) + "' in " + path.string());
    }
    const auto it = item_index.find(std::string(fields[1]));
    if (it == item_index.end()) {
      throw DataError("unknown item id '" + std::string(fields[1]) + "' in " + path.string());
    }
    const std::size_t r = m->second * D + it->second;
    if (filled[r]) throw DataError("duplicate prediction row for " + std::string(line));
    filled[r] = true;
    for (std::size_t c = 0; c < C; ++c) {
      if (!io::parse_float(fields[c + 2], preds[r * C + c])) {
        throw DataError("unparseable score '" + std::string(fields[c + 2]) + "' in " +
                        path.string());
      }
    }
  }
  for (std::size_t r = 0; r < filled.size(); ++r) {
    if (!filled[r]) {
      throw DataError("shape mismatch: missing prediction row for model " + model_ids[r / D] +
                      ", item " + item_ids[r % D]);
    }
  }
  return preds;
}

std::vector<int> read_labels(const fs::path& path, const std::vector<std::string>& item_ids,
                             std::size_t C) {
  const std::string text = io::read_file(path);
  const auto item_index = index_of(item_ids);
  std::vector<int> labels(item_ids.size(), -1);
  std::size_t line_no = 0;
  for (auto line : io::split_lines(text)) {
    ++line_no;
    const auto fields = io::split_csv(line);
    if (fields.size() != 2) throw DataError("labels file rows must be 'item_id,class_index'");
    long long cls = 0;
    if (!io::parse_int(fields[1], cls)) {
      if (line_no == 1) continue;  // header
      throw DataError("unparseable class index '" + std::string(fields[1]) + "'");
    }
    const auto it = item_index.find(std::string(fields[0]));
    if (it == item_index.end()) throw DataError("unknown item id in labels: " + std::string(fields[0]));
    if (cls < 0 || static_cast<std::size_t>(cls) >= C) {
      throw DataError("label index " + std::to_string(cls) + " out of range (C=" +
                      std::to_string(C) + ")");
    }
    labels[it->second] = static_cast<int>(cls);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("labels file has no entry for item " + item_ids[i]);
  }
  return labels;
}

}  // namespace

BenchmarkTask load_benchmark(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw DataError("manifest not found: " + manifest_path.string());
  json m;
  try {
    m = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("manifest is not valid JSON: " + std::string(e.what()));
  }
  const fs::path base = manifest_path.parent_path();
  auto model_ids = string_list(m, "model_ids");
  auto item_ids = string_list(m, "item_ids");
  if (!m.contains("num_classes") || !m["num_classes"].is_number_integer() ||
      m["num_classes"].get<long long>() < 2) {
    throw DataError("manifest field 'num_classes' must be an integer >= 2");
  }
  const auto C = m["num_classes"].get<std::size_t>();
  if (!m.contains("predictions_file") || !m["predictions_file"].is_string()) {
    throw DataError("manifest field 'predictions_file' is required");
  }
  const auto format = parse_prediction_format(m.value("predictions_format", std::string("f32le")));
  const fs::path pred_path = base / m["predictions_file"].get<std::string>();
  if (!fs::exists(pred_path)) throw DataError("predictions file not found: " + pred_path.string());

  std::vector<float> preds;
  if (format == PredictionFormat::f32le) {
    preds = io::decode_f32le(io::read_file(pred_path));
    const std::size_t expected = model_ids.size() * item_ids.size() * C;
    if (preds.size() != expected) {
      throw DataError("shape mismatch: " + pred_path.string() + " holds " +
                      std::to_string(preds.size()) + " floats, manifest implies " +
                      std::to_string(expected));
    }
  } else {
    preds = read_csv_predictions(pred_path, model_ids, item_ids, C);
  }

  std::optional<std::vector<int>> labels;
  if (m.contains("labels_file") && !m["labels_file"].is_null()) {
    const fs::path label_path = base / m["labels_file"].get<std::string>();
    if (!fs::exists(label_path)) throw DataError("labels file not found: " + label_path.string());
    labels = read_labels(label_path, item_ids, C);
  }
  std::vector<std::string> uris;
  if (m.contains("item_uris")) uris = string_list(m, "item_uris");
  std::vector<std::string> class_names;
  if (m.contains("class_names")) class_names = string_list(m, "class_names");

  return BenchmarkTask(std::move(model_ids), std::move(item_ids), C, std::move(preds),
                       std::move(labels), std::move(uris), std::move(class_names));
}

fs::path save_benchmark(const BenchmarkTask& task, const fs::path& dir, PredictionFormat format) {
  fs::create_directories(dir);
  json m;
  m["model_ids"] = task.model_ids();
  m["item_ids"] = task.item_ids();
  m["num_classes"] = task.num_classes();
  m["predictions_format"] = to_string(format);
  if (format == PredictionFormat::f32le) {
    m["predictions_file"] = "predictions.f32le";
    io::write_file_atomic(dir / "predictions.f32le", io::encode_f32le(task.predictions()));
  } else {
    m["predictions_file"] = "predictions.csv";
    std::string out;
    for (std::size_t k = 0; k < task.num_models(); ++k) {
      for (std::size_t i = 0; i < task.num_items(); ++i) {
        out += task.model_ids()[k];
        out += ',';
        out += task.item_ids()[i];
        for (float v : task.prediction(k, i)) {
          out += ',';
          out += io::format_float(v);
        }
        out += '\n';
      }
    }
    io::write_file_atomic(dir / "predictions.csv", out);
  }
  if (task.has_labels()) {
    m["labels_file"] = "labels.csv";
    std::string out = "item_id,class_index\n";
    for (std::size_t i = 0; i < task.num_items(); ++i) {
      out += task.item_ids()[i] + "," + std::to_string((*task.oracle_labels())[i]) + "\n";
    }
    io::write_file_atomic(dir / "labels.csv", out);
  }
  if (!task.item_uris().empty()) m["item_uris"] = task.item_uris();
  if (!task.class_names().empty()) m["class_names"] = task.class_names();
  const fs::path manifest = dir / "manifest.json";
  io::write_file_atomic(manifest, m.dump(2) + "\n");
  return manifest;
}

SyntheticSpec make_synthetic_spec(const std::vector<double>& accuracies, std::size_t num_items,
                                  std::size_t num_classes, std::uint64_t seed, double sharpness,
                                  std::vector<double> prevalence) {
  SyntheticSpec spec;
  spec.num_models = accuracies.size();
  spec.num_items = num_items;
  spec.num_classes = num_classes;
  spec.seed = seed;
  spec.sharpness = sharpness;
  spec.true_confusions = Tensor3<double>(accuracies.size(), num_classes, num_classes);
  for (std::size_t k = 0; k < accuracies.size(); ++k) {
    const double acc = accuracies[k];
    if (!(acc >= 0.0 && acc <= 1.0)) throw ConfigError("accuracy must lie in [0, 1]");
    const double off = num_classes > 1 ? (1.0 - acc) / static_cast<double>(num_classes - 1) : 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t cp = 0; cp < num_classes; ++cp) {
        spec.true_confusions(k, c, cp) = c == cp ? acc : off;
      }
    }
  }
  spec.class_prevalence = prevalence.empty()
                              ? std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes))
                              : std::move(prevalence);
  return spec;
}

BenchmarkTask generate_synthetic(const SyntheticSpec& spec) {
  const std::size_t H = spec.num_models;
  const std::size_t D = spec.num_items;
  const std::size_t C = spec.num_classes;
  if (H < 2 || D < 1 || C < 2) throw ConfigError("synthetic spec needs >= 2 models, >= 1 item, >= 2 classes");
  const auto& conf = spec.true_confusions;
  if (conf.dim0() != H || conf.dim1() != C || conf.dim2() != C) {
    throw ConfigError("true_confusions must have shape |H| x C x C");
  }
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (double v : conf.row(k, c)) {
        if (!(v >= 0.0)) throw ConfigError("confusion entries must be non-negative");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) {
        throw ConfigError("confusion row (" + std::to_string(k) + "," + std::to_string(c) +
                          ") is not stochastic");
      }
    }
  }
  if (spec.class_prevalence.size() != C) throw ConfigError("class_prevalence must have length C");
  double ps = 0.0;
  for (double v : spec.class_prevalence) {
    if (!(v >= 0.0)) throw ConfigError("class_prevalence entries must be non-negative");
    ps += v;
  }
  if (std::abs(ps - 1.0) > 1e-9) throw ConfigError("class_prevalence does not sum to 1");
  if (!(spec.sharpness > 0.0) || !std::isfinite(spec.sharpness)) {
    throw ConfigError("sharpness must be a positive finite number");
  }

  const double denom = spec.sharpness + static_cast<double>(C - 1);
  const float peak = static_cast<float>(spec.sharpness / denom);
  const float rest = static_cast<float>(1.0 / denom);

  SplitMix64 rng(spec.seed);
  std::vector<int> labels(D);
  std::vector<float> preds(H * D * C, rest);
  for (std::size_t i = 0; i < D; ++i) {
    const std::size_t y = sample_categorical(spec.class_prevalence, rng);
    labels[i] = static_cast<int>(y);
    for (std::size_t k = 0; k < H; ++k) {
      const std::size_t pred = sample_categorical(conf.row(k, y), rng);
      preds[(k * D + i) * C + pred] = peak;
    }
  }
  std::vector<std::string> model_ids(H), item_ids(D);
  for (std::size_t k = 0; k < H; ++k) model_ids[k] = "model" + std::to_string(k);
  for (std::size_t i = 0; i < D; ++i) item_ids[i] = "item" + std::to_string(i);
  return BenchmarkTask(std::move(model_ids), std::move(item_ids), C, std::move(preds),
                       std::move(labels));
}

ValidationReport validate(const BenchmarkTask& task) {
  const std::size_t H = task.num_models();
  const std::size_t D = task.num_items();
  const std::size_t C = task.num_classes();
  ValidationReport r;
  r.rescaled_rows = task.rescaled_rows();
  r.hard_predictor.assign(H, true);
  r.argmax_counts.assign(C, 0);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t i = 0; i < D; ++i) {
      const auto p = task.prediction(k, i);
      double s = 0.0;
      std::size_t ones = 0, zeros = 0;
      for (float v : p) {
        s += v;
        if (v == 1.0f) ++ones;
        else if (v == 0.0f) ++zeros;
      }
      if (std::abs(s - 1.0) > 1e-4) r.normalization_violations.push_back({k, i, s});
      if (!(ones == 1 && zeros == C - 1)) r.hard_predictor[k] = false;
      ++r.argmax_counts[static_cast<std::size_t>(task.hard_predictions()(k, i))];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    if (r.argmax_counts[c] == 0) r.uncovered_classes.push_back(c);
  }
  if (task.has_labels()) {
    r.label_counts.assign(C, 0);
    for (int y : *task.oracle_labels()) ++r.label_counts[static_cast<std::size_t>(y)];
  }
  return r;
}

std::vector<std::string> ValidationReport::warnings(const BenchmarkTask& task) const {
  std::vector<std::string> out;
  if (!normalization_violations.empty()) {
    out.push_back(std::to_string(normalization_violations.size()) +
                  " prediction rows do not sum to 1 within 1e-4");
  }
  for (std::size_t k = 0; k < hard_predictor.size(); ++k) {
    if (hard_predictor[k]) out.push_back("model " + task.model_ids()[k] + ": hard predictor");
  }
  for (std::size_t c : uncovered_classes) {
    out.push_back("class " + std::to_string(c) + " never appears as an argmax prediction");
  }
  return out;
}

}  // namespace coda
