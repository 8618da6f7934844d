#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "coda/harness.hpp"

namespace coda {

/// Number of history rows included in a state payload.
inline constexpr std::size_t kHistoryTail = 10;

/// One interactive labeling session. Mutations are serialized by the
/// owning store; readers only touch the committed payload.
struct LabelSession {
  struct Entry {
    std::size_t step = 0;  // 1-based
    std::size_t item = 0;
    std::size_t label = 0;
    std::size_t chosen_model = 0;  // choice shown when the label was requested
    std::vector<double> pbest;
    BeliefSnapshot before;
  };

  std::string id;
  std::filesystem::path dir;
  std::filesystem::path manifest;
  RunConfig config;
  std::unique_ptr<BenchmarkTask> task;
  std::unique_ptr<SelectionEngine> engine;
  std::vector<Entry> history;
  std::optional<std::size_t> pending;

  std::mutex write_mutex;
  std::shared_ptr<const nlohmann::json> committed;
};

/// Sessions persisted under a data directory, one subdirectory each:
/// header.json, manifest.json, history.log (append-only, fsynced JSON
/// lines) and belief.f32le/belief.json. Reopening a directory replays each
/// history log from the prior, which reproduces the state exactly.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path data_dir);

  /// `manifest` is either a path string or an inline manifest object whose
  /// file paths are absolute or relative to the working directory.
  /// Throws DataError or ConfigError.
  nlohmann::json create(const nlohmann::json& manifest, const nlohmann::json& config);

  /// Throws NotFoundError.
  [[nodiscard]] std::shared_ptr<const nlohmann::json> state(const std::string& id) const;

  /// `step` is the 1-based step being answered. Re-sending a recorded
  /// (step, item, class) returns the current payload unchanged. Throws
  /// NotFoundError, ConflictError (stale or mismatched item, finished
  /// session) or ConfigError (class out of range).
  nlohmann::json submit_label(const std::string& id, std::size_t step, const std::string& item_id,
                              std::size_t class_index);

  /// Throws ConflictError when there is nothing to undo.
  nlohmann::json undo_last(const std::string& id);

  /// History as CSV, one row per recorded label.
  std::string export_csv(const std::string& id);

  [[nodiscard]] std::vector<std::string> list() const;
  [[nodiscard]] const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  std::shared_ptr<LabelSession> find(const std::string& id) const;
  std::shared_ptr<LabelSession> open(const std::filesystem::path& dir);
  void commit(LabelSession& s);
  void record_label(LabelSession& s, std::size_t item, std::size_t label);
  void record_undo(LabelSession& s);
  std::string new_id();

  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<LabelSession>> sessions_;
};

/// The state payload served to clients.
nlohmann::json session_payload(LabelSession& s);

}  // namespace coda
