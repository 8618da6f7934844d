#include "coda/session.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "coda/errors.hpp"
#include "coda/io.hpp"

namespace coda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

json history_row(const LabelSession& s, const LabelSession::Entry& e) {
  return json{{"step", e.step},
              {"item_index", e.item},
              {"item_id", s.task->item_ids()[e.item]},
              {"class_index", e.label},
              {"chosen_model", e.chosen_model},
              {"pbest", e.pbest}};
}

// Resolves relative data paths of an inline manifest against the working directory.
json absolutize_manifest(json m) {
  for (const char* key : {"predictions_file", "labels_file"}) {
    if (m.contains(key) && m[key].is_string()) {
      m[key] = fs::absolute(m[key].get<std::string>()).string();
    }
  }
  return m;
}

}  // namespace

json session_payload(LabelSession& s) {
  auto& engine = *s.engine;
  const auto& task = *s.task;
  const auto& pb = engine.pbest();
  const std::size_t chosen = select_model(pb);

  json pending = nullptr;
  if (s.pending) {
    const std::size_t i = *s.pending;
    pending = {{"index", i},
               {"item_id", task.item_ids()[i]},
               {"item_uri", task.item_uris().empty() ? json(nullptr) : json(task.item_uris()[i])},
               {"step", s.history.size() + 1}};
  }
  json tail = json::array();
  const std::size_t from = s.history.size() > kHistoryTail ? s.history.size() - kHistoryTail : 0;
  for (std::size_t h = from; h < s.history.size(); ++h) tail.push_back(history_row(s, s.history[h]));

  return json{{"session_id", s.id},
              {"step", s.history.size()},
              {"budget", s.config.budget},
              {"done", !s.pending.has_value()},
              {"num_classes", task.num_classes()},
              {"model_ids", task.model_ids()},
              {"class_names", task.class_names()},
              {"pbest", pb.probs},
              {"chosen_model", chosen},
              {"chosen_model_id", task.model_ids()[chosen]},
              {"mean_accuracy", engine.mean_accuracy()},
              {"pending_query", pending},
              {"history_length", s.history.size()},
              {"history_tail", tail}};
}

SessionStore::SessionStore(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  std::error_code ec;
  fs::create_directories(data_dir_, ec);
  if (ec) throw DataError("cannot create data directory " + data_dir_.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(data_dir_)) {
    if (entry.is_directory() && fs::exists(entry.path() / "header.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    auto s = open(d);
    sessions_.emplace(s->id, std::move(s));
  }
}

std::string SessionStore::new_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  for (;;) {
    std::ostringstream os;
    os << std::hex << gen();
    auto id = os.str();
    std::shared_lock lock(map_mutex_);
    if (!sessions_.count(id) && !fs::exists(data_dir_ / id)) return id;
  }
}

void SessionStore::commit(LabelSession& s) {
  if (s.history.size() < s.config.budget && s.engine->num_labeled() < s.task->num_items()) {
    s.pending = s.engine->next_query(s.history.size());
  } else {
    s.pending.reset();
  }
  auto payload = std::make_shared<const json>(session_payload(s));
  std::atomic_store(&s.committed, payload);
}

void SessionStore::record_label(LabelSession& s, std::size_t item, std::size_t label) {
  if (label >= s.task->num_classes()) throw ConfigError("class_index out of range");
  const auto& pb = s.engine->pbest();
  LabelSession::Entry e{s.history.size() + 1, item, label, select_model(pb), pb.probs,
                        s.engine->belief().snapshot()};
  s.engine->apply_label(item, label);
  s.history.push_back(std::move(e));
}

void SessionStore::record_undo(LabelSession& s) {
  if (s.history.empty()) throw ConflictError("nothing to undo");
  const auto& last = s.history.back();
  s.engine->revert_label(last.item, last.before);
  s.history.pop_back();
}

std::shared_ptr<LabelSession> SessionStore::open(const fs::path& dir) {
  const auto header = parse_json(io::read_file(dir / "header.json"), (dir / "header.json").string());
  auto s = std::make_shared<LabelSession>();
  s->dir = dir;
  try {
    s->id = header.at("session_id").get<std::string>();
    s->manifest = header.at("manifest").get<std::string>();
    s->config = run_config_from_json(header.at("config"));
  } catch (const json::exception& e) {
    throw DataError(dir.string() + ": malformed header: " + e.what());
  }
  s->task = std::make_unique<BenchmarkTask>(load_benchmark(s->manifest));
  s->config.validate(s->task.get());
  SelectionEngine::Options opts{s->config.method, s->config.prior, s->config.eta,
                                s->config.grid_size, s->config.freeze_marginal};
  opts.method.rng_seed = s->config.seeds.front();
  s->engine = std::make_unique<SelectionEngine>(*s->task, opts);

  const auto log = dir / "history.log";
  if (fs::exists(log)) {
    const auto text = io::read_file(log);
    for (auto line : io::split_lines(text)) {
      if (line.empty()) continue;
      const auto ev = parse_json(line, log.string());
      const auto op = ev.value("op", std::string());
      if (op == "label") {
        record_label(*s, ev.at("item").get<std::size_t>(), ev.at("class").get<std::size_t>());
      } else if (op == "undo") {
        record_undo(*s);
      } else {
        throw DataError(log.string() + ": unknown event " + op);
      }
    }
  }
  commit(*s);
  return s;
}

json SessionStore::create(const json& manifest, const json& config_json) {
  RunConfig config = config_json.is_null() ? RunConfig{} : run_config_from_json(config_json);
  const auto id = new_id();
  const auto dir = data_dir_ / id;

  fs::path manifest_path;
  json inline_manifest;
  if (manifest.is_string()) {
    manifest_path = fs::absolute(manifest.get<std::string>());
  } else if (manifest.is_object()) {
    inline_manifest = absolutize_manifest(manifest);
  } else {
    throw ConfigError("manifest must be a path or an object");
  }

  // Validate before anything touches disk.
  std::unique_ptr<BenchmarkTask> probe;
  if (!inline_manifest.is_null()) {
    const auto tmp = data_dir_ / ("." + id + ".manifest.json");
    io::write_file_atomic(tmp, inline_manifest.dump(2));
    try {
      probe = std::make_unique<BenchmarkTask>(load_benchmark(tmp));
    } catch (...) {
      fs::remove(tmp);
      throw;
    }
    fs::remove(tmp);
  } else {
    probe = std::make_unique<BenchmarkTask>(load_benchmark(manifest_path));
  }
  config.validate(probe.get());

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create session directory " + dir.string());
  if (!inline_manifest.is_null()) {
    manifest_path = dir / "manifest.json";
    io::write_file_atomic(manifest_path, inline_manifest.dump(2) + "\n");
  }
  const json header{{"session_id", id}, {"manifest", manifest_path.string()},
                    {"config", to_json(config)}};
  io::write_file_atomic(dir / "header.json", header.dump(2) + "\n");

  auto s = open(dir);
  save_belief(s->engine->belief(), dir / "belief");
  auto payload = std::atomic_load(&s->committed);
  {
    std::unique_lock lock(map_mutex_);
    sessions_.emplace(id, s);
  }
  return json{{"session_id", id}, {"state", *payload}};
}

std::shared_ptr<LabelSession> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session " + id);
  return it->second;
}

std::shared_ptr<const json> SessionStore::state(const std::string& id) const {
  return std::atomic_load(&find(id)->committed);
}

json SessionStore::submit_label(const std::string& id, std::size_t step, const std::string& item_id,
                                std::size_t class_index) {
  auto s = find(id);
  std::lock_guard lock(s->write_mutex);
  const auto& ids = s->task->item_ids();

  if (step >= 1 && step <= s->history.size()) {
    const auto& e = s->history[step - 1];
    if (ids[e.item] == item_id && e.label == class_index) return *std::atomic_load(&s->committed);
    throw ConflictError("step " + std::to_string(step) + " was already answered differently");
  }
  if (!s->pending) throw ConflictError("session is finished");
  if (step != s->history.size() + 1) {
    throw ConflictError("expected step " + std::to_string(s->history.size() + 1));
  }
  if (ids[*s->pending] != item_id) {
    throw ConflictError("item " + item_id + " is not the pending query");
  }
  if (class_index >= s->task->num_classes()) throw ConfigError("class_index out of range");

  const std::size_t item = *s->pending;
  const json ev{{"op", "label"}, {"step", step}, {"item", item}, {"class", class_index}};
  io::append_line_durable(s->dir / "history.log", ev.dump());
  record_label(*s, item, class_index);
  save_belief(s->engine->belief(), s->dir / "belief");
  commit(*s);
  return *std::atomic_load(&s->committed);
}

json SessionStore::undo_last(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->write_mutex);
  if (s->history.empty()) throw ConflictError("nothing to undo");
  const json ev{{"op", "undo"}, {"step", s->history.size()}};
  io::append_line_durable(s->dir / "history.log", ev.dump());
  record_undo(*s);
  save_belief(s->engine->belief(), s->dir / "belief");
  commit(*s);
  return *std::atomic_load(&s->committed);
}

std::string SessionStore::export_csv(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->write_mutex);
  const auto& task = *s->task;
  std::ostringstream os;
  os << "step,item_index,item_id,class_index,chosen_model,chosen_model_id,chosen_pbest\n";
  for (const auto& e : s->history) {
    os << e.step << ',' << e.item << ',' << task.item_ids()[e.item] << ',' << e.label << ','
       << e.chosen_model << ',' << task.model_ids()[e.chosen_model] << ','
       << io::format_double(e.pbest[e.chosen_model]) << '\n';
  }
  return os.str();
}

std::vector<std::string> SessionStore::list() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

}  // namespace coda
