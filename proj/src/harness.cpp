#include "coda/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <sstream>

#include <omp.h>

#include "coda/errors.hpp"
#include "coda/io.hpp"
#include "coda/rng.hpp"

namespace coda {

using nlohmann::json;

SelectorKind parse_selector(const std::string& s) {
  if (s == "pbest") return SelectorKind::pbest;
  if (s == "empirical_risk" || s == "risk") return SelectorKind::empirical_risk;
  throw ConfigError("unknown selector: " + s);
}

std::string to_string(SelectorKind s) {
  return s == SelectorKind::pbest ? "pbest" : "empirical_risk";
}

void RunConfig::validate(const BenchmarkTask* task) const {
  prior.validate();
  if (budget < 1) throw ConfigError("budget must be at least 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
  if (grid_size < 3) throw ConfigError("grid size must be at least 3");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (task && budget > task->num_items()) {
    throw ConfigError("budget " + std::to_string(budget) + " exceeds the pool of " +
                      std::to_string(task->num_items()) + " items");
  }
}

json to_json(const RunConfig& c) {
  return json{
      {"method", to_string(c.method.kind)},
      {"selector", to_string(c.selector)},
      {"budget", c.budget},
      {"prior",
       {{"mode", to_string(c.prior.mode)},
        {"alpha", c.prior.alpha},
        {"temperature", c.prior.temperature}}},
      {"eta", c.eta},
      {"grid_size", c.grid_size},
      {"seeds", c.seeds},
      {"freeze_marginal", c.freeze_marginal},
      {"candidate_subsample", c.method.candidate_subsample},
  };
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("method")) c.method.kind = parse_acquisition_kind(j.at("method").get<std::string>());
    if (j.contains("selector")) c.selector = parse_selector(j.at("selector").get<std::string>());
    if (j.contains("budget")) c.budget = j.at("budget").get<std::size_t>();
    if (j.contains("prior")) {
      const auto& p = j.at("prior");
      if (p.contains("mode")) c.prior.mode = parse_prior_mode(p.at("mode").get<std::string>());
      if (p.contains("alpha")) c.prior.alpha = p.at("alpha").get<double>();
      if (p.contains("temperature")) c.prior.temperature = p.at("temperature").get<double>();
    }
    if (j.contains("eta")) c.eta = j.at("eta").get<double>();
    if (j.contains("grid_size")) c.grid_size = j.at("grid_size").get<std::size_t>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("freeze_marginal")) c.freeze_marginal = j.at("freeze_marginal").get<bool>();
    if (j.contains("candidate_subsample")) {
      c.method.candidate_subsample = j.at("candidate_subsample").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  c.validate();
  return c;
}

SelectionEngine::SelectionEngine(const BenchmarkTask& task, Options options)
    : task_(task),
      options_(std::move(options)),
      belief_(initial_belief(task, options_.prior, options_.eta)),
      marginalizer_(Marginalizer::recompute()),
      labeled_(task.num_items(), false) {
  if (options_.grid_size < 3) throw ConfigError("grid size must be at least 3");
  if (options_.freeze_marginal) {
    marginalizer_ = Marginalizer::frozen(class_marginal(task_, belief_));
  }
  if (options_.method.kind == AcquisitionKind::eig) {
    scorer_ = std::make_unique<EigScorer>(task_, options_.grid_size);
  }
}

ClassMarginal SelectionEngine::marginal() const { return marginalizer_.evaluate(task_, belief_); }

const PBest& SelectionEngine::pbest() {
  if (!pbest_) pbest_ = compute_pbest(belief_, marginal(), options_.grid_size);
  return *pbest_;
}

std::vector<double> SelectionEngine::mean_accuracy() const {
  return coda::mean_accuracy(belief_, marginal());
}

std::size_t SelectionEngine::next_query(std::size_t step, EigInstrumentation* instrumentation) {
  return select_next(belief_, task_, labeled_, options_.method, step, options_.grid_size,
                     marginalizer_, scorer_.get(), instrumentation);
}

void SelectionEngine::apply_label(std::size_t item, std::size_t true_class) {
  if (item >= task_.num_items()) throw ConfigError("item index out of range");
  if (labeled_[item]) {
    throw ConflictError("item " + task_.item_ids()[item] + " is already labeled");
  }
  belief_.apply_label(task_, item, true_class, 1.0);
  labeled_[item] = true;
  ++num_labeled_;
  pbest_.reset();
}

void SelectionEngine::revert_label(std::size_t item, const BeliefSnapshot& before) {
  if (item >= task_.num_items() || !labeled_[item]) {
    throw ConflictError("item is not labeled");
  }
  belief_.restore(before);
  labeled_[item] = false;
  --num_labeled_;
  pbest_.reset();
}

TrueBest true_best(const BenchmarkTask& task) {
  if (!task.has_labels()) throw DataError("task has no oracle labels");
  const auto& labels = *task.oracle_labels();
  const auto& hard = task.hard_predictions();
  const std::size_t H = task.num_models();
  TrueBest out;
  out.correct.assign(H, 0);
  out.accuracy.assign(H, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t i = 0; i < task.num_items(); ++i) {
      if (hard(k, i) == labels[i]) ++out.correct[k];
    }
    out.accuracy[k] = static_cast<double>(out.correct[k]) / static_cast<double>(task.num_items());
    if (out.correct[k] > out.correct[out.model]) out.model = k;
  }
  return out;
}

double regret_at(const TrueBest& truth, std::size_t num_items, std::size_t chosen) {
  const auto diff = static_cast<double>(truth.correct[truth.model] - truth.correct[chosen]);
  return diff * 100.0 / static_cast<double>(num_items);
}

double regret_at(const BenchmarkTask& task, std::size_t chosen, std::size_t best) {
  const auto truth = true_best(task);
  if (chosen >= task.num_models() || best >= task.num_models()) {
    throw ConfigError("model index out of range");
  }
  const double diff = static_cast<double>(truth.correct[best]) -
                      static_cast<double>(truth.correct[chosen]);
  return diff * 100.0 / static_cast<double>(task.num_items());
}

namespace {

// Labeled-set accuracy leader; ties drawn uniformly with the run's generator.
std::size_t risk_choice(const std::vector<std::size_t>& labeled_correct, SplitMix64& rng) {
  std::size_t top = 0;
  for (auto v : labeled_correct) top = std::max(top, v);
  std::vector<std::size_t> leaders;
  for (std::size_t k = 0; k < labeled_correct.size(); ++k) {
    if (labeled_correct[k] == top) leaders.push_back(k);
  }
  return leaders[rng.below(leaders.size())];
}

}  // namespace

SelectionRun run_selection(const BenchmarkTask& task, const RunConfig& config, std::uint64_t seed) {
  config.validate(&task);
  const auto truth = true_best(task);
  const auto& labels = *task.oracle_labels();
  const auto& hard = task.hard_predictions();
  const std::size_t H = task.num_models();

  SelectionEngine::Options opts{config.method, config.prior, config.eta, config.grid_size,
                                config.freeze_marginal};
  opts.method.rng_seed = seed;
  SelectionEngine engine(task, opts);
  SplitMix64 tie_rng(mix_seed(seed, 0x7269736bULL));
  std::vector<std::size_t> labeled_correct(H, 0);

  SelectionRun run;
  run.seed = seed;
  double cum = 0.0;
  for (std::size_t t = 0; t < config.budget; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t chosen;
    if (config.selector == SelectorKind::pbest) {
      const auto& pb = engine.pbest();
      chosen = select_model(pb);
      run.pbest_trace.push_back(pb.probs);
    } else {
      chosen = risk_choice(labeled_correct, tie_rng);
    }
    const double r = regret_at(truth, task.num_items(), chosen);
    cum += r;
    run.chosen_models.push_back(chosen);
    run.regret.push_back(r);
    run.cumulative_regret.push_back(cum);

    EigInstrumentation instr;
    const std::size_t item = engine.next_query(t, &instr);
    const auto y = static_cast<std::size_t>(labels[item]);
    engine.apply_label(item, y);
    for (std::size_t k = 0; k < H; ++k) {
      if (hard(k, item) == labels[item]) ++labeled_correct[k];
    }
    run.queried_items.push_back(item);
    run.pbest_evaluations.push_back(instr.pbest_evaluations);
    run.wall_time_per_step.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return run;
}

std::vector<SelectionRun> run_many(const BenchmarkTask& task, const RunConfig& config,
                                   std::size_t jobs) {
  config.validate(&task);
  const std::size_t n = config.seeds.size();
  std::vector<SelectionRun> runs(n);
  std::vector<std::exception_ptr> errors(n);
  const int threads = jobs > 0 ? static_cast<int>(jobs) : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t s = 0; s < n; ++s) {
    try {
      runs[s] = run_selection(task, config, config.seeds[s]);
    } catch (...) {
      errors[s] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return runs;
}

UnsupervisedResult run_unsupervised(const BenchmarkTask& task, const PriorConfig& prior,
                                    std::size_t grid_size, double eta) {
  prior.validate();
  const auto state = initial_belief(task, prior, eta);
  const auto pi = class_marginal(task, state);
  UnsupervisedResult out;
  out.pbest = compute_pbest(state, pi, grid_size);
  out.model = select_model(out.pbest);
  out.model_id = task.model_ids()[out.model];
  out.mean_accuracy = mean_accuracy(state, pi);
  if (task.has_labels()) out.regret_at_0 = regret_at(true_best(task), task.num_items(), out.model);
  return out;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - mean) * (x - mean);
  sd = std::sqrt(v / static_cast<double>(xs.size()));
}

}  // namespace

RunSummary aggregate(const std::vector<SelectionRun>& runs, const BenchmarkTask& task,
                     const RunConfig& config) {
  if (runs.empty()) throw ConfigError("no runs to aggregate");
  const std::size_t T = runs.front().regret.size();
  for (const auto& r : runs) {
    if (r.regret.size() != T || r.cumulative_regret.size() != T || r.chosen_models.size() != T) {
      throw ConfigError("runs have mismatched budgets");
    }
  }
  const auto truth = true_best(task);
  RunSummary s;
  s.config = config;
  s.num_models = task.num_models();
  s.num_items = task.num_items();
  s.num_classes = task.num_classes();
  s.best_model = truth.model;
  s.budget = T;
  s.num_runs = runs.size();
  const auto n = static_cast<double>(runs.size());
  std::vector<double> col(runs.size());
  for (std::size_t t = 0; t < T; ++t) {
    double m, sd;
    for (std::size_t r = 0; r < runs.size(); ++r) col[r] = runs[r].regret[t];
    mean_std(col, m, sd);
    s.mean_regret.push_back(m);
    s.std_regret.push_back(sd);
    for (std::size_t r = 0; r < runs.size(); ++r) col[r] = runs[r].cumulative_regret[t];
    mean_std(col, m, sd);
    s.mean_cum_regret.push_back(m);
    s.std_cum_regret.push_back(sd);
    std::size_t hits = 0, near = 0;
    for (const auto& r : runs) {
      if (r.regret[t] == 0.0) ++hits;
      if (r.regret[t] <= kNearOptimalPoints) ++near;
    }
    s.success_rate.push_back(static_cast<double>(hits) / n);
    s.near_optimal_rate.push_back(static_cast<double>(near) / n);
  }
  for (const auto& r : runs) s.final_cum_regret.push_back(T ? r.cumulative_regret.back() : 0.0);
  return s;
}

json to_json(const RunSummary& s) {
  json final_numbers = json::object();
  if (s.budget > 0) {
    final_numbers = {
        {"mean_regret", s.mean_regret.back()},
        {"std_regret", s.std_regret.back()},
        {"mean_cum_regret", s.mean_cum_regret.back()},
        {"std_cum_regret", s.std_cum_regret.back()},
        {"success_rate", s.success_rate.back()},
        {"near_optimal_rate", s.near_optimal_rate.back()},
    };
  }
  return json{
      {"config", to_json(s.config)},
      {"task",
       {{"num_models", s.num_models},
        {"num_items", s.num_items},
        {"num_classes", s.num_classes},
        {"best_model", s.best_model}}},
      {"budget", s.budget},
      {"num_runs", s.num_runs},
      {"regret_units", "percentage_points"},
      {"final", final_numbers},
      {"final_cum_regret_per_run", s.final_cum_regret},
      {"curves",
       {{"mean_regret", s.mean_regret},
        {"std_regret", s.std_regret},
        {"mean_cum_regret", s.mean_cum_regret},
        {"std_cum_regret", s.std_cum_regret},
        {"success_rate", s.success_rate},
        {"near_optimal_rate", s.near_optimal_rate}}},
  };
}

RunSummary summary_from_json(const json& j) {
  try {
    RunSummary s;
    s.config = run_config_from_json(j.at("config"));
    const auto& t = j.at("task");
    s.num_models = t.at("num_models").get<std::size_t>();
    s.num_items = t.at("num_items").get<std::size_t>();
    s.num_classes = t.at("num_classes").get<std::size_t>();
    s.best_model = t.at("best_model").get<std::size_t>();
    s.budget = j.at("budget").get<std::size_t>();
    s.num_runs = j.at("num_runs").get<std::size_t>();
    s.final_cum_regret = j.at("final_cum_regret_per_run").get<std::vector<double>>();
    const auto& c = j.at("curves");
    s.mean_regret = c.at("mean_regret").get<std::vector<double>>();
    s.std_regret = c.at("std_regret").get<std::vector<double>>();
    s.mean_cum_regret = c.at("mean_cum_regret").get<std::vector<double>>();
    s.std_cum_regret = c.at("std_cum_regret").get<std::vector<double>>();
    s.success_rate = c.at("success_rate").get<std::vector<double>>();
    s.near_optimal_rate = c.at("near_optimal_rate").get<std::vector<double>>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed summary: ") + e.what());
  }
}

RunSummary load_summary(const std::filesystem::path& path) {
  const auto text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return summary_from_json(j);
}

void export_report(const RunSummary& s, const std::vector<SelectionRun>& runs,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream steps;
  steps << "step,mean_regret,std_regret,mean_cum_regret,std_cum_regret,success_rate,"
           "near_optimal_rate\n";
  for (std::size_t t = 0; t < s.budget; ++t) {
    steps << t << ',' << io::format_double(s.mean_regret[t]) << ','
          << io::format_double(s.std_regret[t]) << ',' << io::format_double(s.mean_cum_regret[t])
          << ',' << io::format_double(s.std_cum_regret[t]) << ','
          << io::format_double(s.success_rate[t]) << ','
          << io::format_double(s.near_optimal_rate[t]) << '\n';
  }
  io::write_file_atomic(dir / "steps.csv", steps.str());

  std::ostringstream per_run;
  per_run << "seed,step,queried_item,chosen_model,regret,cum_regret\n";
  for (const auto& r : runs) {
    for (std::size_t t = 0; t < r.regret.size(); ++t) {
      per_run << r.seed << ',' << t << ',' << r.queried_items[t] << ',' << r.chosen_models[t]
              << ',' << io::format_double(r.regret[t]) << ','
              << io::format_double(r.cumulative_regret[t]) << '\n';
    }
  }
  io::write_file_atomic(dir / "runs.csv", per_run.str());
  io::write_file_atomic(dir / "summary.json", to_json(s).dump(2) + "\n");

  json timing = json::array();
  for (const auto& r : runs) {
    double total = 0.0;
    for (double w : r.wall_time_per_step) total += w;
    timing.push_back({{"seed", r.seed},
                      {"total_seconds", total},
                      {"wall_time_per_step", r.wall_time_per_step},
                      {"pbest_evaluations", r.pbest_evaluations}});
  }
  io::write_file_atomic(dir / "timing.json", json{{"runs", timing}}.dump(2) + "\n");
}

}  // namespace coda
