// coda: command-line front end.
//
// Exit codes: 0 ok, 2 usage or configuration error, 3 data error.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "coda/errors.hpp"
#include "coda/harness.hpp"
#include "coda/io.hpp"
#include "coda/service.hpp"

namespace {

using nlohmann::json;
using namespace coda;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct PriorFlags {
  std::string mode = "consensus";
  double alpha = kDefaultAlpha;
  double temperature = kDefaultTemperature;
  double eta = kDefaultEta;
  std::size_t grid = kDefaultGridSize;

  void attach(CLI::App* cmd) {
    cmd->add_option("--prior", mode, "Prior: consensus, diagonal or uniform")
        ->capture_default_str();
    cmd->add_option("--alpha", alpha, "Consensus blend weight")->capture_default_str();
    cmd->add_option("--temp", temperature, "Prior temperature T")->capture_default_str();
    cmd->add_option("--eta", eta, "Label update step")->capture_default_str();
    cmd->add_option("--grid", grid, "Quadrature nodes")->capture_default_str();
  }

  [[nodiscard]] PriorConfig prior() const {
    PriorConfig p;
    p.mode = parse_prior_mode(mode);
    p.alpha = alpha;
    p.temperature = temperature;
    p.validate();
    return p;
  }
};

SessionService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CODA: consensus-driven active model selection"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Simulate active selection with oracle labels");
  std::string run_manifest, run_out, run_method = "eig", run_selector = "pbest", run_config;
  std::size_t run_budget = kDefaultBudget, run_seeds = 5, run_jobs = 0, run_subsample = 0;
  bool run_freeze = false;
  PriorFlags run_prior;
  run->add_option("--manifest", run_manifest, "Benchmark manifest with labels")->required();
  run->add_option("--out", run_out, "Report directory")->required();
  run->add_option("--config", run_config, "RunConfig JSON; explicit flags override it");
  run->add_option("--method", run_method, "Acquisition: eig, random or uncertainty")
      ->capture_default_str();
  run->add_option("--selector", run_selector, "Model choice: pbest or risk")->capture_default_str();
  run->add_option("--budget", run_budget, "Labels per run")->capture_default_str();
  run->add_option("--seeds", run_seeds, "Number of seeds, 0..n-1")->capture_default_str();
  run->add_option("--jobs", run_jobs, "Parallel runs (0 = OpenMP default)")->capture_default_str();
  run->add_option("--candidate-subsample", run_subsample,
                  "Score only this many random candidates per step (0 = all)")
      ->capture_default_str();
  run->add_flag("--freeze-marginal", run_freeze, "Keep the class marginal from the prior");
  run_prior.attach(run);

  // unsupervised
  auto* unsup = app.add_subcommand("unsupervised", "Pick a model from the consensus prior alone");
  std::string unsup_manifest, unsup_out;
  PriorFlags unsup_prior;
  unsup->add_option("--manifest", unsup_manifest, "Benchmark manifest")->required();
  unsup->add_option("--out", unsup_out, "Also write the JSON result here");
  unsup_prior.attach(unsup);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark");
  std::size_t syn_models = 10, syn_items = 2000, syn_classes = 5;
  std::uint64_t syn_seed = 0;
  double syn_sharpness = 4.0;
  std::string syn_profile, syn_out, syn_format = "f32le";
  synth->add_option("--models", syn_models, "Number of models")->capture_default_str();
  synth->add_option("--items", syn_items, "Number of items")->capture_default_str();
  synth->add_option("--classes", syn_classes, "Number of classes")->capture_default_str();
  synth->add_option("--seed", syn_seed, "Generator seed")->capture_default_str();
  synth->add_option("--sharpness", syn_sharpness, "Soft-score peak knob")->capture_default_str();
  synth->add_option("--accuracy-profile", syn_profile,
                    "JSON {accuracies: [...], class_prevalence?: [...], sharpness?: x}; "
                    "default spreads accuracies from 0.9 down to 0.6");
  synth->add_option("--format", syn_format, "f32le or csv")->capture_default_str();
  synth->add_option("--out", syn_out, "Output directory")->required();

  // validate
  auto* val = app.add_subcommand("validate", "Report normalization and coverage problems");
  std::string val_manifest;
  val->add_option("--manifest", val_manifest, "Benchmark manifest")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "Run the labeling session service");
  std::string serve_addr = "127.0.0.1:8080", serve_data, serve_ui;
  serve->add_option("--addr", serve_addr, "HOST:PORT")->capture_default_str();
  serve->add_option("--data", serve_data, "Session directory")->required();
  serve->add_option("--ui", serve_ui, "Static UI bundle served under /ui");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      RunConfig cfg;
      if (!run_config.empty()) {
        json j;
        try {
          j = json::parse(io::read_file(run_config));
        } catch (const json::exception& e) {
          throw ConfigError(std::string("bad config file: ") + e.what());
        }
        cfg = run_config_from_json(j);
      }
      auto given = [&](const char* flag) { return run->count(flag) > 0 || run_config.empty(); };
      if (given("--method")) cfg.method.kind = parse_acquisition_kind(run_method);
      if (given("--selector")) cfg.selector = parse_selector(run_selector);
      if (given("--budget")) cfg.budget = run_budget;
      if (given("--candidate-subsample")) cfg.method.candidate_subsample = run_subsample;
      if (given("--freeze-marginal")) cfg.freeze_marginal = run_freeze;
      if (given("--prior")) cfg.prior.mode = parse_prior_mode(run_prior.mode);
      if (given("--alpha")) cfg.prior.alpha = run_prior.alpha;
      if (given("--temp")) cfg.prior.temperature = run_prior.temperature;
      if (given("--eta")) cfg.eta = run_prior.eta;
      if (given("--grid")) cfg.grid_size = run_prior.grid;
      if (given("--seeds")) {
        cfg.seeds.resize(run_seeds);
        std::iota(cfg.seeds.begin(), cfg.seeds.end(), std::uint64_t{0});
      }
      cfg.validate();
      const auto task = load_benchmark(run_manifest);
      cfg.validate(&task);
      const auto runs = run_many(task, cfg, run_jobs);
      const auto summary = aggregate(runs, task, cfg);
      export_report(summary, runs, run_out);
      std::cout << "best model " << task.model_ids()[summary.best_model] << "; cumulative regret at step "
                << summary.budget << ": " << summary.mean_cum_regret.back() << " +/- "
                << summary.std_cum_regret.back() << " points over " << summary.num_runs
                << " seeds\n";
    } else if (*unsup) {
      const auto task = load_benchmark(unsup_manifest);
      const auto res = run_unsupervised(task, unsup_prior.prior(), unsup_prior.grid, unsup_prior.eta);
      json out{{"model", res.model},
               {"model_id", res.model_id},
               {"pbest", res.pbest.probs},
               {"mean_accuracy", res.mean_accuracy}};
      if (res.regret_at_0) out["regret_at_0"] = *res.regret_at_0;
      const auto text = out.dump(2) + "\n";
      if (!unsup_out.empty()) io::write_file_atomic(unsup_out, text);
      std::cout << text;
    } else if (*synth) {
      std::vector<double> acc;
      std::vector<double> prevalence;
      double sharpness = syn_sharpness;
      if (!syn_profile.empty()) {
        json p;
        try {
          p = json::parse(io::read_file(syn_profile));
          acc = p.at("accuracies").get<std::vector<double>>();
          if (p.contains("class_prevalence")) {
            prevalence = p.at("class_prevalence").get<std::vector<double>>();
          }
          if (p.contains("sharpness")) sharpness = p.at("sharpness").get<double>();
        } catch (const json::exception& e) {
          throw ConfigError(std::string("bad accuracy profile: ") + e.what());
        }
        if (acc.size() != syn_models) {
          throw ConfigError("accuracy profile lists " + std::to_string(acc.size()) +
                            " models, --models is " + std::to_string(syn_models));
        }
      } else {
        for (std::size_t k = 0; k < syn_models; ++k) {
          acc.push_back(syn_models > 1 ? 0.9 - 0.3 * static_cast<double>(k) /
                                                   static_cast<double>(syn_models - 1)
                                       : 0.9);
        }
      }
      for (double a : acc) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("accuracies must lie in [0, 1]");
      }
      if (!(sharpness > 0.0)) throw ConfigError("sharpness must be positive");
      const auto spec =
          make_synthetic_spec(acc, syn_items, syn_classes, syn_seed, sharpness, prevalence);
      const auto task = generate_synthetic(spec);
      const auto path = save_benchmark(task, syn_out, parse_prediction_format(syn_format));
      std::cout << path.string() << "\n";
    } else if (*val) {
      const auto task = load_benchmark(val_manifest);
      const auto report = validate(task);
      std::vector<std::string> hard;
      for (std::size_t k = 0; k < report.hard_predictor.size(); ++k) {
        if (report.hard_predictor[k]) hard.push_back(task.model_ids()[k]);
      }
      json out{{"models", task.num_models()},
               {"items", task.num_items()},
               {"classes", task.num_classes()},
               {"normalization_violations", report.normalization_violations.size()},
               {"rescaled_rows", report.rescaled_rows},
               {"hard_predictors", hard},
               {"argmax_counts", report.argmax_counts},
               {"uncovered_classes", report.uncovered_classes},
               {"label_counts", report.label_counts},
               {"warnings", report.warnings(task)}};
      std::cout << out.dump(2) << "\n";
    } else if (*serve) {
      const auto colon = serve_addr.rfind(':');
      if (colon == std::string::npos) throw ConfigError("--addr must be HOST:PORT");
      const auto host = serve_addr.substr(0, colon);
      long long port = 0;
      if (!io::parse_int(serve_addr.substr(colon + 1), port) || port < 0 || port > 65535) {
        throw ConfigError("bad port in --addr");
      }
      std::optional<std::string> token;
      if (const char* t = std::getenv(kTokenEnv); t && *t) token = t;
      std::optional<std::filesystem::path> ui;
      if (!serve_ui.empty()) ui = serve_ui;
      SessionStore store(serve_data);
      SessionService service(store, token, ui);
      if (!service.bind(host, static_cast<int>(port))) {
        std::cerr << "error: cannot bind " << serve_addr << "\n";
        return kExitData;
      }
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving on " << serve_addr << "\n";
      service.serve();
      g_service = nullptr;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
