#include "coda/belief_state.hpp"

#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

#include "coda/errors.hpp"
#include "coda/io.hpp"

namespace coda {

PriorMode parse_prior_mode(const std::string& s) {
  if (s == "uniform") return PriorMode::uniform;
  if (s == "diagonal") return PriorMode::diagonal;
  if (s == "consensus") return PriorMode::consensus;
  throw ConfigError("unknown prior mode: " + s);
}

std::string to_string(PriorMode m) {
  switch (m) {
    case PriorMode::uniform: return "uniform";
    case PriorMode::diagonal: return "diagonal";
    case PriorMode::consensus: return "consensus";
  }
  return "consensus";
}

void PriorConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be > 0");
  }
}

ConsensusSummary consensus(const BenchmarkTask& task) {
  const std::size_t H = task.num_models();
  const std::size_t D = task.num_items();
  const std::size_t C = task.num_classes();
  ConsensusSummary out{std::vector<int>(D), Matrix<double>(D, C, 0.0)};
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t i = 0; i < D; ++i) {
      const auto p = task.prediction(k, i);
      for (std::size_t c = 0; c < C; ++c) out.score_sums(i, c) += p[c];
    }
  }
  for (std::size_t i = 0; i < D; ++i) {
    out.consensus_labels[i] = static_cast<int>(argmax_lowest(std::span<const double>(out.score_sums.row(i))));
  }
  return out;
}

Tensor3<double> empirical_confusions(const BenchmarkTask& task, const ConsensusSummary& summary) {
  const std::size_t H = task.num_models();
  const std::size_t D = task.num_items();
  const std::size_t C = task.num_classes();
  Tensor3<double> m(H, C, C, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t i = 0; i < D; ++i) {
      auto row = m.row(k, static_cast<std::size_t>(summary.consensus_labels[i]));
      const auto p = task.prediction(k, i);
      for (std::size_t c = 0; c < C; ++c) row[c] += p[c];
    }
  }
  return m;
}

BeliefState::BeliefState(Tensor3<double> theta, double eta, PriorMode origin)
    : theta_(std::move(theta)), eta_(eta), origin_(origin) {
  if (theta_.dim1() != theta_.dim2() || theta_.dim1() < 2) {
    throw ConfigError("belief tensor must have shape |H| x C x C with C >= 2");
  }
  if (!(eta_ > 0.0) || !std::isfinite(eta_)) throw ConfigError("eta must be > 0");
  for (double v : theta_.data()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("concentrations must be positive");
  }
}

void BeliefState::apply_label(const BenchmarkTask& task, std::size_t item, std::size_t true_class,
                              double scale) {
  if (item >= task.num_items()) {
    throw ConfigError("item index " + std::to_string(item) + " out of range");
  }
  if (true_class >= num_classes()) {
    throw ConfigError("class index " + std::to_string(true_class) + " out of range");
  }
  if (task.num_models() != num_models() || task.num_classes() != num_classes()) {
    throw ConfigError("belief state shape does not match task");
  }
  if (!(scale > 0.0)) throw ConfigError("update scale must be positive");
  const auto& hard = task.hard_predictions();
  const double inc = scale * eta_;
  for (std::size_t k = 0; k < num_models(); ++k) {
    theta_(k, true_class, static_cast<std::size_t>(hard(k, item))) += inc;
  }
}

BeliefSnapshot BeliefState::snapshot() const {
  return BeliefSnapshot(num_models(), num_classes(), theta_.data());
}

void BeliefState::restore(const BeliefSnapshot& token) {
  if (token.models_ != num_models() || token.classes_ != num_classes() ||
      token.theta_.size() != theta_.size()) {
    throw ConfigError("stale snapshot: shape does not match belief state");
  }
  theta_.data() = token.theta_;
}

Tensor3<double> BeliefState::mean_confusions() const {
  const std::size_t H = num_models();
  const std::size_t C = num_classes();
  Tensor3<double> m(H, C, C);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto src = theta_.row(k, c);
      double s = 0.0;
      for (double v : src) s += v;
      auto dst = m.row(k, c);
      for (std::size_t cp = 0; cp < C; ++cp) dst[cp] = src[cp] / s;
    }
  }
  return m;
}

std::uint64_t BeliefState::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : theta_.data()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

BeliefState build_prior(const Tensor3<double>& empirical, const PriorConfig& config, double eta) {
  config.validate();
  const std::size_t H = empirical.dim0();
  const std::size_t C = empirical.dim1();
  if (empirical.dim2() != C) throw ConfigError("empirical confusions must be |H| x C x C");
  const double off_diag = config.mode == PriorMode::uniform ? 1.0 : 1.0 / static_cast<double>(C - 1);
  const double alpha = config.mode == PriorMode::consensus ? config.alpha : 0.0;
  Tensor3<double> theta(H, C, C);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t cp = 0; cp < C; ++cp) {
        const double beta = c == cp ? 1.0 : off_diag;
        theta(k, c, cp) = (beta + alpha * empirical(k, c, cp)) / config.temperature;
      }
    }
  }
  return BeliefState(std::move(theta), eta, config.mode);
}

BeliefState initial_belief(const BenchmarkTask& task, const PriorConfig& config, double eta) {
  return build_prior(empirical_confusions(task, consensus(task)), config, eta);
}

void save_belief(const BeliefState& state, const std::filesystem::path& prefix) {
  std::vector<float> values(state.theta().data().begin(), state.theta().data().end());
  auto tensor_path = prefix;
  tensor_path += ".f32le";
  auto header_path = prefix;
  header_path += ".json";
  io::write_file_atomic(tensor_path, io::encode_f32le(values));
  nlohmann::json j;
  j["shape"] = {state.num_models(), state.num_classes(), state.num_classes()};
  j["eta"] = state.eta();
  j["origin"] = to_string(state.origin());
  j["tensor_file"] = tensor_path.filename().string();
  io::write_file_atomic(header_path, j.dump(2) + "\n");
}

BeliefState load_belief(const std::filesystem::path& prefix) {
  auto tensor_path = prefix;
  tensor_path += ".f32le";
  auto header_path = prefix;
  header_path += ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("belief header is not valid JSON: " + std::string(e.what()));
  }
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3 || shape[1] != shape[2]) throw DataError("belief header has a bad shape");
  const auto values = io::decode_f32le(io::read_file(tensor_path));
  if (values.size() != shape[0] * shape[1] * shape[2]) {
    throw DataError("belief tensor size does not match its header");
  }
  Tensor3<double> theta(shape[0], shape[1], shape[2],
                        std::vector<double>(values.begin(), values.end()));
  return BeliefState(std::move(theta), j.at("eta").get<double>(),
                     parse_prior_mode(j.at("origin").get<std::string>()));
}

}  // namespace coda
