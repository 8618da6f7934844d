#include "coda/pbest.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coda/beta_distribution.hpp"
#include "coda/errors.hpp"

namespace coda {

namespace {

// Grid nodes are reduced in fixed-size chunks whose partial sums are added
// in chunk order, so serial and parallel callers produce identical bits.
constexpr std::size_t kNodeChunk = 256;

void check_marginal(const ClassMarginal& marginal, std::size_t classes) {
  if (marginal.pi.size() != classes) {
    throw ConfigError("class marginal has " + std::to_string(marginal.pi.size()) +
                      " entries, expected " + std::to_string(classes));
  }
}

void check_grid(std::size_t grid_size) {
  if (grid_size < 3) throw ConfigError("grid_size must be >= 3");
}

// out[l*G + j] = sum_c weights[c] * curve(l, c)[j], summed over c in order.
template <class CurveFn>
void mix_curves(std::size_t models, std::size_t classes, std::size_t G,
                std::span<const double> weights, CurveFn&& curve, double* out_mass,
                double* out_cdf) {
#pragma omp parallel for schedule(static)
  for (std::size_t l = 0; l < models; ++l) {
    double* m = out_mass + l * G;
    double* f = out_cdf + l * G;
    std::fill(m, m + G, 0.0);
    std::fill(f, f + G, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      const ComponentCurve& cc = curve(l, c);
      const double w = weights[c];
      const double* cm = cc.mass.data();
      const double* cf = cc.cdf.data();
      for (std::size_t j = 0; j < G; ++j) {
        m[j] += w * cm[j];
        f[j] += w * cf[j];
      }
    }
  }
}

// Sums mass[k][j] * prod_{l != k} cdf[l][j] over j in [j0, j1) for every k.
void integrate_chunk(std::size_t H, std::size_t G, std::size_t j0, std::size_t j1,
                     const double* mass, const double* cdf, double* prefix, double* suffix,
                     double* out) {
  const std::size_t n = j1 - j0;
  for (std::size_t j = 0; j < n; ++j) prefix[j] = 1.0;
  for (std::size_t l = 1; l < H; ++l) {
    const double* prev = prefix + (l - 1) * n;
    const double* f = cdf + (l - 1) * G + j0;
    double* cur = prefix + l * n;
    for (std::size_t j = 0; j < n; ++j) cur[j] = prev[j] * f[j];
  }
  for (std::size_t j = 0; j < n; ++j) suffix[j] = 1.0;
  for (std::size_t k = H; k-- > 0;) {
    const double* m = mass + k * G + j0;
    const double* f = cdf + k * G + j0;
    const double* pre = prefix + k * n;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      for (std::size_t u = 0; u < 4; ++u) acc[u] += m[j + u] * pre[j + u] * suffix[j + u];
    }
    for (; j < n; ++j) acc[0] += m[j] * pre[j] * suffix[j];
    for (std::size_t jj = 0; jj < n; ++jj) suffix[jj] *= f[jj];
    out[k] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }
}

PBest finalize(std::vector<double> raw, std::size_t grid_size) {
  double total = 0.0;
  for (double v : raw) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error("P_Best quadrature produced a non-positive or non-finite total");
  }
  PBest out;
  out.raw_mass = total;
  out.grid_size = grid_size;
  out.probs = std::move(raw);
  for (double& v : out.probs) v /= total;
  return out;
}

PBest integrate_parallel(std::size_t H, std::size_t G, const std::vector<double>& mass,
                         const std::vector<double>& cdf) {
  const std::size_t chunks = (G + kNodeChunk - 1) / kNodeChunk;
  std::vector<double> partial(chunks * H, 0.0);
#pragma omp parallel
  {
    std::vector<double> prefix(H * kNodeChunk);
    std::vector<double> suffix(kNodeChunk);
#pragma omp for schedule(static)
    for (std::size_t ch = 0; ch < chunks; ++ch) {
      const std::size_t j0 = ch * kNodeChunk;
      const std::size_t j1 = std::min(G, j0 + kNodeChunk);
      integrate_chunk(H, G, j0, j1, mass.data(), cdf.data(), prefix.data(), suffix.data(),
                      partial.data() + ch * H);
    }
  }
  std::vector<double> raw(H, 0.0);
  for (std::size_t ch = 0; ch < chunks; ++ch) {
    for (std::size_t k = 0; k < H; ++k) raw[k] += partial[ch * H + k];
  }
  return finalize(std::move(raw), G);
}

}  // namespace

ClassMarginal class_marginal(const BenchmarkTask& task, const Tensor3<double>& mean_conf) {
  const std::size_t H = task.num_models();
  const std::size_t C = task.num_classes();
  const auto& mp = task.mean_predictions();
  ClassMarginal out{std::vector<double>(C, 0.0)};
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t cp = 0; cp < C; ++cp) {
      const double w = mp(k, cp);
      const auto row = mean_conf.row(k, cp);
      for (std::size_t c = 0; c < C; ++c) out.pi[c] += w * row[c];
    }
  }
  for (double& v : out.pi) v /= static_cast<double>(H);
  return out;
}

ClassMarginal class_marginal(const BenchmarkTask& task, const BeliefState& state) {
  return class_marginal(task, state.mean_confusions());
}

std::vector<double> item_class_posterior(const BenchmarkTask& task,
                                         const Tensor3<double>& mean_conf, std::size_t item) {
  if (item >= task.num_items()) throw ConfigError("item index out of range");
  const std::size_t H = task.num_models();
  const std::size_t C = task.num_classes();
  std::vector<double> out(C, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    const auto p = task.prediction(k, item);
    for (std::size_t cp = 0; cp < C; ++cp) {
      const double w = p[cp];
      if (w == 0.0f) continue;
      const auto row = mean_conf.row(k, cp);
      for (std::size_t c = 0; c < C; ++c) out[c] += w * row[c];
    }
  }
  // Rows are float32, so the 1/|H| average only sums to 1 within ~1e-7.
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> item_class_posterior(const BenchmarkTask& task, const BeliefState& state,
                                         std::size_t item) {
  return item_class_posterior(task, state.mean_confusions(), item);
}

BetaMixture diagonal_betas(const BeliefState& state) {
  const std::size_t H = state.num_models();
  const std::size_t C = state.num_classes();
  BetaMixture out{Matrix<double>(H, C), Matrix<double>(H, C), {}};
  const auto& theta = state.theta();
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t c = 0; c < C; ++c) {
      double off = 0.0;
      for (std::size_t cp = 0; cp < C; ++cp) {
        if (cp != c) off += theta(k, c, cp);
      }
      out.a(k, c) = theta(k, c, c);
      out.b(k, c) = off;
    }
  }
  return out;
}

BetaMixture diagonal_betas(const BeliefState& state, const ClassMarginal& marginal) {
  check_marginal(marginal, state.num_classes());
  auto out = diagonal_betas(state);
  out.weights = marginal.pi;
  return out;
}

QuadratureGrid::QuadratureGrid(std::size_t size) {
  check_grid(size);
  nodes_.resize(size);
  weights_.resize(size);
  const double h = 1.0 / static_cast<double>(size - 1);
  for (std::size_t j = 0; j < size; ++j) {
    nodes_[j] = static_cast<double>(j) * h;
    weights_[j] = h;
  }
  nodes_.front() = kEndpointClip;
  nodes_.back() = 1.0 - kEndpointClip;
  weights_.front() = 0.5 * h;
  weights_.back() = 0.5 * h;
}

ComponentCurve tabulate_component(double a, double b, const QuadratureGrid& grid) {
  const BetaDistribution dist(a, b);
  const std::size_t G = grid.size();
  const auto x = grid.nodes();
  const auto w = grid.weights();
  ComponentCurve out{a, b, std::vector<double>(G), std::vector<double>(G)};
  for (std::size_t j = 0; j < G; ++j) out.cdf[j] = dist.cdf(x[j]);
  if (a >= 1.0 && b >= 1.0) {
    for (std::size_t j = 0; j < G; ++j) out.mass[j] = w[j] * dist.pdf(x[j]);
  } else {
    // CDF at the true interval ends is exactly 0 and 1.
    auto cdf_at = [&](std::size_t j) {
      if (j == 0) return 0.0;
      if (j == G - 1) return 1.0;
      return out.cdf[j];
    };
    for (std::size_t j = 0; j < G; ++j) {
      const double left = j == 0 ? cdf_at(0) : cdf_at(j - 1);
      const double right = j == G - 1 ? cdf_at(G - 1) : cdf_at(j + 1);
      out.mass[j] = 0.5 * (right - left);
    }
  }
  return out;
}

void integrate_max_draw(std::size_t models, std::size_t grid_size, const double* mixture_mass,
                        const double* mixture_cdf, std::vector<double>& scratch,
                        double* out_probs) {
  // scratch layout: prefix (models * kNodeChunk), suffix (kNodeChunk), chunk sums (models)
  scratch.resize(models * kNodeChunk + kNodeChunk + models);
  double* chunk_out = scratch.data() + models * kNodeChunk + kNodeChunk;
  std::fill(out_probs, out_probs + models, 0.0);
  for (std::size_t j0 = 0; j0 < grid_size; j0 += kNodeChunk) {
    const std::size_t j1 = std::min(grid_size, j0 + kNodeChunk);
    integrate_chunk(models, grid_size, j0, j1, mixture_mass, mixture_cdf, scratch.data(),
                    scratch.data() + models * kNodeChunk, chunk_out);
    for (std::size_t k = 0; k < models; ++k) out_probs[k] += chunk_out[k];
  }
}

PBest compute_pbest(const BetaMixture& mixture, std::size_t grid_size) {
  check_grid(grid_size);
  const std::size_t H = mixture.a.rows();
  const std::size_t C = mixture.a.cols();
  if (H < 2) throw ConfigError("P_Best needs at least 2 models");
  if (mixture.weights.size() != C) throw ConfigError("mixture weights must have length C");
  const QuadratureGrid grid(grid_size);
  std::vector<ComponentCurve> curves(H * C);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t kc = 0; kc < H * C; ++kc) {
    curves[kc] = tabulate_component(mixture.a.data()[kc], mixture.b.data()[kc], grid);
  }
  std::vector<double> mass(H * grid_size), cdf(H * grid_size);
  mix_curves(H, C, grid_size, mixture.weights,
             [&](std::size_t l, std::size_t c) -> const ComponentCurve& { return curves[l * C + c]; },
             mass.data(), cdf.data());
  return integrate_parallel(H, grid_size, mass, cdf);
}

PBest compute_pbest(const BeliefState& state, const ClassMarginal& marginal,
                    std::size_t grid_size) {
  return compute_pbest(diagonal_betas(state, marginal), grid_size);
}

PBest compute_pbest_serial(const BetaMixture& mixture, std::size_t grid_size) {
  check_grid(grid_size);
  const std::size_t H = mixture.a.rows();
  const std::size_t C = mixture.a.cols();
  if (H < 2) throw ConfigError("P_Best needs at least 2 models");
  if (mixture.weights.size() != C) throw ConfigError("mixture weights must have length C");
  const QuadratureGrid grid(grid_size);
  std::vector<ComponentCurve> curves;
  curves.reserve(H * C);
  for (std::size_t kc = 0; kc < H * C; ++kc) {
    curves.push_back(tabulate_component(mixture.a.data()[kc], mixture.b.data()[kc], grid));
  }
  std::vector<double> raw(H, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t j = 0; j < grid_size; ++j) {
      double f = 0.0;
      for (std::size_t c = 0; c < C; ++c) f += mixture.weights[c] * curves[k * C + c].mass[j];
      double prod = 1.0;
      for (std::size_t l = 0; l < H; ++l) {
        if (l == k) continue;
        double F = 0.0;
        for (std::size_t c = 0; c < C; ++c) F += mixture.weights[c] * curves[l * C + c].cdf[j];
        prod *= F;
      }
      raw[k] += f * prod;
    }
  }
  return finalize(std::move(raw), grid_size);
}

PBest compute_pbest_serial(const BeliefState& state, const ClassMarginal& marginal,
                           std::size_t grid_size) {
  return compute_pbest_serial(diagonal_betas(state, marginal), grid_size);
}

std::vector<double> mean_accuracy(const BeliefState& state, const ClassMarginal& marginal) {
  check_marginal(marginal, state.num_classes());
  const auto m = state.mean_confusions();
  std::vector<double> out(state.num_models(), 0.0);
  for (std::size_t k = 0; k < state.num_models(); ++k) {
    for (std::size_t c = 0; c < state.num_classes(); ++c) out[k] += marginal.pi[c] * m(k, c, c);
  }
  return out;
}

std::size_t select_model(const PBest& pbest) {
  return argmax_lowest(std::span<const double>(pbest.probs));
}

CurveBank::CurveBank(std::size_t grid_size) : grid_(grid_size) {}

void CurveBank::refresh(const BeliefState& state, double increment, bool with_variants) {
  const std::size_t H = state.num_models();
  const std::size_t C = state.num_classes();
  const bool reshape = H != models_ || C != classes_ || increment != increment_;
  if (reshape) {
    models_ = H;
    classes_ = C;
    increment_ = increment;
    curves_.assign(H * C * 3, ComponentCurve{});
  }
  const auto betas = diagonal_betas(state);
  std::vector<std::size_t> stale;
  for (std::size_t kc = 0; kc < H * C; ++kc) {
    const double a = betas.a.data()[kc];
    const double b = betas.b.data()[kc];
    const auto& base = curves_[kc * 3 + kBase];
    const bool variants_missing = with_variants && curves_[kc * 3 + kDiagPlus].mass.empty();
    if (base.mass.empty() || base.a != a || base.b != b || variants_missing) stale.push_back(kc);
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t s = 0; s < stale.size(); ++s) {
    const std::size_t kc = stale[s];
    const double a = betas.a.data()[kc];
    const double b = betas.b.data()[kc];
    curves_[kc * 3 + kBase] = tabulate_component(a, b, grid_);
    if (with_variants) {
      curves_[kc * 3 + kDiagPlus] = tabulate_component(a + increment_, b, grid_);
      curves_[kc * 3 + kOffPlus] = tabulate_component(a, b + increment_, grid_);
    } else {
      curves_[kc * 3 + kDiagPlus] = {};
      curves_[kc * 3 + kOffPlus] = {};
    }
  }
  last_recomputed_ = stale.size();
}

PBest pbest_from_bank(const CurveBank& bank, const ClassMarginal& marginal) {
  const std::size_t H = bank.num_models();
  const std::size_t C = bank.num_classes();
  const std::size_t G = bank.grid().size();
  check_marginal(marginal, C);
  std::vector<double> mass(H * G), cdf(H * G);
  mix_curves(H, C, G, marginal.pi,
             [&](std::size_t l, std::size_t c) -> const ComponentCurve& {
               return bank.curve(l, c, CurveBank::kBase);
             },
             mass.data(), cdf.data());
  return integrate_parallel(H, G, mass, cdf);
}

}  // namespace coda
