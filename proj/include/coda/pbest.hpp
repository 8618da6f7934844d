#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coda/belief_state.hpp"
#include "coda/benchmark_store.hpp"
#include "coda/tensor.hpp"

namespace coda {

inline constexpr std::size_t kDefaultGridSize = 2049;
/// Abscissae 0 and 1 are evaluated at this distance inside the interval.
inline constexpr double kEndpointClip = 1e-9;

/// Estimated prevalence of each true class under the current beliefs.
struct ClassMarginal {
  std::vector<double> pi;
};

/// pi(c) = 1/(|D||H|) sum_i sum_k sum_c' p[k,i,c'] * M[k,c',c] with M the
/// posterior-mean confusions. Computed through per-model mean predictions.
ClassMarginal class_marginal(const BenchmarkTask& task, const BeliefState& state);
ClassMarginal class_marginal(const BenchmarkTask& task, const Tensor3<double>& mean_conf);

/// Same quantity for a single item, without averaging over items, scaled to
/// sum to exactly 1.
std::vector<double> item_class_posterior(const BenchmarkTask& task, const BeliefState& state,
                                         std::size_t item);
std::vector<double> item_class_posterior(const BenchmarkTask& task,
                                         const Tensor3<double>& mean_conf, std::size_t item);

/// Beta marginals of each confusion-matrix diagonal entry, plus the mixture
/// weights shared by every model.
struct BetaMixture {
  Matrix<double> a;  // |H| x C, diagonal concentration
  Matrix<double> b;  // |H| x C, off-diagonal row mass
  std::vector<double> weights;
};

/// a(k,c) = theta(k,c,c), b(k,c) = sum_{c' != c} theta(k,c,c'). Raw concentrations.
BetaMixture diagonal_betas(const BeliefState& state);
BetaMixture diagonal_betas(const BeliefState& state, const ClassMarginal& marginal);

/// Uniform grid on [0, 1] with trapezoidal weights.
class QuadratureGrid {
 public:
  explicit QuadratureGrid(std::size_t size);
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  /// Abscissae, endpoints clipped by kEndpointClip.
  [[nodiscard]] std::span<const double> nodes() const { return nodes_; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// One Beta component tabulated on a grid. `mass[j]` is the quadrature mass
/// the component puts on node j, `cdf[j]` its CDF at node j.
///
/// Components with a >= 1 and b >= 1 use trapezoid weight * pdf. Components
/// with an unbounded density (a < 1 or b < 1) use half the CDF increment of
/// the two adjacent cells instead, which integrates the endpoint singularity
/// exactly.
struct ComponentCurve {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> mass;
  std::vector<double> cdf;
};

ComponentCurve tabulate_component(double a, double b, const QuadratureGrid& grid);

struct PBest {
  std::vector<double> probs;
  std::size_t grid_size = 0;
  /// Sum of the quadrature values before renormalization.
  double raw_mass = 0.0;
};

/// P(model k has the largest accuracy draw) for every model, by quadrature
/// of f_k(x) * prod_{l != k} F_l(x). OpenMP-parallel over components and grid
/// nodes; the reduction order is fixed so the result does not depend on the
/// thread count.
PBest compute_pbest(const BeliefState& state, const ClassMarginal& marginal,
                    std::size_t grid_size = kDefaultGridSize);
PBest compute_pbest(const BetaMixture& mixture, std::size_t grid_size = kDefaultGridSize);

/// Single-threaded reference: direct product over l != k at every node.
PBest compute_pbest_serial(const BetaMixture& mixture, std::size_t grid_size = kDefaultGridSize);
PBest compute_pbest_serial(const BeliefState& state, const ClassMarginal& marginal,
                           std::size_t grid_size = kDefaultGridSize);

/// Quadrature core shared by compute_pbest and the EIG evaluator. mass and
/// cdf are |H| x G mixture curves; writes unnormalized values to out_probs.
void integrate_max_draw(std::size_t models, std::size_t grid_size, const double* mixture_mass,
                        const double* mixture_cdf, std::vector<double>& scratch,
                        double* out_probs);

/// Acc_mean(k) = sum_c pi(c) * M[k,c,c].
std::vector<double> mean_accuracy(const BeliefState& state, const ClassMarginal& marginal);

/// argmax, lowest index on ties.
std::size_t select_model(const PBest& pbest);

/// Tabulated curves for every (model, class) component of a belief state,
/// plus the two single-increment variants a + inc and b + inc used by
/// virtual label updates. refresh() only recomputes components whose
/// parameters changed.
class CurveBank {
 public:
  enum Variant : std::size_t { kBase = 0, kDiagPlus = 1, kOffPlus = 2 };

  explicit CurveBank(std::size_t grid_size);

  void refresh(const BeliefState& state, double increment, bool with_variants);

  [[nodiscard]] const QuadratureGrid& grid() const { return grid_; }
  [[nodiscard]] std::size_t num_models() const { return models_; }
  [[nodiscard]] std::size_t num_classes() const { return classes_; }
  [[nodiscard]] const ComponentCurve& curve(std::size_t k, std::size_t c, Variant v) const {
    return curves_[(k * classes_ + c) * 3 + v];
  }
  /// Components re-tabulated by the last refresh().
  [[nodiscard]] std::size_t last_recomputed() const { return last_recomputed_; }

 private:
  QuadratureGrid grid_;
  std::size_t models_ = 0;
  std::size_t classes_ = 0;
  double increment_ = 0.0;
  std::vector<ComponentCurve> curves_;
  std::size_t last_recomputed_ = 0;
};

/// P_Best from the base curves of a bank with the given mixture weights.
PBest pbest_from_bank(const CurveBank& bank, const ClassMarginal& marginal);

}  // namespace coda
