#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coda/belief_state.hpp"
#include "coda/benchmark_store.hpp"
#include "coda/rng.hpp"

#include <unistd.h>

namespace coda::testing {

/// Random soft predictions; with `hard_fraction` of rows one-hot.
inline BenchmarkTask random_task(std::size_t H, std::size_t D, std::size_t C, std::uint64_t seed,
                                 double hard_fraction = 0.0, bool labels = true) {
  SplitMix64 rng(seed);
  std::vector<float> p(H * D * C);
  for (std::size_t r = 0; r < H * D; ++r) {
    float* row = p.data() + r * C;
    if (rng.uniform() < hard_fraction) {
      row[rng.below(C)] = 1.0f;
      continue;
    }
    double s = 0.0;
    std::vector<double> v(C);
    for (auto& x : v) {
      x = rng.uniform() + 1e-3;
      s += x;
    }
    for (std::size_t c = 0; c < C; ++c) row[c] = static_cast<float>(v[c] / s);
  }
  std::vector<std::string> models, items;
  for (std::size_t k = 0; k < H; ++k) models.push_back("m" + std::to_string(k));
  for (std::size_t i = 0; i < D; ++i) items.push_back("x" + std::to_string(i));
  std::optional<std::vector<int>> y;
  if (labels) {
    y.emplace(D);
    for (auto& v : *y) v = static_cast<int>(rng.below(C));
  }
  return BenchmarkTask(models, items, C, p, y);
}

/// Random positive concentrations in [lo, hi].
inline BeliefState random_belief(std::size_t H, std::size_t C, std::uint64_t seed, double lo = 0.5,
                                 double hi = 50.0, double eta = kDefaultEta) {
  SplitMix64 rng(seed);
  Tensor3<double> theta(H, C, C, 0.0);
  for (auto& v : theta.data()) v = lo + (hi - lo) * rng.uniform();
  return BeliefState(theta, eta, PriorMode::consensus);
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    SplitMix64 g(reinterpret_cast<std::uintptr_t>(this) ^ ++counter ^
                 static_cast<std::uint64_t>(::getpid()));
    path_ = std::filesystem::temp_directory_path() / ("coda-test-" + std::to_string(g.next()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace coda::testing
