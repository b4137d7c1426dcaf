#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lineage/sample.hpp"

namespace lineage::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("lineage_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Uniform point on the simplex (normalised exponentials).
inline std::vector<double> random_simplex(std::size_t k, std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (auto& v : p) sum += (v = ex(rng));
  for (auto& v : p) v /= sum;
  return p;
}

inline std::vector<double> one_hot(std::size_t k, std::size_t at) {
  std::vector<double> p(k, 0.0);
  p[at] = 1.0;
  return p;
}

inline Fingerprint make_fingerprint(const std::vector<std::vector<double>>& rows,
                                    std::string prompt_id = "p", std::string model_id = "m") {
  Fingerprint fp;
  fp.model_id = std::move(model_id);
  fp.prompt_id = std::move(prompt_id);
  std::int64_t seed = 0;
  for (const auto& r : rows) {
    fp.samples.emplace_back(r);
    fp.seeds.push_back(seed++);
  }
  return fp;
}

inline Fingerprint random_fingerprint(std::size_t n, std::size_t k, std::mt19937_64& rng,
                                      std::string prompt_id = "p") {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(random_simplex(k, rng));
  return make_fingerprint(rows, std::move(prompt_id));
}

}  // namespace lineage::testing
