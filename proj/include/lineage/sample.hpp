#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lineage {

/// Tolerance on |sum(p) - 1| for a valid sample.
inline constexpr double kSimplexTolerance = 1e-6;

/// A point on the probability simplex: one classification of one image.
class CategoricalSample {
 public:
  CategoricalSample() = default;
  /// Throws InvariantViolation unless every entry is finite and >= 0 and the
  /// entries sum to 1 within kSimplexTolerance.
  explicit CategoricalSample(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  bool operator==(const CategoricalSample&) const = default;

 private:
  std::vector<double> probs_;
};

/// The uniform empirical measure over N samples for one (model, prompt) pair.
struct Fingerprint {
  std::string model_id;
  std::string prompt_id;
  std::string vocabulary;
  std::vector<CategoricalSample> samples;
  std::vector<std::int64_t> seeds;

  std::size_t size() const { return samples.size(); }
  /// Shared dimensionality; 0 when empty.
  std::size_t dimension() const { return samples.empty() ? 0 : samples.front().size(); }
  /// Coordinate-wise mean of the samples.
  std::vector<double> mean() const;

  bool operator==(const Fingerprint&) const = default;
};

/// Checks N >= 1, equal dimensionality, distinct seeds and seeds/samples
/// alignment. Throws InvariantViolation / EmptyFingerprint.
void check_fingerprint(const Fingerprint& fp);

using FingerprintSet = std::map<std::string, Fingerprint>;

}  // namespace lineage
