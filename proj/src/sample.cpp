#include "lineage/sample.hpp"

#include <cmath>
#include <set>
#include <string>

#include "lineage/error.hpp"

namespace lineage {

CategoricalSample::CategoricalSample(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorKind::InvariantViolation, "empty probability vector");
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      throw Error(ErrorKind::InvariantViolation,
                  "probability entry " + std::to_string(p) + " is negative or not finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error(ErrorKind::InvariantViolation,
                "probabilities sum to " + std::to_string(sum) + ", not 1");
  }
}

std::vector<double> Fingerprint::mean() const {
  std::vector<double> out(dimension(), 0.0);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[i];
  }
  for (double& v : out) v /= static_cast<double>(samples.size());
  return out;
}

void check_fingerprint(const Fingerprint& fp) {
  const std::string where = "fingerprint " + fp.model_id + "/" + fp.prompt_id;
  if (fp.samples.empty()) throw Error(ErrorKind::EmptyFingerprint, where + " has no samples");
  if (fp.seeds.size() != fp.samples.size()) {
    throw Error(ErrorKind::InvariantViolation, where + ": seeds and samples differ in length");
  }
  const std::size_t k = fp.samples.front().size();
  for (const auto& s : fp.samples) {
    if (s.size() != k) {
      throw Error(ErrorKind::InvariantViolation, where + ": samples of differing dimension");
    }
  }
  std::set<std::int64_t> seen(fp.seeds.begin(), fp.seeds.end());
  if (seen.size() != fp.seeds.size()) {
    throw Error(ErrorKind::InvariantViolation, where + ": repeated seeds");
  }
}

}  // namespace lineage
