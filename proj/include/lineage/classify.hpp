#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lineage/sample.hpp"

namespace lineage {

/// Opaque image payload as produced by a generation backend.
struct Image {
  std::string bytes;
  std::string media_type;
};

struct ClassifierRequest {
  Image image;
  std::vector<std::string> labels;
};

/// Raw backend answer. Backends may hand back logits (softmaxed by
/// classify_image) or probabilities (checked and renormalised).
struct ClassifierResponse {
  enum class Kind { Probabilities, Logits };
  Kind kind = Kind::Probabilities;
  std::vector<double> values;
};

/// The zero-shot classifier boundary. Implementations must be callable from
/// several threads at once, or be wrapped in SerializedClassifier.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual ClassifierResponse classify(const ClassifierRequest& request) = 0;
};

/// Validates the request, calls the backend and converts its answer into a
/// CategoricalSample in label order.
///
/// Probability answers drifting from 1 by more than 1e-9 but at most 1e-6 are
/// renormalised; larger drift, negative entries or a wrong length raise
/// BadResponse. Transport errors from the backend propagate unchanged.
CategoricalSample classify_image(ClassifierBackend& backend, const ClassifierRequest& request);

std::vector<double> softmax(std::span<const double> logits);

/// Shannon entropy in nats, with 0 ln 0 = 0.
double entropy(const CategoricalSample& sample);
double entropy(std::span<const double> probs);

struct DroppedPrompt {
  std::string prompt_id;
  double mean_entropy = 0.0;
  double threshold = 0.0;
};

struct FilterReport {
  std::vector<std::string> retained;
  std::vector<DroppedPrompt> dropped;
  double threshold_fraction = 0.0;
};

inline constexpr double kDefaultEntropyThreshold = 0.9;

/// Drops prompts whose mean sample entropy exceeds threshold_fraction * ln K.
/// Only the probed (suspect) model's fingerprints are consulted.
FilterReport filter_unreliable_prompts(const FingerprintSet& fingerprints,
                                       double threshold_fraction = kDefaultEntropyThreshold);

// Backends ------------------------------------------------------------------

class FunctionClassifier final : public ClassifierBackend {
 public:
  using Fn = std::function<ClassifierResponse(const ClassifierRequest&)>;
  explicit FunctionClassifier(Fn fn) : fn_(std::move(fn)) {}
  ClassifierResponse classify(const ClassifierRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

/// Deterministic seeded stand-in: logits are Gaussian draws keyed on
/// (seed, image bytes, label count).
class StubClassifier final : public ClassifierBackend {
 public:
  explicit StubClassifier(std::uint64_t seed, double logit_scale = 2.0)
      : seed_(seed), scale_(logit_scale) {}
  ClassifierResponse classify(const ClassifierRequest& request) override;

 private:
  std::uint64_t seed_;
  double scale_;
};

/// Wraps a backend and keeps every answer so it can be saved as a fixture.
class RecordingClassifier final : public ClassifierBackend {
 public:
  explicit RecordingClassifier(ClassifierBackend& inner) : inner_(inner) {}
  ClassifierResponse classify(const ClassifierRequest& request) override;
  void save(const std::filesystem::path& path) const;

 private:
  ClassifierBackend& inner_;
  mutable std::mutex mu_;
  std::map<std::string, ClassifierResponse> recorded_;
};

/// Answers from a fixture written by RecordingClassifier; unknown requests
/// raise BadResponse.
class ReplayClassifier final : public ClassifierBackend {
 public:
  explicit ReplayClassifier(const std::filesystem::path& fixture);
  ClassifierResponse classify(const ClassifierRequest& request) override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, ClassifierResponse> responses_;
};

/// Client for the HTTP classifier service: POST /classify with
/// {image: base64, media_type, labels} -> {probs: [...]} (or {logits: [...]}).
class HttpClassifier final : public ClassifierBackend {
 public:
  explicit HttpClassifier(std::string base_url, double timeout_seconds = 30.0)
      : base_url_(std::move(base_url)), timeout_(timeout_seconds) {}
  ClassifierResponse classify(const ClassifierRequest& request) override;

 private:
  std::string base_url_;
  double timeout_;
};

class SerializedClassifier final : public ClassifierBackend {
 public:
  explicit SerializedClassifier(ClassifierBackend& inner) : inner_(inner) {}
  ClassifierResponse classify(const ClassifierRequest& request) override {
    std::lock_guard lock(mu_);
    return inner_.classify(request);
  }

 private:
  ClassifierBackend& inner_;
  std::mutex mu_;
};

/// Stable key of a request (image bytes + media type + labels).
std::string request_key(const ClassifierRequest& request);

}  // namespace lineage
