#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lineage/catalogue.hpp"
#include "lineage/classify.hpp"
#include "lineage/sample.hpp"

namespace lineage {

struct GenerationRequest {
  std::string prompt_id;
  std::string prompt;
  std::int64_t seed = 0;
  /// Position of this sample within its prompt (0-based).
  std::size_t index = 0;
  int width = 1024;
  int height = 1024;
};

/// The text-to-image boundary.
class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  virtual Image generate(const GenerationRequest& request) = 0;
};

/// POST /generate {prompt, seed, width, height} -> {image: base64, media_type}.
class HttpGenerator final : public GenerationBackend {
 public:
  HttpGenerator(std::string base_url, std::string bearer_token = {}, double timeout_seconds = 120.0)
      : base_url_(std::move(base_url)), token_(std::move(bearer_token)), timeout_(timeout_seconds) {}
  Image generate(const GenerationRequest& request) override;

 private:
  std::string base_url_;
  std::string token_;
  double timeout_;
};

/// Serves pre-generated images named <prompt_id>_<index>.<ext>.
class DirectoryGenerator final : public GenerationBackend {
 public:
  explicit DirectoryGenerator(std::filesystem::path root) : root_(std::move(root)) {}
  Image generate(const GenerationRequest& request) override;

 private:
  std::filesystem::path root_;
};

struct ProbePlan {
  std::string model_id;
  std::vector<std::string> prompt_ids;
  std::size_t n_per_prompt = 30;
  std::int64_t seed_base = 0;
  std::size_t parallelism = 1;
  int width = 1024;
  int height = 1024;
  int max_retries = 3;
  std::chrono::milliseconds retry_backoff{500};
  /// Samples allowed to go missing before the run aborts.
  std::size_t missing_tolerance = 0;
  /// Append-only journal; an existing journal is resumed.
  std::optional<std::filesystem::path> journal;
};

/// Checks n_per_prompt >= 1 and parallelism >= 1.
void check_plan(const ProbePlan& plan);

/// seed_base + 10000 * prompt_index + i, with prompt_index the prompt's
/// position in the catalogue.
std::int64_t probe_seed(std::int64_t seed_base, std::size_t prompt_index, std::size_t i);

struct ProbeStats {
  std::size_t samples = 0;
  std::size_t resumed = 0;
  std::size_t retries = 0;
  std::size_t missing = 0;
};

struct ProbeResult {
  FingerprintSet fingerprints;
  ProbeStats stats;
};

/// Runs the sampling protocol: for each planned prompt, n_per_prompt images
/// generated, classified against the prompt's vocabulary and assembled into a
/// fingerprint ordered by seed index.
///
/// Transport errors are retried max_retries times with exponential backoff.
/// Once more than missing_tolerance samples fail, outstanding work is dropped
/// and ProbeIncomplete is raised; completed samples stay in the journal and a
/// rerun with the same plan resumes from there. Output is independent of
/// parallelism.
ProbeResult run_probe(GenerationBackend& generator, ClassifierBackend& classifier,
                      const PromptCatalogue& catalogue, const ProbePlan& plan);

/// One model's fingerprints as stored on disk.
struct FingerprintStore {
  std::string model_id;
  FingerprintSet prompts;

  bool operator==(const FingerprintStore&) const = default;
};

std::string serialize_store(const FingerprintStore& store);
FingerprintStore parse_store(std::string_view text, std::string_view origin = "<memory>");

void save_fingerprints(const FingerprintStore& store, const std::filesystem::path& path);
/// Validates every sample and fingerprint; throws InvariantViolation / Parse.
FingerprintStore load_fingerprints(const std::filesystem::path& path);

}  // namespace lineage
