#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "lineage/catalogue.hpp"
#include "lineage/probe.hpp"

namespace lineage::sim {

/// Per-prompt generative law: samples are Dirichlet(concentration * mean).
struct PromptLaw {
  std::string vocabulary;
  std::vector<double> mean;
  double concentration = 50.0;
  /// 0 = common in fine-tuning data, 1 = never seen.
  double rarity = 0.0;

  bool operator==(const PromptLaw&) const = default;
};

struct SimModelSpec {
  std::string model_id;
  std::string lineage_id;
  std::map<std::string, PromptLaw> prompts;

  const PromptLaw& law(const std::string& prompt_id) const;
  bool operator==(const SimModelSpec&) const = default;
};

/// Throws InvariantViolation on a mean off the simplex (1e-9), a
/// non-positive concentration or a rarity outside [0, 1].
void check_spec(const SimModelSpec& spec);

struct LineageParams {
  double alpha0 = 0.3;
  double concentration = 50.0;
  double rho = 0.5;
};

struct FineTuneConfig {
  double strength = 0.0;
  std::uint64_t style_shift_seed = 0;
  double rarity_exponent = 2.0;
};

/// Vocabulary size per superordinate.
using KMap = std::map<std::string, std::size_t>;
KMap k_map_from(const PromptCatalogue& catalogue);

/// 1 - rho^k for a prompt with k attributes.
double rarity_for(std::size_t attribute_count, double rho);

/// strength * (1 - rarity)^gamma.
double shift_weight(double strength, double rarity, double gamma);

std::vector<double> sample_dirichlet(std::span<const double> alpha, std::mt19937_64& rng);

/// A fresh base model: per-prompt means from a symmetric Dirichlet(alpha0),
/// each prompt keyed on (seed, prompt id) so catalogue order does not matter.
SimModelSpec make_lineage(std::string model_id, std::uint64_t seed,
                          const PromptCatalogue& catalogue, const KMap& k_map,
                          const LineageParams& params = {});
SimModelSpec make_lineage(std::string model_id, std::uint64_t seed,
                          const PromptCatalogue& catalogue, const LineageParams& params = {});

/// Style-shift target for one prompt, Dirichlet(1) keyed on (seed, prompt id).
std::vector<double> style_shift(std::uint64_t style_shift_seed, const std::string& prompt_id,
                                std::size_t k);

/// m' = (1 - w) m + w u with w = shift_weight(strength, rarity, gamma);
/// lineage and concentrations carry over.
SimModelSpec fine_tune(const SimModelSpec& base, const FineTuneConfig& cfg, std::string model_id);

/// One sample for (model, prompt, seed).
CategoricalSample draw_sample(const SimModelSpec& spec, const std::string& prompt_id,
                              std::int64_t seed);

/// N draws using seeds seed, seed+1, ...; throws UnknownPrompt.
Fingerprint sample_fingerprint(const SimModelSpec& spec, const std::string& prompt_id,
                               std::size_t n, std::int64_t seed);

/// Same result as run_probe over SimGenerator/SimClassifier with this plan
/// shape, without the pipeline.
FingerprintStore probe_simulated(const SimModelSpec& spec, const PromptCatalogue& catalogue,
                                 std::size_t n_per_prompt, std::int64_t seed_base);

nlohmann::ordered_json to_json(const SimModelSpec& spec);
SimModelSpec spec_from_json(const nlohmann::json& doc);
void save_spec(const SimModelSpec& spec, const std::filesystem::path& path);
SimModelSpec load_spec(const std::filesystem::path& path);

inline constexpr const char* kSimMediaType = "application/x-lineage-sample+json";

/// Generation boundary that skips pixels: the "image" is the drawn sample.
class SimGenerator final : public GenerationBackend {
 public:
  explicit SimGenerator(SimModelSpec spec) : spec_(std::move(spec)) {}
  Image generate(const GenerationRequest& request) override;

 private:
  SimModelSpec spec_;
};

/// Classifier boundary paired with SimGenerator; decodes the carried sample.
class SimClassifier final : public ClassifierBackend {
 public:
  ClassifierResponse classify(const ClassifierRequest& request) override;
};

// Synthetic worlds ------------------------------------------------------------

struct FineTuneEntry {
  std::string model_id;
  FineTuneConfig config;
};

struct LineageEntry {
  std::string base_id;
  std::uint64_t seed = 0;
  std::vector<FineTuneEntry> fine_tunes;
};

struct WorldSpec {
  LineageParams params;
  std::size_t n_per_prompt = 30;
  std::int64_t seed_base = 0;
  std::vector<LineageEntry> lineages;
};

/// Throws Config on duplicate model ids, an empty lineage list or bad values.
WorldSpec world_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const WorldSpec& world);

/// Base first, then its fine-tunes, lineage by lineage.
std::vector<SimModelSpec> build_world(const WorldSpec& world, const PromptCatalogue& catalogue);

}  // namespace lineage::sim
