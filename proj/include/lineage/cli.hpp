#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lineage/attribution.hpp"
#include "lineage/catalogue.hpp"
#include "lineage/probe.hpp"

namespace lineage::cli {

struct BackendConfig {
  std::string kind = "simulator";
  std::string endpoint;
  /// Name of the environment variable holding a bearer token; never the token.
  std::string token_env;
  std::filesystem::path spec;
  std::optional<std::uint64_t> lineage_seed;
  std::filesystem::path directory;
  std::filesystem::path fixture;
  std::uint64_t seed = 0;
  double timeout_seconds = 120.0;
};

struct RunConfig {
  std::optional<std::filesystem::path> catalogue;
  BackendConfig generator;
  BackendConfig classifier;
  std::size_t n_per_prompt = 30;
  std::int64_t seed_base = 0;
  std::size_t parallelism = 1;
  int width = 1024;
  int height = 1024;
  int max_retries = 3;
  int retry_backoff_ms = 500;
  std::size_t missing_tolerance = 0;
  std::vector<std::string> prompts;
  Metric metric = Metric::W2;
  double threshold_fraction = kDefaultEntropyThreshold;
  double alpha0 = 1.0;
  double beta0 = 1.0;
  double unit_price = 0.04;
  std::vector<std::string> base_models;
  std::filesystem::path output_dir = "out";
};

/// Relative paths inside the document resolve against `base_dir`.
/// Throws Config on any invalid field.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
void check_config(const RunConfig& config);

PromptCatalogue catalogue_for(const RunConfig& config);

std::unique_ptr<GenerationBackend> make_generator(const RunConfig& config,
                                                  const PromptCatalogue& catalogue,
                                                  const std::string& model_id);
std::unique_ptr<ClassifierBackend> make_classifier(const RunConfig& config);

std::filesystem::path store_path(const std::filesystem::path& dir, const std::string& model_id);

/// Images x unit price.
double cost_estimate(std::size_t images, double unit_price);

/// Exit status: 0 success, 1 error (journal kept for resumption).
int cmd_probe(const RunConfig& config, const std::string& model_id, std::ostream& out,
              std::ostream& err);

/// Exit status is the verdict (0 dominant, 10 significant, 20 inconclusive),
/// or 1 on error.
int cmd_attribute(const RunConfig& config, const std::filesystem::path& suspect,
                  const std::vector<std::filesystem::path>& bases, std::ostream& out,
                  std::ostream& err);

int cmd_heatmap(const RunConfig& config, const std::vector<std::filesystem::path>& stores,
                std::ostream& out, std::ostream& err);

int cmd_simulate(const RunConfig& config, const std::filesystem::path& world, std::ostream& out,
                 std::ostream& err);

/// Validates the configured (or given) catalogue; optionally writes it out.
int cmd_catalogue_validate(const RunConfig& config, const std::optional<std::filesystem::path>& file,
                           const std::optional<std::filesystem::path>& emit, std::ostream& out,
                           std::ostream& err);

}  // namespace lineage::cli
