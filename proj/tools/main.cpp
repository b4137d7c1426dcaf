#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lineage/cli.hpp"
#include "lineage/error.hpp"

namespace fs = std::filesystem;
using namespace lineage;

int main(int argc, char** argv) {
  CLI::App app{"Black-box lineage attribution for text-to-image models"};
  app.require_subcommand(1);

  std::string config_path;
  std::string metric;
  std::optional<std::int64_t> seed_base;
  std::string out_dir;
  app.add_option("--config", config_path, "run configuration (JSON)");
  app.add_option("--metric", metric, "distance metric")->check(CLI::IsMember({"w2", "jsd"}));
  app.add_option("--seed-base", seed_base, "base seed for the probe schedule");
  app.add_option("--out", out_dir, "output directory");

  std::string model_id;
  auto* probe = app.add_subcommand("probe", "probe a model and write its fingerprint store");
  probe->add_option("--model-id", model_id, "model identifier")->required();

  std::string suspect;
  std::vector<std::string> bases;
  auto* attribute = app.add_subcommand("attribute", "attribute a suspect store to a base");
  attribute->add_option("--suspect", suspect, "suspect fingerprint store")->required()->check(CLI::ExistingFile);
  attribute->add_option("--base", bases, "base fingerprint store (repeatable)")->required()->check(CLI::ExistingFile);

  std::vector<std::string> stores;
  auto* heatmap = app.add_subcommand("heatmap", "normalized per-prompt and average distance matrices");
  heatmap->add_option("--store", stores, "fingerprint store (repeatable)")->required()->check(CLI::ExistingFile);

  std::string world;
  auto* simulate = app.add_subcommand("simulate", "write fingerprint stores for a synthetic world");
  simulate->add_option("--world", world, "world specification (JSON)")->required()->check(CLI::ExistingFile);

  std::string file;
  std::string emit;
  auto* validate = app.add_subcommand("catalogue-validate", "validate a prompt catalogue");
  validate->add_option("--file", file, "catalogue file (default: configured or built-in)");
  validate->add_option("--emit", emit, "write the validated catalogue here");

  for (auto* sub : {probe, attribute, heatmap, simulate, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  cli::RunConfig config;
  try {
    if (!config_path.empty()) config = cli::load_config(config_path);
    if (!metric.empty()) config.metric = parse_metric(metric);
    if (seed_base) config.seed_base = *seed_base;
    if (!out_dir.empty()) config.output_dir = out_dir;
    cli::check_config(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  auto paths = [](const std::vector<std::string>& v) { return std::vector<fs::path>(v.begin(), v.end()); };
  if (*probe) return cli::cmd_probe(config, model_id, std::cout, std::cerr);
  if (*attribute) return cli::cmd_attribute(config, suspect, paths(bases), std::cout, std::cerr);
  if (*heatmap) return cli::cmd_heatmap(config, paths(stores), std::cout, std::cerr);
  if (*simulate) return cli::cmd_simulate(config, world, std::cout, std::cerr);
  std::optional<fs::path> file_opt = file.empty() ? std::nullopt : std::optional<fs::path>(file);
  std::optional<fs::path> emit_opt = emit.empty() ? std::nullopt : std::optional<fs::path>(emit);
  return cli::cmd_catalogue_validate(config, file_opt, emit_opt, std::cout, std::cerr);
}
