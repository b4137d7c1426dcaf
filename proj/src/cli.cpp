#include "lineage/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lineage/error.hpp"
#include "lineage/simulator.hpp"
#include "lineage/util.hpp"

namespace lineage::cli {

namespace {

namespace fs = std::filesystem;

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : (base_dir / path).lexically_normal();
}

bool looks_like_url(const std::string& s) {
  return (s.starts_with("http://") && s.size() > 7) || (s.starts_with("https://") && s.size() > 8);
}

BackendConfig backend_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  BackendConfig b;
  b.kind = doc.value("kind", b.kind);
  b.endpoint = doc.value("endpoint", std::string());
  b.token_env = doc.value("token_env", std::string());
  b.spec = resolve(base_dir, doc.value("spec", std::string()));
  if (doc.contains("lineage_seed")) b.lineage_seed = doc.at("lineage_seed").get<std::uint64_t>();
  b.directory = resolve(base_dir, doc.value("directory", std::string()));
  b.fixture = resolve(base_dir, doc.value("fixture", std::string()));
  b.seed = doc.value("seed", std::uint64_t{0});
  b.timeout_seconds = doc.value("timeout_seconds", 120.0);
  return b;
}

void check_backend(const BackendConfig& b, const char* role,
                   std::initializer_list<std::string_view> kinds) {
  if (std::find(kinds.begin(), kinds.end(), b.kind) == kinds.end()) {
    throw Error(ErrorKind::Config, std::string(role) + " kind '" + b.kind + "' is not supported");
  }
  if (b.kind == "http" && !looks_like_url(b.endpoint)) {
    throw Error(ErrorKind::Config, std::string(role) + " endpoint '" + b.endpoint +
                                       "' is not an http(s) URL");
  }
  if (b.kind == "directory" && b.directory.empty()) {
    throw Error(ErrorKind::Config, std::string(role) + " needs a directory");
  }
  if (b.kind == "replay" && b.fixture.empty()) {
    throw Error(ErrorKind::Config, std::string(role) + " needs a fixture file");
  }
  if (!(b.timeout_seconds > 0.0)) {
    throw Error(ErrorKind::Config, std::string(role) + " timeout must be positive");
  }
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

}  // namespace

RunConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  RunConfig c;
  try {
    if (doc.contains("catalogue")) c.catalogue = resolve(base_dir, doc.at("catalogue").get<std::string>());
    if (doc.contains("generator")) c.generator = backend_from_json(doc.at("generator"), base_dir);
    if (doc.contains("classifier")) c.classifier = backend_from_json(doc.at("classifier"), base_dir);
    if (doc.contains("plan")) {
      const auto& p = doc.at("plan");
      c.n_per_prompt = p.value("n_per_prompt", c.n_per_prompt);
      c.seed_base = p.value("seed_base", c.seed_base);
      c.parallelism = p.value("parallelism", c.parallelism);
      c.width = p.value("width", c.width);
      c.height = p.value("height", c.height);
      c.max_retries = p.value("max_retries", c.max_retries);
      c.retry_backoff_ms = p.value("retry_backoff_ms", c.retry_backoff_ms);
      c.missing_tolerance = p.value("missing_tolerance", c.missing_tolerance);
      c.prompts = p.value("prompts", c.prompts);
    }
    if (doc.contains("metric")) c.metric = parse_metric(doc.at("metric").get<std::string>());
    c.threshold_fraction = doc.value("threshold_fraction", c.threshold_fraction);
    if (doc.contains("prior")) {
      c.alpha0 = doc.at("prior").value("alpha0", c.alpha0);
      c.beta0 = doc.at("prior").value("beta0", c.beta0);
    }
    c.unit_price = doc.value("unit_price", c.unit_price);
    c.base_models = doc.value("base_models", c.base_models);
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  check_config(c);
  return c;
}

RunConfig load_config(const fs::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

void check_config(const RunConfig& c) {
  check_backend(c.generator, "generator", {"simulator", "http", "directory"});
  check_backend(c.classifier, "classifier", {"simulator", "http", "stub", "replay"});
  if ((c.generator.kind == "simulator") != (c.classifier.kind == "simulator")) {
    throw Error(ErrorKind::Config, "the simulator generator and classifier must be used together");
  }
  if (c.n_per_prompt < 1) throw Error(ErrorKind::Config, "n_per_prompt must be >= 1");
  if (c.parallelism < 1) throw Error(ErrorKind::Config, "parallelism must be >= 1");
  if (c.max_retries < 0 || c.retry_backoff_ms < 0) {
    throw Error(ErrorKind::Config, "retry settings must be non-negative");
  }
  if (!(c.threshold_fraction > 0.0 && c.threshold_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "threshold_fraction must lie in (0, 1]");
  }
  if (!(c.alpha0 > 0.0) || !(c.beta0 > 0.0)) throw Error(ErrorKind::Config, "prior must be positive");
  if (!(c.unit_price >= 0.0)) throw Error(ErrorKind::Config, "unit_price must be >= 0");
  if (c.output_dir.empty()) throw Error(ErrorKind::Config, "output_dir must be set");
}

PromptCatalogue catalogue_for(const RunConfig& config) {
  return config.catalogue ? load_catalogue(*config.catalogue) : build_default_catalogue();
}

std::unique_ptr<GenerationBackend> make_generator(const RunConfig& config,
                                                  const PromptCatalogue& catalogue,
                                                  const std::string& model_id) {
  const auto& g = config.generator;
  if (g.kind == "http") {
    std::string token;
    if (!g.token_env.empty()) {
      const char* v = std::getenv(g.token_env.c_str());
      if (!v) throw Error(ErrorKind::Config, "environment variable " + g.token_env + " is not set");
      token = v;
    }
    return std::make_unique<HttpGenerator>(g.endpoint, token, g.timeout_seconds);
  }
  if (g.kind == "directory") return std::make_unique<DirectoryGenerator>(g.directory);
  if (g.spec.empty() && !g.lineage_seed) {
    throw Error(ErrorKind::Config, "simulator generator needs a spec file or a lineage_seed");
  }
  if (!g.spec.empty()) return std::make_unique<sim::SimGenerator>(sim::load_spec(g.spec));
  return std::make_unique<sim::SimGenerator>(sim::make_lineage(model_id, *g.lineage_seed, catalogue));
}

std::unique_ptr<ClassifierBackend> make_classifier(const RunConfig& config) {
  const auto& c = config.classifier;
  if (c.kind == "http") return std::make_unique<HttpClassifier>(c.endpoint, c.timeout_seconds);
  if (c.kind == "stub") return std::make_unique<StubClassifier>(c.seed);
  if (c.kind == "replay") return std::make_unique<ReplayClassifier>(c.fixture);
  return std::make_unique<sim::SimClassifier>();
}

fs::path store_path(const fs::path& dir, const std::string& model_id) {
  return dir / (model_id + ".fingerprints.json");
}

double cost_estimate(std::size_t images, double unit_price) {
  return static_cast<double>(images) * unit_price;
}

int cmd_probe(const RunConfig& config, const std::string& model_id, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    if (model_id.empty()) throw Error(ErrorKind::Config, "--model-id is required");
    const auto catalogue = catalogue_for(config);
    auto generator = make_generator(config, catalogue, model_id);
    auto classifier = make_classifier(config);

    ProbePlan plan;
    plan.model_id = model_id;
    if (config.prompts.empty()) {
      for (const auto& p : catalogue.prompts) plan.prompt_ids.push_back(p.id);
    } else {
      plan.prompt_ids = config.prompts;
    }
    plan.n_per_prompt = config.n_per_prompt;
    plan.seed_base = config.seed_base;
    plan.parallelism = config.parallelism;
    plan.width = config.width;
    plan.height = config.height;
    plan.max_retries = config.max_retries;
    plan.retry_backoff = std::chrono::milliseconds(config.retry_backoff_ms);
    plan.missing_tolerance = config.missing_tolerance;
    fs::create_directories(config.output_dir);
    plan.journal = config.output_dir / (model_id + ".journal.jsonl");

    const std::size_t images = plan.prompt_ids.size() * plan.n_per_prompt;
    ProbeResult result;
    try {
      result = run_probe(*generator, *classifier, catalogue, plan);
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n"
          << "journal kept at " << plan.journal->string() << "; rerun the same command to resume\n";
      return 1;
    }

    const auto path = store_path(config.output_dir, model_id);
    save_fingerprints({model_id, result.fingerprints}, path);
    fs::remove(*plan.journal);

    out << "model:          " << model_id << "\n"
        << "prompts:        " << result.fingerprints.size() << "\n"
        << "samples:        " << result.stats.samples << " (" << result.stats.resumed
        << " resumed from journal)\n"
        << "retries:        " << result.stats.retries << "\n"
        << "cost estimate:  " << images << " images x $" << format_fixed(config.unit_price, 2)
        << " = $" << format_fixed(cost_estimate(images, config.unit_price), 2) << "\n"
        << "fingerprints:   " << path.string() << "\n";
    return 0;
  });
}

int cmd_attribute(const RunConfig& config, const fs::path& suspect,
                  const std::vector<fs::path>& bases, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto suspect_store = load_fingerprints(suspect);
    std::vector<FingerprintStore> base_stores;
    for (const auto& p : bases) base_stores.push_back(load_fingerprints(p));

    AttributionOptions options;
    options.metric = config.metric;
    options.threshold_fraction = config.threshold_fraction;
    options.alpha0 = config.alpha0;
    options.beta0 = config.beta0;
    const auto report = attribute(suspect_store, base_stores, options);

    fs::create_directories(config.output_dir);
    const auto stem = config.output_dir / report.suspect_id;
    std::ostringstream csv, trials;
    write_report_csv(report, csv);
    write_trials_csv(report, trials);
    write_text(fs::path(stem.string() + ".report.csv"), csv.str());
    write_text(fs::path(stem.string() + ".trials.csv"), trials.str());
    write_text(fs::path(stem.string() + ".report.json"), to_json(report).dump(2) + "\n");

    out << "suspect " << report.suspect_id << ", metric " << to_string(report.metric) << ", T = "
        << report.trial_count() << "\n";
    for (const auto& d : report.filter.dropped) {
      out << "dropped prompt " << d.prompt_id << " (mean entropy " << format_fixed(d.mean_entropy, 4)
          << " > " << format_fixed(d.threshold, 4) << ")\n";
    }
    out << csv.str();
    out << "best base: " << report.best_base << " ("
        << to_json(report)["verdict"].get<std::string>() << ")\n";
    return static_cast<int>(report.verdict);
  });
}

int cmd_heatmap(const RunConfig& config, const std::vector<fs::path>& stores, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    if (stores.size() < 2) throw Error(ErrorKind::Config, "heatmap needs at least 2 stores");
    if (config.base_models.empty()) throw Error(ErrorKind::Config, "config lists no base_models");
    std::vector<FingerprintStore> loaded;
    for (const auto& p : stores) loaded.push_back(load_fingerprints(p));

    const auto dir = config.output_dir / "heatmap";
    fs::create_directories(dir);
    std::vector<DistanceMatrix> normalized;
    nlohmann::ordered_json doc;
    doc["metric"] = to_string(config.metric);
    doc["base_models"] = config.base_models;
    doc["prompts"] = nlohmann::ordered_json::array();

    for (const auto& [prompt_id, first] : loaded.front().prompts) {
      std::vector<const Fingerprint*> fps;
      for (const auto& store : loaded) {
        auto it = store.prompts.find(prompt_id);
        if (it == store.prompts.end()) {
          throw Error(ErrorKind::InvalidInput, "store " + store.model_id + " lacks prompt " + prompt_id);
        }
        fps.push_back(&it->second);
      }
      const auto raw = pairwise_distances(fps, config.metric);
      DistanceMatrix norm;
      try {
        norm = normalize_columns(raw, config.base_models);
      } catch (const Error& e) {
        throw Error(e.kind(), "prompt " + prompt_id + ": " + e.what());
      }
      std::ostringstream csv;
      write_csv(norm, csv);
      write_text(dir / (prompt_id + ".csv"), csv.str());
      doc["prompts"].push_back({{"prompt_id", prompt_id}, {"raw", to_json(raw)}, {"normalized", to_json(norm)}});
      normalized.push_back(std::move(norm));
    }

    const auto average = average_matrices(normalized);
    std::ostringstream csv;
    write_csv(average, csv);
    write_text(dir / "average.csv", csv.str());
    doc["average"] = to_json(average);
    write_text(dir / "heatmap.json", doc.dump(1) + "\n");

    out << "wrote " << normalized.size() << " per-prompt matrices and average.csv to " << dir.string()
        << "\n"
        << csv.str();
    return 0;
  });
}

int cmd_simulate(const RunConfig& config, const fs::path& world_path, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(world_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::Config, world_path.string() + ": " + e.what());
    }
    const auto world = sim::world_from_json(doc);
    const auto catalogue = catalogue_for(config);
    const auto models = sim::build_world(world, catalogue);

    fs::create_directories(config.output_dir);
    nlohmann::ordered_json manifest;
    manifest["world"] = sim::to_json(world);
    manifest["models"] = nlohmann::ordered_json::array();
    for (const auto& spec : models) {
      const auto store = sim::probe_simulated(spec, catalogue, world.n_per_prompt, world.seed_base);
      save_fingerprints(store, store_path(config.output_dir, spec.model_id));
      sim::save_spec(spec, config.output_dir / (spec.model_id + ".spec.json"));
      manifest["models"].push_back({{"model_id", spec.model_id},
                                    {"lineage", spec.lineage_id},
                                    {"base", spec.model_id == spec.lineage_id}});
      out << "simulated " << spec.model_id << " (lineage " << spec.lineage_id << ")\n";
    }
    write_text(config.output_dir / "world.json", manifest.dump(2) + "\n");
    out << "wrote " << models.size() << " stores to " << config.output_dir.string() << "\n";
    return 0;
  });
}

int cmd_catalogue_validate(const RunConfig& config, const std::optional<fs::path>& file,
                           const std::optional<fs::path>& emit, std::ostream& out,
                           std::ostream& err) {
  return guarded(err, [&] {
    const auto catalogue = file ? load_catalogue(*file) : catalogue_for(config);
    std::map<std::string, std::size_t> counts;
    for (const auto& p : catalogue.prompts) ++counts[p.superordinate];
    out << catalogue.prompts.size() << " prompts, " << catalogue.vocabularies.size()
        << " vocabularies\n";
    for (const auto& [name, n] : counts) {
      out << "  " << name << ": " << n << " prompts, K = " << catalogue.vocabularies.at(name).size()
          << "\n";
    }
    if (emit) {
      save_catalogue(catalogue, *emit);
      out << "wrote " << emit->string() << "\n";
    }
    return 0;
  });
}

}  // namespace lineage::cli
