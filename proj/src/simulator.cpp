#include "lineage/simulator.hpp"

#include <cmath>
#include <set>

#include "lineage/error.hpp"
#include "lineage/util.hpp"

namespace lineage::sim {

namespace {

std::mt19937_64 keyed_rng(std::uint64_t seed, std::string_view key) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(fnv1a(key))));
}

// Gamma shapes this small only ever produce 0 in double precision; skip them
// so std::gamma_distribution never sees a zero shape.
constexpr double kMinShape = 1e-300;

}  // namespace

const PromptLaw& SimModelSpec::law(const std::string& prompt_id) const {
  auto it = prompts.find(prompt_id);
  if (it == prompts.end()) {
    throw Error(ErrorKind::UnknownPrompt, "model " + model_id + " has no prompt " + prompt_id);
  }
  return it->second;
}

void check_spec(const SimModelSpec& spec) {
  for (const auto& [id, law] : spec.prompts) {
    double sum = 0.0;
    for (double v : law.mean) {
      if (!(v >= 0.0)) throw Error(ErrorKind::InvariantViolation, id + ": negative mean entry");
      sum += v;
    }
    if (law.mean.empty() || std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorKind::InvariantViolation, id + ": mean is not on the simplex");
    }
    if (!(law.concentration > 0.0)) {
      throw Error(ErrorKind::InvariantViolation, id + ": concentration must be positive");
    }
    if (!(law.rarity >= 0.0 && law.rarity <= 1.0)) {
      throw Error(ErrorKind::InvariantViolation, id + ": rarity outside [0, 1]");
    }
  }
}

KMap k_map_from(const PromptCatalogue& catalogue) {
  KMap out;
  for (const auto& [name, vocab] : catalogue.vocabularies) out[name] = vocab.size();
  return out;
}

double rarity_for(std::size_t attribute_count, double rho) {
  return 1.0 - std::pow(rho, static_cast<double>(attribute_count));
}

double shift_weight(double strength, double rarity, double gamma) {
  return strength * std::pow(1.0 - rarity, gamma);
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, std::mt19937_64& rng) {
  std::vector<double> out(alpha.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i] <= kMinShape) continue;
    std::gamma_distribution<double> gamma(alpha[i], 1.0);
    out[i] = gamma(rng);
    sum += out[i];
  }
  if (!(sum > 0.0)) throw Error(ErrorKind::InvalidInput, "Dirichlet draw underflowed");
  for (double& v : out) v /= sum;
  return out;
}

SimModelSpec make_lineage(std::string model_id, std::uint64_t seed,
                          const PromptCatalogue& catalogue, const KMap& k_map,
                          const LineageParams& params) {
  if (!(params.alpha0 > 0.0)) throw Error(ErrorKind::InvalidInput, "alpha0 must be positive");
  if (!(params.concentration > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "concentration must be positive");
  }
  if (!(params.rho > 0.0 && params.rho < 1.0)) {
    throw Error(ErrorKind::InvalidInput, "rho must lie in (0, 1)");
  }
  SimModelSpec spec;
  spec.lineage_id = model_id;
  spec.model_id = std::move(model_id);
  for (const auto& prompt : catalogue.prompts) {
    auto k_it = k_map.find(prompt.superordinate);
    if (k_it == k_map.end()) {
      throw Error(ErrorKind::MissingVocabulary, "no K for superordinate " + prompt.superordinate);
    }
    auto rng = keyed_rng(seed, prompt.id);
    std::vector<double> alpha(k_it->second, params.alpha0);
    PromptLaw law;
    law.vocabulary = prompt.superordinate;
    law.mean = sample_dirichlet(alpha, rng);
    law.concentration = params.concentration;
    law.rarity = rarity_for(prompt.attributes.size(), params.rho);
    spec.prompts.emplace(prompt.id, std::move(law));
  }
  return spec;
}

SimModelSpec make_lineage(std::string model_id, std::uint64_t seed,
                          const PromptCatalogue& catalogue, const LineageParams& params) {
  return make_lineage(std::move(model_id), seed, catalogue, k_map_from(catalogue), params);
}

std::vector<double> style_shift(std::uint64_t style_shift_seed, const std::string& prompt_id,
                                std::size_t k) {
  auto rng = keyed_rng(style_shift_seed, prompt_id);
  std::vector<double> ones(k, 1.0);
  return sample_dirichlet(ones, rng);
}

SimModelSpec fine_tune(const SimModelSpec& base, const FineTuneConfig& cfg, std::string model_id) {
  if (!(cfg.strength >= 0.0 && cfg.strength <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "fine-tune strength must lie in [0, 1]");
  }
  if (!(cfg.rarity_exponent >= 0.0)) {
    throw Error(ErrorKind::InvalidInput, "rarity exponent must be >= 0");
  }
  SimModelSpec out = base;
  out.model_id = std::move(model_id);
  for (auto& [id, law] : out.prompts) {
    const double w = shift_weight(cfg.strength, law.rarity, cfg.rarity_exponent);
    if (w == 0.0) continue;
    const auto u = style_shift(cfg.style_shift_seed, id, law.mean.size());
    for (std::size_t i = 0; i < law.mean.size(); ++i) {
      law.mean[i] = (1.0 - w) * law.mean[i] + w * u[i];
    }
  }
  return out;
}

CategoricalSample draw_sample(const SimModelSpec& spec, const std::string& prompt_id,
                              std::int64_t seed) {
  const PromptLaw& law = spec.law(prompt_id);
  auto rng = keyed_rng(splitmix64(static_cast<std::uint64_t>(seed)) ^ fnv1a(spec.model_id),
                       prompt_id);
  std::vector<double> alpha(law.mean.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = law.concentration * law.mean[i];
  return CategoricalSample(sample_dirichlet(alpha, rng));
}

Fingerprint sample_fingerprint(const SimModelSpec& spec, const std::string& prompt_id,
                               std::size_t n, std::int64_t seed) {
  Fingerprint fp;
  fp.model_id = spec.model_id;
  fp.prompt_id = prompt_id;
  fp.vocabulary = spec.law(prompt_id).vocabulary;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t s = seed + static_cast<std::int64_t>(i);
    fp.samples.push_back(draw_sample(spec, prompt_id, s));
    fp.seeds.push_back(s);
  }
  return fp;
}

FingerprintStore probe_simulated(const SimModelSpec& spec, const PromptCatalogue& catalogue,
                                 std::size_t n_per_prompt, std::int64_t seed_base) {
  FingerprintStore store;
  store.model_id = spec.model_id;
  for (std::size_t pos = 0; pos < catalogue.prompts.size(); ++pos) {
    const auto& id = catalogue.prompts[pos].id;
    store.prompts.emplace(id, sample_fingerprint(spec, id, n_per_prompt,
                                                 probe_seed(seed_base, pos, 0)));
  }
  return store;
}

nlohmann::ordered_json to_json(const SimModelSpec& spec) {
  nlohmann::ordered_json doc;
  doc["model_id"] = spec.model_id;
  doc["lineage_id"] = spec.lineage_id;
  doc["prompts"] = nlohmann::ordered_json::array();
  for (const auto& [id, law] : spec.prompts) {
    doc["prompts"].push_back({{"prompt_id", id},
                              {"vocabulary", law.vocabulary},
                              {"mean", law.mean},
                              {"concentration", law.concentration},
                              {"rarity", law.rarity}});
  }
  return doc;
}

SimModelSpec spec_from_json(const nlohmann::json& doc) {
  SimModelSpec spec;
  try {
    spec.model_id = doc.at("model_id").get<std::string>();
    spec.lineage_id = doc.at("lineage_id").get<std::string>();
    for (const auto& entry : doc.at("prompts")) {
      PromptLaw law;
      law.vocabulary = entry.at("vocabulary").get<std::string>();
      law.mean = entry.at("mean").get<std::vector<double>>();
      law.concentration = entry.at("concentration").get<double>();
      law.rarity = entry.at("rarity").get<double>();
      spec.prompts.emplace(entry.at("prompt_id").get<std::string>(), std::move(law));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("model spec: ") + e.what());
  }
  check_spec(spec);
  return spec;
}

void save_spec(const SimModelSpec& spec, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(spec).dump(1) + "\n");
}

SimModelSpec load_spec(const std::filesystem::path& path) {
  try {
    return spec_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

Image SimGenerator::generate(const GenerationRequest& request) {
  const auto sample = draw_sample(spec_, request.prompt_id, request.seed);
  nlohmann::json doc = {{"probs", std::vector<double>(sample.probs().begin(), sample.probs().end())}};
  return Image{doc.dump(), kSimMediaType};
}

ClassifierResponse SimClassifier::classify(const ClassifierRequest& request) {
  if (request.image.media_type != kSimMediaType) {
    throw Error(ErrorKind::BadResponse, "simulator classifier got media type " +
                                            request.image.media_type);
  }
  ClassifierResponse r;
  try {
    r.values = nlohmann::json::parse(request.image.bytes).at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadResponse, std::string("simulated image: ") + e.what());
  }
  return r;
}

WorldSpec world_from_json(const nlohmann::json& doc) {
  WorldSpec world;
  try {
    world.params.alpha0 = doc.value("alpha0", world.params.alpha0);
    world.params.concentration = doc.value("concentration", world.params.concentration);
    world.params.rho = doc.value("rho", world.params.rho);
    world.n_per_prompt = doc.value("n_per_prompt", world.n_per_prompt);
    world.seed_base = doc.value("seed_base", world.seed_base);
    for (const auto& l : doc.at("lineages")) {
      LineageEntry entry;
      entry.base_id = l.at("id").get<std::string>();
      entry.seed = l.at("seed").get<std::uint64_t>();
      for (const auto& f : l.value("fine_tunes", nlohmann::json::array())) {
        FineTuneEntry ft;
        ft.model_id = f.at("id").get<std::string>();
        ft.config.strength = f.at("strength").get<double>();
        ft.config.style_shift_seed = f.at("style_shift_seed").get<std::uint64_t>();
        ft.config.rarity_exponent = f.value("rarity_exponent", 2.0);
        entry.fine_tunes.push_back(std::move(ft));
      }
      world.lineages.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("world spec: ") + e.what());
  }

  if (world.lineages.empty()) throw Error(ErrorKind::Config, "world spec lists no lineages");
  if (world.n_per_prompt < 1) throw Error(ErrorKind::Config, "n_per_prompt must be >= 1");
  std::set<std::string> ids;
  auto claim = [&](const std::string& id) {
    if (id.empty() || !ids.insert(id).second) {
      throw Error(ErrorKind::Config, "world spec repeats or omits model id '" + id + "'");
    }
  };
  for (const auto& l : world.lineages) {
    claim(l.base_id);
    for (const auto& f : l.fine_tunes) {
      claim(f.model_id);
      if (!(f.config.strength >= 0.0 && f.config.strength <= 1.0) ||
          !(f.config.rarity_exponent >= 0.0)) {
        throw Error(ErrorKind::Config, "fine-tune " + f.model_id + " has out-of-range settings");
      }
    }
  }
  return world;
}

nlohmann::ordered_json to_json(const WorldSpec& world) {
  nlohmann::ordered_json doc;
  doc["alpha0"] = world.params.alpha0;
  doc["concentration"] = world.params.concentration;
  doc["rho"] = world.params.rho;
  doc["n_per_prompt"] = world.n_per_prompt;
  doc["seed_base"] = world.seed_base;
  doc["lineages"] = nlohmann::ordered_json::array();
  for (const auto& l : world.lineages) {
    nlohmann::ordered_json entry = {{"id", l.base_id}, {"seed", l.seed}};
    entry["fine_tunes"] = nlohmann::ordered_json::array();
    for (const auto& f : l.fine_tunes) {
      entry["fine_tunes"].push_back({{"id", f.model_id},
                                     {"strength", f.config.strength},
                                     {"style_shift_seed", f.config.style_shift_seed},
                                     {"rarity_exponent", f.config.rarity_exponent}});
    }
    doc["lineages"].push_back(std::move(entry));
  }
  return doc;
}

std::vector<SimModelSpec> build_world(const WorldSpec& world, const PromptCatalogue& catalogue) {
  std::vector<SimModelSpec> out;
  for (const auto& l : world.lineages) {
    const std::size_t base_pos = out.size();
    out.push_back(make_lineage(l.base_id, l.seed, catalogue, world.params));
    for (const auto& f : l.fine_tunes) {
      SimModelSpec tuned = fine_tune(out[base_pos], f.config, f.model_id);
      out.push_back(std::move(tuned));
    }
  }
  return out;
}

}  // namespace lineage::sim
