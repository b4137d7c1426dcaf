#include "lineage/probe.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lineage/error.hpp"
#include "lineage/util.hpp"

namespace lineage {

namespace {

std::string media_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

struct Job {
  std::size_t slot;  // prompt position within the plan
  std::size_t index;
  std::int64_t seed;
};

using SampleKey = std::pair<std::string, std::int64_t>;

// Journal layout: a header object on the first line, then one object per
// completed sample. A torn final line (crash mid-append) is ignored.
class Journal {
 public:
  Journal(const std::filesystem::path& path, const ProbePlan& plan) : path_(path) {
    bool have_header = false;
    if (std::filesystem::exists(path)) have_header = read_existing(plan);
    if (have_header) {
      out_.open(path, std::ios::app);
    } else {
      out_.open(path, std::ios::out | std::ios::trunc);
      nlohmann::ordered_json header = {{"journal", "lineage-probe"},
                                       {"model_id", plan.model_id},
                                       {"seed_base", plan.seed_base}};
      out_ << header.dump() << "\n";
      out_.flush();
    }
    if (!out_) throw Error(ErrorKind::Checkpoint, "cannot open journal " + path.string());
  }

  const std::map<SampleKey, std::vector<double>>& completed() const { return completed_; }

  void append(const std::string& prompt_id, std::size_t index, std::int64_t seed,
              const CategoricalSample& sample) {
    nlohmann::ordered_json entry = {{"prompt_id", prompt_id},
                                    {"index", index},
                                    {"seed", seed},
                                    {"probs", std::vector<double>(sample.probs().begin(),
                                                                  sample.probs().end())}};
    std::lock_guard lock(mu_);
    out_ << entry.dump() << "\n";
    out_.flush();
    if (!out_) throw Error(ErrorKind::Checkpoint, "journal write failed: " + path_.string());
  }

 private:
  bool read_existing(const ProbePlan& plan) {
    std::ifstream in(path_);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw Error(ErrorKind::Checkpoint, "corrupt journal line in " + path_.string());
      }
      if (header) {
        header = false;
        if (doc.value("model_id", std::string()) != plan.model_id ||
            doc.value("seed_base", std::int64_t{0}) != plan.seed_base) {
          throw Error(ErrorKind::Checkpoint,
                      "journal " + path_.string() + " belongs to a different model or seed base");
        }
        continue;
      }
      completed_[{doc.at("prompt_id").get<std::string>(), doc.at("seed").get<std::int64_t>()}] =
          doc.at("probs").get<std::vector<double>>();
    }
    return !header;
  }

  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
  std::map<SampleKey, std::vector<double>> completed_;
};

template <typename Fn>
auto with_retries(const ProbePlan& plan, std::atomic<std::size_t>& retries, Fn&& fn) {
  for (int attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (!e.retryable() || attempt >= plan.max_retries) throw;
      ++retries;
      std::this_thread::sleep_for(plan.retry_backoff * (1 << attempt));
    }
  }
}

}  // namespace

Image HttpGenerator::generate(const GenerationRequest& request) {
  httplib::Client client(base_url_);
  const auto secs = static_cast<time_t>(timeout_);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

  nlohmann::json body = {{"prompt", request.prompt},
                         {"seed", request.seed},
                         {"width", request.width},
                         {"height", request.height}};
  auto res = client.Post("/generate", headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::Transport,
                "POST " + base_url_ + "/generate failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw Error(ErrorKind::Transport, "generation service answered HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::Generation, "generation service answered HTTP " + std::to_string(res->status));
  }
  try {
    auto doc = nlohmann::json::parse(res->body);
    return Image{base64_decode(doc.at("image").get<std::string>()),
                 doc.value("media_type", std::string("image/png"))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Generation, std::string("generation response: ") + e.what());
  }
}

Image DirectoryGenerator::generate(const GenerationRequest& request) {
  const std::string stem = request.prompt_id + "_" + std::to_string(request.index);
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(root_, ec)) {
    if (entry.is_regular_file() && entry.path().stem() == stem) {
      return Image{read_file(entry.path()), media_type_for(entry.path())};
    }
  }
  throw Error(ErrorKind::Generation, "no image " + stem + ".* in " + root_.string());
}

void check_plan(const ProbePlan& plan) {
  if (plan.n_per_prompt < 1) throw Error(ErrorKind::InvalidInput, "n_per_prompt must be >= 1");
  if (plan.parallelism < 1) throw Error(ErrorKind::InvalidInput, "parallelism must be >= 1");
  if (plan.max_retries < 0) throw Error(ErrorKind::InvalidInput, "max_retries must be >= 0");
}

std::int64_t probe_seed(std::int64_t seed_base, std::size_t prompt_index, std::size_t i) {
  return seed_base + 10'000 * static_cast<std::int64_t>(prompt_index) + static_cast<std::int64_t>(i);
}

ProbeResult run_probe(GenerationBackend& generator, ClassifierBackend& classifier,
                      const PromptCatalogue& catalogue, const ProbePlan& plan) {
  check_plan(plan);
  struct Slot {
    const CompositionalPrompt* prompt;
    const CategoryVocabulary* vocab;
    std::vector<std::int64_t> seeds;
    std::vector<std::optional<CategoricalSample>> samples;
  };
  std::vector<Slot> slots;
  for (const auto& id : plan.prompt_ids) {
    const std::size_t pos = catalogue.index_of(id);
    Slot slot{&catalogue.prompts[pos], &catalogue.vocabulary_for(id), {}, {}};
    for (std::size_t i = 0; i < plan.n_per_prompt; ++i) {
      slot.seeds.push_back(probe_seed(plan.seed_base, pos, i));
    }
    slot.samples.resize(plan.n_per_prompt);
    slots.push_back(std::move(slot));
  }

  std::optional<Journal> journal;
  if (plan.journal) journal.emplace(*plan.journal, plan);

  ProbeResult result;
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    for (std::size_t i = 0; i < plan.n_per_prompt; ++i) {
      if (journal) {
        auto it = journal->completed().find({slots[s].prompt->id, slots[s].seeds[i]});
        if (it != journal->completed().end()) {
          if (it->second.size() != slots[s].vocab->size()) {
            throw Error(ErrorKind::Checkpoint, "journal sample for " + slots[s].prompt->id +
                                                   " has the wrong dimension");
          }
          slots[s].samples[i] = CategoricalSample(it->second);
          ++result.stats.resumed;
          continue;
        }
      }
      jobs.push_back({s, i, slots[s].seeds[i]});
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failures{0};
  std::atomic<std::size_t> retries{0};
  std::atomic<bool> abort{false};
  std::mutex error_mu;
  std::string first_error;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      Slot& slot = slots[job.slot];
      try {
        GenerationRequest req{slot.prompt->id, slot.prompt->rendered, job.seed, job.index,
                              plan.width, plan.height};
        Image image = with_retries(plan, retries, [&] { return generator.generate(req); });
        ClassifierRequest creq{std::move(image), slot.vocab->labels};
        CategoricalSample sample =
            with_retries(plan, retries, [&] { return classify_image(classifier, creq); });
        if (journal) journal->append(slot.prompt->id, job.index, job.seed, sample);
        slot.samples[job.index] = std::move(sample);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::Checkpoint) abort = true;
        {
          std::lock_guard lock(error_mu);
          if (first_error.empty()) first_error = e.what();
        }
        if (failures.fetch_add(1) + 1 > plan.missing_tolerance) abort = true;
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    const std::size_t n_threads = std::min(plan.parallelism, std::max<std::size_t>(jobs.size(), 1));
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  result.stats.retries = retries.load();

  std::size_t missing = 0;
  for (const auto& slot : slots) {
    for (const auto& s : slot.samples) missing += s ? 0 : 1;
  }
  result.stats.missing = missing;
  if (abort.load() || missing > plan.missing_tolerance) {
    std::string where = plan.journal ? " (resume from journal " + plan.journal->string() + ")" : "";
    throw Error(ErrorKind::ProbeIncomplete, std::to_string(missing) + " of " +
                                                std::to_string(slots.size() * plan.n_per_prompt) +
                                                " samples missing" + where + ": " + first_error);
  }

  for (auto& slot : slots) {
    Fingerprint fp;
    fp.model_id = plan.model_id;
    fp.prompt_id = slot.prompt->id;
    fp.vocabulary = slot.vocab->superordinate;
    for (std::size_t i = 0; i < slot.samples.size(); ++i) {
      if (!slot.samples[i]) continue;
      fp.samples.push_back(std::move(*slot.samples[i]));
      fp.seeds.push_back(slot.seeds[i]);
    }
    if (fp.samples.empty()) {
      throw Error(ErrorKind::ProbeIncomplete, "no samples for prompt " + fp.prompt_id);
    }
    result.stats.samples += fp.samples.size();
    result.fingerprints.emplace(fp.prompt_id, std::move(fp));
  }
  return result;
}

std::string serialize_store(const FingerprintStore& store) {
  nlohmann::ordered_json doc;
  doc["model_id"] = store.model_id;
  doc["prompts"] = nlohmann::ordered_json::array();
  for (const auto& [id, fp] : store.prompts) {
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& s : fp.samples) {
      samples.push_back(std::vector<double>(s.probs().begin(), s.probs().end()));
    }
    doc["prompts"].push_back({{"prompt_id", id},
                              {"vocabulary", fp.vocabulary},
                              {"seeds", fp.seeds},
                              {"samples", std::move(samples)}});
  }
  return doc.dump(1) + "\n";
}

FingerprintStore parse_store(std::string_view text, std::string_view origin) {
  FingerprintStore store;
  try {
    auto doc = nlohmann::json::parse(text);
    store.model_id = doc.at("model_id").get<std::string>();
    for (const auto& entry : doc.at("prompts")) {
      Fingerprint fp;
      fp.model_id = store.model_id;
      fp.prompt_id = entry.at("prompt_id").get<std::string>();
      fp.vocabulary = entry.value("vocabulary", std::string());
      fp.seeds = entry.at("seeds").get<std::vector<std::int64_t>>();
      for (const auto& s : entry.at("samples")) {
        try {
          fp.samples.emplace_back(s.get<std::vector<double>>());
        } catch (const Error& e) {
          throw Error(ErrorKind::InvariantViolation, std::string(origin) + ": prompt " +
                                                         fp.prompt_id + ": " + e.what());
        }
      }
      check_fingerprint(fp);
      if (!store.prompts.emplace(fp.prompt_id, fp).second) {
        throw Error(ErrorKind::DuplicateId, std::string(origin) + ": prompt " + fp.prompt_id +
                                                " listed twice");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string(origin) + ": " + e.what());
  }
  return store;
}

void save_fingerprints(const FingerprintStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_store(store));
}

FingerprintStore load_fingerprints(const std::filesystem::path& path) {
  return parse_store(read_file(path), path.string());
}

}  // namespace lineage
