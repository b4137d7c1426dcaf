#include "lineage/classify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "httplib.h"
#include "json.hpp"
#include "lineage/error.hpp"
#include "lineage/util.hpp"

namespace lineage {

namespace {

constexpr double kRenormalizeAbove = 1e-9;

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

nlohmann::json response_to_json(const std::string& key, const ClassifierResponse& r) {
  return {{"key", key},
          {"kind", r.kind == ClassifierResponse::Kind::Logits ? "logits" : "probs"},
          {"values", r.values}};
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double hi = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

CategoricalSample classify_image(ClassifierBackend& backend, const ClassifierRequest& request) {
  if (request.labels.empty()) {
    throw Error(ErrorKind::InvalidInput, "classifier request has no labels");
  }
  ClassifierResponse response = backend.classify(request);
  if (response.values.size() != request.labels.size()) {
    throw Error(ErrorKind::BadResponse, "classifier returned " +
                                            std::to_string(response.values.size()) +
                                            " values for " + std::to_string(request.labels.size()) +
                                            " labels");
  }
  for (double v : response.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::BadResponse, "classifier returned non-finite value");
  }

  std::vector<double> probs = response.kind == ClassifierResponse::Kind::Logits
                                  ? softmax(response.values)
                                  : std::move(response.values);
  double sum = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw Error(ErrorKind::BadResponse, "classifier returned a negative probability");
    sum += p;
  }
  const double drift = std::abs(sum - 1.0);
  if (drift > kSimplexTolerance) {
    throw Error(ErrorKind::BadResponse,
                "classifier probabilities sum to " + std::to_string(sum));
  }
  if (drift > kRenormalizeAbove) {
    for (double& p : probs) p /= sum;
  }
  return CategoricalSample(std::move(probs));
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double entropy(const CategoricalSample& sample) { return entropy(sample.probs()); }

FilterReport filter_unreliable_prompts(const FingerprintSet& fingerprints,
                                       double threshold_fraction) {
  if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "threshold_fraction must lie in (0, 1]");
  }
  FilterReport report;
  report.threshold_fraction = threshold_fraction;
  for (const auto& [prompt_id, fp] : fingerprints) {
    if (fp.samples.empty()) {
      throw Error(ErrorKind::InvalidInput, "fingerprint for '" + prompt_id + "' is empty");
    }
    double total = 0.0;
    for (const auto& s : fp.samples) total += entropy(s);
    const double mean = total / static_cast<double>(fp.samples.size());
    const double threshold = threshold_fraction * std::log(static_cast<double>(fp.dimension()));
    if (mean > threshold) {
      report.dropped.push_back({prompt_id, mean, threshold});
    } else {
      report.retained.push_back(prompt_id);
    }
  }
  return report;
}

std::string request_key(const ClassifierRequest& request) {
  std::uint64_t h = fnv1a(request.image.media_type);
  h = fnv1a(std::string_view("\0", 1), h);
  h = fnv1a(request.image.bytes, h);
  for (const auto& label : request.labels) {
    h = fnv1a("\x1f", h);
    h = fnv1a(label, h);
  }
  return hex64(h);
}

ClassifierResponse StubClassifier::classify(const ClassifierRequest& request) {
  std::mt19937_64 rng(splitmix64(seed_ ^ fnv1a(request.image.bytes)));
  std::normal_distribution<double> normal(0.0, scale_);
  ClassifierResponse r;
  r.kind = ClassifierResponse::Kind::Logits;
  r.values.resize(request.labels.size());
  for (double& v : r.values) v = normal(rng);
  return r;
}

ClassifierResponse RecordingClassifier::classify(const ClassifierRequest& request) {
  ClassifierResponse r = inner_.classify(request);
  std::lock_guard lock(mu_);
  recorded_[request_key(request)] = r;
  return r;
}

void RecordingClassifier::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["responses"] = nlohmann::json::array();
  {
    std::lock_guard lock(mu_);
    for (const auto& [key, r] : recorded_) doc["responses"].push_back(response_to_json(key, r));
  }
  write_file_atomic(path, doc.dump(1) + "\n");
}

ReplayClassifier::ReplayClassifier(const std::filesystem::path& fixture) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(fixture));
    for (const auto& entry : doc.at("responses")) {
      ClassifierResponse r;
      r.kind = entry.at("kind").get<std::string>() == "logits" ? ClassifierResponse::Kind::Logits
                                                              : ClassifierResponse::Kind::Probabilities;
      r.values = entry.at("values").get<std::vector<double>>();
      responses_[entry.at("key").get<std::string>()] = std::move(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, fixture.string() + ": " + e.what());
  }
}

ClassifierResponse ReplayClassifier::classify(const ClassifierRequest& request) {
  auto it = responses_.find(request_key(request));
  if (it == responses_.end()) {
    throw Error(ErrorKind::BadResponse, "no recorded response for request " + request_key(request));
  }
  return it->second;
}

ClassifierResponse HttpClassifier::classify(const ClassifierRequest& request) {
  httplib::Client client(base_url_);
  const auto secs = static_cast<time_t>(timeout_);
  const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);

  nlohmann::json body = {{"image", base64_encode(request.image.bytes)},
                         {"media_type", request.image.media_type},
                         {"labels", request.labels}};
  auto res = client.Post("/classify", body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorKind::Transport,
                "POST " + base_url_ + "/classify failed: " + httplib::to_string(res.error()));
  }
  if (res->status >= 500 || res->status == 429) {
    throw Error(ErrorKind::Transport, "classifier service answered HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::BadResponse, "classifier service answered HTTP " + std::to_string(res->status));
  }
  try {
    auto doc = nlohmann::json::parse(res->body);
    ClassifierResponse r;
    if (doc.contains("probs")) {
      r.values = doc.at("probs").get<std::vector<double>>();
    } else {
      r.kind = ClassifierResponse::Kind::Logits;
      r.values = doc.at("logits").get<std::vector<double>>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadResponse, std::string("classifier response: ") + e.what());
  }
}

}  // namespace lineage
