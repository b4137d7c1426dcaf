#include "lineage/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "lineage/error.hpp"
#include "lineage/util.hpp"

namespace lineage {

namespace {

constexpr double kCredibleLow = 0.025;
constexpr double kCredibleHigh = 0.975;

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10'000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  return h;
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

TrialOutcome predict_from_distances(std::string prompt_id, std::map<std::string, double> distances) {
  if (distances.empty()) throw Error(ErrorKind::InvalidInput, "no base distances for " + prompt_id);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [id, d] : distances) best = std::min(best, d);

  TrialOutcome out;
  out.prompt_id = std::move(prompt_id);
  std::size_t tied = 0;
  for (const auto& [id, d] : distances) {
    if (d - best <= kTieTolerance * std::max(std::abs(best), std::abs(d))) {
      if (tied++ == 0) out.predicted_base = id;  // map order = lexicographic
    }
  }
  out.tie = tied >= 2;
  out.distances = std::move(distances);
  return out;
}

TrialOutcome classify_trial(const Fingerprint& suspect, const BaseFingerprints& bases,
                            Metric metric) {
  if (bases.size() < 2) {
    throw Error(ErrorKind::InvalidInput, "a trial needs at least 2 base models");
  }
  std::map<std::string, double> distances;
  for (const auto& [id, fp] : bases) {
    if (fp->prompt_id != suspect.prompt_id) {
      throw Error(ErrorKind::InvalidInput, "base " + id + " fingerprint is for prompt " +
                                               fp->prompt_id + ", suspect for " + suspect.prompt_id);
    }
    if (!fp->vocabulary.empty() && !suspect.vocabulary.empty() &&
        fp->vocabulary != suspect.vocabulary) {
      throw Error(ErrorKind::InvalidInput, "base " + id + " was classified against vocabulary '" +
                                               fp->vocabulary + "', suspect against '" +
                                               suspect.vocabulary + "'");
    }
    distances[id] = distance(suspect, *fp, metric);
  }
  return predict_from_distances(suspect.prompt_id, std::move(distances));
}

TrialCounts count_successes(const std::vector<TrialOutcome>& trials, const std::string& true_base) {
  TrialCounts out;
  for (const auto& t : trials) {
    if (t.predicted_base == true_base) {
      ++out.successes;
    } else {
      ++out.failures;
    }
  }
  return out;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::InvalidInput, "beta parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::InvalidInput, "x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_quantile(double a, double b, double q) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::InvalidInput, "beta parameters must be positive");
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidInput, "quantile level outside (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (regularized_incomplete_beta(a, b, mid) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

PosteriorSummary posterior(long long successes, long long failures, double alpha0, double beta0) {
  if (successes < 0 || failures < 0) {
    throw Error(ErrorKind::InvalidInput, "success and failure counts must be non-negative");
  }
  if (!(alpha0 > 0.0) || !(beta0 > 0.0)) {
    throw Error(ErrorKind::InvalidInput, "prior parameters must be positive");
  }
  PosteriorSummary p;
  p.alpha0 = alpha0;
  p.beta0 = beta0;
  p.successes = static_cast<std::size_t>(successes);
  p.failures = static_cast<std::size_t>(failures);
  p.post_alpha = alpha0 + static_cast<double>(successes);
  p.post_beta = beta0 + static_cast<double>(failures);
  p.mean = p.post_alpha / (p.post_alpha + p.post_beta);
  p.ci_low = beta_quantile(p.post_alpha, p.post_beta, kCredibleLow);
  p.ci_high = beta_quantile(p.post_alpha, p.post_beta, kCredibleHigh);
  return p;
}

PosteriorSummary decide(PosteriorSummary summary, std::size_t families) {
  if (families < 2) throw Error(ErrorKind::InvalidInput, "need at least 2 base families");
  const double chance = 1.0 / static_cast<double>(families);
  summary.families = families;
  summary.significant = summary.ci_low > chance;
  summary.dominant = summary.ci_low > 0.5;
  summary.below_chance = summary.ci_high < chance;
  return summary;
}

AttributionReport attribute(const FingerprintStore& suspect, const std::vector<FingerprintStore>& bases,
                            const AttributionOptions& options) {
  if (bases.size() < 2) throw Error(ErrorKind::InvalidInput, "attribution needs at least 2 base stores");
  AttributionReport report;
  report.suspect_id = suspect.model_id;
  report.metric = options.metric;

  if (options.filter_prompts) {
    report.filter = filter_unreliable_prompts(suspect.prompts, options.threshold_fraction);
  } else {
    for (const auto& [id, fp] : suspect.prompts) report.filter.retained.push_back(id);
  }

  std::map<std::string, const FingerprintStore*> by_id;
  for (const auto& b : bases) {
    if (!by_id.emplace(b.model_id, &b).second) {
      throw Error(ErrorKind::DuplicateId, "base model " + b.model_id + " given twice");
    }
  }

  for (const auto& prompt_id : report.filter.retained) {
    const Fingerprint& s = suspect.prompts.at(prompt_id);
    BaseFingerprints base_fps;
    for (const auto& [id, store] : by_id) {
      auto it = store->prompts.find(prompt_id);
      if (it == store->prompts.end()) {
        throw Error(ErrorKind::InvalidInput, "base store " + id + " has no prompt " + prompt_id);
      }
      base_fps.emplace(id, &it->second);
    }
    report.trials.push_back(classify_trial(s, base_fps, options.metric));
  }

  const auto t = static_cast<long long>(report.trials.size());
  std::size_t best_s = 0;
  for (const auto& [id, store] : by_id) {
    const auto counts = count_successes(report.trials, id);
    auto summary = posterior(static_cast<long long>(counts.successes),
                             t - static_cast<long long>(counts.successes), options.alpha0,
                             options.beta0);
    summary = decide(summary, by_id.size());
    if (report.best_base.empty() || counts.successes > best_s) {
      report.best_base = id;
      best_s = counts.successes;
    }
    report.rows.push_back({id, summary});
  }

  for (const auto& row : report.rows) {
    if (row.base_id != report.best_base) continue;
    report.verdict = row.posterior.dominant      ? Verdict::Dominant
                     : row.posterior.significant ? Verdict::Significant
                                                 : Verdict::Inconclusive;
  }
  return report;
}

void write_report_csv(const AttributionReport& report, std::ostream& out) {
  out << "suspect,base,metric,s,f,T,mean,ci_low,ci_high,significant,dominant,below_chance\n";
  for (const auto& row : report.rows) {
    const auto& p = row.posterior;
    out << report.suspect_id << ',' << row.base_id << ',' << to_string(report.metric) << ','
        << p.successes << ',' << p.failures << ',' << p.trials() << ',' << format_fixed(p.mean, 6)
        << ',' << format_fixed(p.ci_low, 6) << ',' << format_fixed(p.ci_high, 6) << ','
        << bool_text(p.significant) << ',' << bool_text(p.dominant) << ','
        << bool_text(p.below_chance) << '\n';
  }
}

void write_trials_csv(const AttributionReport& report, std::ostream& out) {
  out << "prompt_id,predicted_base,tie";
  for (const auto& row : report.rows) out << ',' << row.base_id;
  out << '\n';
  for (const auto& t : report.trials) {
    out << t.prompt_id << ',' << t.predicted_base << ',' << bool_text(t.tie);
    for (const auto& row : report.rows) out << ',' << format_fixed(t.distances.at(row.base_id), 6);
    out << '\n';
  }
}

nlohmann::ordered_json to_json(const AttributionReport& report) {
  nlohmann::ordered_json doc;
  doc["suspect"] = report.suspect_id;
  doc["metric"] = to_string(report.metric);
  doc["T"] = report.trial_count();
  doc["best_base"] = report.best_base;
  doc["verdict"] = report.verdict == Verdict::Dominant      ? "dominant"
                   : report.verdict == Verdict::Significant ? "significant"
                                                            : "inconclusive";
  doc["threshold_fraction"] = report.filter.threshold_fraction;
  doc["dropped_prompts"] = nlohmann::ordered_json::array();
  for (const auto& d : report.filter.dropped) {
    doc["dropped_prompts"].push_back(
        {{"prompt_id", d.prompt_id}, {"mean_entropy", d.mean_entropy}, {"threshold", d.threshold}});
  }
  doc["posteriors"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    const auto& p = row.posterior;
    doc["posteriors"].push_back({{"base", row.base_id},
                                 {"s", p.successes},
                                 {"f", p.failures},
                                 {"T", p.trials()},
                                 {"alpha0", p.alpha0},
                                 {"beta0", p.beta0},
                                 {"post_alpha", p.post_alpha},
                                 {"post_beta", p.post_beta},
                                 {"mean", p.mean},
                                 {"ci_low", p.ci_low},
                                 {"ci_high", p.ci_high},
                                 {"K", p.families},
                                 {"significant", p.significant},
                                 {"dominant", p.dominant},
                                 {"below_chance", p.below_chance}});
  }
  doc["trials"] = nlohmann::ordered_json::array();
  for (const auto& t : report.trials) {
    doc["trials"].push_back({{"prompt_id", t.prompt_id},
                             {"predicted_base", t.predicted_base},
                             {"tie", t.tie},
                             {"distances", t.distances}});
  }
  return doc;
}

}  // namespace lineage
