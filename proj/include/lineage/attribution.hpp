#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lineage/classify.hpp"
#include "lineage/metrics.hpp"
#include "lineage/probe.hpp"

namespace lineage {

/// One prompt's nearest-base verdict.
struct TrialOutcome {
  std::string prompt_id;
  std::map<std::string, double> distances;
  std::string predicted_base;
  bool tie = false;
};

/// Base fingerprints for a single prompt, keyed by base model id.
using BaseFingerprints = std::map<std::string, const Fingerprint*>;

inline constexpr double kTieTolerance = 1e-9;

/// Argmin over bases. Distances within kTieTolerance (relative) of the
/// minimum count as tied; ties go to the lexicographically smallest id.
TrialOutcome predict_from_distances(std::string prompt_id, std::map<std::string, double> distances);

/// Throws InvalidInput on fewer than 2 bases or mismatched prompt ids,
/// DimensionMismatch on differing K.
TrialOutcome classify_trial(const Fingerprint& suspect, const BaseFingerprints& bases,
                            Metric metric);

struct TrialCounts {
  std::size_t successes = 0;
  std::size_t failures = 0;
};

TrialCounts count_successes(const std::vector<TrialOutcome>& trials, const std::string& true_base);

// Beta posterior ------------------------------------------------------------------

/// Regularised incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// x with I_x(a, b) = q, by bisection on the incomplete beta.
double beta_quantile(double a, double b, double q);

struct PosteriorSummary {
  double alpha0 = 1.0;
  double beta0 = 1.0;
  std::size_t successes = 0;
  std::size_t failures = 0;
  double post_alpha = 0.0;
  double post_beta = 0.0;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
  /// Number of candidate base families; 0 until decide() runs.
  std::size_t families = 0;
  bool significant = false;
  bool dominant = false;
  bool below_chance = false;

  std::size_t trials() const { return successes + failures; }
};

/// Beta(alpha0 + s, beta0 + f) with its equal-tailed 95% interval.
PosteriorSummary posterior(long long successes, long long failures, double alpha0 = 1.0,
                           double beta0 = 1.0);

/// significant: ci_low > 1/K; dominant: ci_low > 0.5; below_chance: ci_high < 1/K.
PosteriorSummary decide(PosteriorSummary summary, std::size_t families);

// Full attribution run -------------------------------------------------------------

struct AttributionOptions {
  Metric metric = Metric::W2;
  bool filter_prompts = true;
  double threshold_fraction = kDefaultEntropyThreshold;
  double alpha0 = 1.0;
  double beta0 = 1.0;
};

/// Exit status of `attribute`, by best-supported base.
enum class Verdict { Dominant = 0, Significant = 10, Inconclusive = 20 };

struct BasePosterior {
  std::string base_id;
  PosteriorSummary posterior;
};

struct AttributionReport {
  std::string suspect_id;
  Metric metric = Metric::W2;
  FilterReport filter;
  std::vector<TrialOutcome> trials;
  /// One row per base, in base-id order.
  std::vector<BasePosterior> rows;
  std::string best_base;
  Verdict verdict = Verdict::Inconclusive;

  std::size_t trial_count() const { return trials.size(); }
};

/// Entropy-filters the suspect's prompts, runs one trial per retained prompt
/// against every base and summarises each base with a Beta posterior.
/// Throws InvalidInput when a base store lacks a retained prompt or the
/// vocabularies disagree.
AttributionReport attribute(const FingerprintStore& suspect, const std::vector<FingerprintStore>& bases,
                            const AttributionOptions& options = {});

void write_report_csv(const AttributionReport& report, std::ostream& out);
void write_trials_csv(const AttributionReport& report, std::ostream& out);
nlohmann::ordered_json to_json(const AttributionReport& report);

}  // namespace lineage
