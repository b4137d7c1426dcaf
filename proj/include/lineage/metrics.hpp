#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lineage/sample.hpp"

namespace lineage {

enum class Metric { W2, JSD };

std::string_view to_string(Metric metric);
/// Accepts "w2" / "jsd" (case-insensitive); throws Config otherwise.
Metric parse_metric(std::string_view text);

// Optimal transport -----------------------------------------------------------

struct Assignment {
  /// row i is matched to column column_of[i]
  std::vector<std::size_t> column_of;
  double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a dense n x n row-major cost matrix
/// (shortest augmenting paths with dual potentials, O(n^3)).
Assignment solve_assignment(std::span<const double> cost, std::size_t n);

/// Exact optimal transport between uniform measures of sizes rows and cols
/// over a row-major cost matrix; returns the minimum expected cost. Solved as
/// an integral min-cost flow with masses scaled by lcm(rows, cols).
double uniform_transport_cost(std::span<const double> cost, std::size_t rows, std::size_t cols);

struct W2Result {
  double distance = 0.0;
  /// true when the fingerprints differ in size and the transportation solver ran
  bool unequal_sizes = false;
};

/// Exact 2-Wasserstein distance between the uniform empirical measures of two
/// fingerprints under squared Euclidean cost.
W2Result wasserstein2_detailed(const Fingerprint& a, const Fingerprint& b);
double wasserstein2(const Fingerprint& a, const Fingerprint& b);

/// Base-2 Jensen-Shannon divergence; result in [0, 1].
double jsd(std::span<const double> p, std::span<const double> q);
/// JSD between the mean categorical distributions of the two sample sets.
double jsd(const Fingerprint& a, const Fingerprint& b);

double distance(const Fingerprint& a, const Fingerprint& b, Metric metric);

// Distance matrices -------------------------------------------------------------

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  /// Throws InvalidInput on shape mismatch, negative / non-finite entries or a
  /// nonzero diagonal.
  DistanceMatrix(std::vector<std::string> ids, std::vector<double> values);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> values() const { return values_; }
  double operator()(std::size_t row, std::size_t col) const { return values_[row * size() + col]; }
  std::size_t index_of(std::string_view id) const;

  bool is_symmetric(double tolerance = 1e-9) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

/// All pairwise distances between one prompt's fingerprints, rows/columns in
/// the given order; only the upper triangle is computed, so W2 matrices come
/// out exactly symmetric.
DistanceMatrix pairwise_distances(std::span<const Fingerprint* const> fingerprints, Metric metric);

/// entry(i, j) / max over base rows b of entry(b, j). Throws DegenerateColumn
/// naming the column when that maximum is 0.
DistanceMatrix normalize_columns(const DistanceMatrix& mat, std::span<const std::string> base_ids);

/// Element-wise mean; throws InvalidInput on an empty list and
/// DimensionMismatch when id orderings differ.
DistanceMatrix average_matrices(std::span<const DistanceMatrix> mats);

/// Header row and column of model ids, values with 6 decimals.
void write_csv(const DistanceMatrix& mat, std::ostream& out);
/// {ids, values: [[...]]} at full precision.
nlohmann::ordered_json to_json(const DistanceMatrix& mat);

}  // namespace lineage
