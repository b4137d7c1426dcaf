#include "lineage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "lineage/error.hpp"
#include "lineage/util.hpp"

namespace lineage {

namespace {

constexpr double kCostFloor = 1e-18;
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_comparable(const Fingerprint& a, const Fingerprint& b) {
  if (a.samples.empty() || b.samples.empty()) {
    throw Error(ErrorKind::EmptyFingerprint, "cannot compare an empty fingerprint (" +
                                                 a.model_id + " vs " + b.model_id + ")");
  }
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorKind::DimensionMismatch,
                "fingerprints have K=" + std::to_string(a.dimension()) + " and K=" +
                    std::to_string(b.dimension()));
  }
}

std::vector<double> squared_cost(const Fingerprint& a, const Fingerprint& b) {
  std::vector<double> cost(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double c = 0.0;
      for (std::size_t k = 0; k < a.dimension(); ++k) {
        const double d = a.samples[i][k] - b.samples[j][k];
        c += d * d;
      }
      cost[i * b.size() + j] = c < kCostFloor ? 0.0 : c;
    }
  }
  return cost;
}

}  // namespace

std::string_view to_string(Metric metric) { return metric == Metric::W2 ? "w2" : "jsd"; }

Metric parse_metric(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "w2" || lower == "wasserstein") return Metric::W2;
  if (lower == "jsd") return Metric::JSD;
  throw Error(ErrorKind::Config, "unknown metric '" + std::string(text) + "' (expected w2 or jsd)");
}

Assignment solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw Error(ErrorKind::InvalidInput, "cost matrix is not n x n");
  // 1-based arrays; index 0 is the virtual column used to start each search.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r = match[col0];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t prev = way[col0];
      match[col0] = match[prev];
      col0 = prev;
    } while (col0 != 0);
  }

  Assignment out;
  out.column_of.assign(n, 0);
  for (std::size_t c = 1; c <= n; ++c) out.column_of[match[c] - 1] = c - 1;
  for (std::size_t r = 0; r < n; ++r) out.cost += cost[r * n + out.column_of[r]];
  return out;
}

double uniform_transport_cost(std::span<const double> cost, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || cost.size() != rows * cols) {
    throw Error(ErrorKind::InvalidInput, "transport cost matrix has the wrong shape");
  }
  // Integral masses: every row ships lcm/rows units, every column takes lcm/cols.
  const std::size_t total = std::lcm(rows, cols);
  std::vector<std::size_t> supply(rows, total / rows), demand(cols, total / cols);
  std::vector<std::size_t> flow(rows * cols, 0);
  const std::size_t nodes = rows + cols;
  std::vector<double> dist(nodes);
  std::vector<std::ptrdiff_t> parent(nodes);

  std::size_t shipped = 0;
  while (shipped < total) {
    // Bellman-Ford over the residual graph from every row with supply left.
    // Rows are nodes [0, rows), columns [rows, rows + cols).
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    for (std::size_t i = 0; i < rows; ++i) {
      if (supply[i] > 0) dist[i] = 0.0;
    }
    for (std::size_t pass = 0; pass < nodes; ++pass) {
      bool changed = false;
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          const double c = cost[i * cols + j];
          if (dist[i] < kInf && dist[i] + c < dist[rows + j] - 1e-15) {
            dist[rows + j] = dist[i] + c;
            parent[rows + j] = static_cast<std::ptrdiff_t>(i);
            changed = true;
          }
          if (flow[i * cols + j] > 0 && dist[rows + j] < kInf &&
              dist[rows + j] - c < dist[i] - 1e-15) {
            dist[i] = dist[rows + j] - c;
            parent[i] = static_cast<std::ptrdiff_t>(rows + j);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }

    std::size_t sink = nodes;
    for (std::size_t j = 0; j < cols; ++j) {
      if (demand[j] > 0 && dist[rows + j] < kInf &&
          (sink == nodes || dist[rows + j] < dist[sink])) {
        sink = rows + j;
      }
    }
    if (sink == nodes) throw Error(ErrorKind::InvalidInput, "transport problem is infeasible");

    // Walk back to the source row and find the bottleneck.
    std::size_t amount = demand[sink - rows];
    std::size_t node = sink;
    while (parent[node] >= 0) {
      const auto prev = static_cast<std::size_t>(parent[node]);
      if (node < rows) amount = std::min(amount, flow[node * cols + (prev - rows)]);
      node = prev;
    }
    amount = std::min(amount, supply[node]);

    supply[node] -= amount;
    demand[sink - rows] -= amount;
    node = sink;
    while (parent[node] >= 0) {
      const auto prev = static_cast<std::size_t>(parent[node]);
      if (node >= rows) {
        flow[prev * cols + (node - rows)] += amount;
      } else {
        flow[node * cols + (prev - rows)] -= amount;
      }
      node = prev;
    }
    shipped += amount;
  }

  double total_cost = 0.0;
  for (std::size_t e = 0; e < flow.size(); ++e) {
    total_cost += static_cast<double>(flow[e]) * cost[e];
  }
  return total_cost / static_cast<double>(total);
}

W2Result wasserstein2_detailed(const Fingerprint& a, const Fingerprint& b) {
  require_comparable(a, b);
  const auto cost = squared_cost(a, b);
  W2Result out;
  double mean_cost = 0.0;
  if (a.size() == b.size()) {
    mean_cost = solve_assignment(cost, a.size()).cost / static_cast<double>(a.size());
  } else {
    mean_cost = uniform_transport_cost(cost, a.size(), b.size());
    out.unequal_sizes = true;
  }
  out.distance = std::sqrt(std::max(mean_cost, 0.0));
  return out;
}

double wasserstein2(const Fingerprint& a, const Fingerprint& b) {
  return wasserstein2_detailed(a, b).distance;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw Error(ErrorKind::DimensionMismatch, "JSD operands differ in dimension");
  }
  double divergence = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) divergence += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) divergence += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::clamp(divergence, 0.0, 1.0);
}

double jsd(const Fingerprint& a, const Fingerprint& b) {
  require_comparable(a, b);
  return jsd(a.mean(), b.mean());
}

double distance(const Fingerprint& a, const Fingerprint& b, Metric metric) {
  return metric == Metric::W2 ? wasserstein2(a, b) : jsd(a, b);
}

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::vector<double> values)
    : ids_(std::move(ids)), values_(std::move(values)) {
  const std::size_t m = ids_.size();
  if (values_.size() != m * m) {
    throw Error(ErrorKind::InvalidInput, "distance matrix values do not match its ids");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = values_[i * m + j];
      if (!std::isfinite(v) || v < 0.0) {
        throw Error(ErrorKind::InvalidInput, "distance matrix entry (" + ids_[i] + ", " + ids_[j] +
                                                 ") is negative or not finite");
      }
    }
    if (values_[i * m + i] != 0.0) {
      throw Error(ErrorKind::InvalidInput, "distance matrix diagonal at " + ids_[i] + " is not 0");
    }
  }
}

std::size_t DistanceMatrix::index_of(std::string_view id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) {
    throw Error(ErrorKind::InvalidInput, "model '" + std::string(id) + "' not in distance matrix");
  }
  return static_cast<std::size_t>(it - ids_.begin());
}

bool DistanceMatrix::is_symmetric(double tolerance) const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = i + 1; j < size(); ++j) {
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tolerance) return false;
    }
  }
  return true;
}

DistanceMatrix pairwise_distances(std::span<const Fingerprint* const> fingerprints, Metric metric) {
  const std::size_t m = fingerprints.size();
  std::vector<std::string> ids;
  for (const auto* fp : fingerprints) ids.push_back(fp->model_id);
  std::vector<double> values(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = distance(*fingerprints[i], *fingerprints[j], metric);
      values[i * m + j] = d;
      values[j * m + i] = d;
    }
  }
  return DistanceMatrix(std::move(ids), std::move(values));
}

DistanceMatrix normalize_columns(const DistanceMatrix& mat, std::span<const std::string> base_ids) {
  if (base_ids.empty()) throw Error(ErrorKind::InvalidInput, "no base models to normalise by");
  std::vector<std::size_t> base_rows;
  for (const auto& id : base_ids) base_rows.push_back(mat.index_of(id));

  const std::size_t m = mat.size();
  std::vector<double> values(mat.values().begin(), mat.values().end());
  for (std::size_t j = 0; j < m; ++j) {
    double norm = 0.0;
    for (std::size_t b : base_rows) norm = std::max(norm, mat(b, j));
    if (!(norm > 0.0)) {
      throw Error(ErrorKind::DegenerateColumn,
                  "column '" + mat.ids()[j] + "' has zero distance to every base model");
    }
    for (std::size_t i = 0; i < m; ++i) values[i * m + j] /= norm;
  }
  return DistanceMatrix(mat.ids(), std::move(values));
}

DistanceMatrix average_matrices(std::span<const DistanceMatrix> mats) {
  if (mats.empty()) throw Error(ErrorKind::InvalidInput, "no matrices to average");
  const auto& ids = mats.front().ids();
  std::vector<double> sum(ids.size() * ids.size(), 0.0);
  for (const auto& mat : mats) {
    if (mat.ids() != ids) {
      throw Error(ErrorKind::DimensionMismatch, "distance matrices have different model orderings");
    }
    for (std::size_t e = 0; e < sum.size(); ++e) sum[e] += mat.values()[e];
  }
  for (double& v : sum) v /= static_cast<double>(mats.size());
  return DistanceMatrix(ids, std::move(sum));
}

void write_csv(const DistanceMatrix& mat, std::ostream& out) {
  out << "model";
  for (const auto& id : mat.ids()) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < mat.size(); ++i) {
    out << mat.ids()[i];
    for (std::size_t j = 0; j < mat.size(); ++j) out << ',' << format_fixed(mat(i, j), 6);
    out << '\n';
  }
}

nlohmann::ordered_json to_json(const DistanceMatrix& mat) {
  nlohmann::ordered_json doc;
  doc["ids"] = mat.ids();
  doc["values"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < mat.size(); ++i) {
    auto row = mat.values().subspan(i * mat.size(), mat.size());
    doc["values"].push_back(std::vector<double>(row.begin(), row.end()));
  }
  return doc;
}

}  // namespace lineage
