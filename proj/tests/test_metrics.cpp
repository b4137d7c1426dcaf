#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "lineage/error.hpp"
#include "lineage/metrics.hpp"
#include "lineage/simulator.hpp"
#include "support.hpp"

using namespace lineage;
using testing::make_fingerprint;
using testing::one_hot;
using testing::random_fingerprint;

namespace {

double brute_force_w2(const Fingerprint& a, const Fingerprint& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (std::size_t c = 0; c < a.dimension(); ++c) {
        const double d = a.samples[i][c] - b.samples[perm[i]][c];
        total += d * d;
      }
    }
    best = std::min(best, total / perm.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Parse;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("W2 basic values") {
    const auto a = make_fingerprint({one_hot(3, 0)});
    const auto b = make_fingerprint({one_hot(3, 1)});
    CHECK(wasserstein2(a, b) == doctest::Approx(std::sqrt(2.0)));
    CHECK(wasserstein2(a, a) == 0.0);
    std::mt19937_64 rng(1);
    const auto r = random_fingerprint(7, 4, rng);
    CHECK(wasserstein2(r, r) == 0.0);
  }

  TEST_CASE("W2 matches the permutation oracle") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + t % 5;
      const std::size_t k = 2 + t % 5;
      const auto a = random_fingerprint(n, k, rng);
      const auto b = random_fingerprint(n, k, rng);
      CHECK(std::abs(wasserstein2(a, b) - brute_force_w2(a, b)) < 1e-9);
    }
  }

  TEST_CASE("assignment and transport solvers agree for equal sizes") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
      const std::size_t n = 1 + t % 9;
      std::vector<double> cost(n * n);
      for (auto& c : cost) c = u(rng);
      const auto a = solve_assignment(cost, n);
      CHECK(uniform_transport_cost(cost, n, n) == doctest::Approx(a.cost / n).epsilon(1e-12));
      std::vector<std::size_t> cols = a.column_of;
      std::sort(cols.begin(), cols.end());
      for (std::size_t i = 0; i < n; ++i) CHECK(cols[i] == i);
    }
  }

  TEST_CASE("W2 for unequal sizes") {
    const auto a = make_fingerprint({one_hot(2, 0), one_hot(2, 1)});
    const auto b = make_fingerprint({one_hot(2, 0)});
    const auto r = wasserstein2_detailed(a, b);
    CHECK(r.unequal_sizes);
    CHECK(r.distance == doctest::Approx(1.0));

    std::mt19937_64 rng(4);
    const auto x = random_fingerprint(3, 3, rng);
    auto doubled = x;
    for (std::size_t i = 0; i < 3; ++i) {
      doubled.samples.push_back(x.samples[i]);
      doubled.seeds.push_back(100 + i);
    }
    CHECK(wasserstein2(x, doubled) < 1e-7);
  }

  TEST_CASE("W2 input errors") {
    const auto a = make_fingerprint({one_hot(3, 0)});
    const auto b = make_fingerprint({one_hot(4, 0)});
    CHECK(error_kind([&] { wasserstein2(a, b); }) == ErrorKind::DimensionMismatch);
    CHECK(error_kind([&] { wasserstein2(a, Fingerprint{}); }) == ErrorKind::EmptyFingerprint);
  }

  TEST_CASE("JSD values") {
    CHECK(jsd(make_fingerprint({one_hot(3, 0)}), make_fingerprint({one_hot(3, 1)})) ==
          doctest::Approx(1.0));
    const std::vector<double> p{0.5, 0.5, 0.0};
    CHECK(jsd(p, p) == 0.0);
    const std::vector<double> x{0.2, 0.5, 0.3};
    const std::vector<double> y{0.4, 0.4, 0.2};
    double expected = 0;
    for (int i = 0; i < 3; ++i) {
      const double m = 0.5 * (x[i] + y[i]);
      expected += 0.5 * x[i] * std::log2(x[i] / m) + 0.5 * y[i] * std::log2(y[i] / m);
    }
    CHECK(jsd(x, y) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(jsd(x, y) == doctest::Approx(0.0357894).epsilon(1e-6));
  }

  TEST_CASE("JSD compares mean distributions") {
    const auto a = make_fingerprint({one_hot(2, 0), one_hot(2, 1)});
    const auto b = make_fingerprint({{0.5, 0.5}});
    CHECK(jsd(a, b) == 0.0);
    CHECK(wasserstein2(a, b) > 0.0);
  }

  TEST_CASE("metric names") {
    CHECK(parse_metric("w2") == Metric::W2);
    CHECK(parse_metric("JSD") == Metric::JSD);
    CHECK(to_string(Metric::JSD) == "jsd");
    CHECK(error_kind([] { parse_metric("kl"); }) == ErrorKind::Config);
  }

  TEST_CASE("normalize_columns by hand") {
    const DistanceMatrix m({"a", "b", "c"}, {0, 2, 4, 2, 0, 1, 4, 1, 0});
    const std::vector<std::string> bases{"a", "b"};
    const auto n = normalize_columns(m, bases);
    const std::vector<double> expected{0, 1, 1, 1, 0, 0.25, 2, 0.5, 0};
    for (std::size_t i = 0; i < 9; ++i) CHECK(n.values()[i] == doctest::Approx(expected[i]));
    for (std::size_t i = 0; i < 3; ++i) CHECK(n(i, i) == 0.0);
  }

  TEST_CASE("normalize_columns rejects a zero normaliser naming the column") {
    const DistanceMatrix m({"a", "b"}, {0, 0, 0, 0});
    const std::vector<std::string> bases{"a", "b"};
    try {
      normalize_columns(m, bases);
      FAIL("expected degenerate column");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateColumn);
      CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    }
  }

  TEST_CASE("average_matrices") {
    const DistanceMatrix zeros({"a", "b"}, {0, 0, 0, 0});
    const DistanceMatrix twos({"a", "b"}, {0, 2, 2, 0});
    const std::vector<DistanceMatrix> one{twos};
    CHECK(std::ranges::equal(average_matrices(one).values(), twos.values()));
    const std::vector<DistanceMatrix> both{zeros, twos};
    const auto avg = average_matrices(both);
    CHECK(avg(0, 1) == 1.0);
    CHECK(avg(1, 0) == 1.0);
    const std::vector<DistanceMatrix> none;
    CHECK(error_kind([&] { average_matrices(none); }) == ErrorKind::InvalidInput);
    const DistanceMatrix other({"b", "a"}, {0, 1, 1, 0});
    const std::vector<DistanceMatrix> mixed{zeros, other};
    CHECK(error_kind([&] { average_matrices(mixed); }) == ErrorKind::DimensionMismatch);
  }

  TEST_CASE("average over 42 simulator prompts matches an independent sum") {
    const auto cat = build_default_catalogue();
    std::vector<sim::SimModelSpec> specs{sim::make_lineage("A", 1, cat), sim::make_lineage("B", 2, cat)};
    specs.push_back(sim::fine_tune(specs[0], {0.3, 4, 2.0}, "A1"));
    std::vector<FingerprintStore> stores;
    for (const auto& s : specs) stores.push_back(sim::probe_simulated(s, cat, 10, 0));
    const std::vector<std::string> bases{"A", "B"};
    std::vector<DistanceMatrix> mats;
    for (const auto& p : cat.prompts) {
      std::vector<const Fingerprint*> fps;
      for (const auto& st : stores) fps.push_back(&st.prompts.at(p.id));
      mats.push_back(normalize_columns(pairwise_distances(fps, Metric::W2), bases));
    }
    const auto avg = average_matrices(mats);
    for (std::size_t cell = 0; cell < 9; ++cell) {
      double total = 0;
      for (auto it = mats.rbegin(); it != mats.rend(); ++it) total += it->values()[cell];
      CHECK(avg.values()[cell] == doctest::Approx(total / mats.size()).epsilon(1e-12));
    }
  }

  TEST_CASE("pairwise matrices are symmetric with zero diagonal") {
    std::mt19937_64 rng(6);
    std::vector<Fingerprint> fps;
    for (int i = 0; i < 5; ++i) fps.push_back(random_fingerprint(6, 4, rng));
    std::vector<const Fingerprint*> ptrs;
    for (auto& f : fps) ptrs.push_back(&f);
    for (auto metric : {Metric::W2, Metric::JSD}) {
      const auto m = pairwise_distances(ptrs, metric);
      CHECK(m.is_symmetric(0.0));
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(m(i, i) == 0.0);
    }
  }

  TEST_CASE("CSV and JSON export") {
    const DistanceMatrix m({"a", "b"}, {0, 1.0 / 3.0, 1.0 / 3.0, 0});
    std::ostringstream csv;
    write_csv(m, csv);
    CHECK(csv.str() == "model,a,b\na,0.000000,0.333333\nb,0.333333,0.000000\n");
    const auto doc = to_json(m);
    CHECK(doc["values"][0][1].get<double>() == 1.0 / 3.0);
    CHECK(doc["ids"][1] == "b");
  }

  TEST_CASE("DistanceMatrix validation") {
    CHECK_THROWS_AS(DistanceMatrix({"a"}, {0, 0}), Error);
    CHECK_THROWS_AS(DistanceMatrix({"a", "b"}, {1, 0, 0, 0}), Error);
    CHECK_THROWS_AS(DistanceMatrix({"a", "b"}, {0, -1, 0, 0}), Error);
  }
}
