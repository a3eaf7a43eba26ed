#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stpp/seqdist.hpp"
#include "stpp/simulate.hpp"
#include "test_util.hpp"

using namespace stpp;
using namespace stpp::seqdist;
using testutil::make_seq;

namespace {

// C=1, T=10 single-event pair used by the worked examples.
const EventSequence kA = make_seq("a", {{1.0, 0}}, 10.0);
const EventSequence kB = make_seq("b", {{3.0, 0}}, 10.0);

std::vector<EventSequence> random_pool(int count, int num_types, double horizon,
                                       std::uint64_t seed) {
  auto g = rng::engine(seed, rng::Stream::TestData);
  std::vector<EventSequence> out;
  for (int i = 0; i < count; ++i) {
    const int expected = 5 + int(rng::below(g, 20));
    out.push_back(testutil::random_seq(g, num_types, horizon, expected, "p" + std::to_string(i)));
  }
  return out;
}

}  // namespace

TEST_CASE("subset_distance matches the hand-evaluated single-event pair") {
  CHECK(subset_distance(kA, kB, {0}, 1, 10.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(subset_distance(kA, kB, {1}, 1, 10.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(subset_distance(kA, kB, {0, 1}, 1, 10.0) == doctest::Approx(2.0).epsilon(1e-12));
  // empty subset counts the length mismatch only
  CHECK(subset_distance(kA, kB, {}, 1, 10.0) == doctest::Approx(0.0));
  const EventSequence longer = make_seq("c", {{1.0, 0}, {2.0, 0}, {4.0, 0}}, 10.0);
  CHECK(subset_distance(kA, longer, {}, 1, 10.0) == doctest::Approx(2.0));
}

TEST_CASE("subset_distance of a sequence with itself is zero") {
  const EventSequence s = make_seq("s", {{0.5, 0}, {2.0, 1}, {7.0, 0}}, 10.0);
  CHECK(subset_distance(s, s, {0, 1, 2}, 2, 10.0) == 0.0);
  CHECK(pair_distance(s, s, SubsetMode::Full, 2, 10.0) == 0.0);
  CHECK(pair_distance(s, s, SubsetMode::Singleton, 2, 10.0) == 0.0);
}

TEST_CASE("pair_distance worked example: full 1, singleton 1") {
  CHECK(pair_distance(kA, kB, SubsetMode::Full, 1, 10.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pair_distance(kA, kB, SubsetMode::Singleton, 1, 10.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full mode refuses more than 16 coordinates") {
  const EventSequence s = make_seq("s", {{1.0, 0}}, 10.0);
  CHECK_THROWS_AS(pair_distance(s, s, SubsetMode::Full, 16, 10.0), ConfigError);
  CHECK_NOTHROW(pair_distance(s, s, SubsetMode::Singleton, 16, 10.0));
}

TEST_CASE("pair_distance is symmetric") {
  const auto pool = random_pool(20, 3, 15.0, 101);
  for (std::size_t i = 0; i + 1 < pool.size(); i += 2) {
    const double ab = pair_distance(pool[i], pool[i + 1], SubsetMode::Singleton, 3, 15.0);
    const double ba = pair_distance(pool[i + 1], pool[i], SubsetMode::Singleton, 3, 15.0);
    CHECK(ab == ba);
  }
}

TEST_CASE("singleton pair cost counts (C+1)(Na^2+Nb^2+NaNb) element kernels") {
  const auto pool = random_pool(2, 3, 15.0, 77);
  const auto na = pool[0].events.size(), nb = pool[1].events.size();
  reset_counters();
  pair_distance(pool[0], pool[1], SubsetMode::Singleton, 3, 15.0);
  const auto c = counters();
  CHECK(c.element_kernel == 4 * (na * na + nb * nb + na * nb));
  CHECK(c.pairs == 1);
}

TEST_CASE("distance_matrix evaluates each unordered pair once") {
  const auto pool = random_pool(3, 2, 10.0, 5);
  reset_counters();
  const DistanceMatrix d = distance_matrix(pool, SubsetMode::Singleton, 2, 10.0);
  CHECK(counters().pairs == 3);
  CHECK(d.size() == 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(d(i, j) == d(j, i));
}

TEST_CASE("duplicate sequences give a zero entry and a unit kernel entry") {
  auto pool = random_pool(2, 2, 10.0, 9);
  pool.push_back(pool[0]);
  pool.back().id = "dup";
  const DistanceMatrix d = distance_matrix(pool, SubsetMode::Singleton, 2, 10.0);
  CHECK(d(0, 2) == 0.0);
  const KernelMatrix k = kernel_from_distances(d, median_bandwidth(d));
  CHECK(k(0, 2) == 1.0);
}

TEST_CASE("pair_distance satisfies the triangle inequality on random triples") {
  const auto pool = random_pool(12, 3, 12.0, 303);
  for (SubsetMode mode : {SubsetMode::Singleton, SubsetMode::Full}) {
    const DistanceMatrix d = distance_matrix(pool, mode, 3, 12.0);
    auto g = rng::engine(7, rng::Stream::TestData);
    for (int t = 0; t < 100; ++t) {
      const int i = int(rng::below(g, pool.size()));
      const int j = int(rng::below(g, pool.size()));
      const int k = int(rng::below(g, pool.size()));
      CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-9);
    }
  }
}

TEST_CASE("full and singleton distances are strongly rank-correlated") {
  const auto pool = random_pool(25, 3, 12.0, 1234);
  std::vector<double> full, singleton;
  auto g = rng::engine(55, rng::Stream::TestData);
  for (int t = 0; t < 50; ++t) {
    const std::size_t i = rng::below(g, pool.size());
    std::size_t j = rng::below(g, pool.size());
    while (j == i) j = rng::below(g, pool.size());
    full.push_back(pair_distance(pool[i], pool[j], SubsetMode::Full, 3, 12.0));
    singleton.push_back(pair_distance(pool[i], pool[j], SubsetMode::Singleton, 3, 12.0));
  }
  CHECK(testutil::spearman(full, singleton) > 0.8);
}

TEST_CASE("median_bandwidth medians and fallbacks") {
  auto from_upper = [](std::vector<double> upper, int n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        m(i, j) = upper[idx];
        m(j, i) = upper[idx];
        ++idx;
      }
    return DistanceMatrix(m);
  };
  CHECK(median_bandwidth(from_upper({1.0, 2.0, 3.0}, 3)) == 2.0);
  CHECK(median_bandwidth(from_upper({0.0, 0.0, 0.0}, 3)) == 1.0);
  CHECK(median_bandwidth(from_upper({0.0, 0.0, 5.0}, 3)) == 5.0);
}

TEST_CASE("kernel_from_distances follows exp(-d / 2 sigma^2)") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 1) = m(1, 0) = 0.0;
  m(0, 2) = m(2, 0) = 2.0;  // = 2 sigma^2 for sigma = 1
  m(1, 2) = m(2, 1) = 4.0;
  const DistanceMatrix d(m);
  const KernelMatrix k = kernel_from_distances(d, 1.0);
  CHECK(k(0, 1) == 1.0);
  CHECK(k(0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(k(1, 2) < k(0, 2));  // larger distance, strictly smaller entry
  CHECK(k(0, 0) == 1.0);

  const KernelMatrix ksq = kernel_from_distances(d, 1.0, true);
  CHECK(ksq(0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("sample_reference_kernel is deterministic and degenerates to the full set") {
  sim::SyntheticPlan plan;
  plan.num_types = 2;
  plan.horizon = 10.0;
  plan.sequences_per_cluster = 25;
  plan.seed = 42;
  sim::GeneratorSpec slow;
  slow.kind = sim::Kind::HomPoisson;
  slow.base_rates = Eigen::VectorXd::Constant(2, 0.4);
  sim::GeneratorSpec fast = slow;
  fast.base_rates = Eigen::VectorXd::Constant(2, 2.0);
  plan.cluster_specs = {slow, fast};
  const Dataset data = sim::make_synthetic(plan);

  const auto r1 = sample_reference_kernel(data, 20, SubsetMode::Singleton, 9);
  const auto r2 = sample_reference_kernel(data, 20, SubsetMode::Singleton, 9);
  CHECK(r1.indices == r2.indices);
  CHECK(r1.kernel.entries() == r2.kernel.entries());

  const auto full = sample_reference_kernel(data, int(data.sequences.size()),
                                            SubsetMode::Singleton, 3);
  std::vector<std::size_t> sorted = full.indices;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);

  CHECK_THROWS_AS(sample_reference_kernel(data, 1, SubsetMode::Singleton, 0), ConfigError);
  CHECK_THROWS_AS(
      sample_reference_kernel(data, int(data.sequences.size()) + 1, SubsetMode::Singleton, 0),
      ConfigError);

  // in-block similarity beats cross-block similarity on separable clusters
  const auto ref = sample_reference_kernel(data, 40, SubsetMode::Singleton, 17);
  double in_block = 0.0, cross_block = 0.0;
  int n_in = 0, n_cross = 0;
  for (std::size_t i = 0; i < ref.indices.size(); ++i)
    for (std::size_t j = i + 1; j < ref.indices.size(); ++j) {
      const int li = *data.sequences[ref.indices[i]].label;
      const int lj = *data.sequences[ref.indices[j]].label;
      const double v = ref.kernel(int(i), int(j));
      if (li == lj) {
        in_block += v;
        ++n_in;
      } else {
        cross_block += v;
        ++n_cross;
      }
    }
  CHECK(in_block / n_in > cross_block / n_cross);
}
