#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stpp/simulate.hpp"
#include "stpp/types.hpp"
#include "test_util.hpp"

using namespace stpp;
using namespace stpp::sim;

namespace {

GeneratorSpec hom_poisson(std::vector<double> rates) {
  GeneratorSpec s;
  s.kind = Kind::HomPoisson;
  s.base_rates = Eigen::Map<const Eigen::VectorXd>(rates.data(), Eigen::Index(rates.size()));
  return s;
}

GeneratorSpec hawkes_1d(double mu, double a, double beta) {
  GeneratorSpec s;
  s.kind = Kind::Hawkes;
  s.base_rates = Eigen::VectorXd::Constant(1, mu);
  s.excitation = Eigen::MatrixXd::Constant(1, 1, a);
  s.decay = beta;
  return s;
}

}  // namespace

TEST_CASE("ground_truth_intensity: constant, hand-evaluated Hawkes, softplus floor") {
  const GeneratorSpec hom = hom_poisson({2.0});
  CHECK(ground_truth_intensity(hom, {}, 0.3)[0] == 2.0);
  CHECK(ground_truth_intensity(hom, {}, 9.9)[0] == 2.0);

  const GeneratorSpec hawkes = hawkes_1d(1.0, 0.5, 1.0);
  const std::vector<Event> history{{0.0, 0}};
  CHECK(ground_truth_intensity(hawkes, history, std::log(2.0))[0] ==
        doctest::Approx(1.25).epsilon(1e-12));

  GeneratorSpec inhibit;
  inhibit.kind = Kind::InhibitHawkes;
  inhibit.base_rates = Eigen::VectorXd::Constant(2, 0.5);
  inhibit.excitation = Eigen::MatrixXd::Constant(2, 2, -8.0);
  inhibit.decay = 1.0;
  inhibit.link = Link::Softplus;
  std::vector<Event> hist{{0.1, 0}, {0.2, 1}, {0.3, 0}};
  for (double t : {0.30001, 0.5, 1.0, 4.0}) {
    const Eigen::VectorXd lam = ground_truth_intensity(inhibit, hist, t);
    CHECK(lam.minCoeff() >= 0.0);
  }
}

TEST_CASE("generator validation enforces family invariants") {
  GeneratorSpec bad = hom_poisson({1.0});
  bad.excitation = Eigen::MatrixXd::Constant(1, 1, 0.2);
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  GeneratorSpec unstable = hawkes_1d(1.0, 1.2, 1.0);  // branching ratio 1.2
  CHECK_THROWS_AS(unstable.validate(), ConfigError);

  GeneratorSpec negative = hawkes_1d(1.0, -0.5, 1.0);
  CHECK_THROWS_AS(negative.validate(), ConfigError);

  GeneratorSpec inhibit_wrong_link;
  inhibit_wrong_link.kind = Kind::InhibitHawkes;
  inhibit_wrong_link.base_rates = Eigen::VectorXd::Constant(1, 1.0);
  inhibit_wrong_link.excitation = Eigen::MatrixXd::Constant(1, 1, -1.0);
  inhibit_wrong_link.link = Link::Identity;
  CHECK_THROWS_AS(inhibit_wrong_link.validate(), ConfigError);
}

TEST_CASE("thinning output satisfies the sequence invariants") {
  GeneratorSpec mixed;
  mixed.kind = Kind::MixedHawkes;
  mixed.base_rates = Eigen::VectorXd::Constant(3, 1.0);
  mixed.excitation.resize(3, 3);
  mixed.excitation << 0.4, -0.8, 0.1, -0.3, 0.5, 0.0, 0.2, -0.2, 0.3;
  mixed.decay = 2.0;
  mixed.link = Link::Softplus;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EventSequence seq = thinning_sample(mixed, 15.0, seed);
    seq.id = "t";
    validate_sequence(seq, 3, 15.0);
  }
}

TEST_CASE("thinning is deterministic given the seed") {
  const GeneratorSpec spec = hawkes_1d(1.0, 0.5, 1.0);
  const EventSequence a = thinning_sample(spec, 50.0, 99);
  const EventSequence b = thinning_sample(spec, 50.0, 99);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].time == b.events[i].time);
    CHECK(a.events[i].type_id == b.events[i].type_id);
  }
}

TEST_CASE("types with zero rate never fire") {
  const GeneratorSpec spec = hom_poisson({2.0, 0.0});
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (const Event& e : thinning_sample(spec, 20.0, seed).events) CHECK(e.type_id == 0);
}

TEST_CASE("homogeneous Poisson calibration: count, gaps, type split") {
  const GeneratorSpec spec = hom_poisson({1.2, 0.8});
  const double total_rate = 2.0;
  const double horizon = 10.0;
  const int reps = 2000;
  double count_sum = 0.0;
  std::size_t type0 = 0, total = 0;
  for (int r = 0; r < reps; ++r) {
    const EventSequence seq = thinning_sample(spec, horizon, std::uint64_t(r));
    count_sum += double(seq.events.size());
    for (const Event& e : seq.events) {
      total += 1;
      type0 += e.type_id == 0 ? 1 : 0;
    }
  }
  const double expected = total_rate * horizon;
  const double se = std::sqrt(expected / double(reps));
  CHECK(std::abs(count_sum / reps - expected) < 3.0 * se);

  // Type marginal 1.2 / 2.0 within 3 standard errors.
  const double p = 1.2 / 2.0;
  const double se_p = std::sqrt(p * (1.0 - p) / double(total));
  CHECK(std::abs(double(type0) / double(total) - p) < 3.0 * se_p);

  // Gaps from a long window keep the end-of-window truncation negligible.
  std::vector<double> gaps;
  for (std::uint64_t seed = 0; gaps.size() < 10000; ++seed) {
    const EventSequence seq = thinning_sample(spec, 600.0, seed);
    double prev = 0.0;
    for (const Event& e : seq.events) {
      if (gaps.size() < 10000) gaps.push_back(e.time - prev);
      prev = e.time;
    }
  }
  CHECK(testutil::ks_passes_at_01(
      gaps, [&](double x) { return 1.0 - std::exp(-total_rate * x); }));
}

TEST_CASE("Hawkes calibration against the branching-ratio identity") {
  const GeneratorSpec spec = hawkes_1d(1.0, 0.5, 1.0);
  const double horizon = 100.0;
  const int reps = 500;
  double count_sum = 0.0;
  for (int r = 0; r < reps; ++r)
    count_sum += double(thinning_sample(spec, horizon, std::uint64_t(r)).events.size());
  const double expected = 1.0 * horizon / (1.0 - 0.5);
  CHECK(std::abs(count_sum / reps - expected) < 0.10 * expected);
}

TEST_CASE("make_synthetic labels, counts, determinism") {
  SyntheticPlan plan;
  plan.num_types = 2;
  plan.horizon = 10.0;
  plan.sequences_per_cluster = 100;
  plan.seed = 17;
  plan.cluster_specs = {hom_poisson({0.5, 0.5}), hom_poisson({2.0, 2.0})};

  const Dataset d1 = make_synthetic(plan);
  CHECK(d1.sequences.size() == 200);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < d1.sequences.size(); ++i) {
    CHECK(*d1.sequences[i].label == (i < 100 ? 0 : 1));
    zeros += *d1.sequences[i].label == 0 ? 1 : 0;
  }
  CHECK(zeros == 100);
  validate_dataset(d1);

  const Dataset d2 = make_synthetic(plan);
  REQUIRE(d1.sequences.size() == d2.sequences.size());
  for (std::size_t i = 0; i < d1.sequences.size(); ++i) {
    CHECK(d1.sequences[i].id == d2.sequences[i].id);
    REQUIRE(d1.sequences[i].events.size() == d2.sequences[i].events.size());
    for (std::size_t j = 0; j < d1.sequences[i].events.size(); ++j)
      CHECK(d1.sequences[i].events[j].time == d2.sequences[i].events[j].time);
  }
}

TEST_CASE("paper-scale plan lands near 50 events per sequence") {
  // K=4 families, C=5, rates tuned for ~50 events per sequence.
  const int c = 5;
  SyntheticPlan plan;
  plan.num_types = c;
  plan.horizon = 10.0;
  plan.sequences_per_cluster = 50;
  plan.seed = 23;

  GeneratorSpec inhom;
  inhom.kind = Kind::InhomPoisson;
  inhom.base_rates = Eigen::VectorXd::Constant(c, 1.0);
  inhom.sin_amplitude = 0.8;
  inhom.sin_period = 5.0;

  GeneratorSpec hawkes;
  hawkes.kind = Kind::Hawkes;
  hawkes.base_rates = Eigen::VectorXd::Constant(c, 0.5);
  hawkes.excitation = Eigen::MatrixXd::Constant(c, c, 0.2);
  hawkes.decay = 2.0;  // row branching 0.5 -> mean ~2x base

  GeneratorSpec inhibit;
  inhibit.kind = Kind::InhibitHawkes;
  inhibit.base_rates = Eigen::VectorXd::Constant(c, 1.5);
  inhibit.excitation = Eigen::MatrixXd::Constant(c, c, -0.4);
  inhibit.decay = 2.0;
  inhibit.link = Link::Softplus;

  GeneratorSpec mixed;
  mixed.kind = Kind::MixedHawkes;
  mixed.base_rates = Eigen::VectorXd::Constant(c, 0.48);
  mixed.excitation = Eigen::MatrixXd::Constant(c, c, 0.25);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      if ((i + j) % 2 == 1) mixed.excitation(i, j) = -0.25;
  mixed.decay = 2.0;
  mixed.link = Link::Softplus;

  plan.cluster_specs = {inhom, hawkes, inhibit, mixed};
  const Dataset data = make_synthetic(plan);
  for (int k = 0; k < 4; ++k) {
    double events = 0.0;
    for (int i = 0; i < 50; ++i) events += double(data.sequences[std::size_t(k * 50 + i)].size());
    const double mean = events / 50.0;
    INFO("cluster ", k, " mean events ", mean);
    CHECK(mean > 40.0);
    CHECK(mean < 60.0);
  }
}
