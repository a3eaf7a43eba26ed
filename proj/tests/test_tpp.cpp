#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "stpp/cluster.hpp"
#include "stpp/simulate.hpp"
#include "stpp/tpp.hpp"
#include "test_util.hpp"

using namespace stpp;
using namespace stpp::tpp;
using testutil::make_seq;

namespace {

TppParams random_params(Dims dims, std::uint64_t seed) {
  return init_params(dims, seed, 10.0, 10.0);
}

// Mutable views over every parameter coordinate, paired with the gradient.
struct ParamView {
  std::vector<double*> param;
  std::vector<const double*> grad;
};

ParamView flatten(TppParams& p, const GradientBundle& g) {
  ParamView v;
  auto add = [&](Eigen::MatrixXd& pm, const Eigen::MatrixXd& gm) {
    for (Eigen::Index i = 0; i < pm.size(); ++i) {
      v.param.push_back(pm.data() + i);
      v.grad.push_back(gm.data() + i);
    }
  };
  auto addv = [&](Eigen::VectorXd& pm, const Eigen::VectorXd& gm) {
    for (Eigen::Index i = 0; i < pm.size(); ++i) {
      v.param.push_back(pm.data() + i);
      v.grad.push_back(gm.data() + i);
    }
  };
  add(p.type_embedding, g.type_embedding);
  add(p.input_weights, g.input_weights);
  add(p.state_weights, g.state_weights);
  addv(p.state_bias, g.state_bias);
  add(p.intensity_weights, g.intensity_weights);
  addv(p.intensity_drift, g.intensity_drift);
  addv(p.intensity_bias, g.intensity_bias);
  return v;
}

std::vector<EventSequence> random_batch(int count, int num_types, double horizon, int expected,
                                        std::uint64_t seed) {
  auto g = rng::engine(seed, rng::Stream::TestData);
  std::vector<EventSequence> out;
  for (int i = 0; i < count; ++i)
    out.push_back(testutil::random_seq(g, num_types, horizon, expected, "b" + std::to_string(i)));
  return out;
}

std::vector<const EventSequence*> ptrs(const std::vector<EventSequence>& v) {
  std::vector<const EventSequence*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

}  // namespace

TEST_CASE("encode: single event, zero parameters, batch independence") {
  const Dims dims{2, 3, 4};

  const EventSequence one = make_seq("one", {{2.0, 1}}, 10.0);
  const TppParams p = random_params(dims, 3);
  const EncodedSequence enc = encode(p, one);
  CHECK(enc.hidden_states.rows() == 1);
  CHECK((enc.hidden_states.row(0).transpose() - enc.sequence_embedding).norm() == 0.0);

  // zero parameters: every state is tanh(0) = 0
  const TppParams zero = TppParams::zeros(dims);
  const EventSequence seq = make_seq("s", {{1.0, 0}, {2.0, 1}, {5.0, 0}}, 10.0);
  const EncodedSequence ez = encode(zero, seq);
  CHECK(ez.hidden_states.cwiseAbs().maxCoeff() == 0.0);
  CHECK(ez.sequence_embedding.cwiseAbs().maxCoeff() == 0.0);

  // same type/gap pattern -> identical states under any parameters
  const EventSequence shifted = make_seq("t", {{1.0, 0}, {2.0, 1}, {5.0, 0}}, 10.0);
  CHECK((encode(p, seq).hidden_states - encode(p, shifted).hidden_states).norm() == 0.0);

  // encoding a sequence does not depend on its batch position
  const auto batch = random_batch(4, 2, 10.0, 6, 77);
  const auto enc_a = encode_batch(p, ptrs(batch));
  std::vector<EventSequence> reversed(batch.rbegin(), batch.rend());
  const auto enc_b = encode_batch(p, ptrs(reversed));
  for (std::size_t i = 0; i < batch.size(); ++i)
    CHECK((enc_a[i].hidden_states - enc_b[batch.size() - 1 - i].hidden_states).norm() == 0.0);
}

TEST_CASE("mean pooling matches the row mean to machine precision") {
  const Dims dims{3, 4, 6};
  const TppParams p = random_params(dims, 5);
  const auto batch = random_batch(3, 3, 12.0, 15, 11);
  for (const auto& seq : batch) {
    const EncodedSequence enc = encode(p, seq);
    const Eigen::VectorXd mean = enc.hidden_states.colwise().mean().transpose();
    CHECK((mean - enc.sequence_embedding).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("intensity: unit rate at zero parameters, drift forms") {
  const Dims dims{2, 3, 4};
  const TppParams zero = TppParams::zeros(dims);
  const EventSequence seq = make_seq("s", {{1.0, 0}, {3.0, 1}}, 10.0);
  const EncodedSequence enc = encode(zero, seq);
  for (double t : {0.5, 1.5, 2.0, 9.0})
    for (int c : {0, 1}) CHECK(intensity(zero, enc, seq, c, t) == 1.0);

  // alpha = 0: constant intensity on each inter-event interval
  TppParams p = random_params(dims, 9);
  p.intensity_drift.setZero();
  const EncodedSequence encp = encode(p, seq);
  CHECK(intensity(p, encp, seq, 0, 1.1) == intensity(p, encp, seq, 0, 2.9));
  CHECK(intensity(p, encp, seq, 0, 0.2) == intensity(p, encp, seq, 0, 0.9));

  // w = 0, b = log 2, alpha = -1 at dt = ln 2 gives 2 * exp(-ln 2) = 1
  TppParams q = TppParams::zeros(dims);
  q.intensity_bias.setConstant(std::log(2.0));
  q.intensity_drift.setConstant(-1.0);
  const EventSequence empty_hist = make_seq("e", {{9.0, 0}}, 10.0);
  const EncodedSequence enc_q = encode(q, empty_hist);
  CHECK(intensity(q, enc_q, empty_hist, 0, std::log(2.0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("log-likelihood of the zero model is -C*T") {
  const Dims dims{3, 2, 5};
  const TppParams zero = TppParams::zeros(dims);
  const auto batch = random_batch(5, 3, 7.0, 9, 2);
  for (const auto& seq : batch)
    CHECK(log_likelihood(zero, seq) == doctest::Approx(-3.0 * 7.0).epsilon(1e-12));
}

TEST_CASE("compensator agrees with adaptive quadrature") {
  auto g = rng::engine(13, rng::Stream::TestData);
  for (int trial = 0; trial < 20; ++trial) {
    const Dims dims{2 + int(rng::below(g, 3)), 2 + int(rng::below(g, 3)),
                    3 + int(rng::below(g, 4))};
    const double horizon = 5.0 + rng::uniform(g, 0.0, 10.0);
    const TppParams p = random_params(dims, 1000 + std::uint64_t(trial));
    const EventSequence seq =
        testutil::random_seq(g, dims.num_types, horizon, 8, "q" + std::to_string(trial));
    const EncodedSequence enc = encode(p, seq);

    double event_terms = 0.0;
    double prev = 0.0;
    for (std::size_t n = 0; n < seq.events.size(); ++n) {
      const Event& e = seq.events[n];
      event_terms += std::log(intensity(p, enc, seq, e.type_id, e.time));
      prev = e.time;
    }
    (void)prev;
    double compensator = 0.0;
    for (int c = 0; c < dims.num_types; ++c)
      compensator += testutil::integrate(
          [&](double t) { return t == 0.0 ? intensity(p, enc, seq, c, 1e-300)
                                          : intensity(p, enc, seq, c, t); },
          0.0, horizon, 1e-12);
    const double direct = log_likelihood(p, seq);
    CHECK(testutil::rel_err(direct, event_terms - compensator) < 1e-6);
  }
}

TEST_CASE("true homogeneous rate beats a doubled rate in mean log-likelihood") {
  const double mu = 1.0;
  const int c = 2;
  const double horizon = 10.0;
  sim::GeneratorSpec spec;
  spec.kind = sim::Kind::HomPoisson;
  spec.base_rates = Eigen::VectorXd::Constant(c, mu);

  const Dims dims{c, 2, 2};
  TppParams matched = TppParams::zeros(dims);
  matched.intensity_bias.setConstant(std::log(mu));
  TppParams doubled = TppParams::zeros(dims);
  doubled.intensity_bias.setConstant(std::log(2.0 * mu));

  double ll_matched = 0.0, ll_doubled = 0.0;
  for (int r = 0; r < 1000; ++r) {
    EventSequence seq = sim::thinning_sample(spec, horizon, std::uint64_t(r));
    if (seq.events.empty()) continue;
    seq.id = "h";
    ll_matched += log_likelihood(matched, seq);
    ll_doubled += log_likelihood(doubled, seq);
  }
  CHECK(ll_matched > ll_doubled);
}

TEST_CASE("nll_and_grad matches central finite differences") {
  const Dims dims{3, 4, 8};
  TppParams p = random_params(dims, 40);
  auto g = rng::engine(41, rng::Stream::TestData);
  std::vector<EventSequence> batch;
  batch.push_back(testutil::random_seq(g, 3, 10.0, 20, "fd"));
  const auto bp = ptrs(batch);

  const BatchGradient bg = nll_and_grad(p, bp);
  GradientBundle grad = bg.grad;
  ParamView view = flatten(p, grad);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < view.param.size(); ++i) {
    double* x = view.param[i];
    const double saved = *x;
    *x = saved + h;
    const double up = nll_and_grad(p, bp).nll;
    *x = saved - h;
    const double down = nll_and_grad(p, bp).nll;
    *x = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, testutil::rel_err(fd, *view.grad[i]));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batch of one and duplicated batches behave as means") {
  const Dims dims{2, 3, 5};
  const TppParams p = random_params(dims, 21);
  auto batch = random_batch(1, 2, 8.0, 10, 5);
  const auto single = nll_and_grad(p, ptrs(batch));
  CHECK(single.nll == doctest::Approx(-log_likelihood(p, batch[0])).epsilon(1e-12));

  std::vector<EventSequence> dup{batch[0], batch[0]};
  const auto doubled = nll_and_grad(p, ptrs(dup));
  CHECK(doubled.nll == doctest::Approx(single.nll).epsilon(1e-12));
  CHECK((doubled.grad.input_weights - single.grad.input_weights).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((doubled.grad.intensity_bias - single.grad.intensity_bias).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("embedding kernel values and positive semidefiniteness") {
  const int d = 4;
  EncodedSequence a, b;
  a.sequence_embedding = Eigen::VectorXd::Zero(d);
  a.hidden_states = Eigen::MatrixXd::Zero(1, d);
  b = a;
  CHECK(embedding_kernel({a, b}, 1.0)(0, 1) == 1.0);

  EncodedSequence c = a;
  c.sequence_embedding[0] = std::sqrt(2.0);  // squared distance 2 = 2 sigma^2
  CHECK(embedding_kernel({a, c}, 1.0)(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  auto g = rng::engine(17, rng::Stream::TestData);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EncodedSequence> encs(8);
    for (auto& e : encs) {
      e.sequence_embedding = Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) {
        return rng::uniform(g, -2.0, 2.0);
      });
      e.hidden_states = e.sequence_embedding.transpose();
    }
    const KernelMatrix k = embedding_kernel(encs, 0.8);
    const auto dec = cluster::jacobi_eigen(k.entries());
    CHECK(dec.values.minCoeff() >= -1e-8);
  }
}

TEST_CASE("median_embedding_bandwidth falls back past zeros") {
  EncodedSequence a;
  a.sequence_embedding = Eigen::VectorXd::Zero(3);
  a.hidden_states = Eigen::MatrixXd::Zero(1, 3);
  EncodedSequence b = a, c = a;
  CHECK(median_embedding_bandwidth({a, b, c}) == 1.0);
  c.sequence_embedding[0] = 2.0;
  CHECK(median_embedding_bandwidth({a, b, c}) == 2.0);  // {0,2,2} -> median 2
}

TEST_CASE("time-rescaled compensator increments are unit exponential") {
  sim::GeneratorSpec spec;
  spec.kind = sim::Kind::HomPoisson;
  spec.base_rates = Eigen::VectorXd::Constant(2, 1.0);
  const Dims dims{2, 2, 2};
  TppParams matched = TppParams::zeros(dims);
  matched.intensity_bias.setConstant(0.0);  // rate 1 per type, total 2

  std::vector<double> increments;
  for (std::uint64_t seed = 0; increments.size() < 10000; ++seed) {
    EventSequence seq = sim::thinning_sample(spec, 400.0, seed);
    double prev = 0.0;
    for (const Event& e : seq.events) {
      if (increments.size() < 10000) increments.push_back(2.0 * (e.time - prev));
      prev = e.time;
    }
  }
  CHECK(testutil::ks_passes_at_01(increments, [](double x) { return 1.0 - std::exp(-x); }));
}

TEST_CASE("checkpoint round-trip preserves parameters exactly") {
  const Dims dims{3, 4, 6};
  const TppParams p = random_params(dims, 99);
  const auto path = std::filesystem::temp_directory_path() / "stpp_ckpt_test.json";
  save_checkpoint(p, path);
  const TppParams q = load_checkpoint(path);
  CHECK(q.dims.num_types == dims.num_types);
  CHECK((p.type_embedding - q.type_embedding).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.input_weights - q.input_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.state_weights - q.state_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.state_bias - q.state_bias).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.intensity_weights - q.intensity_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.intensity_drift - q.intensity_drift).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.intensity_bias - q.intensity_bias).cwiseAbs().maxCoeff() == 0.0);
}
