#include "stpp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "stpp/rng.hpp"
#include "stpp/threads.hpp"

namespace stpp::train {

void TrainConfig::validate() const {
  if (tau < 0.0) throw ConfigError("train: tau must be nonnegative");
  if (reference_l < 2) throw ConfigError("train: reference_l must be >= 2");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("train: model dims must be >= 1");
  if (!(gw.proximal_weight > 0.0) || gw.outer_iters < 1 || gw.sinkhorn_iters < 1)
    throw ConfigError("train: invalid gw solver configuration");
}

namespace {

ObjectiveResult nll_only(const tpp::TppParams& params,
                         const std::vector<const EventSequence*>& batch) {
  tpp::BatchGradient bg = tpp::nll_and_grad(params, batch);
  ObjectiveResult out;
  out.value = bg.nll;
  out.mean_nll = bg.nll;
  out.grad = std::move(bg.grad);
  out.encodings = std::move(bg.encodings);
  return out;
}

// Mean NLL + tau * <C(K(theta), ref, plan), plan> with the plan and sigma
// fixed; the GW part reaches the parameters through the embedding kernel and
// the recurrence.
ObjectiveResult fixed_plan_impl(const tpp::TppParams& params,
                                const std::vector<const EventSequence*>& batch,
                                std::vector<tpp::EncodedSequence> encodings,
                                const KernelMatrix& reference, double tau,
                                const gw::TransportPlan& plan, double sigma) {
  const std::size_t b = batch.size();
  const KernelMatrix batch_kernel = tpp::embedding_kernel(encodings, sigma);
  const Eigen::MatrixXd cost = gw::cost_matrix(batch_kernel, reference, plan);
  const double gw_squared = cost.cwiseProduct(plan.matrix).sum();

  Eigen::MatrixXd kernel_grad = gw::grad_wrt_first(batch_kernel, reference, plan);
  kernel_grad = (kernel_grad + kernel_grad.transpose()).eval();

  // d gw^2 / d h_i = sum_j (G + G^T)_ij K_ij (-(h_i - h_j) / sigma^2)
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  std::vector<Eigen::VectorXd> pool_cotangents(b);
  for (std::size_t i = 0; i < b; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(params.dims.hidden_dim);
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      const Eigen::VectorXd diff =
          encodings[i].sequence_embedding - encodings[j].sequence_embedding;
      acc -= kernel_grad(Eigen::Index(i), Eigen::Index(j)) *
             batch_kernel(int(i), int(j)) * inv_sigma2 * diff;
    }
    pool_cotangents[i] = tau * acc;
  }

  const double weight = 1.0 / double(b);
  std::vector<double> lls(b);
  std::vector<tpp::GradientBundle> grads(b);
  threads::parallel_for(b, [&](std::size_t i) {
    grads[i] = tpp::GradientBundle::zeros(params.dims);
    lls[i] = tpp::sequence_backward(params, *batch[i], encodings[i], weight,
                                    &pool_cotangents[i], grads[i]);
  });

  ObjectiveResult out;
  out.grad = tpp::GradientBundle::zeros(params.dims);
  for (std::size_t i = 0; i < b; ++i) {
    out.mean_nll -= weight * lls[i];
    out.grad.add(grads[i]);
  }
  out.value = out.mean_nll + tau * gw_squared;
  out.sigma = sigma;
  out.encodings = std::move(encodings);
  return out;
}

}  // namespace

ObjectiveResult objective(const tpp::TppParams& params,
                          const std::vector<const EventSequence*>& batch,
                          const KernelMatrix& reference, double tau,
                          const gw::GwConfig& gw_config, const gw::TransportPlan* warm_start,
                          double sigma) {
  if (batch.size() < 2) throw DataError("objective: batch needs at least 2 sequences");
  if (tau == 0.0) return nll_only(params, batch);

  std::vector<tpp::EncodedSequence> encodings = tpp::encode_batch(params, batch);
  if (sigma <= 0.0) sigma = tpp::median_embedding_bandwidth(encodings);
  const KernelMatrix batch_kernel = tpp::embedding_kernel(encodings, sigma);
  const Eigen::Index m = Eigen::Index(batch.size());
  const Eigen::Index l = reference.entries().rows();
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(m, 1.0 / double(m));
  const Eigen::VectorXd nu = Eigen::VectorXd::Constant(l, 1.0 / double(l));
  gw::GwResult gw_result =
      gw::solve(batch_kernel, reference, mu, nu, gw_config, warm_start);

  ObjectiveResult out = fixed_plan_impl(params, batch, std::move(encodings), reference, tau,
                                        gw_result.plan, sigma);
  out.gw = std::move(gw_result);
  return out;
}

ObjectiveResult objective_fixed_plan(const tpp::TppParams& params,
                                     const std::vector<const EventSequence*>& batch,
                                     const KernelMatrix& reference, double tau,
                                     const gw::TransportPlan& plan, double sigma) {
  if (batch.size() < 2) throw DataError("objective: batch needs at least 2 sequences");
  if (tau == 0.0) return nll_only(params, batch);
  return fixed_plan_impl(params, batch, tpp::encode_batch(params, batch), reference, tau, plan,
                         sigma);
}

namespace {

struct AdamState {
  tpp::GradientBundle m;
  tpp::GradientBundle v;
  long step = 0;
};

void adam_update_block(Eigen::Ref<Eigen::MatrixXd> param, Eigen::Ref<Eigen::MatrixXd> m,
                       Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& g, double lr,
                       double bias1, double bias2) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  m = kBeta1 * m + (1.0 - kBeta1) * g;
  v = kBeta2 * v.array().matrix() + (1.0 - kBeta2) * g.array().square().matrix();
  const Eigen::ArrayXXd m_hat = m.array() / bias1;
  const Eigen::ArrayXXd v_hat = v.array() / bias2;
  param.array() -= lr * m_hat / (v_hat.sqrt() + kEps);
}

void apply_step(tpp::TppParams& params, const tpp::GradientBundle& grad, Optimizer opt,
                double lr, AdamState& state) {
  if (opt == Optimizer::Sgd) {
    params.type_embedding -= lr * grad.type_embedding;
    params.input_weights -= lr * grad.input_weights;
    params.state_weights -= lr * grad.state_weights;
    params.state_bias -= lr * grad.state_bias;
    params.intensity_weights -= lr * grad.intensity_weights;
    params.intensity_drift -= lr * grad.intensity_drift;
    params.intensity_bias -= lr * grad.intensity_bias;
  } else {
    ++state.step;
    const double bias1 = 1.0 - std::pow(0.9, double(state.step));
    const double bias2 = 1.0 - std::pow(0.999, double(state.step));
    adam_update_block(params.type_embedding, state.m.type_embedding, state.v.type_embedding,
                      grad.type_embedding, lr, bias1, bias2);
    adam_update_block(params.input_weights, state.m.input_weights, state.v.input_weights,
                      grad.input_weights, lr, bias1, bias2);
    adam_update_block(params.state_weights, state.m.state_weights, state.v.state_weights,
                      grad.state_weights, lr, bias1, bias2);
    adam_update_block(params.state_bias, state.m.state_bias, state.v.state_bias, grad.state_bias,
                      lr, bias1, bias2);
    adam_update_block(params.intensity_weights, state.m.intensity_weights,
                      state.v.intensity_weights, grad.intensity_weights, lr, bias1, bias2);
    adam_update_block(params.intensity_drift, state.m.intensity_drift, state.v.intensity_drift,
                      grad.intensity_drift, lr, bias1, bias2);
    adam_update_block(params.intensity_bias, state.m.intensity_bias, state.v.intensity_bias,
                      grad.intensity_bias, lr, bias1, bias2);
  }
  // Drift stays clamped after every update.
  params.intensity_drift = params.intensity_drift.cwiseMax(-10.0).cwiseMin(10.0);
}

}  // namespace

FitResult fit(const Dataset& data, const TrainConfig& config) {
  config.validate();
  validate_dataset(data);
  if (std::size_t(config.reference_l) > data.sequences.size())
    throw ConfigError("train: reference_l exceeds the dataset size");

  const auto start_time = std::chrono::steady_clock::now();
  const std::size_t m = data.sequences.size();

  seqdist::ReferenceKernel reference = seqdist::sample_reference_kernel(
      data, config.reference_l, config.subset_mode, config.seed);

  double mean_events = 0.0;
  for (const EventSequence& s : data.sequences) mean_events += double(s.events.size());
  mean_events /= double(m);

  tpp::Dims dims{data.num_types, config.embed_dim, config.hidden_dim};
  tpp::TppParams params = tpp::init_params(dims, config.seed, mean_events, data.horizon);
  AdamState adam{tpp::GradientBundle::zeros(dims), tpp::GradientBundle::zeros(dims), 0};

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t(0));

  FitResult result;
  result.report.epochs.reserve(std::size_t(config.epochs));

  std::optional<gw::TransportPlan> warm_plan;
  std::vector<std::size_t> warm_indices;

  std::vector<const EventSequence*> all;
  all.reserve(m);
  for (const EventSequence& s : data.sequences) all.push_back(&s);

  // Run-constant bandwidth from the initial embeddings of the whole dataset.
  // A bandwidth that tracked each batch's median would make the kernel
  // invariant to embedding scale and cancel the regularizer's descent.
  double sigma = 0.0;
  if (config.tau != 0.0)
    sigma = tpp::median_embedding_bandwidth(tpp::encode_batch(params, all));

  tpp::TppParams last_good = params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.resample_reference_each_epoch && epoch > 0)
      reference = seqdist::sample_reference_kernel(
          data, config.reference_l, config.subset_mode,
          rng::mix(config.seed, std::uint64_t(rng::Stream::ReferenceSample), std::uint64_t(epoch)));

    // A single full batch keeps its natural order so the warm-started plan's
    // rows stay aligned with the batch across epochs.
    if (std::size_t(config.batch_size) < m) {
      auto g = rng::engine(config.seed, rng::Stream::Shuffle, std::uint64_t(epoch));
      for (std::size_t i = m; i > 1; --i)
        std::swap(order[i - 1], order[rng::below(g, i)]);
    }

    // Batches of batch_size; a short tail merges into the previous batch so
    // every batch keeps >= 2 sequences.
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t pos = 0; pos < m; pos += std::size_t(config.batch_size)) {
      const std::size_t end = std::min(m, pos + std::size_t(config.batch_size));
      batches.emplace_back(order.begin() + long(pos), order.begin() + long(end));
    }
    if (batches.size() > 1 && batches.back().size() < 2) {
      auto tail = std::move(batches.back());
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }

    EpochStats stats;
    std::size_t seen = 0;
    for (const std::vector<std::size_t>& batch_idx : batches) {
      std::vector<const EventSequence*> batch;
      batch.reserve(batch_idx.size());
      for (std::size_t idx : batch_idx) batch.push_back(&data.sequences[idx]);

      const gw::TransportPlan* warm =
          warm_plan && warm_indices == batch_idx ? &*warm_plan : nullptr;
      ObjectiveResult obj =
          objective(params, batch, reference.kernel, config.tau, config.gw, warm, sigma);
      if (!std::isfinite(obj.value)) {
        std::vector<std::string> ids;
        for (const EventSequence* s : batch) ids.push_back(s->id);
        throw TrainAbort(std::move(ids), std::move(last_good));
      }
      last_good = params;
      apply_step(params, obj.grad, config.optimizer, config.learning_rate, adam);
      if (obj.gw) {
        warm_plan = obj.gw->plan;
        warm_indices = batch_idx;
      }

      const double w = double(batch_idx.size());
      stats.mean_nll += w * obj.mean_nll;
      stats.gw_squared += w * (obj.gw ? obj.gw->gw_squared : 0.0);
      stats.objective += w * obj.value;
      seen += batch_idx.size();
    }
    stats.mean_nll /= double(seen);
    stats.gw_squared /= double(seen);
    stats.objective /= double(seen);
    result.report.epochs.push_back(stats);
  }

  result.params = std::move(params);
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

EvalResult evaluate_model(const tpp::TppParams& params, const Dataset& data) {
  const std::size_t m = data.sequences.size();
  std::vector<double> lls(m);
  std::vector<std::size_t> events(m), correct(m), scored(m);
  threads::parallel_for(m, [&](std::size_t i) {
    const EventSequence& seq = data.sequences[i];
    const tpp::EncodedSequence enc = tpp::encode(params, seq);
    tpp::GradientBundle unused;
    lls[i] = tpp::sequence_backward(params, seq, enc, 0.0, nullptr, unused);
    events[i] = seq.events.size();
    std::size_t ok = 0, total = 0;
    for (std::size_t n = 1; n < seq.events.size(); ++n) {
      const Event& e = seq.events[n];
      const double dt = e.time - seq.events[n - 1].time;
      int best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < params.dims.num_types; ++c) {
        const double score =
            params.intensity_weights.row(c).dot(enc.hidden_states.row(Eigen::Index(n) - 1)) +
            params.intensity_drift[c] * dt + params.intensity_bias[c];
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      if (best == e.type_id) ++ok;
      ++total;
    }
    correct[i] = ok;
    scored[i] = total;
  });
  double ll_sum = 0.0;
  std::size_t event_sum = 0, ok_sum = 0, scored_sum = 0;
  for (std::size_t i = 0; i < m; ++i) {
    ll_sum += lls[i];
    event_sum += events[i];
    ok_sum += correct[i];
    scored_sum += scored[i];
  }
  EvalResult out;
  out.ell = ll_sum / double(event_sum);
  out.acc = scored_sum == 0 ? 0.0 : double(ok_sum) / double(scored_sum);
  return out;
}

}  // namespace stpp::train
