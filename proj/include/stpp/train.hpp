#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpp/gw.hpp"
#include "stpp/seqdist.hpp"
#include "stpp/tpp.hpp"
#include "stpp/types.hpp"

namespace stpp::train {

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  double tau = 1.0;
  int reference_l = 64;
  seqdist::SubsetMode subset_mode = seqdist::SubsetMode::Singleton;
  int batch_size = 32;
  int epochs = 20;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Adam;
  std::uint64_t seed = 0;
  bool resample_reference_each_epoch = false;
  int embed_dim = 8;
  int hidden_dim = 16;
  gw::GwConfig gw;

  void validate() const;
};

struct EpochStats {
  double mean_nll = 0.0;
  double gw_squared = 0.0;
  double objective = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;  // filled by callers that persist the model
  double wall_seconds = 0.0;
};

struct ObjectiveResult {
  double value = 0.0;
  double mean_nll = 0.0;
  tpp::GradientBundle grad;
  std::optional<gw::GwResult> gw;  // absent when tau == 0
  double sigma = 0.0;              // embedding-kernel bandwidth used
  std::vector<tpp::EncodedSequence> encodings;
};

// Regularized objective: mean NLL + tau * GW^2 between the batch embedding
// kernel and the reference kernel. The transport plan is re-solved at the
// current parameters; the gradient then treats it as fixed (alternating
// optimization). The embedding bandwidth sigma is supplied by the caller and
// carries no gradient; sigma <= 0 falls back to the batch median. Note the
// kernel built with its own batch's median bandwidth is invariant to
// rescaling of the embeddings, which silences the regularizer's scale
// gradient, so fit() holds sigma constant across each epoch instead.
ObjectiveResult objective(const tpp::TppParams& params,
                          const std::vector<const EventSequence*>& batch,
                          const KernelMatrix& reference, double tau,
                          const gw::GwConfig& gw_config,
                          const gw::TransportPlan* warm_start = nullptr, double sigma = 0.0);

// Same value and gradient with the plan and bandwidth frozen by the caller.
ObjectiveResult objective_fixed_plan(const tpp::TppParams& params,
                                     const std::vector<const EventSequence*>& batch,
                                     const KernelMatrix& reference, double tau,
                                     const gw::TransportPlan& plan, double sigma);

struct FitResult {
  tpp::TppParams params;
  TrainReport report;
};

// Thrown when a batch objective turns non-finite; carries the offending batch
// and the last parameters that produced finite values.
struct TrainAbort : NumericError {
  TrainAbort(std::vector<std::string> ids, tpp::TppParams last_good_params)
      : NumericError("training aborted: non-finite objective"),
        batch_ids(std::move(ids)),
        last_good(std::move(last_good_params)) {}
  std::vector<std::string> batch_ids;
  tpp::TppParams last_good;
};

FitResult fit(const Dataset& data, const TrainConfig& config);

struct EvalResult {
  double ell = 0.0;  // log-likelihood per event
  double acc = 0.0;  // type accuracy at observed event times, events n >= 2
};

EvalResult evaluate_model(const tpp::TppParams& params, const Dataset& data);

}  // namespace stpp::train
