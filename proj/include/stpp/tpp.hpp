#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "stpp/types.hpp"

namespace stpp::tpp {

struct Dims {
  int num_types = 0;   // C
  int embed_dim = 0;   // E
  int hidden_dim = 0;  // D
};

// Recurrent TPP parameters: per-type event embeddings, one recurrent cell
// over [embedding; log(1 + dt)], and per-type exponential-drift intensity
// heads lambda_c(t) = exp(w_c . h + alpha_c (t - t_last) + b_c).
struct TppParams {
  Dims dims;
  Eigen::MatrixXd type_embedding;    // C x E
  Eigen::MatrixXd input_weights;     // D x (E+1)
  Eigen::MatrixXd state_weights;     // D x D
  Eigen::VectorXd state_bias;        // D
  Eigen::MatrixXd intensity_weights; // C x D
  Eigen::VectorXd intensity_drift;   // C (alpha, clamped to [-10, 10] by optimizers)
  Eigen::VectorXd intensity_bias;    // C

  static TppParams zeros(Dims dims);
};

// Uniform [-0.1, 0.1] initialization; intensity biases start at
// log(mean_events / (C * horizon)) so training begins near a homogeneous
// Poisson fit.
TppParams init_params(Dims dims, std::uint64_t seed, double mean_events, double horizon);

// Hidden state after each event plus the mean-pooled sequence embedding.
struct EncodedSequence {
  Eigen::MatrixXd hidden_states;      // N x D, row n = state after event n
  Eigen::VectorXd sequence_embedding; // D
};

// Same shapes as TppParams, holding objective gradients.
struct GradientBundle {
  Eigen::MatrixXd type_embedding;
  Eigen::MatrixXd input_weights;
  Eigen::MatrixXd state_weights;
  Eigen::VectorXd state_bias;
  Eigen::MatrixXd intensity_weights;
  Eigen::VectorXd intensity_drift;
  Eigen::VectorXd intensity_bias;

  static GradientBundle zeros(Dims dims);
  void add(const GradientBundle& other);
  void scale(double factor);
};

EncodedSequence encode(const TppParams& params, const EventSequence& seq);

// Conditional intensity of type `type_id` at time t, given events of `seq`
// strictly before t. `encoded` must be encode(params, seq).
double intensity(const TppParams& params, const EncodedSequence& encoded,
                 const EventSequence& seq, int type_id, double t);

// Exact log-likelihood: event terms plus the closed-form compensator.
double log_likelihood(const TppParams& params, const EventSequence& seq);

// Adds the gradient of (nll_weight * -log_likelihood) to `grad`, plus the
// backpropagation of `pool_cotangent` (an objective gradient with respect to
// the sequence embedding; may be null). Returns the log-likelihood.
double sequence_backward(const TppParams& params, const EventSequence& seq,
                         const EncodedSequence& encoded, double nll_weight,
                         const Eigen::VectorXd* pool_cotangent, GradientBundle& grad);

struct BatchGradient {
  double nll = 0.0;  // mean negative log-likelihood per sequence
  GradientBundle grad;
  std::vector<EncodedSequence> encodings;
};

BatchGradient nll_and_grad(const TppParams& params,
                           const std::vector<const EventSequence*>& batch);

std::vector<EncodedSequence> encode_batch(const TppParams& params,
                                          const std::vector<const EventSequence*>& batch);

// Gaussian kernel of pairwise sequence-embedding distances.
KernelMatrix embedding_kernel(const std::vector<EncodedSequence>& encodings, double sigma);

// Median of pairwise embedding distances, with the same zero fallbacks as
// seqdist::median_bandwidth.
double median_embedding_bandwidth(const std::vector<EncodedSequence>& encodings);

void save_checkpoint(const TppParams& params, const std::filesystem::path& path);
TppParams load_checkpoint(const std::filesystem::path& path);

}  // namespace stpp::tpp
