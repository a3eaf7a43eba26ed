#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "stpp/types.hpp"

namespace stpp::sim {

enum class Kind { HomPoisson, InhomPoisson, Hawkes, InhibitHawkes, MixedHawkes };
enum class Link { Identity, Softplus };

// Ground-truth intensity family: per-type base rates, an optional shared
// sinusoid, and an exponential-decay excitation matrix (row = receiving type,
// column = source type). Negative excitation entries model inhibition and
// require the softplus link.
struct GeneratorSpec {
  Kind kind = Kind::HomPoisson;
  Eigen::VectorXd base_rates;
  double sin_amplitude = 0.0;
  double sin_period = 0.0;
  Eigen::MatrixXd excitation;
  double decay = 1.0;
  Link link = Link::Identity;

  int num_types() const { return int(base_rates.size()); }
  void validate() const;
};

struct SyntheticPlan {
  std::vector<GeneratorSpec> cluster_specs;
  int sequences_per_cluster = 0;
  int num_types = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Largest-eigenvalue estimate of a nonnegative matrix (power iteration).
double spectral_radius_nonneg(const Eigen::MatrixXd& m);

// Per-type conditional intensity at time t given events strictly before t.
Eigen::VectorXd ground_truth_intensity(const GeneratorSpec& spec,
                                       const std::vector<Event>& history, double t);

// Ogata thinning with a piecewise-constant dominating rate recomputed after
// each accepted or rejected proposal. Deterministic given seed. The result
// may be empty when rates are tiny; make_synthetic retries those draws.
EventSequence thinning_sample(const GeneratorSpec& spec, double horizon, std::uint64_t seed);

// Labeled dataset: sequences_per_cluster draws per spec, label = spec index.
// Per-sequence RNG streams derive from (seed, sequence index), so parallel
// and serial generation agree exactly.
Dataset make_synthetic(const SyntheticPlan& plan);

SyntheticPlan load_plan(const std::filesystem::path& path);

}  // namespace stpp::sim
