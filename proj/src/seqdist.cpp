#include "stpp/seqdist.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>

#include "stpp/rng.hpp"
#include "stpp/threads.hpp"

namespace stpp::seqdist {

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
  const Eigen::Index n = entries_.rows();
  if (n != entries_.cols()) throw DataError("distance matrix must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (entries_(i, i) != 0.0) throw DataError("distance matrix diagonal must be exactly 0");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = entries_(i, j);
      if (!std::isfinite(d) || d < 0.0)
        throw DataError("distance matrix entries must be finite and nonnegative");
      if (d != entries_(j, i)) throw DataError("distance matrix must be exactly symmetric");
    }
  }
}

namespace {

std::atomic<std::uint64_t> g_element_kernel{0};
std::atomic<std::uint64_t> g_pairs{0};

constexpr double kSnapEps = 1e-12;

// Canonical argument order makes the summation order, and therefore the
// result, identical for (a, b) and (b, a).
bool events_before(const EventSequence& a, const EventSequence& b) {
  const std::size_t n = std::min(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.events[i].time != b.events[i].time) return a.events[i].time < b.events[i].time;
    if (a.events[i].type_id != b.events[i].type_id)
      return a.events[i].type_id < b.events[i].type_id;
  }
  return a.events.size() < b.events.size();
}

// Per-coordinate factors of the element kernel for one event pair.
inline void coordinate_factors(const Event& x, const Event& y, int num_types, double horizon,
                               Eigen::VectorXd& out) {
  out[0] = horizon - std::abs(x.time - y.time);
  for (int i = 1; i <= num_types; ++i) out[i] = 1.0;
  if (x.type_id != y.type_id) {
    out[1 + x.type_id] = 0.0;
    out[1 + y.type_id] = 0.0;
  }
}

// Adds the element-kernel values of every event pair in (xs, ys) to the
// per-subset accumulators. Singleton mode accumulates the C+1 coordinate
// factors directly; Full mode accumulates all 2^(C+1) subset products.
void accumulate_block(const std::vector<Event>& xs, const std::vector<Event>& ys, SubsetMode mode,
                      int num_types, double horizon, Eigen::VectorXd& acc,
                      std::uint64_t& kernel_evals) {
  const int dim = num_types + 1;
  Eigen::VectorXd factors(dim);
  if (mode == SubsetMode::Singleton) {
    for (const Event& x : xs)
      for (const Event& y : ys) {
        coordinate_factors(x, y, num_types, horizon, factors);
        acc += factors;
      }
    kernel_evals += std::uint64_t(dim) * xs.size() * ys.size();
    return;
  }
  const std::size_t n_subsets = std::size_t(1) << dim;
  Eigen::VectorXd prod(static_cast<Eigen::Index>(n_subsets));
  for (const Event& x : xs)
    for (const Event& y : ys) {
      coordinate_factors(x, y, num_types, horizon, factors);
      prod[0] = 1.0;  // empty subset
      for (std::size_t mask = 1; mask < n_subsets; ++mask) {
        const int low = std::countr_zero(mask);
        prod[Eigen::Index(mask)] = prod[Eigen::Index(mask & (mask - 1))] * factors[low];
      }
      acc += prod;
    }
  kernel_evals += std::uint64_t(n_subsets) * xs.size() * ys.size();
}

// d_I for every subset at once: sqrt(within_a + within_b - 2 cross), clamped.
Eigen::VectorXd all_subset_distances(const EventSequence& a_in, const EventSequence& b_in,
                                     SubsetMode mode, int num_types, double horizon) {
  const bool swap = events_before(b_in, a_in);
  const EventSequence& a = swap ? b_in : a_in;
  const EventSequence& b = swap ? a_in : b_in;
  const int dim = num_types + 1;
  if (mode == SubsetMode::Full && dim > 16)
    throw ConfigError("full subset mode needs num_types + 1 <= 16");
  const Eigen::Index n_acc =
      mode == SubsetMode::Singleton ? dim : Eigen::Index(std::size_t(1) << dim);
  Eigen::VectorXd within_a = Eigen::VectorXd::Zero(n_acc);
  Eigen::VectorXd within_b = Eigen::VectorXd::Zero(n_acc);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(n_acc);
  std::uint64_t evals = 0;
  accumulate_block(a.events, a.events, mode, num_types, horizon, within_a, evals);
  accumulate_block(b.events, b.events, mode, num_types, horizon, within_b, evals);
  accumulate_block(a.events, b.events, mode, num_types, horizon, cross, evals);
  g_element_kernel.fetch_add(evals, std::memory_order_relaxed);
  Eigen::VectorXd d(n_acc);
  for (Eigen::Index s = 0; s < n_acc; ++s)
    d[s] = std::sqrt(std::max(0.0, within_a[s] + within_b[s] - 2.0 * cross[s]));
  return d;
}

double median_with_fallback(std::vector<double> values) {
  if (values.empty()) return 1.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  double med = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  if (med > 0.0) return med;
  for (double v : values)
    if (v > 0.0) return v;
  return 1.0;
}

}  // namespace

EvalCounters counters() {
  return EvalCounters{g_element_kernel.load(), g_pairs.load()};
}

void reset_counters() {
  g_element_kernel.store(0);
  g_pairs.store(0);
}

double subset_distance(const EventSequence& a_in, const EventSequence& b_in,
                       const std::vector<int>& subset, int num_types, double horizon) {
  const bool swap = events_before(b_in, a_in);
  const EventSequence& a = swap ? b_in : a_in;
  const EventSequence& b = swap ? a_in : b_in;
  const int dim = num_types + 1;
  Eigen::VectorXd factors(dim);
  double within_a = 0.0, within_b = 0.0, cross = 0.0;
  auto block = [&](const std::vector<Event>& xs, const std::vector<Event>& ys, double& acc) {
    for (const Event& x : xs)
      for (const Event& y : ys) {
        coordinate_factors(x, y, num_types, horizon, factors);
        double k = 1.0;
        for (int i : subset) k *= factors[i];
        acc += k;
      }
    g_element_kernel.fetch_add(xs.size() * ys.size(), std::memory_order_relaxed);
  };
  block(a.events, a.events, within_a);
  block(b.events, b.events, within_b);
  block(a.events, b.events, cross);
  return std::sqrt(std::max(0.0, within_a + within_b - 2.0 * cross));
}

double pair_distance(const EventSequence& a, const EventSequence& b, SubsetMode mode,
                     int num_types, double horizon) {
  g_pairs.fetch_add(1, std::memory_order_relaxed);
  const Eigen::VectorXd d = all_subset_distances(a, b, mode, num_types, horizon);
  const double mean = d.sum() / double(d.size());
  return mean < kSnapEps ? 0.0 : mean;
}

DistanceMatrix distance_matrix(const std::vector<EventSequence>& sequences, SubsetMode mode,
                               int num_types, double horizon) {
  const std::size_t n = sequences.size();
  if (n < 2) throw DataError("distance matrix needs at least 2 sequences");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  Eigen::MatrixXd entries = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  threads::parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    const double d = pair_distance(sequences[i], sequences[j], mode, num_types, horizon);
    entries(Eigen::Index(i), Eigen::Index(j)) = d;
    entries(Eigen::Index(j), Eigen::Index(i)) = d;
  });
  return DistanceMatrix(std::move(entries));
}

double median_bandwidth(const DistanceMatrix& d) {
  const int n = d.size();
  std::vector<double> upper;
  upper.reserve(std::size_t(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) upper.push_back(d(i, j));
  return median_with_fallback(std::move(upper));
}

KernelMatrix kernel_from_distances(const DistanceMatrix& d, double sigma, bool squared) {
  if (!(sigma > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  const int n = d.size();
  const double denom = 2.0 * sigma * sigma;
  Eigen::MatrixXd k = Eigen::MatrixXd::Ones(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double dij = squared ? d(i, j) * d(i, j) : d(i, j);
      const double v = std::max(std::exp(-dij / denom), 1e-300);
      k(i, j) = v;
      k(j, i) = v;
    }
  return KernelMatrix(std::move(k));
}

ReferenceKernel sample_reference_kernel(const Dataset& data, int count, SubsetMode mode,
                                        std::uint64_t seed) {
  const std::size_t m = data.sequences.size();
  if (count < 2 || std::size_t(count) > m)
    throw ConfigError("reference sample size must lie in [2, M]");
  std::vector<std::size_t> pool(m);
  std::iota(pool.begin(), pool.end(), std::size_t(0));
  auto g = rng::engine(seed, rng::Stream::ReferenceSample);
  for (int i = 0; i < count; ++i)
    std::swap(pool[std::size_t(i)], pool[std::size_t(i) + rng::below(g, m - std::size_t(i))]);
  std::vector<std::size_t> indices(pool.begin(), pool.begin() + count);
  std::vector<EventSequence> sample;
  sample.reserve(indices.size());
  for (std::size_t idx : indices) sample.push_back(data.sequences[idx]);
  DistanceMatrix d = distance_matrix(sample, mode, data.num_types, data.horizon);
  const double sigma = median_bandwidth(d);
  return ReferenceKernel{kernel_from_distances(d, sigma), std::move(indices), sigma};
}

}  // namespace stpp::seqdist
