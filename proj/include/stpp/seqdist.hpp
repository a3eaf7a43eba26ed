#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "stpp/types.hpp"

namespace stpp::seqdist {

// Full enumerates all 2^(C+1) index subsets of the event-vector coordinates
// (empty set included); Singleton uses the C+1 one-element subsets.
enum class SubsetMode { Full, Singleton };

// Symmetric nonnegative matrix with an exactly-zero diagonal.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(Eigen::MatrixXd entries);

  int size() const { return int(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }

 private:
  Eigen::MatrixXd entries_;
};

// Instrumentation for complexity tests: element-kernel evaluations and
// distinct pair evaluations since the last reset.
struct EvalCounters {
  std::uint64_t element_kernel = 0;
  std::uint64_t pairs = 0;
};
EvalCounters counters();
void reset_counters();

// MMD-style distance restricted to one coordinate subset: the element kernel
// is the product over the subset of (bound_i - |e_i - e_i'|). The radicand is
// clamped at zero before the square root.
double subset_distance(const EventSequence& a, const EventSequence& b,
                       const std::vector<int>& subset, int num_types, double horizon);

// Average of subset distances over all subsets (Full) or the C+1 singleton
// subsets (Singleton). Values below 1e-12 snap to exactly 0.
double pair_distance(const EventSequence& a, const EventSequence& b, SubsetMode mode,
                     int num_types, double horizon);

// Pairwise distances; each unordered pair is evaluated once.
DistanceMatrix distance_matrix(const std::vector<EventSequence>& sequences, SubsetMode mode,
                               int num_types, double horizon);

// Median of the strict upper triangle; falls back to the smallest positive
// entry when the median is zero, and to 1 when all entries are zero.
double median_bandwidth(const DistanceMatrix& d);

// k(i,j) = exp(-d(i,j) / (2 sigma^2)). The exponent uses the unsquared
// distance; `squared` switches to d^2 for callers that want the usual
// Gaussian form.
KernelMatrix kernel_from_distances(const DistanceMatrix& d, double sigma, bool squared = false);

struct ReferenceKernel {
  KernelMatrix kernel;
  std::vector<std::size_t> indices;
  double sigma;
};

// Uniform sample of `count` sequences without replacement, plus the kernel of
// their distance matrix under the median bandwidth. Deterministic given seed.
ReferenceKernel sample_reference_kernel(const Dataset& data, int count, SubsetMode mode,
                                        std::uint64_t seed);

}  // namespace stpp::seqdist
