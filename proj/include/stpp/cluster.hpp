#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "stpp/seqdist.hpp"
#include "stpp/types.hpp"

namespace stpp::cluster {

// Dense symmetric eigendecomposition via cyclic Jacobi rotations.
// Eigenvalues sorted descending; vectors are the matching columns.
struct EigenDecomposition {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& sym, int max_sweeps = 64);

// Lloyd iterations with k-means++ seeding. Restarts run on independent
// streams; the best labeling is the lowest within-cluster sum of squares,
// ties broken by restart index. Empty clusters are reseeded from the point
// farthest from its assigned center.
std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                        int restarts = 20, int max_iters = 100);

// Normalized spectral clustering: D^{-1/2} K D^{-1/2}, top-k eigenvectors,
// unit row normalization, then kmeans.
std::vector<int> spectral_cluster(const KernelMatrix& kernel, int k, std::uint64_t seed);

// Normalized mutual information with arithmetic-mean normalization and
// natural logs; two trivial partitions score 1.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

// Plain Rand index: agreeing pairs over all pairs.
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct ClusteringReport {
  std::vector<int> predicted_labels;
  double nmi = 0.0;
  double rand_index = 0.0;
  int k = 0;
};

// Nonparametric distance matrix -> median-bandwidth kernel -> spectral
// clustering, scored against the dataset's true labels.
ClusteringReport dis_sc_baseline(const Dataset& data, int k, seqdist::SubsetMode mode,
                                 std::uint64_t seed);

// Scores predicted labels against a labeled dataset.
ClusteringReport score_labels(std::vector<int> predicted, const Dataset& data, int k);

}  // namespace stpp::cluster
