#include "stpp/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "stpp/rng.hpp"
#include "stpp/threads.hpp"

namespace stpp::cluster {

EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& sym, int max_sweeps) {
  const Eigen::Index n = sym.rows();
  if (n != sym.cols()) throw DataError("eigensolver needs a square matrix");
  Eigen::MatrixXd a = 0.5 * (sym + sym.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), 1e-300);

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  bool converged = n <= 1;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    if (off_norm() <= 1e-14 * scale) {
      converged = true;
      break;
    }
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = theta >= 0.0 ? 1.0 / (theta + std::sqrt(theta * theta + 1.0))
                                      : 1.0 / (theta - std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
  }
  if (!converged && off_norm() > 1e-10 * scale)
    throw NumericError("jacobi eigensolver did not converge after " +
                       std::to_string(max_sweeps) + " sweeps (off-diagonal norm " +
                       std::to_string(off_norm()) + ")");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[std::size_t(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  EigenDecomposition dec;
  dec.values.resize(n);
  dec.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dec.values[i] = a(order[std::size_t(i)], order[std::size_t(i)]);
    dec.vectors.col(i) = v.col(order[std::size_t(i)]);
  }
  return dec;
}

namespace {

struct KMeansRun {
  std::vector<int> labels;
  double wcss = std::numeric_limits<double>::infinity();
};

void assign_points(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centers,
                   std::vector<int>& labels) {
  const Eigen::Index n = points.rows();
  const Eigen::Index k = centers.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (points.row(i) - centers.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < k; ++c) {
      const double d = (points.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = int(c);
      }
    }
    labels[std::size_t(i)] = best;
  }
}

KMeansRun kmeans_once(const Eigen::MatrixXd& points, int k, std::mt19937_64 g, int max_iters) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centers(k, points.cols());

  // k-means++ seeding
  centers.row(0) = points.row(Eigen::Index(rng::below(g, std::size_t(n))));
  Eigen::VectorXd dist2(n);
  for (Eigen::Index i = 0; i < n; ++i)
    dist2[i] = (points.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng::uniform01(g) * total;
      while (pick + 1 < n && u >= dist2[pick]) {
        u -= dist2[pick];
        ++pick;
      }
    } else {
      pick = Eigen::Index(rng::below(g, std::size_t(n)));
    }
    centers.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], (points.row(i) - centers.row(c)).squaredNorm());
  }

  std::vector<int> labels(std::size_t(n), -1);
  std::vector<int> prev;
  for (int iter = 0; iter < max_iters; ++iter) {
    assign_points(points, centers, labels);

    // Empty-cluster repair: reseed from the point farthest from its center.
    std::vector<Eigen::Index> counts(std::size_t(k), 0);
    for (int lab : labels) ++counts[std::size_t(lab)];
    std::vector<bool> taken(std::size_t(n), false);
    bool repaired = false;
    for (int c = 0; c < k; ++c) {
      if (counts[std::size_t(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[std::size_t(i)]) continue;
        const double d = (points.row(i) - centers.row(labels[std::size_t(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < 0) continue;
      centers.row(c) = points.row(far);
      taken[std::size_t(far)] = true;
      repaired = true;
    }
    if (repaired) assign_points(points, centers, labels);

    if (labels == prev) break;
    prev = labels;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::fill(counts.begin(), counts.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[std::size_t(i)]) += points.row(i);
      ++counts[std::size_t(labels[std::size_t(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[std::size_t(c)] > 0) centers.row(c) = sums.row(c) / double(counts[std::size_t(c)]);
  }

  KMeansRun run;
  run.labels = labels;
  run.wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    run.wcss += (points.row(i) - centers.row(labels[std::size_t(i)])).squaredNorm();
  return run;
}

}  // namespace

std::vector<int> kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int restarts,
                        int max_iters) {
  if (k < 1 || k > points.rows()) throw ConfigError("kmeans: k out of range");
  std::vector<KMeansRun> runs(static_cast<std::size_t>(restarts));
  threads::parallel_for(std::size_t(restarts), [&](std::size_t r) {
    runs[r] = kmeans_once(points, k, rng::engine(seed, rng::Stream::KMeans, r), max_iters);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].wcss < runs[best].wcss) best = r;
  return runs[best].labels;
}

std::vector<int> spectral_cluster(const KernelMatrix& kernel, int k, std::uint64_t seed) {
  const int n = kernel.size();
  if (k < 2 || k > n) throw ConfigError("spectral_cluster: k must lie in [2, n]");
  const Eigen::MatrixXd& K = kernel.entries();
  Eigen::VectorXd deg = K.rowwise().sum();
  Eigen::VectorXd inv_sqrt = deg.array().sqrt().inverse();
  Eigen::MatrixXd norm(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = K(i, j) * inv_sqrt[i] * inv_sqrt[j];
      norm(i, j) = v;
      norm(j, i) = v;
    }
  EigenDecomposition dec = jacobi_eigen(norm);
  Eigen::MatrixXd u = dec.vectors.leftCols(k);
  for (int i = 0; i < n; ++i) {
    const double len = u.row(i).norm();
    if (len > 0.0) u.row(i) /= len;
  }
  return kmeans(u, k, rng::mix(seed, std::uint64_t(rng::Stream::Spectral)));
}

namespace {

// Contingency table between two labelings; labels may be arbitrary ints.
std::map<std::pair<int, int>, std::size_t> contingency(const std::vector<int>& a,
                                                       const std::vector<int>& b) {
  std::map<std::pair<int, int>, std::size_t> cells;
  for (std::size_t i = 0; i < a.size(); ++i) ++cells[{a[i], b[i]}];
  return cells;
}

std::map<int, std::size_t> marginal(const std::vector<int>& v) {
  std::map<int, std::size_t> m;
  for (int x : v) ++m[x];
  return m;
}

double entropy(const std::map<int, std::size_t>& counts, double n) {
  double h = 0.0;
  for (const auto& [lab, c] : counts) {
    const double p = double(c) / n;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty()) throw DataError("nmi: labelings must have equal length >= 1");
  const double n = double(a.size());
  const auto ma = marginal(a);
  const auto mb = marginal(b);
  const double ha = entropy(ma, n);
  const double hb = entropy(mb, n);
  const double mean_h = 0.5 * (ha + hb);
  if (mean_h == 0.0) return 1.0;  // both partitions trivial
  double info = 0.0;
  for (const auto& [cell, c] : contingency(a, b)) {
    const double pij = double(c) / n;
    const double pi = double(ma.at(cell.first)) / n;
    const double qj = double(mb.at(cell.second)) / n;
    info += pij * std::log(pij / (pi * qj));
  }
  info = std::max(info, 0.0);
  return info / mean_h;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("rand_index: labelings must have equal length >= 2");
  const std::size_t n = a.size();
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      if (same_a == same_b) ++agree;
    }
  return double(agree) / (double(n) * double(n - 1) / 2.0);
}

ClusteringReport score_labels(std::vector<int> predicted, const Dataset& data, int k) {
  std::vector<int> truth;
  truth.reserve(data.sequences.size());
  for (const EventSequence& s : data.sequences) {
    if (!s.label) throw DataError("sequence '" + s.id + "' has no label; metrics need labels");
    truth.push_back(*s.label);
  }
  ClusteringReport report;
  report.nmi = nmi(predicted, truth);
  report.rand_index = rand_index(predicted, truth);
  report.predicted_labels = std::move(predicted);
  report.k = k;
  return report;
}

ClusteringReport dis_sc_baseline(const Dataset& data, int k, seqdist::SubsetMode mode,
                                 std::uint64_t seed) {
  seqdist::DistanceMatrix d =
      seqdist::distance_matrix(data.sequences, mode, data.num_types, data.horizon);
  const double sigma = seqdist::median_bandwidth(d);
  KernelMatrix kernel = seqdist::kernel_from_distances(d, sigma);
  return score_labels(spectral_cluster(kernel, k, seed), data, k);
}

}  // namespace stpp::cluster
