#include "failcast/kmeans.hpp"

#include <limits>
#include <stdexcept>

namespace failcast {

namespace {

double sq_dist(const Eigen::MatrixXd& points, std::size_t i, const Eigen::VectorXd& c) {
  return (points.col(i) - c).squaredNorm();
}

Eigen::MatrixXd seed_pp(const Eigen::MatrixXd& points, int k, std::mt19937_64& gen) {
  const std::size_t n = points.cols();
  Eigen::MatrixXd centroids(points.rows(), k);
  std::uniform_int_distribution<std::size_t> uni(0, n - 1);
  centroids.col(0) = points.col(uni(gen));
  std::vector<double> mind(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int q = 0; q < c; ++q) best = std::min(best, sq_dist(points, i, centroids.col(q)));
      mind[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centroids.col(c) = points.col(uni(gen));
      continue;
    }
    std::uniform_real_distribution<double> ur(0.0, total);
    double r = ur(gen);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= mind[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    centroids.col(c) = points.col(pick);
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::mt19937_64& gen, int restarts,
                    int max_iter) {
  const std::size_t n = points.cols();
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw std::invalid_argument("kmeans: need 1 <= k <= number of points");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();

  for (int rs = 0; rs < restarts; ++rs) {
    Eigen::MatrixXd centroids = seed_pp(points, k, gen);
    std::vector<int> assign(n, 0);
    for (int it = 0; it < max_iter; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        double bd = std::numeric_limits<double>::infinity();
        int bc = 0;
        for (int c = 0; c < k; ++c) {
          const double d = sq_dist(points, i, centroids.col(c));
          if (d < bd) {
            bd = d;
            bc = c;
          }
        }
        if (assign[i] != bc) {
          assign[i] = bc;
          changed = true;
        }
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
      std::vector<int> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sums.col(assign[i]) += points.col(i);
        counts[assign[i]]++;
      }
      for (int c = 0; c < k; ++c) {
        if (counts[c] > 0) {
          centroids.col(c) = sums.col(c) / counts[c];
        } else {
          // reseed an empty cluster to the point farthest from its centroid
          double worst = -1.0;
          std::size_t pick = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = sq_dist(points, i, centroids.col(assign[i]));
            if (d > worst) {
              worst = d;
              pick = i;
            }
          }
          centroids.col(c) = points.col(pick);
          changed = true;
        }
      }
      if (!changed && it > 0) break;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(points, i, centroids.col(assign[i]));
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.centroids = std::move(centroids);
      best.assignment = std::move(assign);
    }
  }
  return best;
}

std::vector<std::size_t> nearest_members(const Eigen::MatrixXd& points,
                                         const Eigen::MatrixXd& centroids) {
  const std::size_t n = points.cols();
  const std::size_t k = centroids.cols();
  if (k > n) throw std::invalid_argument("nearest_members: more centroids than points");
  std::vector<bool> used(n, false);
  std::vector<std::size_t> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    double bd = std::numeric_limits<double>::infinity();
    std::size_t bi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double d = (points.col(i) - centroids.col(c)).squaredNorm();
      if (d < bd) {
        bd = d;
        bi = i;
      }
    }
    used[bi] = true;
    out[c] = bi;
  }
  return out;
}

}  // namespace failcast
