#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace failcast {

struct KMeansResult {
  Eigen::MatrixXd centroids;  // d x k
  std::vector<int> assignment;
  double inertia = 0.0;
};

// Lloyd's algorithm with k-means++ seeding; best inertia over `restarts`
// seeded runs. Points are columns. Empty clusters are reseeded to the point
// farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::mt19937_64& gen, int restarts = 50,
                    int max_iter = 100);

// Indices of the distinct points nearest to each centroid (greedy, without
// reuse, centroids in order).
std::vector<std::size_t> nearest_members(const Eigen::MatrixXd& points,
                                         const Eigen::MatrixXd& centroids);

}  // namespace failcast
