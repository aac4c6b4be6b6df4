#pragma once

#include <cstddef>
#include <span>

#include "la2/tensor.hpp"

namespace la2 {

/// Discretized domain: M points with C_s in {1, 2, 3} coordinates each.
class PointSet {
 public:
  explicit PointSet(Tensor coords);
  PointSet(std::size_t m, std::size_t dims, std::vector<double> values);

  std::size_t size() const { return coords_.shape()[0]; }
  std::size_t dims() const { return coords_.shape()[1]; }
  const Tensor& coords() const { return coords_; }
  std::span<const double> point(std::size_t i) const { return coords_.data().subspan(i * dims(), dims()); }

 private:
  Tensor coords_;
};

/// Neighbor table: row a lists the K nearest points to a, starting with a
/// itself, by non-decreasing distance with ties broken by ascending index.
struct KnnIndex {
  IndexMatrix idx;

  std::size_t points() const { return static_cast<std::size_t>(idx.rows()); }
  std::size_t k() const { return static_cast<std::size_t>(idx.cols()); }
  bool operator==(const KnnIndex& other) const { return idx == other.idx; }
};

/// Euclidean distance. Both KNN builders rank with exactly this function.
double point_distance(std::span<const double> a, std::span<const double> b);

Tensor pairwise_distances(const PointSet& points);

/// O(M^2) reference built from the full distance matrix.
KnnIndex knn_indices(const PointSet& points, std::size_t k);

/// kd-tree search; output is identical to knn_indices.
KnnIndex knn_indices_accelerated(const PointSet& points, std::size_t k);

/// Relabels a neighbor table after the points are reordered so that new
/// point i is old point perm[i].
KnnIndex permute_knn(const KnnIndex& knn, std::span<const std::size_t> perm);

/// Row-major grid on [0,1]^2 with side x side nodes; point (i, j) has index i * side + j.
PointSet unit_grid(std::size_t side);

}  // namespace la2
