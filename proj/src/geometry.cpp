#include "la2/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <array>
#include <limits>

namespace la2 {

namespace {

void validate_coords(const Tensor& coords) {
  if (coords.rank() != 2) throw ShapeError("PointSet: coordinates must be [M, C_s], got " + to_string(coords.shape()));
  if (coords.shape()[0] < 1) throw std::invalid_argument("PointSet: needs at least one point");
  const std::size_t d = coords.shape()[1];
  if (d < 1 || d > 3) throw std::invalid_argument("PointSet: C_s must be 1, 2 or 3");
  for (double v : coords.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("PointSet: non-finite coordinate");
  }
}

void check_k(std::size_t k, std::size_t m) {
  if (k < 1 || k > m) {
    throw std::invalid_argument("knn: K=" + std::to_string(k) + " must lie in [1, " + std::to_string(m) + "]");
  }
}

// The query point ranks ahead of any coincident duplicates.
constexpr double kSelfRank = -1.0;

// Lexicographic (distance, index) order shared by both builders.
struct Candidate {
  double dist;
  std::int64_t index;
  bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && index < o.index); }
};

class KdTree {
 public:
  explicit KdTree(const PointSet& points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points.size() / kLeafSize + 2);
    build(0, order_.size());
  }

  // Fills `best` with the k nearest candidates of point a in ascending order.
  void query(std::size_t a, std::size_t k, std::vector<Candidate>& best) const {
    best.clear();
    search(0, a, points_.point(a), k, best);
    std::sort(best.begin(), best.end());
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::size_t begin, end;
    std::array<double, 3> lo{}, hi{};
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end) {
    const std::size_t dims = points_.dims();
    Node node{begin, end, {}, {}};
    for (std::size_t d = 0; d < dims; ++d) {
      node.lo[d] = std::numeric_limits<double>::infinity();
      node.hi[d] = -std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = begin; i < end; ++i) {
      const auto p = points_.point(order_[i]);
      for (std::size_t d = 0; d < dims; ++d) {
        node.lo[d] = std::min(node.lo[d], p[d]);
        node.hi[d] = std::max(node.hi[d], p[d]);
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) return id;

    std::size_t axis = 0;
    for (std::size_t d = 1; d < dims; ++d) {
      if (node.hi[d] - node.lo[d] > node.hi[axis] - node.lo[axis]) axis = d;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t x, std::size_t y) {
                       const double px = points_.point(x)[axis];
                       const double py = points_.point(y)[axis];
                       return px < py || (px == py && x < y);
                     });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  double box_lower_bound(const Node& node, std::span<const double> q) const {
    double s = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) {
      const double gap = q[d] < node.lo[d] ? node.lo[d] - q[d] : (q[d] > node.hi[d] ? q[d] - node.hi[d] : 0.0);
      s += gap * gap;
    }
    return std::sqrt(s);
  }

  // A box is skipped only when it is strictly farther than the current worst
  // by more than rounding could explain; equal distances must still be
  // visited because a smaller index wins the tie.
  // `best` is unordered until it holds k entries, a max-heap after that.
  static bool prunable(double bound, std::size_t k, const std::vector<Candidate>& best) {
    if (best.size() < k) return false;
    const double worst = best.front().dist;
    return bound > worst * (1.0 + 1e-12) + 1e-300;
  }

  static void offer(const Candidate& c, std::size_t k, std::vector<Candidate>& best) {
    if (best.size() < k) {
      best.push_back(c);
      if (best.size() == k) std::make_heap(best.begin(), best.end());
    } else if (c < best.front()) {
      std::pop_heap(best.begin(), best.end());
      best.back() = c;
      std::push_heap(best.begin(), best.end());
    }
  }

  void search(int id, std::size_t self, std::span<const double> q, std::size_t k,
              std::vector<Candidate>& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t j = order_[i];
        offer({j == self ? kSelfRank : point_distance(q, points_.point(j)), static_cast<std::int64_t>(j)}, k, best);
      }
      return;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    const double bl = box_lower_bound(l, q);
    const double br = box_lower_bound(r, q);
    const bool left_first = bl <= br;
    const int first = left_first ? node.left : node.right;
    const int second = left_first ? node.right : node.left;
    const double b1 = left_first ? bl : br;
    const double b2 = left_first ? br : bl;
    if (!prunable(b1, k, best)) search(first, self, q, k, best);
    if (!prunable(b2, k, best)) search(second, self, q, k, best);
  }

  const PointSet& points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace

PointSet::PointSet(Tensor coords) : coords_(coords.detach()) { validate_coords(coords_); }

PointSet::PointSet(std::size_t m, std::size_t dims, std::vector<double> values)
    : PointSet(Tensor({m, dims}, std::move(values))) {}

double point_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

Tensor pairwise_distances(const PointSet& points) {
  const std::size_t m = points.size();
  const std::size_t dims = points.dims();
  const double* x = points.coords().data().data();
  std::vector<double> d(m * m);
  // Row by row; (a - b)^2 == (b - a)^2 exactly, so the result is symmetric.
  for (std::size_t i = 0; i < m; ++i) {
    const std::span<const double> pi(x + i * dims, dims);
    double* row = d.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) row[j] = point_distance(pi, std::span<const double>(x + j * dims, dims));
  }
  return Tensor({m, m}, std::move(d));
}

KnnIndex knn_indices(const PointSet& points, std::size_t k) {
  const std::size_t m = points.size();
  check_k(k, m);
  const Tensor dist = pairwise_distances(points);
  const auto dv = dist.data();
  KnnIndex out{IndexMatrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k))};
  std::vector<Candidate> row(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t j = 0; j < m; ++j) row[j] = {j == a ? kSelfRank : dv[a * m + j], static_cast<std::int64_t>(j)};
    const auto kth = row.begin() + static_cast<std::ptrdiff_t>(k);
    if (k < m) std::nth_element(row.begin(), kth - 1, row.end());
    std::sort(row.begin(), kth);
    for (std::size_t b = 0; b < k; ++b) out.idx(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = row[b].index;
  }
  return out;
}

KnnIndex knn_indices_accelerated(const PointSet& points, std::size_t k) {
  const std::size_t m = points.size();
  check_k(k, m);
  const KdTree tree(points);
  KnnIndex out{IndexMatrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k))};
  std::vector<Candidate> sorted;
  sorted.reserve(k);
  for (std::size_t a = 0; a < m; ++a) {
    tree.query(a, k, sorted);
    for (std::size_t b = 0; b < k; ++b) {
      out.idx(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = sorted[b].index;
    }
  }
  return out;
}

KnnIndex permute_knn(const KnnIndex& knn, std::span<const std::size_t> perm) {
  const std::size_t m = knn.points();
  if (perm.size() != m) throw std::invalid_argument("permute_knn: permutation length differs from point count");
  std::vector<std::int64_t> inverse(m);
  for (std::size_t i = 0; i < m; ++i) inverse[perm[i]] = static_cast<std::int64_t>(i);
  KnnIndex out{IndexMatrix(knn.idx.rows(), knn.idx.cols())};
  for (std::size_t i = 0; i < m; ++i) {
    for (Eigen::Index b = 0; b < knn.idx.cols(); ++b) {
      out.idx(static_cast<Eigen::Index>(i), b) = inverse[static_cast<std::size_t>(knn.idx(static_cast<Eigen::Index>(perm[i]), b))];
    }
  }
  return out;
}

PointSet unit_grid(std::size_t side) {
  if (side < 2) throw std::invalid_argument("unit_grid: side must be at least 2");
  std::vector<double> v;
  v.reserve(side * side * 2);
  const double h = 1.0 / static_cast<double>(side - 1);
  for (std::size_t i = 0; i < side; ++i) {
    for (std::size_t j = 0; j < side; ++j) {
      v.push_back(static_cast<double>(i) * h);
      v.push_back(static_cast<double>(j) * h);
    }
  }
  return PointSet(side * side, 2, std::move(v));
}

}  // namespace la2
