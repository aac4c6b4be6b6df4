// Acceptance suite: one PASS/FAIL line per criterion.
//
//   la2former_acceptance            run all criteria
//   la2former_acceptance 2 4 9      run a subset
//
// Set LA2_ACCEPTANCE_OUT to keep the training reports and bench tables.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "la2/attention.hpp"
#include "la2/data.hpp"
#include "la2/experiments.hpp"
#include "la2/geometry.hpp"
#include "la2/model.hpp"
#include "la2/training.hpp"
#include "support.hpp"

using namespace la2;
using la2::testing::gradcheck;
using la2::testing::max_abs_diff;
using la2::testing::probe;
using la2::testing::uniform;

namespace {

// Tolerances and budgets.
constexpr double kFdStep = 1e-6;
constexpr double kOpGradTol = 1e-5;
constexpr double kModelGradTol = 1e-4;
constexpr int kGradInstances = 20;
constexpr double kGradSeconds = 120;
constexpr int kKnnSets = 100;
constexpr std::size_t kKnnMaxPoints = 2048;
constexpr double kKnnSeconds = 60;
constexpr int kIdentityCases = 50;
constexpr std::size_t kIdentityMaxPoints = 64;
constexpr double kIdentityTol = 1e-12;
constexpr std::size_t kEquivariancePoints = 64;
constexpr int kPermutations = 10;
constexpr double kEquivarianceTol = 1e-9;
constexpr double kConvergenceRatio = 3.5;
constexpr double kResidualTol = 1e-8;
constexpr double kFinalTestTol = 0.35;
constexpr double kLossDropFactor = 0.5;
constexpr double kTrainSeconds = 30 * 60;
constexpr double kGlobalExponentMax = 1.25;
constexpr double kFullExponentMin = 1.7;
constexpr double kLocalRatioMax = 2.6;
constexpr double kMaskSpreadMin = 0.01;

// Desk-scale Darcy setup shared by criteria 6, 7, 8 and 10.
constexpr std::size_t kDarcySamples = 200;
constexpr std::size_t kDarcyGrid = 16;
constexpr std::uint64_t kDarcySeed = 7;

struct Result {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path artifact_dir() {
  const char* env = std::getenv("LA2_ACCEPTANCE_OUT");
  return env ? std::filesystem::path(env) : std::filesystem::path();
}

ModelConfig desk_model() {
  ModelConfig c;
  c.layers = 4;
  c.hidden = 64;
  c.patch = 8;
  return c;
}

TrainConfig desk_train() {
  TrainConfig t;
  t.epochs = 50;
  return t;
}

const Dataset& desk_darcy() {
  static const Dataset ds = generate_darcy(kDarcySamples, kDarcyGrid, kDarcySeed);
  return ds;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

using Leaves = std::vector<Tensor>;
using Builder = std::function<Tensor(const Leaves&)>;

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  Builder build;
  double lo = -2.0, hi = 2.0;
};

double op_worst(const OpCase& c, std::mt19937_64& rng) {
  double worst = 0.0;
  for (int n = 0; n < kGradInstances; ++n) {
    Leaves leaves;
    for (const auto& s : c.shapes) leaves.push_back(uniform(s, rng, c.lo, c.hi, true));
    Tensor out;
    {
      NoGradGuard ng;
      out = c.build(leaves);
    }
    const Tensor r = uniform(out.shape(), rng, -1.0, 1.0);
    worst = std::max(worst, gradcheck([&] { return probe(c.build(leaves), r); }, leaves, kFdStep));
  }
  return worst;
}

Leaves layer_leaves(const GlaLayerParams& p) {
  NamedTensors named;
  p.collect("", named);
  Leaves out;
  for (auto& [n, t] : named) out.push_back(t);
  return out;
}

Result gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  IndexMatrix gidx(4, 3);
  gidx << 0, 1, 1, 1, 3, 0, 2, 2, 2, 3, 0, 1;
  const std::vector<OpCase> ops{
      {"matmul", {{3, 4}, {4, 5}}, [](const Leaves& l) { return matmul(l[0], l[1]); }},
      {"matmul3", {{2, 3, 4}, {4, 2}}, [](const Leaves& l) { return matmul(l[0], l[1]); }},
      {"transpose", {{3, 4}}, [](const Leaves& l) { return transpose(l[0]); }},
      {"reshape", {{3, 4}}, [](const Leaves& l) { return reshape(l[0], {6, 2}); }},
      {"add", {{3, 4}, {4}}, [](const Leaves& l) { return add(l[0], l[1]); }},
      {"sub", {{3, 4}, {3, 1}}, [](const Leaves& l) { return sub(l[0], l[1]); }},
      {"mul", {{2, 3, 4}, {3, 1}}, [](const Leaves& l) { return mul(l[0], l[1]); }},
      {"div", {{3, 4}, {3, 1}}, [](const Leaves& l) { return div(l[0], add_scalar(abs(l[1]), 0.5)); }},
      {"scale", {{4, 5}}, [](const Leaves& l) { return scale(l[0], -1.7); }},
      {"add_scalar", {{4, 5}}, [](const Leaves& l) { return add_scalar(l[0], 0.3); }},
      {"neg", {{4, 5}}, [](const Leaves& l) { return neg(l[0]); }},
      {"abs", {{4, 5}}, [](const Leaves& l) { return abs(l[0]); }},
      {"sqrt", {{4, 5}}, [](const Leaves& l) { return sqrt(l[0]); }, 0.2, 2.0},
      {"sigmoid", {{4, 5}}, [](const Leaves& l) { return sigmoid(l[0]); }},
      {"gelu", {{4, 5}}, [](const Leaves& l) { return gelu(l[0]); }},
      {"safe_denominator", {{4, 5}}, [](const Leaves& l) { return safe_denominator(l[0], 1e-12); }},
      {"sum", {{3, 4}}, [](const Leaves& l) { return sum(l[0]); }},
      {"sum_axis", {{2, 3, 4}}, [](const Leaves& l) { return sum(l[0], 1); }},
      {"mean", {{3, 4}}, [](const Leaves& l) { return mean(l[0]); }},
      {"mean_axis", {{3, 4}}, [](const Leaves& l) { return mean(l[0], -1, true); }},
      {"l1_lastdim", {{3, 4}}, [](const Leaves& l) { return l1_lastdim(l[0]); }},
      {"l2_lastdim", {{3, 4}}, [](const Leaves& l) { return l2_lastdim(l[0]); }},
      {"layer_norm", {{3, 6}, {6}, {6}}, [](const Leaves& l) { return layer_norm(l[0], l[1], l[2]); }},
      {"softmax_lastdim", {{2, 3, 5}}, [](const Leaves& l) { return softmax_lastdim(l[0]); }},
      {"concat_lastdim", {{3, 2}, {3, 4}}, [](const Leaves& l) { return concat_lastdim(l[0], l[1]); }},
      {"slice_lastdim", {{3, 6}}, [](const Leaves& l) { return slice_lastdim(l[0], 2, 3); }},
      {"gather_rows", {{4, 5}}, [&gidx](const Leaves& l) { return gather_rows(l[0], gidx); }},
      {"soft_mask", {{1}},
       [](const Leaves& l) { return soft_mask(SoftMaskParams{l[0], 2.0}, 6); }},
      {"weighted_knn_features", {{3, 4, 2}, {4}},
       [](const Leaves& l) { return weighted_knn_features(l[0], l[1]); }},
      {"l1_normalize_rows", {{4, 5}}, [](const Leaves& l) { return l1_normalize_rows(l[0]); }},
      {"linear_attention", {{5, 3}, {5, 3}, {5, 3}},
       [](const Leaves& l) {
         return linear_attention(l1_normalize_rows(l[0]), l1_normalize_rows(add_scalar(abs(l[1]), 0.1)), l[2]);
       }},
  };

  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& c : ops) {
    const double w = op_worst(c, rng);
    if (w > worst_op) {
      worst_op = w;
      worst_name = c.name;
    }
  }

  // la2_layer with every parameter and the input as leaves.
  // Instances are redrawn while a row of D_g sits within 0.05 of its pole
  // or a projected entry within 1e-3 of the |x| kink; there the central
  // difference itself is inaccurate at this step.
  int redrawn = 0;
  double worst_layer = 0.0;
  for (int n = 0; n < kGradInstances; ++n) {
    const PointSet pts(uniform({10, 2}, rng, 0, 1));
    const KnnIndex knn = knn_indices(pts, 4);
    GlaLayerParams p;
    Tensor h;
    for (;;) {
      p = GlaLayerParams::init(8, 16, 1 + n % 2, 10.0, rng);
      p.mask.s.mutable_data()[0] = std::uniform_real_distribution<double>(-1, 1)(rng);
      h = uniform({10, 8}, rng, -2, 2, true);
      if (la2::testing::fd_margin(h, p, knn.idx) >= 1.0) break;
      ++redrawn;
    }
    Leaves leaves = layer_leaves(p);
    leaves.push_back(h);
    const Tensor r = uniform({10, 8}, rng, -1, 1);
    worst_layer = std::max(
        worst_layer, gradcheck([&] { return probe(la2_layer(h, knn.idx, p), r); }, leaves, kFdStep));
  }

  ModelConfig mc;
  mc.layers = 2;
  mc.hidden = 8;
  mc.patch = 4;
  OperatorModel m;
  Tensor f;
  PointSet pts(1, 2, {0, 0});
  KnnIndex knn;
  for (std::uint64_t seed = 11;; ++seed) {
    mc.seed = seed;
    m = init_model(mc);
    for (auto& l : m.layers) l.mask.s.mutable_data()[0] = std::uniform_real_distribution<double>(-1, 1)(rng);
    pts = PointSet(uniform({16, 2}, rng, 0, 1));
    knn = knn_indices(pts, 4);
    f = uniform({16, 1}, rng);
    if (la2::testing::fd_margin(m, f, pts, knn) >= 1.0) break;
    ++redrawn;
  }
  const Tensor r = uniform({16, 1}, rng, -1, 1);
  Leaves leaves;
  for (auto& [n, t] : m.parameters()) leaves.push_back(t);
  const double worst_model =
      gradcheck([&] { return probe(forward(m, f, pts, knn), r); }, leaves, kFdStep);

  const double secs = seconds_since(t0);
  Result res;
  res.pass = worst_op < kOpGradTol && worst_layer < kOpGradTol && worst_model < kModelGradTol && secs < kGradSeconds;
  res.detail = std::to_string(ops.size()) + " ops x " + std::to_string(kGradInstances) + ": max rel err " +
               num(worst_op) + " (" + worst_name + "); la2_layer " + num(worst_layer) + "; model " +
               num(worst_model) + "; " + std::to_string(redrawn) + " ill-conditioned draws replaced; " + num(secs) + " s";
  return res;
}

// ---------------------------------------------------------------------------
// 2. KNN oracle

Result knn_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> msize(1, kKnnMaxPoints);
  std::uniform_int_distribution<std::size_t> dims(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int compared = 0, mismatched = 0;
  for (int s = 0; s < kKnnSets; ++s) {
    // Always include the largest size once.
    const std::size_t m = s == 0 ? kKnnMaxPoints : msize(rng);
    const std::size_t d = dims(rng);
    std::vector<double> v(m * d);
    for (double& x : v) x = unit(rng);
    const PointSet pts(m, d, std::move(v));
    std::set<std::size_t> ks{1, 8, 32, m};
    for (std::size_t k : ks) {
      if (k > m) continue;
      ++compared;
      if (!(knn_indices_accelerated(pts, k) == knn_indices(pts, k))) ++mismatched;
    }
  }
  // Regular grids: every interior point has many equidistant neighbors.
  for (std::size_t side : {8u, 16u, 33u}) {
    const PointSet g = unit_grid(side);
    for (std::size_t k : {1u, 5u, 9u, 13u, 25u}) {
      ++compared;
      if (!(knn_indices_accelerated(g, k) == knn_indices(g, k))) ++mismatched;
    }
  }
  {
    std::vector<double> v;
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j)
        for (int l = 0; l < 10; ++l) v.insert(v.end(), {i * 0.1, j * 0.1, l * 0.1});
    const PointSet cube(1000, 3, std::move(v));
    for (std::size_t k : {7u, 19u, 27u}) {
      ++compared;
      if (!(knn_indices_accelerated(cube, k) == knn_indices(cube, k))) ++mismatched;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatched == 0 && secs < kKnnSeconds,
          std::to_string(compared) + " tables compared, " + std::to_string(mismatched) + " mismatched; " + num(secs) +
              " s"};
}

// ---------------------------------------------------------------------------
// 3. Soft-mask properties

Result soft_mask_properties() {
  const std::vector<double> alphas{1, 10, 50};
  const std::vector<double> ss{-3, 0, 3};
  int grid = 0, strict_fail = 0, range_fail = 0, s_fail = 0, anchors = 0, anchor_fail = 0;
  // Violations not explained by sigmoid rounding at its asymptotes: equal
  // neighbors or out-of-range values only count as explained within a few
  // ulps of 1 or in the subnormal range near 0.
  int unexplained = 0;
  for (double a : alphas) {
    for (std::size_t k = 2; k <= 64; ++k) {
      std::vector<std::vector<double>> by_s;
      for (double s : ss) {
        ++grid;
        const SoftMaskParams p{Tensor({1}, {s}), a};
        const Tensor w = soft_mask(p, k);
        const auto v = w.data();
        auto saturated = [](double x) { return 1.0 - x <= 1e-15 || x < 1e-300; };
        for (std::size_t i = 0; i + 1 < k; ++i)
          if (!(v[i] > v[i + 1])) {
            ++strict_fail;
            if (!(v[i] == v[i + 1] && saturated(v[i]))) ++unexplained;
          }
        for (double x : v)
          if (!(x > 0.0 && x < 1.0)) {
            ++range_fail;
            if (!saturated(x)) ++unexplained;
          }
        const double thr = 1.0 / (1.0 + std::exp(-s)) * static_cast<double>(k - 1) + 1.0;
        if (thr == std::floor(thr)) {
          ++anchors;
          if (v[static_cast<std::size_t>(thr) - 1] != 0.5) ++anchor_fail;
        }
        by_s.emplace_back(v.begin(), v.end());
      }
      for (std::size_t j = 0; j + 1 < by_s.size(); ++j)
        for (std::size_t i = 0; i < k; ++i)
          if (!(by_s[j][i] <= by_s[j + 1][i])) ++s_fail;
    }
  }
  return {strict_fail == 0 && range_fail == 0 && s_fail == 0 && anchor_fail == 0 && anchors > 0,
          std::to_string(grid) + " masks; non-strict adjacent pairs " + std::to_string(strict_fail) +
              ", entries outside (0,1) " + std::to_string(range_fail) + ", s-response violations " +
              std::to_string(s_fail) + ", anchors " + std::to_string(anchors - anchor_fail) + "/" +
              std::to_string(anchors) + " exact; violations not due to float64 rounding at 0 or 1 " +
              std::to_string(unexplained)};
}

// ---------------------------------------------------------------------------
// 4. Linear-attention identity

Result linear_attention_identity() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> msize(1, kIdentityMaxPoints);
  double worst = 0.0;
  bool finite = true;
  for (int c = 0; c < kIdentityCases; ++c) {
    const std::size_t m = msize(rng);
    const Tensor q = l1_normalize_rows(uniform({m, 8}, rng));
    const Tensor k = l1_normalize_rows(uniform({m, 8}, rng));
    const Tensor v = uniform({m, 8}, rng);
    const Tensor right = matmul(q, matmul(transpose(k), v));
    const RowMatrix dense = (q.matrix() * k.matrix().transpose()) * v.matrix();
    worst = std::max(worst, max_abs_diff(right.data(), std::span<const double>(dense.data(), dense.size())));

    // The library path must agree with the dense form, D included.
    const RowMatrix dvec = (q.matrix() * k.matrix().transpose()).rowwise().sum();
    RowMatrix ref = dense;
    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
      const double d = std::abs(dvec(i, 0)) < 1e-12 ? 1.0 : dvec(i, 0);
      ref.row(i) = ref.row(i) / d + q.matrix().row(i);
    }
    const Tensor out = linear_attention(q, k, v);
    for (double x : out.data()) finite = finite && std::isfinite(x);
    // Compare the numerators recovered from both outputs to keep the tolerance absolute.
    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
      const double d = std::abs(dvec(i, 0)) < 1e-12 ? 1.0 : dvec(i, 0);
      for (Eigen::Index j = 0; j < ref.cols(); ++j) {
        const double got = (out.at({static_cast<std::size_t>(i), static_cast<std::size_t>(j)}) - q.matrix()(i, j)) * d;
        worst = std::max(worst, std::abs(got - dense(i, j)));
      }
    }
  }

  // Near-zero denominators: exact cancellation, sub-threshold and just above.
  int near_cases = 0;
  for (double eps : {0.0, 1e-300, 1e-13, 1e-11, 1e-8}) {
    const Tensor q({2, 2}, {0.5, 0.5, 1.0, 0.0});
    const Tensor k({2, 2}, {0.5 + eps, -0.5, -0.5, 0.5});
    const Tensor v({2, 2}, {1, 2, 3, 4});
    try {
      const Tensor out = linear_attention(q, k, v);
      for (double x : out.data()) finite = finite && std::isfinite(x);
    } catch (const NumericError&) {
      finite = false;
    }
    ++near_cases;
  }
  const Tensor zero_rows = linear_attention(l1_normalize_rows(Tensor::zeros({3, 4})),
                                            l1_normalize_rows(Tensor::zeros({3, 4})), Tensor::full({3, 4}, 1.0));
  for (double x : zero_rows.data()) finite = finite && std::isfinite(x);

  return {worst <= kIdentityTol && finite,
          std::to_string(kIdentityCases) + " cases, max |right - dense| " + num(worst) + "; " +
              std::to_string(near_cases + 1) + " near-zero D cases " + (finite ? "finite" : "NON-FINITE")};
}

// ---------------------------------------------------------------------------
// 5. Permutation equivariance

Tensor permute_rows(const Tensor& x, std::span<const std::size_t> perm) {
  IndexMatrix idx(static_cast<Eigen::Index>(perm.size()), 1);
  for (std::size_t i = 0; i < perm.size(); ++i) idx(static_cast<Eigen::Index>(i), 0) = static_cast<std::int64_t>(perm[i]);
  return reshape(gather_rows(x, idx), {perm.size(), x.shape()[1]});
}

Result permutation_equivariance() {
  std::mt19937_64 rng(505);
  ModelConfig c;
  c.layers = 2;
  c.hidden = 32;
  c.patch = 8;
  c.seed = 5;
  const OperatorModel m = init_model(c);
  double worst = 0.0;
  for (int p = 0; p < kPermutations; ++p) {
    const Tensor coords = uniform({kEquivariancePoints, 2}, rng, 0, 1);
    const Tensor f = uniform({kEquivariancePoints, 1}, rng);
    const PointSet pts(coords);
    const KnnIndex knn = knn_indices_accelerated(pts, c.patch);
    std::vector<std::size_t> perm(kEquivariancePoints);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    NoGradGuard ng;
    const Tensor a = forward(m, permute_rows(f, perm), PointSet(permute_rows(coords, perm)), permute_knn(knn, perm));
    const Tensor b = permute_rows(forward(m, f, pts, knn), perm);
    worst = std::max(worst, max_abs_diff(a.data(), b.data()));
  }
  return {worst < kEquivarianceTol,
          std::to_string(kPermutations) + " permutations at M=" + std::to_string(kEquivariancePoints) +
              ", max |diff| " + num(worst)};
}

// ---------------------------------------------------------------------------
// 6. Darcy oracle

double manufactured_error(std::size_t g) {
  const double pi = std::numbers::pi;
  const double h = 1.0 / static_cast<double>(g - 1);
  const auto n = static_cast<Eigen::Index>(g);
  RowMatrix f(n, n), exact(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      exact(i, j) = std::sin(pi * static_cast<double>(i) * h) * std::sin(pi * static_cast<double>(j) * h);
      f(i, j) = 2 * pi * pi * exact(i, j);
    }
  return (solve_darcy_fd(RowMatrix::Ones(n, n), f) - exact).cwiseAbs().maxCoeff();
}

Result darcy_oracle() {
  const double e16 = manufactured_error(16);
  const double e32 = manufactured_error(32);
  const Dataset& ds = desk_darcy();
  const std::size_t m = ds.points();
  const auto g = static_cast<Eigen::Index>(kDarcyGrid);
  double worst = 0.0;
  for (std::size_t s = 0; s < ds.samples(); ++s) {
    RowMatrix a(g, g), u(g, g);
    std::copy_n(ds.inputs.data().data() + s * m, m, a.data());
    std::copy_n(ds.outputs.data().data() + s * m, m, u.data());
    worst = std::max(worst, darcy_residual(a, RowMatrix::Ones(g, g), u));
  }
  return {e16 / e32 >= kConvergenceRatio && worst < kResidualTol,
          "MMS error " + num(e16) + " -> " + num(e32) + " (ratio " + num(e16 / e32) + "); max residual over " +
              std::to_string(ds.samples()) + " samples " + num(worst)};
}

// ---------------------------------------------------------------------------
// 7 and 10. Desk-scale training

struct DeskRun {
  TrainReport report;
  TrainReport rerun;
  double seconds = 0;
  std::vector<double> initial_sigma;
};

const DeskRun& desk_run() {
  static const DeskRun run = [] {
    DeskRun r;
    OperatorModel model = init_model(desk_model());
    r.initial_sigma = mask_trajectory(model);
    const auto t0 = std::chrono::steady_clock::now();
    r.report = train(model, desk_darcy(), desk_train());
    r.seconds = seconds_since(t0);
    OperatorModel again = init_model(desk_model());
    r.rerun = train(again, desk_darcy(), desk_train());
    if (const auto dir = artifact_dir(); !dir.empty()) {
      std::filesystem::create_directories(dir);
      r.report.write_csv(dir / "desk_report.csv");
    }
    return r;
  }();
  return run;
}

Result desk_training() {
  const DeskRun& r = desk_run();
  const double first = r.report.epochs.front().train_loss;
  const double last = r.report.epochs.back().train_loss;
  const double test = r.report.epochs.back().test_rel_l2;
  const bool same = r.report.same_results(r.rerun);
  return {test < kFinalTestTol && last < kLossDropFactor * first && same && r.seconds < kTrainSeconds,
          "final test rel L2 " + num(test) + "; train loss " + num(first) + " -> " + num(last) + "; rerun " +
              (same ? "identical" : "DIFFERS") + "; " + num(r.seconds) + " s"};
}

Result mask_trajectory_artifact() {
  const DeskRun& r = desk_run();
  bool start_ok = !r.initial_sigma.empty();
  for (double v : r.initial_sigma) start_ok = start_ok && v == 0.5;
  bool shape_ok = r.report.epochs.size() == desk_train().epochs;
  for (const auto& e : r.report.epochs) shape_ok = shape_ok && e.sigma_s.size() == desk_model().layers;
  const auto& last = r.report.epochs.back().sigma_s;
  const auto [lo, hi] = std::minmax_element(last.begin(), last.end());
  std::string vals;
  for (double v : last) vals += (vals.empty() ? "" : ", ") + num(v);
  return {start_ok && shape_ok && *hi - *lo > kMaskSpreadMin,
          "start " + std::string(start_ok ? "all 0.5" : "NOT 0.5") + "; final sigma(s) [" + vals + "], spread " +
              num(*hi - *lo)};
}

// ---------------------------------------------------------------------------
// 8. Window ablation

Result window_ablation() {
  const std::vector<std::size_t> ks{4, 8, 16, 32};
  const auto rows = ablate_window(desk_darcy(), desk_model(), desk_train(), ks);
  if (const auto dir = artifact_dir(); !dir.empty()) {
    std::filesystem::create_directories(dir);
    to_table(rows).write(dir / "ablate_window.csv");
  }
  bool increasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i) increasing = increasing && rows[i].epoch_seconds > rows[i - 1].epoch_seconds;
  const auto best = std::min_element(rows.begin(), rows.end(),
                                     [](const auto& a, const auto& b) { return a.test_rel_l2 < b.test_rel_l2; });
  std::string detail;
  for (const auto& r : rows)
    detail += "K=" + std::to_string(r.k) + " err " + num(r.test_rel_l2) + " t " + num(r.epoch_seconds) + "s; ";
  detail += "best K=" + std::to_string(best->k);
  return {increasing && best->test_rel_l2 < rows.front().test_rel_l2, detail};
}

// ---------------------------------------------------------------------------
// 9. Complexity

Result complexity() {
  const BenchConfig cfg;
  const auto rows = run_bench(cfg);
  if (const auto dir = artifact_dir(); !dir.empty()) {
    std::filesystem::create_directories(dir);
    to_table(rows).write(dir / "bench.csv");
  }
  std::vector<double> gm, gt, fm, ft;
  std::map<std::size_t, double> local;
  for (const auto& r : rows) {
    if (r.kind == "global") {
      gm.push_back(static_cast<double>(r.points));
      gt.push_back(r.median_seconds);
    } else if (r.kind == "full") {
      fm.push_back(static_cast<double>(r.points));
      ft.push_back(r.median_seconds);
    } else {
      local[r.patch] = r.median_seconds;
    }
  }
  const double ge = power_law_exponent(gm, gt);
  const double fe = power_law_exponent(fm, ft);
  const double lr = local.at(32) / local.at(16);
  return {ge < kGlobalExponentMax && fe > kFullExponentMin && lr < kLocalRatioMax,
          "global exponent " + num(ge) + "; full exponent " + num(fe) + "; local K=32/K=16 ratio " + num(lr)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Result()>> criteria{
      {1, gradient_suite},          {2, knn_oracle},     {3, soft_mask_properties},
      {4, linear_attention_identity}, {5, permutation_equivariance}, {6, darcy_oracle},
      {7, desk_training},           {8, window_ablation}, {9, complexity},
      {10, mask_trajectory_artifact}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [n, f] : criteria) selected.insert(n);

  bool all = true;
  for (int n : selected) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", n);
      return 2;
    }
    Result r;
    try {
      r = it->second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all = all && r.pass;
    std::printf("criterion %d: %s | %s\n", n, r.pass ? "PASS" : "FAIL", r.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
