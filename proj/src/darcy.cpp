#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "la2/data.hpp"

namespace la2 {

namespace {

double harmonic(double x, double y) { return 2.0 * x * y / (x + y); }

void check_problem(const RowMatrix& a, const RowMatrix& f) {
  const Eigen::Index g = a.rows();
  if (g < 3 || a.cols() != g || f.rows() != g || f.cols() != g) {
    throw std::invalid_argument("darcy: coefficient and forcing must be g x g with g >= 3");
  }
  if (!(a.array() > 0).all() || !a.allFinite()) throw std::invalid_argument("darcy: coefficient must be positive");
  if (!f.allFinite()) throw std::invalid_argument("darcy: forcing must be finite");
}

// Applies the stencil at interior node (i, j); u is zero on the boundary.
double apply_stencil(const RowMatrix& a, const RowMatrix& u, Eigen::Index i, Eigen::Index j, double inv_h2) {
  const double ap = a(i, j);
  const double up = u(i, j);
  double s = 0.0;
  s += harmonic(ap, a(i + 1, j)) * (up - u(i + 1, j));
  s += harmonic(ap, a(i - 1, j)) * (up - u(i - 1, j));
  s += harmonic(ap, a(i, j + 1)) * (up - u(i, j + 1));
  s += harmonic(ap, a(i, j - 1)) * (up - u(i, j - 1));
  return s * inv_h2;
}

}  // namespace

double darcy_residual(const RowMatrix& a, const RowMatrix& f, const RowMatrix& u) {
  check_problem(a, f);
  const Eigen::Index g = a.rows();
  const double h = 1.0 / static_cast<double>(g - 1);
  const double inv_h2 = 1.0 / (h * h);
  double worst = 0.0;
  for (Eigen::Index i = 1; i + 1 < g; ++i) {
    for (Eigen::Index j = 1; j + 1 < g; ++j) {
      worst = std::max(worst, std::abs(f(i, j) - apply_stencil(a, u, i, j, inv_h2)));
    }
  }
  return worst;
}

RowMatrix solve_darcy_fd(const RowMatrix& a, const RowMatrix& f) {
  check_problem(a, f);
  const Eigen::Index g = a.rows();
  const Eigen::Index n = g - 2;
  const double h = 1.0 / static_cast<double>(g - 1);
  const double inv_h2 = 1.0 / (h * h);
  auto id = [n](Eigen::Index i, Eigen::Index j) { return (i - 1) * n + (j - 1); };

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(5 * n * n));
  Eigen::VectorXd rhs(n * n);
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= n; ++j) {
      const Eigen::Index row = id(i, j);
      const double ap = a(i, j);
      double diag = 0.0;
      const Eigen::Index ni[4] = {i + 1, i - 1, i, i};
      const Eigen::Index nj[4] = {j, j, j + 1, j - 1};
      for (int q = 0; q < 4; ++q) {
        const double w = harmonic(ap, a(ni[q], nj[q])) * inv_h2;
        diag += w;
        const bool interior = ni[q] >= 1 && ni[q] <= n && nj[q] >= 1 && nj[q] <= n;
        if (interior) entries.emplace_back(row, id(ni[q], nj[q]), -w);
      }
      entries.emplace_back(row, row, diag);
      rhs(row) = f(i, j);
    }
  }
  Eigen::SparseMatrix<double> system(n * n, n * n);
  system.setFromTriplets(entries.begin(), entries.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(system);
  if (solver.info() != Eigen::Success) throw std::runtime_error("darcy: factorization failed");
  Eigen::VectorXd x = solver.solve(rhs);

  const double tol = 1e-10 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>());
  double res = (rhs - system * x).lpNorm<Eigen::Infinity>();
  for (int refine = 0; refine < 3 && res >= tol; ++refine) {
    x += solver.solve(rhs - system * x);
    res = (rhs - system * x).lpNorm<Eigen::Infinity>();
  }
  if (!(res < tol)) throw std::runtime_error("darcy: solver did not reach residual 1e-10 (got " + std::to_string(res) + ")");

  RowMatrix u = RowMatrix::Zero(g, g);
  for (Eigen::Index i = 1; i <= n; ++i)
    for (Eigen::Index j = 1; j <= n; ++j) u(i, j) = x(id(i, j));
  return u;
}

RowMatrix sample_darcy_coefficient(std::size_t g, std::uint64_t seed, std::size_t index) {
  // Cosine series of a field with covariance (-Laplacian + tau^2)^(-2).
  constexpr int kModes = 16;
  constexpr double kTau = 3.0;
  constexpr double kPower = 2.0;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e37u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double pi = std::numbers::pi;
  RowMatrix coeff = RowMatrix::Zero(kModes, kModes);
  for (int k1 = 0; k1 < kModes; ++k1) {
    for (int k2 = 0; k2 < kModes; ++k2) {
      const double xi = normal(rng);
      if (k1 == 0 && k2 == 0) continue;  // zero-mean field
      const double lambda = pi * pi * (k1 * k1 + k2 * k2) + kTau * kTau;
      coeff(k1, k2) = xi * std::pow(lambda, -kPower / 2.0);
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(g);
  const double h = 1.0 / static_cast<double>(g - 1);
  RowMatrix basis(n, kModes);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < kModes; ++k) basis(i, k) = std::cos(pi * k * static_cast<double>(i) * h);
  const RowMatrix field = basis * coeff * basis.transpose();
  return field.unaryExpr([](double v) { return v >= 0 ? kDarcyHigh : kDarcyLow; });
}

Dataset generate_darcy(std::size_t n, std::size_t g, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_darcy: n must be >= 1");
  if (g < 8) throw std::invalid_argument("generate_darcy: grid side must be >= 8, got " + std::to_string(g));
  const std::size_t m = g * g;
  std::vector<double> inputs(n * m);
  std::vector<double> outputs(n * m);
  const Eigen::Index gi = static_cast<Eigen::Index>(g);
  const RowMatrix f = RowMatrix::Ones(gi, gi);
  for (std::size_t s = 0; s < n; ++s) {
    const RowMatrix a = sample_darcy_coefficient(g, seed, s);
    const RowMatrix u = solve_darcy_fd(a, f);
    std::copy_n(a.data(), m, inputs.data() + s * m);
    std::copy_n(u.data(), m, outputs.data() + s * m);
  }
  Dataset ds{unit_grid(g), Tensor({n, m, 1}, std::move(inputs)), Tensor({n, m, 1}, std::move(outputs)), {}};
  ds.manifest.name = "darcy";
  ds.manifest.generator = {{"task", "darcy"},
                           {"grid", g},
                           {"n", n},
                           {"a_low", kDarcyLow},
                           {"a_high", kDarcyHigh},
                           {"forcing", 1.0},
                           {"field", "cosine series, covariance (-Laplacian + 9)^-2, 16x16 modes, threshold 0"},
                           {"stencil", "5-point finite volume, harmonic-mean faces, u=0 on boundary"}};
  assign_split(ds.manifest, n, seed);
  ds.manifest.input_stats = compute_stats(ds.inputs, ds.manifest.train_indices);
  ds.manifest.output_stats = compute_stats(ds.outputs, ds.manifest.train_indices);
  return ds;
}

}  // namespace la2
