#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "la2/geometry.hpp"
#include "la2/tensor.hpp"

namespace la2 {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; constant channels store 1
};

struct Manifest {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  ChannelStats input_stats;   // train split only
  ChannelStats output_stats;  // train split only
  nlohmann::json generator = nlohmann::json::object();
};

/// N paired samples on one shared geometry. inputs is [N, M, C_f] and
/// outputs is [N, M, C_u], both in physical (unnormalized) units.
struct Dataset {
  PointSet geometry;
  Tensor inputs;
  Tensor outputs;
  Manifest manifest;

  std::size_t samples() const { return inputs.shape()[0]; }
  std::size_t points() const { return geometry.size(); }
  std::size_t in_channels() const { return inputs.shape()[2]; }
  std::size_t out_channels() const { return outputs.shape()[2]; }
  void validate() const;
};

enum class Split { train, test };

std::span<const std::size_t> split_indices(const Dataset& ds, Split split);

/// Per-channel mean and population std of a [N, M, C] tensor over the listed samples.
ChannelStats compute_stats(const Tensor& fields, std::span<const std::size_t> samples);

/// Sample `i` as [M, C_f], z-normalized with the stored input stats.
Tensor normalized_input(const Dataset& ds, std::size_t i);
/// Sample `i` target as [M, C_u] in physical units.
Tensor target(const Dataset& ds, std::size_t i);
/// Sample `i` target z-normalized with the stored output stats.
Tensor normalized_target(const Dataset& ds, std::size_t i);
/// Maps a normalized [M, C_u] prediction back to physical units (differentiable).
Tensor denormalize_output(const Dataset& ds, const Tensor& pred);

/// Seeded 80/20 train/test partition of sample indices.
void assign_split(Manifest& manifest, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Darcy flow oracle: -div(a grad u) = f on the unit square, u = 0 on the
// boundary, g x g nodes with spacing 1 / (g - 1).

/// Conservative 5-point stencil with harmonic-mean face coefficients.
/// Returns u with boundary rows/columns set to zero.
RowMatrix solve_darcy_fd(const RowMatrix& a, const RowMatrix& f);

/// Max-norm of f - L_a u over interior nodes.
double darcy_residual(const RowMatrix& a, const RowMatrix& f, const RowMatrix& u);

/// Two-phase coefficient field: a smooth Gaussian random field thresholded
/// at zero into {3, 12}.
RowMatrix sample_darcy_coefficient(std::size_t g, std::uint64_t seed, std::size_t index);

inline constexpr double kDarcyLow = 3.0;
inline constexpr double kDarcyHigh = 12.0;

Dataset generate_darcy(std::size_t n, std::size_t g, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Irregular point-cloud task on a notched annulus.

struct NotchedAnnulus {
  double cx = 0.5, cy = 0.5;
  double r_inner = 0.2, r_outer = 0.45;
  double notch_angle = 0.0;       // center of the removed wedge
  double notch_half_width = 0.25;  // radians

  bool contains(double x, double y) const;
  /// Distance to the nearest boundary piece (inner circle, outer circle or notch edge).
  double boundary_distance(double x, double y) const;
  /// u = 10 * boundary_distance * (1 + 0.5 cos(2 (theta - notch_angle))).
  double target(double x, double y) const;
};

NotchedAnnulus annulus_for_seed(std::uint64_t seed);

Dataset generate_pointcloud_task(std::size_t n, std::size_t m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset directory: geometry.la2t, inputs.la2t, outputs.la2t, manifest.json.

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace la2
