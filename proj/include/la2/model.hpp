#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "la2/attention.hpp"
#include "la2/geometry.hpp"
#include "la2/tensor.hpp"

namespace la2 {

struct ModelConfig {
  std::size_t layers = 8;
  std::size_t hidden = 128;
  std::size_t patch = 8;       // K
  double alpha = 10.0;
  std::size_t ffn_width = 0;   // 0 selects 2 * hidden
  std::size_t heads = 1;
  std::size_t in_channels = 1;     // C_f
  std::size_t coord_channels = 2;  // C_s
  std::size_t out_channels = 1;    // C_u
  std::uint64_t seed = 0;

  std::size_t branch_width() const { return hidden / 2; }
  std::size_t resolved_ffn_width() const { return ffn_width ? ffn_width : 2 * hidden; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Encoder MLP, L attention blocks and a linear projection.
struct OperatorModel {
  ModelConfig config;
  Linear encoder_in;   // C_f + C_s -> C
  Linear encoder_out;  // C -> C
  std::vector<GlaLayerParams> layers;
  Linear projection;  // C -> C_u

  /// Every learnable tensor, in a fixed order with stable names.
  NamedTensors parameters() const;
  std::size_t parameter_count() const;
};

OperatorModel init_model(const ModelConfig& config);

/// Lifts [M, C_f] input features plus coordinates to the hidden width.
Tensor encode(const Tensor& f_in, const PointSet& points, const OperatorModel& model);

/// Called after each attention block with its zero-based index and output.
using LayerHook = std::function<void(std::size_t, const Tensor&)>;

Tensor forward(const OperatorModel& model, const Tensor& f_in, const PointSet& points, const KnnIndex& knn,
               const LayerHook& hook = {});

/// sigmoid(s) of every layer, first layer first.
std::vector<double> mask_trajectory(const OperatorModel& model);

/// Binary checkpoint: "LA2C", u32 version, u64 header length, JSON header
/// (config and parameter table), then little-endian float64 blobs.
void save_checkpoint(const OperatorModel& model, const std::filesystem::path& path);
OperatorModel load_checkpoint(const std::filesystem::path& path);

}  // namespace la2
