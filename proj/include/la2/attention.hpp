#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "la2/tensor.hpp"

namespace la2 {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Affine map x W + b. `bias` is an empty tensor when the map has none.
struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out] or empty

  static Linear init(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng);
  bool has_bias() const { return bias.numel() > 0; }
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t width);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Rank-based sigmoid weighting of the K neighbors. `s` is learned,
/// `alpha` is a fixed sharpness.
struct SoftMaskParams {
  Tensor s;  // [1]
  double alpha = 10.0;

  /// Fraction of the patch that is effectively kept, sigmoid(s).
  double effective_fraction() const;
};

struct GlaLayerParams {
  Linear q_global, k_global, v_global;
  Linear q_local, k_local, v_local;  // k_local and v_local carry no bias
  Linear fuse;                       // [2d] -> [C]
  LayerNormParams norm_attn, norm_ffn;
  Linear ffn_in, ffn_out;
  SoftMaskParams mask;
  std::size_t heads = 1;

  /// Requires even `width` and a branch width width/2 divisible by `heads`.
  static GlaLayerParams init(std::size_t width, std::size_t ffn_width, std::size_t heads, double alpha,
                             std::mt19937_64& rng);

  std::size_t width() const { return fuse.out_features(); }
  std::size_t branch_width() const { return q_global.out_features(); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// w_k = sigmoid(-alpha (k - sigmoid(s) (K - 1) - 1)) for k = 1..K.
Tensor soft_mask(const SoftMaskParams& mask, std::size_t k);

/// out[a, b, c] = h_knn[a, b, c] * w[b].
Tensor weighted_knn_features(const Tensor& h_knn, const Tensor& w);

/// Rows divided by their l1 norm; rows with norm below 1e-12 pass through.
Tensor l1_normalize_rows(const Tensor& x);

/// Right-associated kernelized attention on already-normalized queries and
/// keys: (Qn (Kn^T V)) / D + Qn with D = Qn (Kn^T 1). Rows whose D has
/// magnitude below 1e-12 use D = 1. Never forms an M x M matrix.
Tensor linear_attention(const Tensor& q_norm, const Tensor& k_norm, const Tensor& v);

/// Dense softmax(Q K^T / sqrt(d)) V over all point pairs. Reference for
/// benchmarking only; memory and time are quadratic in M.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Global branch: [M, C] -> [M, d].
Tensor global_attention(const Tensor& h_bar, const GlaLayerParams& p);

/// Local branch: per-point softmax attention over its K weighted neighbors.
/// `h_knn_w` is [M, K, C]; returns [M, d].
Tensor local_attention(const Tensor& h_bar, const Tensor& h_knn_w, const GlaLayerParams& p);

/// Gathers neighbors, applies the soft mask, runs both branches and fuses
/// them back to [M, C].
Tensor gla(const Tensor& h_bar, const IndexMatrix& knn, const GlaLayerParams& p);

/// Pre-norm block: h^ = GLA(LN(h)) + h, out = FFN(LN(h^)) + h^.
Tensor la2_layer(const Tensor& h_prev, const IndexMatrix& knn, const GlaLayerParams& p);

Tensor feed_forward(const Tensor& x, const GlaLayerParams& p);

}  // namespace la2
