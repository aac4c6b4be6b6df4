#include "la2/attention.hpp"

#include <cmath>

namespace la2 {

namespace {

constexpr double kNormFloor = 1e-12;

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, bool with_bias, std::mt19937_64& rng) {
  Linear l;
  l.weight = uniform({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  l.bias = with_bias ? Tensor::zeros({out}, true) : Tensor();
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return has_bias() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (has_bias()) out.emplace_back(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

void LayerNormParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

double SoftMaskParams::effective_fraction() const {
  const double x = s.item();
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

GlaLayerParams GlaLayerParams::init(std::size_t width, std::size_t ffn_width, std::size_t heads, double alpha,
                                    std::mt19937_64& rng) {
  if (width == 0 || width % 2 != 0) throw std::invalid_argument("GlaLayerParams: width must be even and positive");
  const std::size_t d = width / 2;
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("GlaLayerParams: branch width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (!(alpha > 0)) throw std::invalid_argument("GlaLayerParams: alpha must be positive");
  if (ffn_width == 0) throw std::invalid_argument("GlaLayerParams: feed-forward width must be positive");
  GlaLayerParams p;
  p.q_global = Linear::init(width, d, true, rng);
  p.k_global = Linear::init(width, d, true, rng);
  p.v_global = Linear::init(width, d, true, rng);
  p.q_local = Linear::init(width, d, true, rng);
  p.k_local = Linear::init(width, d, false, rng);
  p.v_local = Linear::init(width, d, false, rng);
  p.fuse = Linear::init(2 * d, width, true, rng);
  p.norm_attn = LayerNormParams::init(width);
  p.norm_ffn = LayerNormParams::init(width);
  p.ffn_in = Linear::init(width, ffn_width, true, rng);
  p.ffn_out = Linear::init(ffn_width, width, true, rng);
  p.mask = {Tensor::zeros({1}, true), alpha};
  p.heads = heads;
  return p;
}

void GlaLayerParams::collect(const std::string& prefix, NamedTensors& out) const {
  q_global.collect(prefix + ".q_global", out);
  k_global.collect(prefix + ".k_global", out);
  v_global.collect(prefix + ".v_global", out);
  q_local.collect(prefix + ".q_local", out);
  k_local.collect(prefix + ".k_local", out);
  v_local.collect(prefix + ".v_local", out);
  fuse.collect(prefix + ".fuse", out);
  norm_attn.collect(prefix + ".norm_attn", out);
  norm_ffn.collect(prefix + ".norm_ffn", out);
  ffn_in.collect(prefix + ".ffn_in", out);
  ffn_out.collect(prefix + ".ffn_out", out);
  out.emplace_back(prefix + ".mask.s", mask.s);
}

Tensor soft_mask(const SoftMaskParams& mask, std::size_t k) {
  if (k < 1) throw std::invalid_argument("soft_mask: K must be at least 1");
  std::vector<double> ranks(k);
  for (std::size_t i = 0; i < k; ++i) ranks[i] = static_cast<double>(i + 1);
  const Tensor threshold = add_scalar(scale(sigmoid(mask.s), static_cast<double>(k - 1)), 1.0);
  return sigmoid(scale(sub(Tensor({k}, std::move(ranks)), threshold), -mask.alpha));
}

Tensor weighted_knn_features(const Tensor& h_knn, const Tensor& w) {
  if (h_knn.rank() != 3 || w.rank() != 1 || w.shape()[0] != h_knn.shape()[1]) {
    throw ShapeError("weighted_knn_features: expected [M, K, C] and [K], got " + to_string(h_knn.shape()) + " and " +
                     to_string(w.shape()));
  }
  return mul(h_knn, reshape(w, {w.shape()[0], 1}));
}

Tensor l1_normalize_rows(const Tensor& x) { return div(x, safe_denominator(l1_lastdim(x), kNormFloor)); }

Tensor linear_attention(const Tensor& q_norm, const Tensor& k_norm, const Tensor& v) {
  if (q_norm.rank() != 2 || k_norm.shape() != q_norm.shape() || v.rank() != 2 || v.shape()[0] != k_norm.shape()[0]) {
    throw ShapeError("linear_attention: expected Q, K as [M, d] and V as [M, d_v]");
  }
  const std::size_t d = k_norm.shape()[1];
  const Tensor kv = matmul(transpose(k_norm), v);                            // [d, d_v]
  const Tensor k_mass = reshape(sum(k_norm, 0), {d, 1});                     // K^T 1
  const Tensor denom = safe_denominator(matmul(q_norm, k_mass), kNormFloor);  // [M, 1]
  return add(div(matmul(q_norm, kv), denom), q_norm);
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
  return matmul(softmax_lastdim(scale(matmul(q, transpose(k)), inv)), v);
}

Tensor global_attention(const Tensor& h_bar, const GlaLayerParams& p) {
  if (h_bar.rank() != 2 || h_bar.shape()[0] < 1) throw ShapeError("global_attention: expected [M, C] with M >= 1");
  const Tensor q = p.q_global(h_bar);
  const Tensor k = p.k_global(h_bar);
  const Tensor v = p.v_global(h_bar);
  if (p.heads == 1) return linear_attention(l1_normalize_rows(q), l1_normalize_rows(k), v);

  const std::size_t dh = p.branch_width() / p.heads;
  Tensor out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor head = linear_attention(l1_normalize_rows(slice_lastdim(q, h * dh, dh)),
                                         l1_normalize_rows(slice_lastdim(k, h * dh, dh)), slice_lastdim(v, h * dh, dh));
    out = h == 0 ? head : concat_lastdim(out, head);
  }
  return out;
}

Tensor local_attention(const Tensor& h_bar, const Tensor& h_knn_w, const GlaLayerParams& p) {
  if (h_bar.rank() != 2 || h_knn_w.rank() != 3 || h_knn_w.shape()[0] != h_bar.shape()[0] ||
      h_knn_w.shape()[2] != h_bar.shape()[1]) {
    throw ShapeError("local_attention: expected [M, C] and [M, K, C], got " + to_string(h_bar.shape()) + " and " +
                     to_string(h_knn_w.shape()));
  }
  const std::size_t m = h_bar.shape()[0];
  const std::size_t k = h_knn_w.shape()[1];
  const std::size_t dh = p.branch_width() / p.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor q = p.q_local(h_bar);      // [M, d]
  const Tensor keys = p.k_local(h_knn_w);  // [M, K, d]
  const Tensor vals = p.v_local(h_knn_w);  // [M, K, d]

  auto head_out = [&](const Tensor& qh, const Tensor& kh, const Tensor& vh) {
    const Tensor scores = scale(sum(mul(kh, reshape(qh, {m, 1, dh})), -1), inv_sqrt);  // [M, K]
    const Tensor attn = softmax_lastdim(scores);
    return sum(mul(vh, reshape(attn, {m, k, 1})), 1);  // [M, dh]
  };

  if (p.heads == 1) return head_out(q, keys, vals);
  Tensor out;
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Tensor head = head_out(slice_lastdim(q, h * dh, dh), slice_lastdim(keys, h * dh, dh),
                                 slice_lastdim(vals, h * dh, dh));
    out = h == 0 ? head : concat_lastdim(out, head);
  }
  return out;
}

Tensor gla(const Tensor& h_bar, const IndexMatrix& knn, const GlaLayerParams& p) {
  if (static_cast<std::size_t>(knn.rows()) != h_bar.shape()[0]) {
    throw ShapeError("gla: neighbor table has " + std::to_string(knn.rows()) + " rows for " +
                     std::to_string(h_bar.shape()[0]) + " points");
  }
  const Tensor w = soft_mask(p.mask, static_cast<std::size_t>(knn.cols()));
  const Tensor h_knn_w = weighted_knn_features(gather_rows(h_bar, knn), w);
  return p.fuse(concat_lastdim(global_attention(h_bar, p), local_attention(h_bar, h_knn_w, p)));
}

Tensor feed_forward(const Tensor& x, const GlaLayerParams& p) { return p.ffn_out(gelu(p.ffn_in(x))); }

Tensor la2_layer(const Tensor& h_prev, const IndexMatrix& knn, const GlaLayerParams& p) {
  const Tensor mid = add(gla(p.norm_attn(h_prev), knn, p), h_prev);
  return add(feed_forward(p.norm_ffn(mid), p), mid);
}

}  // namespace la2
