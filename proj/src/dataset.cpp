#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "la2/data.hpp"
#include "la2/io.hpp"

namespace la2 {

void Dataset::validate() const {
  if (inputs.rank() != 3 || outputs.rank() != 3) throw ShapeError("Dataset: inputs/outputs must be [N, M, C]");
  if (inputs.shape()[0] < 1 || inputs.shape()[0] != outputs.shape()[0]) {
    throw ShapeError("Dataset: inputs and outputs must have the same N >= 1");
  }
  if (inputs.shape()[1] != geometry.size() || outputs.shape()[1] != geometry.size()) {
    throw ShapeError("Dataset: fields are not row-aligned with the geometry");
  }
  const std::size_t n = samples();
  for (auto idx : {&manifest.train_indices, &manifest.test_indices}) {
    for (std::size_t i : *idx) {
      if (i >= n) throw std::invalid_argument("Dataset: split index out of range");
    }
  }
  if (manifest.input_stats.mean.size() != in_channels() || manifest.output_stats.mean.size() != out_channels()) {
    throw std::invalid_argument("Dataset: normalization stats do not match channel counts");
  }
}

std::span<const std::size_t> split_indices(const Dataset& ds, Split split) {
  return split == Split::train ? ds.manifest.train_indices : ds.manifest.test_indices;
}

ChannelStats compute_stats(const Tensor& fields, std::span<const std::size_t> samples) {
  const std::size_t m = fields.shape()[1];
  const std::size_t c = fields.shape()[2];
  const auto v = fields.data();
  ChannelStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  if (samples.empty()) {
    std::fill(st.stddev.begin(), st.stddev.end(), 1.0);
    return st;
  }
  const double count = static_cast<double>(samples.size() * m);
  for (std::size_t s : samples)
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) st.mean[ch] += v[(s * m + p) * c + ch];
  for (double& x : st.mean) x /= count;
  for (std::size_t s : samples)
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = v[(s * m + p) * c + ch] - st.mean[ch];
        st.stddev[ch] += d * d;
      }
  for (double& x : st.stddev) {
    x = std::sqrt(x / count);
    if (!(x > 0)) x = 1.0;
  }
  return st;
}

namespace {

Tensor sample_slice(const Tensor& fields, std::size_t i) {
  const std::size_t m = fields.shape()[1];
  const std::size_t c = fields.shape()[2];
  if (i >= fields.shape()[0]) throw std::out_of_range("dataset: sample index out of range");
  const auto v = fields.data().subspan(i * m * c, m * c);
  return Tensor({m, c}, std::vector<double>(v.begin(), v.end()));
}

Tensor apply_stats(const Tensor& x, const ChannelStats& st) {
  std::vector<double> v(x.data().begin(), x.data().end());
  const std::size_t c = st.mean.size();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - st.mean[i % c]) / st.stddev[i % c];
  return Tensor(x.shape(), std::move(v));
}

nlohmann::json stats_json(const ChannelStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

ChannelStats stats_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

}  // namespace

Tensor normalized_input(const Dataset& ds, std::size_t i) {
  return apply_stats(sample_slice(ds.inputs, i), ds.manifest.input_stats);
}

Tensor target(const Dataset& ds, std::size_t i) { return sample_slice(ds.outputs, i); }

Tensor normalized_target(const Dataset& ds, std::size_t i) {
  return apply_stats(sample_slice(ds.outputs, i), ds.manifest.output_stats);
}

Tensor denormalize_output(const Dataset& ds, const Tensor& pred) {
  const auto& st = ds.manifest.output_stats;
  const std::size_t c = st.mean.size();
  return add(mul(pred, Tensor({c}, st.stddev)), Tensor({c}, st.mean));
}

void assign_split(Manifest& manifest, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed ^ 0x5bd1e995u);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_train = std::max<std::size_t>(1, n * 4 / 5);
  if (n >= 2 && n_train == n) n_train = n - 1;
  manifest.seed = seed;
  manifest.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  manifest.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
}

// ---------------------------------------------------------------------------

namespace {

double wrapped_angle_gap(double a, double b) {
  const double two_pi = 2.0 * std::numbers::pi;
  double d = std::fmod(std::abs(a - b), two_pi);
  return d > std::numbers::pi ? two_pi - d : d;
}

}  // namespace

bool NotchedAnnulus::contains(double x, double y) const {
  const double r = std::hypot(x - cx, y - cy);
  if (r < r_inner || r > r_outer) return false;
  return wrapped_angle_gap(std::atan2(y - cy, x - cx), notch_angle) > notch_half_width;
}

double NotchedAnnulus::boundary_distance(double x, double y) const {
  const double r = std::hypot(x - cx, y - cy);
  const double gap = wrapped_angle_gap(std::atan2(y - cy, x - cx), notch_angle) - notch_half_width;
  const double notch = r * std::sin(std::min(gap, std::numbers::pi / 2));
  return std::min({r - r_inner, r_outer - r, notch});
}

double NotchedAnnulus::target(double x, double y) const {
  const double theta = std::atan2(y - cy, x - cx);
  return 10.0 * boundary_distance(x, y) * (1.0 + 0.5 * std::cos(2.0 * (theta - notch_angle)));
}

NotchedAnnulus annulus_for_seed(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5u);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  NotchedAnnulus shape;
  shape.notch_angle = angle(rng);
  return shape;
}

Dataset generate_pointcloud_task(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_pointcloud_task: n must be >= 1");
  if (m < 16) throw std::invalid_argument("generate_pointcloud_task: m must be >= 16");
  const NotchedAnnulus shape = annulus_for_seed(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> coords;
  coords.reserve(2 * m);
  while (coords.size() < 2 * m) {
    const double x = unit(rng);
    const double y = unit(rng);
    if (shape.contains(x, y)) {
      coords.push_back(x);
      coords.push_back(y);
    }
  }
  std::vector<double> inputs;
  std::vector<double> outputs;
  inputs.reserve(n * m * 2);
  outputs.reserve(n * m);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t p = 0; p < m; ++p) {
      inputs.push_back(coords[2 * p]);
      inputs.push_back(coords[2 * p + 1]);
      outputs.push_back(shape.target(coords[2 * p], coords[2 * p + 1]));
    }
  }
  Dataset ds{PointSet(m, 2, coords), Tensor({n, m, 2}, std::move(inputs)), Tensor({n, m, 1}, std::move(outputs)), {}};
  ds.manifest.name = "pointcloud";
  ds.manifest.generator = {
      {"task", "pointcloud"},
      {"n", n},
      {"points", m},
      {"center", {shape.cx, shape.cy}},
      {"r_inner", shape.r_inner},
      {"r_outer", shape.r_outer},
      {"notch_angle", shape.notch_angle},
      {"notch_half_width", shape.notch_half_width},
      {"target",
       "u = 10 * d * (1 + 0.5 cos(2 (theta - notch_angle))), d = min(r - r_inner, r_outer - r, "
       "r sin(min(angle_gap - notch_half_width, pi/2)))"}};
  assign_split(ds.manifest, n, seed);
  ds.manifest.input_stats = compute_stats(ds.inputs, ds.manifest.train_indices);
  ds.manifest.output_stats = compute_stats(ds.outputs, ds.manifest.train_indices);
  return ds;
}

// ---------------------------------------------------------------------------

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  write_tensor_file(ds.geometry.coords(), dir / "geometry.la2t");
  write_tensor_file(ds.inputs, dir / "inputs.la2t");
  write_tensor_file(ds.outputs, dir / "outputs.la2t");
  const nlohmann::json manifest = {
      {"format_version", kTensorFileVersion},
      {"name", ds.manifest.name},
      {"seed", ds.manifest.seed},
      {"samples", ds.samples()},
      {"points", ds.points()},
      {"in_channels", ds.in_channels()},
      {"coord_channels", ds.geometry.dims()},
      {"out_channels", ds.out_channels()},
      {"train_indices", ds.manifest.train_indices},
      {"test_indices", ds.manifest.test_indices},
      {"normalization", {{"inputs", stats_json(ds.manifest.input_stats)}, {"outputs", stats_json(ds.manifest.output_stats)}}},
      {"generator", ds.manifest.generator}};
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("missing manifest.json in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  try {
    Dataset ds{PointSet(read_tensor_file(dir / "geometry.la2t")), read_tensor_file(dir / "inputs.la2t"),
               read_tensor_file(dir / "outputs.la2t"), {}};
    ds.manifest.name = j.at("name").get<std::string>();
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    ds.manifest.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
    ds.manifest.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
    ds.manifest.input_stats = stats_from_json(j.at("normalization").at("inputs"));
    ds.manifest.output_stats = stats_from_json(j.at("normalization").at("outputs"));
    ds.manifest.generator = j.value("generator", nlohmann::json::object());
    if (j.at("samples").get<std::size_t>() != ds.samples() || j.at("points").get<std::size_t>() != ds.points()) {
      throw FormatError("manifest.json: sizes disagree with tensor files");
    }
    ds.validate();
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  } catch (const ShapeError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

}  // namespace la2
