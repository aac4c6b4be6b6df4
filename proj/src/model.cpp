#include "la2/model.hpp"

#include <fstream>
#include <map>

#include "json.hpp"
#include "la2/io.hpp"
#include "la2/json_config.hpp"

namespace la2 {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
  if (hidden == 0 || hidden % 2 != 0) throw std::invalid_argument("ModelConfig: hidden width must be even, got " + std::to_string(hidden));
  if (heads == 0 || branch_width() % heads != 0) {
    throw std::invalid_argument("ModelConfig: branch width " + std::to_string(branch_width()) +
                                " not divisible by heads=" + std::to_string(heads));
  }
  if (patch < 1) throw std::invalid_argument("ModelConfig: patch size K must be >= 1");
  if (!(alpha > 0)) throw std::invalid_argument("ModelConfig: alpha must be positive");
  if (in_channels + coord_channels == 0 || out_channels == 0) throw std::invalid_argument("ModelConfig: empty channels");
  if (coord_channels < 1 || coord_channels > 3) throw std::invalid_argument("ModelConfig: coord_channels must be 1..3");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},       {"hidden", c.hidden},
                     {"patch", c.patch},         {"alpha", c.alpha},
                     {"ffn_width", c.ffn_width}, {"heads", c.heads},
                     {"in_channels", c.in_channels}, {"coord_channels", c.coord_channels},
                     {"out_channels", c.out_channels}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "layers") value.get_to(c.layers);
    else if (key == "hidden") value.get_to(c.hidden);
    else if (key == "patch") value.get_to(c.patch);
    else if (key == "alpha") value.get_to(c.alpha);
    else if (key == "ffn_width") value.get_to(c.ffn_width);
    else if (key == "heads") value.get_to(c.heads);
    else if (key == "in_channels") value.get_to(c.in_channels);
    else if (key == "coord_channels") value.get_to(c.coord_channels);
    else if (key == "out_channels") value.get_to(c.out_channels);
    else if (key == "seed") value.get_to(c.seed);
    else throw std::invalid_argument("ModelConfig: unknown key '" + key + "'");
  }
}

NamedTensors OperatorModel::parameters() const {
  NamedTensors out;
  encoder_in.collect("encoder.0", out);
  encoder_out.collect("encoder.1", out);
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect("layers." + std::to_string(l), out);
  projection.collect("projection", out);
  return out;
}

std::size_t OperatorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

OperatorModel init_model(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  OperatorModel m;
  m.config = config;
  const std::size_t c = config.hidden;
  m.encoder_in = Linear::init(config.in_channels + config.coord_channels, c, true, rng);
  m.encoder_out = Linear::init(c, c, true, rng);
  m.layers.reserve(config.layers);
  for (std::size_t l = 0; l < config.layers; ++l) {
    m.layers.push_back(GlaLayerParams::init(c, config.resolved_ffn_width(), config.heads, config.alpha, rng));
  }
  m.projection = Linear::init(c, config.out_channels, true, rng);
  return m;
}

Tensor encode(const Tensor& f_in, const PointSet& points, const OperatorModel& model) {
  if (f_in.rank() != 2 || f_in.shape()[0] != points.size()) {
    throw ShapeError("encode: input " + to_string(f_in.shape()) + " does not align with " +
                     std::to_string(points.size()) + " points");
  }
  if (f_in.shape()[1] != model.config.in_channels || points.dims() != model.config.coord_channels) {
    throw ShapeError("encode: channel counts differ from the model config");
  }
  const Tensor x = concat_lastdim(f_in, points.coords());
  return model.encoder_out(gelu(model.encoder_in(x)));
}

Tensor forward(const OperatorModel& model, const Tensor& f_in, const PointSet& points, const KnnIndex& knn,
               const LayerHook& hook) {
  if (knn.points() != points.size()) throw ShapeError("forward: neighbor table does not match the point set");
  if (knn.k() != model.config.patch) {
    throw ShapeError("forward: neighbor table has K=" + std::to_string(knn.k()) + ", model expects " +
                     std::to_string(model.config.patch));
  }
  Tensor h = encode(f_in, points, model);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = la2_layer(h, knn.idx, model.layers[l]);
    if (hook) hook(l, h);
  }
  return model.projection(h);
}

std::vector<double> mask_trajectory(const OperatorModel& model) {
  std::vector<double> out;
  out.reserve(model.layers.size());
  for (const auto& layer : model.layers) out.push_back(layer.mask.effective_fraction());
  return out;
}

void save_checkpoint(const OperatorModel& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = model.config;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  const NamedTensors params = model.parameters();
  for (const auto& [name, t] : params) {
    table.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * sizeof(double);
  }
  header["parameters"] = table;
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("LA2C", 4);
  io::write_u32(os, kCheckpointVersion);
  io::write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : params) io::write_f64(os, t.data());
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

OperatorModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(is, "LA2C");
  const std::uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion) throw FormatError("LA2C: unsupported version " + std::to_string(version));
  const std::uint64_t len = io::read_u64(is);
  if (len > (std::uint64_t{1} << 30)) throw FormatError("LA2C: header too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("LA2C: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("LA2C: bad header: ") + e.what());
  }
  OperatorModel model = init_model(header.at("config").get<ModelConfig>());
  const NamedTensors params = model.parameters();
  const auto& table = header.at("parameters");
  if (table.size() != params.size()) throw FormatError("LA2C: parameter count differs from the config");
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].second;
    const auto& entry = table[i];
    if (entry.at("name").get<std::string>() != params[i].first || entry.at("shape").get<Shape>() != t.shape() ||
        entry.at("offset").get<std::uint64_t>() != offset) {
      throw FormatError("LA2C: parameter table mismatch at " + params[i].first);
    }
    io::read_f64(is, t.mutable_data());
    offset += t.numel() * sizeof(double);
  }
  return model;
}

}  // namespace la2
