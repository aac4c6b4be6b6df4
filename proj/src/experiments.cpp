#include "la2/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "la2/attention.hpp"

namespace la2 {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double median_epoch_seconds(const TrainReport& r) {
  std::vector<double> s;
  for (const auto& e : r.epochs) s.push_back(e.seconds);
  return median(std::move(s));
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

template <class F>
double time_median(std::size_t repeats, F&& f) {
  f();  // warm-up
  std::vector<double> t;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return median(std::move(t));
}

PointSet random_points(std::size_t m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(2 * m);
  for (double& x : v) x = unit(rng);
  return PointSet(m, 2, std::move(v));
}

}  // namespace

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  auto line = [&os](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void write_csv_with_sidecar(const CsvTable& table, const std::filesystem::path& csv_path, const nlohmann::json& config) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  table.write(csv_path);
  std::filesystem::path sidecar = csv_path;
  sidecar.replace_extension(".json");
  std::ofstream os(sidecar, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + sidecar.string());
  os << config.dump(2) << '\n';
}

std::vector<WindowAblationRow> ablate_window(const Dataset& ds, const ModelConfig& base, const TrainConfig& train_cfg,
                                             std::span<const std::size_t> patch_sizes, const ProgressFn& progress) {
  for (std::size_t k : patch_sizes) {
    if (k < 1 || k > ds.points()) {
      throw std::invalid_argument("ablate_window: K=" + std::to_string(k) + " outside [1, " +
                                  std::to_string(ds.points()) + "]");
    }
  }
  std::vector<WindowAblationRow> rows;
  for (std::size_t k : patch_sizes) {
    ModelConfig cfg = base;
    cfg.patch = k;
    OperatorModel model = init_model(cfg);
    TrainConfig tc = train_cfg;
    tc.checkpoint.clear();
    const TrainReport report = train(model, ds, tc);
    rows.push_back({k, report.epochs.back().test_rel_l2, median_epoch_seconds(report)});
    if (progress) {
      progress("K=" + std::to_string(k) + " test_rel_l2=" + fmt(rows.back().test_rel_l2) +
               " epoch_seconds=" + fmt(rows.back().epoch_seconds));
    }
  }
  return rows;
}

CsvTable to_table(std::span<const WindowAblationRow> rows) {
  CsvTable t{{"K", "test_rel_l2", "epoch_seconds"}, {}};
  for (const auto& r : rows) t.rows.push_back({std::to_string(r.k), fmt(r.test_rel_l2), fmt(r.epoch_seconds)});
  return t;
}

std::vector<ScaleRow> scale_study(const Dataset& ds, const ModelConfig& base, const TrainConfig& train_cfg,
                                  std::span<const std::size_t> widths, std::span<const std::size_t> depths,
                                  const ProgressFn& progress) {
  std::vector<ModelConfig> configs;
  for (std::size_t w : widths) {
    ModelConfig c = base;
    c.hidden = w;
    configs.push_back(c);
  }
  for (std::size_t d : depths) {
    ModelConfig c = base;
    c.layers = d;
    configs.push_back(c);
  }
  for (const auto& c : configs) c.validate();

  std::vector<ScaleRow> rows;
  for (const auto& c : configs) {
    OperatorModel model = init_model(c);
    TrainConfig tc = train_cfg;
    tc.checkpoint.clear();
    const TrainReport report = train(model, ds, tc);
    rows.push_back({c.hidden, c.layers, model.parameter_count(), report.epochs.back().test_rel_l2,
                    median_epoch_seconds(report)});
    if (progress) {
      progress("C=" + std::to_string(c.hidden) + " L=" + std::to_string(c.layers) +
               " test_rel_l2=" + fmt(rows.back().test_rel_l2));
    }
  }
  return rows;
}

CsvTable to_table(std::span<const ScaleRow> rows) {
  CsvTable t{{"hidden", "layers", "parameters", "test_rel_l2", "epoch_seconds"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.hidden), std::to_string(r.layers), std::to_string(r.parameters),
                      fmt(r.test_rel_l2), fmt(r.epoch_seconds)});
  }
  return t;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg, const ProgressFn& progress) {
  if (cfg.hidden == 0 || cfg.hidden % 2 != 0) throw std::invalid_argument("bench: hidden width must be even");
  if (cfg.repeats < 1) throw std::invalid_argument("bench: repeats must be >= 1");
  const std::size_t c = cfg.hidden;
  const std::size_t d = c / 2;
  // Rough peak working-set estimates in bytes.
  for (std::size_t m : cfg.full_points) {
    if (4 * m * m * sizeof(double) > cfg.memory_cap_bytes) {
      throw std::invalid_argument("bench: full attention at M=" + std::to_string(m) + " exceeds the memory cap");
    }
  }
  for (std::size_t k : cfg.patches) {
    if (8 * cfg.local_points * k * c * sizeof(double) > cfg.memory_cap_bytes) {
      throw std::invalid_argument("bench: local attention at K=" + std::to_string(k) + " exceeds the memory cap");
    }
    if (k > cfg.local_points) throw std::invalid_argument("bench: K exceeds local_points");
  }

  NoGradGuard no_grad;
  std::mt19937_64 rng(cfg.seed);
  const GlaLayerParams layer = GlaLayerParams::init(c, 2 * c, 1, 10.0, rng);
  std::vector<BenchRow> rows;
  auto report = [&](const BenchRow& r) {
    rows.push_back(r);
    if (progress) progress(r.kind + " M=" + std::to_string(r.points) + " K=" + std::to_string(r.patch) + " " + fmt(r.median_seconds) + "s");
  };

  for (std::size_t m : cfg.global_points) {
    const Tensor h = random_tensor({m, c}, rng);
    report({"global", m, 0, c, time_median(cfg.repeats, [&] { return global_attention(h, layer); })});
  }
  {
    const std::size_t m = cfg.local_points;
    const Tensor h = random_tensor({m, c}, rng);
    const PointSet pts = random_points(m, rng);
    for (std::size_t k : cfg.patches) {
      const KnnIndex knn = knn_indices_accelerated(pts, k);
      report({"local", m, k, c, time_median(cfg.repeats, [&] {
                const Tensor w = soft_mask(layer.mask, k);
                return local_attention(h, weighted_knn_features(gather_rows(h, knn.idx), w), layer);
              })});
    }
  }
  for (std::size_t m : cfg.full_points) {
    const Tensor q = random_tensor({m, d}, rng);
    const Tensor k = random_tensor({m, d}, rng);
    const Tensor v = random_tensor({m, d}, rng);
    report({"full", m, 0, c, time_median(cfg.repeats, [&] { return full_attention(q, k, v); })});
  }
  return rows;
}

CsvTable to_table(std::span<const BenchRow> rows) {
  CsvTable t{{"kind", "M", "K", "C", "median_seconds"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.kind, std::to_string(r.points), std::to_string(r.patch), std::to_string(r.hidden),
                      fmt(r.median_seconds)});
  }
  return t;
}

double power_law_exponent(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("power_law_exponent: need >= 2 paired values");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

void to_json(nlohmann::json& j, const BenchConfig& c) {
  j = nlohmann::json{{"global_points", c.global_points}, {"full_points", c.full_points},
                     {"local_points", c.local_points},   {"patches", c.patches},
                     {"hidden", c.hidden},               {"repeats", c.repeats},
                     {"memory_cap_bytes", c.memory_cap_bytes}, {"seed", c.seed}};
}

}  // namespace la2
