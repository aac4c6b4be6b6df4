#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "la2/data.hpp"
#include "la2/model.hpp"
#include "la2/training.hpp"

namespace la2 {

/// Plain CSV table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(const std::filesystem::path& path) const;
};

/// Writes `table` to `csv_path` and the resolved config next to it as
/// <stem>.json.
void write_csv_with_sidecar(const CsvTable& table, const std::filesystem::path& csv_path, const nlohmann::json& config);

using ProgressFn = std::function<void(const std::string&)>;

struct WindowAblationRow {
  std::size_t k = 0;
  double test_rel_l2 = 0;
  double epoch_seconds = 0;  // median over epochs
};

/// Trains one model per patch size under identical seeds and budget.
std::vector<WindowAblationRow> ablate_window(const Dataset& ds, const ModelConfig& base, const TrainConfig& train_cfg,
                                             std::span<const std::size_t> patch_sizes, const ProgressFn& progress = {});
CsvTable to_table(std::span<const WindowAblationRow> rows);

struct ScaleRow {
  std::size_t hidden = 0;
  std::size_t layers = 0;
  std::size_t parameters = 0;
  double test_rel_l2 = 0;
  double epoch_seconds = 0;
};

/// Each width at the base depth, then each depth at the base width.
std::vector<ScaleRow> scale_study(const Dataset& ds, const ModelConfig& base, const TrainConfig& train_cfg,
                                  std::span<const std::size_t> widths, std::span<const std::size_t> depths,
                                  const ProgressFn& progress = {});
CsvTable to_table(std::span<const ScaleRow> rows);

struct BenchConfig {
  std::vector<std::size_t> global_points{1024, 2048, 4096};
  std::vector<std::size_t> full_points{512, 1024, 2048};
  std::size_t local_points = 1024;
  std::vector<std::size_t> patches{16, 32};
  std::size_t hidden = 128;
  std::size_t repeats = 5;
  std::size_t memory_cap_bytes = std::size_t{1} << 30;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string kind;  // "global", "local" or "full"
  std::size_t points = 0;
  std::size_t patch = 0;
  std::size_t hidden = 0;
  double median_seconds = 0;
};

/// Forward-only timings, median of `repeats` runs after one warm-up.
/// Throws std::invalid_argument when a size would exceed the memory cap.
std::vector<BenchRow> run_bench(const BenchConfig& cfg, const ProgressFn& progress = {});
CsvTable to_table(std::span<const BenchRow> rows);

/// Least-squares slope of log(y) against log(x).
double power_law_exponent(std::span<const double> x, std::span<const double> y);

void to_json(nlohmann::json& j, const BenchConfig& c);

}  // namespace la2
