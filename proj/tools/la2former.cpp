// Command-line front end: dataset generation, training, evaluation and the
// ablation / scaling / complexity studies.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "la2/data.hpp"
#include "la2/experiments.hpp"
#include "la2/io.hpp"
#include "la2/json_config.hpp"
#include "la2/model.hpp"
#include "la2/training.hpp"

namespace fs = std::filesystem;
using namespace la2;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::optional<std::size_t> layers, hidden, patch, heads, ffn_width, epochs, batch_size;
  std::optional<double> alpha, lr, min_lr, weight_decay, clip_norm;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
};

void add_override_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--layers", o.layers, "Number of attention blocks L (default 8)");
  cmd->add_option("--hidden", o.hidden, "Hidden width C, must be even (default 128)");
  cmd->add_option("--patch,-k", o.patch, "KNN patch size K (default 8)");
  cmd->add_option("--heads", o.heads, "Attention heads per branch (default 1)");
  cmd->add_option("--ffn-width", o.ffn_width, "Feed-forward width (default 2C)");
  cmd->add_option("--alpha", o.alpha, "Soft-mask sharpness (default 10)");
  cmd->add_option("--epochs", o.epochs, "Training epochs (default 50)");
  cmd->add_option("--batch-size", o.batch_size, "Samples per optimizer step (default 4)");
  cmd->add_option("--lr", o.lr, "Peak learning rate (default 1e-3)");
  cmd->add_option("--min-lr", o.min_lr, "Cosine floor learning rate (default 1e-5)");
  cmd->add_option("--weight-decay", o.weight_decay, "Decoupled weight decay (default 1e-4)");
  cmd->add_option("--clip-norm", o.clip_norm, "Global gradient-norm clip (default 1.0)");
  cmd->add_option("--seed", o.seed, "Seed for initialization and shuffling (default 0)");
  cmd->add_option("--loss", o.loss, "Training loss: squared_ratio (default) or root_ratio");
}

RunConfig resolve_config(const std::string& config_path, const Overrides& o) {
  RunConfig rc;
  if (!config_path.empty()) {
    try {
      rc = load_run_config(config_path);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (o.layers) rc.model.layers = *o.layers;
  if (o.hidden) rc.model.hidden = *o.hidden;
  if (o.patch) rc.model.patch = *o.patch;
  if (o.heads) rc.model.heads = *o.heads;
  if (o.ffn_width) rc.model.ffn_width = *o.ffn_width;
  if (o.alpha) rc.model.alpha = *o.alpha;
  if (o.epochs) rc.train.epochs = *o.epochs;
  if (o.batch_size) rc.train.batch_size = *o.batch_size;
  if (o.lr) rc.train.learning_rate = *o.lr;
  if (o.min_lr) rc.train.min_learning_rate = *o.min_lr;
  if (o.weight_decay) rc.train.weight_decay = *o.weight_decay;
  if (o.clip_norm) rc.train.clip_norm = *o.clip_norm;
  if (o.seed) {
    rc.model.seed = *o.seed;
    rc.train.seed = *o.seed;
  }
  if (o.loss) {
    try {
      from_json(nlohmann::json{{"loss", *o.loss}}, rc.train);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return rc;
}

Dataset load_data(const std::string& path) {
  if (path.empty()) throw UsageError("no dataset given (use --data or the config's \"data\" key)");
  if (!fs::is_directory(path)) throw UsageError("dataset not found: " + path);
  return read_dataset(path);
}

// Channel counts come from the dataset unless the config pinned them.
void bind_channels(RunConfig& rc, const Dataset& ds) {
  if (rc.channels_pinned) {
    if (rc.model.in_channels != ds.in_channels() || rc.model.coord_channels != ds.geometry.dims() ||
        rc.model.out_channels != ds.out_channels()) {
      throw UsageError("config channels do not match the dataset");
    }
    return;
  }
  rc.model.in_channels = ds.in_channels();
  rc.model.coord_channels = ds.geometry.dims();
  rc.model.out_channels = ds.out_channels();
}

void validate_or_usage(const RunConfig& rc) {
  try {
    rc.model.validate();
    rc.train.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string out_dir(const std::string& flag, const RunConfig& rc, const std::string& fallback) {
  const std::string dir = !flag.empty() ? flag : (!rc.out.empty() ? rc.out : fallback);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("expected a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  return out;
}

void print_progress(const std::string& line) { std::cerr << line << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LA2Former: locality-aware attention neural operator"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset directory");
  std::string task;
  std::size_t n = 200, grid = 16, points = 512;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--task", task, "darcy or pointcloud")->required()->check(CLI::IsMember({"darcy", "pointcloud"}));
  gen->add_option("--n", n, "Number of samples (default 200)");
  gen->add_option("--grid", grid, "Darcy grid side g >= 8 (default 16)");
  gen->add_option("--points", points, "Point-cloud size m >= 16 (default 512)");
  gen->add_option("--seed", gen_seed, "Generator seed (default 0)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write report.csv plus checkpoints");
  std::string tr_data, tr_config, tr_out;
  Overrides tr_over;
  tr->add_option("--data", tr_data, "Dataset directory");
  tr->add_option("--config", tr_config, "JSON run config; flags override it");
  tr->add_option("--out", tr_out, "Output directory (default: config \"out\" or runs/train)");
  add_override_flags(tr, tr_over);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  std::string ev_data, ev_ckpt, ev_split = "test", ev_out;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--split", ev_split, "train or test (default test)")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", ev_out, "Optional per-sample CSV path");

  // ablate-window
  auto* ab = app.add_subcommand("ablate-window", "Train one model per patch size K");
  std::string ab_data, ab_config, ab_out, ab_ks = "4,8,16,32";
  Overrides ab_over;
  ab->add_option("--data", ab_data, "Dataset directory");
  ab->add_option("--config", ab_config, "JSON run config; flags override it");
  ab->add_option("--ks", ab_ks, "Comma-separated patch sizes (default 4,8,16,32)");
  ab->add_option("--out", ab_out, "Output directory (default runs/ablate-window)");
  add_override_flags(ab, ab_over);

  // scale-study
  auto* sc = app.add_subcommand("scale-study", "Train across hidden widths and/or depths");
  std::string sc_data, sc_config, sc_out, sc_widths, sc_depths;
  Overrides sc_over;
  sc->add_option("--data", sc_data, "Dataset directory");
  sc->add_option("--config", sc_config, "JSON run config; flags override it");
  sc->add_option("--widths", sc_widths, "Comma-separated hidden widths, run at the base depth");
  sc->add_option("--depths", sc_depths, "Comma-separated layer counts, run at the base width");
  sc->add_option("--out", sc_out, "Output directory (default runs/scale-study)");
  add_override_flags(sc, sc_over);

  // bench
  auto* be = app.add_subcommand("bench", "Time global, local and full-pairwise attention");
  BenchConfig bench;
  std::string be_global = "1024,2048,4096", be_full = "512,1024,2048", be_patches = "16,32", be_out;
  std::size_t memory_cap_mb = 1024;
  be->add_option("--global-points", be_global, "M values for global attention (default 1024,2048,4096)");
  be->add_option("--full-points", be_full, "M values for the full-pairwise reference (default 512,1024,2048)");
  be->add_option("--local-points", bench.local_points, "M for local attention (default 1024)");
  be->add_option("--patches", be_patches, "K values for local attention (default 16,32)");
  be->add_option("--hidden", bench.hidden, "Hidden width C (default 128)");
  be->add_option("--repeats", bench.repeats, "Timed repeats per configuration, median reported (default 5)");
  be->add_option("--memory-cap-mb", memory_cap_mb, "Refuse sizes whose working set exceeds this (default 1024)");
  be->add_option("--seed", bench.seed, "Seed for random inputs (default 0)");
  be->add_option("--out", be_out, "Output directory (default runs/bench)");

  // dump-mask
  auto* dm = app.add_subcommand("dump-mask", "Print sigmoid(s) of every layer of a checkpoint");
  std::string dm_ckpt, dm_out;
  dm->add_option("--checkpoint", dm_ckpt, "Checkpoint file")->required();
  dm->add_option("--out", dm_out, "Optional CSV path (layer,sigma_s)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*gen) {
      const Dataset ds = task == "darcy" ? generate_darcy(n, grid, gen_seed) : generate_pointcloud_task(n, points, gen_seed);
      write_dataset(ds, gen_out);
      std::cout << "wrote " << ds.samples() << " samples x " << ds.points() << " points to " << gen_out << '\n';
    } else if (*tr) {
      RunConfig rc = resolve_config(tr_config, tr_over);
      if (!tr_data.empty()) rc.data = tr_data;
      const Dataset ds = load_data(rc.data);
      bind_channels(rc, ds);
      validate_or_usage(rc);
      const fs::path dir = out_dir(tr_out, rc, "runs/train");
      rc.out = dir.string();
      rc.train.checkpoint = dir / "best.la2c";
      OperatorModel model = init_model(rc.model);
      const TrainReport report = train(model, ds, rc.train, [](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << " train_loss=" << e.train_loss << " test_rel_l2=" << e.test_rel_l2 << '\n';
      });
      save_checkpoint(model, dir / "final.la2c");
      report.write_csv(dir / "report.csv");
      std::ofstream(dir / "report.json") << nlohmann::json(rc).dump(2) << '\n';
      std::cout << "final test relative L2: " << report.epochs.back().test_rel_l2 << '\n';
    } else if (*ev) {
      const Dataset ds = load_data(ev_data);
      const OperatorModel model = load_checkpoint(ev_ckpt);
      try {
        check_compatible(model, ds);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const EvalMetrics m = evaluate(model, ds, ev_split == "train" ? Split::train : Split::test);
      if (!ev_out.empty()) {
        CsvTable t{{"sample", "rel_l2"}, {}};
        const auto idx = split_indices(ds, ev_split == "train" ? Split::train : Split::test);
        for (std::size_t i = 0; i < idx.size(); ++i) {
          std::ostringstream v;
          v.precision(17);
          v << m.per_sample[i];
          t.rows.push_back({std::to_string(idx[i]), v.str()});
        }
        write_csv_with_sidecar(t, ev_out, {{"data", ev_data}, {"checkpoint", ev_ckpt}, {"split", ev_split}});
      }
      std::cout << "mean relative L2 (" << ev_split << "): " << m.mean << '\n';
    } else if (*ab) {
      RunConfig rc = resolve_config(ab_config, ab_over);
      if (!ab_data.empty()) rc.data = ab_data;
      const Dataset ds = load_data(rc.data);
      bind_channels(rc, ds);
      validate_or_usage(rc);
      const auto ks = parse_sizes(ab_ks);
      for (std::size_t k : ks) {
        if (k > ds.points()) throw UsageError("K=" + std::to_string(k) + " exceeds M=" + std::to_string(ds.points()));
      }
      const fs::path dir = out_dir(ab_out, rc, "runs/ablate-window");
      const auto rows = ablate_window(ds, rc.model, rc.train, ks, print_progress);
      nlohmann::json side = rc;
      side["ks"] = ks;
      write_csv_with_sidecar(to_table(rows), dir / "ablate_window.csv", side);
      std::cout << "wrote " << (dir / "ablate_window.csv").string() << '\n';
    } else if (*sc) {
      RunConfig rc = resolve_config(sc_config, sc_over);
      if (!sc_data.empty()) rc.data = sc_data;
      const Dataset ds = load_data(rc.data);
      bind_channels(rc, ds);
      validate_or_usage(rc);
      const auto widths = parse_sizes(sc_widths);
      const auto depths = parse_sizes(sc_depths);
      if (widths.empty() && depths.empty()) throw UsageError("give --widths and/or --depths");
      for (std::size_t w : widths) {
        if (w % 2 != 0 || (w / 2) % rc.model.heads != 0) throw UsageError("invalid hidden width " + std::to_string(w));
      }
      const fs::path dir = out_dir(sc_out, rc, "runs/scale-study");
      const auto rows = scale_study(ds, rc.model, rc.train, widths, depths, print_progress);
      nlohmann::json side = rc;
      side["widths"] = widths;
      side["depths"] = depths;
      write_csv_with_sidecar(to_table(rows), dir / "scale_study.csv", side);
      std::cout << "wrote " << (dir / "scale_study.csv").string() << '\n';
    } else if (*be) {
      bench.global_points = parse_sizes(be_global);
      bench.full_points = parse_sizes(be_full);
      bench.patches = parse_sizes(be_patches);
      bench.memory_cap_bytes = memory_cap_mb * (std::size_t{1} << 20);
      std::vector<BenchRow> rows;
      try {
        rows = run_bench(bench, print_progress);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      const fs::path dir = out_dir(be_out, RunConfig{}, "runs/bench");
      write_csv_with_sidecar(to_table(rows), dir / "bench.csv", nlohmann::json(bench));
      std::cout << "wrote " << (dir / "bench.csv").string() << '\n';
    } else if (*dm) {
      const OperatorModel model = load_checkpoint(dm_ckpt);
      const auto traj = mask_trajectory(model);
      CsvTable t{{"layer", "sigma_s"}, {}};
      for (std::size_t l = 0; l < traj.size(); ++l) {
        std::ostringstream v;
        v.precision(17);
        v << traj[l];
        t.rows.push_back({std::to_string(l + 1), v.str()});
        std::cout << "layer " << (l + 1) << ": " << v.str() << '\n';
      }
      if (!dm_out.empty()) write_csv_with_sidecar(t, dm_out, {{"checkpoint", dm_ckpt}});
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return 0;
}
