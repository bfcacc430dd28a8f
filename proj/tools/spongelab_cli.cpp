// spongelab: train sponge-poisoned MLPs, prune them, measure the energy proxy
// and run the full experiment grid.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spongelab/data.hpp"
#include "spongelab/energy.hpp"
#include "spongelab/errors.hpp"
#include "spongelab/harness.hpp"
#include "spongelab/model.hpp"
#include "spongelab/pruning.hpp"
#include "spongelab/sponge.hpp"

namespace fs = std::filesystem;
using namespace spongelab;

namespace {

bool quiet = false;

constexpr int code(ExitCode c) { return static_cast<int>(c); }

void log(const std::string& msg) {
  if (!quiet) std::fprintf(stderr, "spongelab: %s\n", msg.c_str());
}

// --data is either a CSV path or the literal "synth".
struct DataOptions {
  std::string source;
  std::string label_column = "label";
  std::size_t window = 0;
  std::size_t stride = 0;
  bool channel_means = false;
  std::size_t synth_per_class = 100;
  std::size_t synth_classes = 6;
  std::size_t synth_dim = 20;
  double synth_spread = 0.8;
  std::uint64_t synth_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--data", source, "feature/series CSV path, or 'synth' for Gaussian blobs")
        ->required();
    app->add_option("--label-column", label_column, "name of the label column");
    app->add_option("--window", window,
                    "cut a session_id-grouped time series into windows of this many rows");
    app->add_option("--stride", stride, "window stride in rows (default: window length)");
    app->add_flag("--channel-means", channel_means,
                  "summarize each window by per-channel means instead of flattening it");
    app->add_option("--synth-per-class", synth_per_class, "synthetic samples per class");
    app->add_option("--synth-classes", synth_classes, "synthetic class count");
    app->add_option("--synth-dim", synth_dim, "synthetic feature dimension");
    app->add_option("--synth-spread", synth_spread, "synthetic blob standard deviation");
    app->add_option("--synth-seed", synth_seed, "synthetic data seed");
  }

  Dataset load() const {
    if (source == "synth") {
      return synth_blobs(synth_per_class, synth_classes, synth_dim, synth_spread, synth_seed);
    }
    if (window > 0) {
      return window_series_csv(source, {window, stride ? stride : window, !channel_means},
                               label_column);
    }
    return load_feature_csv(source, label_column);
  }
};

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw ValidationError("bad hidden width '" + item + "'");
    dims.push_back(v);
  }
  if (dims.empty()) throw ValidationError("--hidden needs at least one width");
  return dims;
}

std::string summarize(const EnergyReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "density %.4f, energy_ratio %.4f, %llu of %.0f MACs",
                r.mean_density, r.energy_ratio, static_cast<unsigned long long>(r.latency_ops),
                r.worst_case_energy);
  return buf;
}

// ---- train -----------------------------------------------------------------

struct TrainCmd {
  DataOptions data;
  int sponge_pct = 0;
  SpongeConfig sponge;
  TrainConfig train;
  std::string hidden = "128,64";
  std::string mode = "per_sample";
  std::string out;
  std::string history;

  void add_to(CLI::App* app) {
    data.add_to(app);
    app->add_option("--sponge-pct", sponge_pct, "percent of training samples poisoned")
        ->check(CLI::Range(0, 100));
    app->add_option("--lambda", sponge.lambda, "energy term weight");
    app->add_option("--sigma", sponge.sigma, "L0 surrogate smoothing");
    app->add_option("--poison-mode", mode, "per_sample or per_update");
    app->add_option("--seed", train.seed, "split/init/shuffle seed");
    app->add_option("--epochs", train.epochs);
    app->add_option("--lr", train.learning_rate, "Adam learning rate");
    app->add_option("--batch", train.batch_size);
    app->add_option("--test-split", train.test_split, "held-out fraction");
    app->add_option("--hidden", hidden, "comma-separated hidden widths");
    app->add_option("--out", out, "model JSON to write")->required();
    app->add_option("--history", history, "optional per-epoch CSV");
  }

  int run() {
    const Dataset ds = data.load();
    sponge.poison_fraction = sponge_pct / 100.0;
    sponge.mode = parse_poison_mode(mode);
    const MlpConfig arch{0, parse_dims(hidden), 0};
    log("training on " + ds.name + " (" + std::to_string(ds.size()) + " rows, " +
        std::to_string(ds.dim()) + " features, " + std::to_string(ds.num_classes) +
        " classes), sponge " + std::to_string(sponge_pct) + "%");
    const TrainResult r = spongelab::train(ds, arch, train, sponge);
    save_model(r.model, out);
    if (!history.empty()) write_text_file(history, history_csv(r.history));
    const EpochStats& last = r.history.back();
    const EnergyReport e = energy_proxy(r.model, r.data.test.features);
    std::printf("train_acc %.2f test_acc %.2f %s\n", last.train_acc, last.test_acc,
                summarize(e).c_str());
    return code(ExitCode::kOk);
  }
};

// ---- prune -----------------------------------------------------------------

struct PruneCmd {
  std::string model_path, method = "weight", out;
  double rate_pct = 0;
  bool do_compact = false;

  void add_to(CLI::App* app) {
    app->add_option("--model", model_path, "input model JSON")->required();
    app->add_option("--method", method, "weight or neuron");
    app->add_option("--rate", rate_pct, "percent pruned in every layer, in (0, 100)")
        ->required();
    app->add_flag("--compact", do_compact, "physically drop masked neurons (neuron method)");
    app->add_option("--out", out, "output model JSON")->required();
  }

  int run() {
    const MlpModel m = load_model(model_path);
    MlpModel p = prune(m, {parse_prune_method(method), rate_pct / 100.0});
    if (do_compact) p = compact(p);
    save_model(p, out);
    std::size_t zeros = 0, total = 0;
    for (const auto& l : p.layers()) {
      total += l.weight.size();
      for (double w : l.weight.data()) zeros += (w == 0.0);
    }
    std::printf("%zu of %zu weights zero, %zu neurons masked\n", zeros, total, p.masked_count());
    return code(ExitCode::kOk);
  }
};

// ---- eval ------------------------------------------------------------------

struct EvalCmd {
  DataOptions data;
  std::string model_path, report;
  bool holdout = false;
  std::uint64_t seed = 0;
  double test_split = TrainConfig{}.test_split;
  double threshold = 0.0;
  int timing_repeats = 0;

  void add_to(CLI::App* app) {
    app->add_option("--model", model_path, "model JSON")->required();
    data.add_to(app);
    app->add_option("--report", report, "CSV report to write")->required();
    app->add_flag("--holdout", holdout,
                  "evaluate only the held-out split train used (same --seed/--test-split)");
    app->add_option("--seed", seed, "split seed for --holdout");
    app->add_option("--test-split", test_split, "held-out fraction for --holdout");
    app->add_option("--threshold", threshold, "activation magnitude counted as zero");
    app->add_option("--timing-repeats", timing_repeats, "median wall-clock over N forwards");
  }

  int run() {
    const MlpModel m = load_model(model_path);
    Dataset ds = data.load();
    if (holdout) ds = split(ds, test_split, seed).second;
    Tensor x = ds.features;
    if (m.scaler()) x = m.scaler()->apply(x);
    const double acc = accuracy_pct(predict(m, x), ds.labels);
    EnergyReport e = energy_proxy(m, x, threshold);
    if (timing_repeats > 0) e.wall_clock_seconds = wall_clock_latency(m, x, timing_repeats);
    char acc_text[32];
    std::snprintf(acc_text, sizeof acc_text, "%.6g", acc);
    write_text_file(report, "dataset,rows,test_acc," + energy_csv_header() + "\n" + ds.name + "," +
                                std::to_string(ds.size()) + "," + acc_text + "," +
                                energy_csv_row(e) + "\n");
    std::printf("acc %.2f %s\n", acc, summarize(e).c_str());
    return code(ExitCode::kOk);
  }
};

// ---- grid ------------------------------------------------------------------

struct GridCmd {
  DataOptions data;
  std::string spec_path, out_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 0, epochs = 0;
  int timing_repeats = -1;

  void add_to(CLI::App* app) {
    data.add_to(app);
    app->add_option("--spec", spec_path, "grid spec JSON (defaults cover the full grid)");
    app->add_option("--out-dir", out_dir, "directory for records.csv and spec.json")->required();
    app->add_option("--seeds", seeds, "override the spec's seed list")->delimiter(',');
    app->add_option("--jobs", jobs, "override the worker thread count");
    app->add_option("--epochs", epochs, "override training epochs");
    app->add_option("--timing-repeats", timing_repeats, "override wall-clock repeats");
  }

  int run() {
    GridSpec spec = spec_path.empty() ? GridSpec{} : grid_spec_from_json(read_text_file(spec_path));
    if (!seeds.empty()) spec.seeds = seeds;
    if (jobs) spec.jobs = jobs;
    if (epochs) spec.train.epochs = epochs;
    if (timing_repeats >= 0) spec.timing_repeats = timing_repeats;
    spec.validate();
    const Dataset ds = data.load();

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const fs::path dir(out_dir);
    write_text_file(dir / "spec.json", grid_spec_to_json(spec) + "\n");

    GridOptions opts;
    opts.partial_csv = dir / "records.partial.csv";
    opts.progress = [](const std::string& m) { log(m); };
    log("grid: " + std::to_string(spec.cells_per_seed() * spec.seeds.size()) + " records over " +
        std::to_string(spec.seeds.size()) + " seed(s)");
    const auto records = run_grid(spec, ds, opts);
    emit_csv(records, dir / "records.csv");
    fs::remove(dir / "records.partial.csv", ec);
    std::printf("%zu records -> %s\n", records.size(), (dir / "records.csv").c_str());
    return code(ExitCode::kOk);
  }
};

// ---- plot ------------------------------------------------------------------

struct PlotCmd {
  std::string records, metric, group_by = "sponge_pct", x_field, out;

  void add_to(CLI::App* app) {
    app->add_option("--records", records, "grid records CSV")->required();
    app->add_option("--metric", metric, "test_acc, energy_ratio or latency_ops")->required();
    app->add_option("--group-by", group_by, "comma-separated record fields, one series each");
    app->add_option("--x", x_field, "x-axis field (default: prune_pct when grouping by sponge_pct, "
                                    "else sponge_pct)");
    app->add_option("--out", out, "SVG path")->required();
  }

  int run() {
    emit_trend_svg(load_records_csv(records), metric, group_by, out, x_field);
    std::printf("wrote %s\n", out.c_str());
    return code(ExitCode::kOk);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sponge-poisoning energy-latency attack lab with pruning defenses"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  TrainCmd train_cmd;
  PruneCmd prune_cmd;
  EvalCmd eval_cmd;
  GridCmd grid_cmd;
  PlotCmd plot_cmd;
  auto* train_app = app.add_subcommand("train", "train a (possibly sponge-poisoned) model");
  auto* prune_app = app.add_subcommand("prune", "apply weight or neuron pruning");
  auto* eval_app = app.add_subcommand("eval", "accuracy and energy proxy of a model on data");
  auto* grid_app = app.add_subcommand("grid", "run the sponge x pruning experiment grid");
  auto* plot_app = app.add_subcommand("plot", "SVG trend chart from grid records");
  train_cmd.add_to(train_app);
  prune_cmd.add_to(prune_app);
  eval_cmd.add_to(eval_app);
  grid_cmd.add_to(grid_app);
  plot_cmd.add_to(plot_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? code(ExitCode::kOk) : code(ExitCode::kValidation);
  }

  try {
    if (*train_app) return train_cmd.run();
    if (*prune_app) return prune_cmd.run();
    if (*eval_app) return eval_cmd.run();
    if (*grid_app) return grid_cmd.run();
    if (*plot_app) return plot_cmd.run();
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "spongelab: error: %s\n", e.what());
    return code(ExitCode::kValidation);
  } catch (const IoError& e) {
    std::fprintf(stderr, "spongelab: I/O error: %s\n", e.what());
    return code(ExitCode::kIo);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "spongelab: numerical error: %s\n", e.what());
    return code(ExitCode::kNumerical);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "spongelab: internal error: %s\n", e.what());
    return 1;
  }
  return code(ExitCode::kOk);
}
