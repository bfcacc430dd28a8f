#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spongelab/data.hpp"
#include "spongelab/model.hpp"
#include "spongelab/sponge.hpp"

namespace spongelab {

enum class PruneType { kNone, kWeight, kNeuron };

std::string to_string(PruneType t);
PruneType parse_prune_type(const std::string& s);

/// One grid cell. (dataset, sponge_pct, prune_type, prune_pct, seed) is the key.
struct ExperimentRecord {
  std::string dataset;
  int sponge_pct = 0;
  PruneType prune_type = PruneType::kNone;
  int prune_pct = 0;
  double test_acc = 0.0;  // percent
  double energy_ratio = 0.0;
  double proxy_energy = 0.0;
  std::uint64_t latency_ops = 0;
  double wall_clock_s = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

/// Ordering used for every emitted table.
bool record_key_less(const ExperimentRecord& a, const ExperimentRecord& b);

struct GridSpec {
  std::vector<int> sponge_pcts{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::vector<PruneType> prune_types{PruneType::kWeight, PruneType::kNeuron};
  std::vector<int> prune_pcts{10, 20, 30, 40, 50};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  MlpConfig model{0, {128, 64}, 0};
  TrainConfig train;
  SpongeConfig sponge;
  // Forward repeats for wall-clock timing. 0 disables timing and writes 0,
  // which keeps the CSV byte-reproducible.
  int timing_repeats = 0;
  std::size_t fine_tune_epochs = 0;
  double density_threshold = 0.0;
  std::size_t jobs = 1;

  void validate() const;
  /// Records run_grid will emit per seed.
  std::size_t cells_per_seed() const;
};

GridSpec grid_spec_from_json(const std::string& text);
std::string grid_spec_to_json(const GridSpec& spec);

struct GridOptions {
  /// Written with the records completed so far if a cell fails.
  std::optional<std::filesystem::path> partial_csv;
  std::function<void(const std::string&)> progress;
};

/// Trains once per (seed, sponge level), evaluates the unpruned model on the
/// held-out split, then prunes snapshots of it for every (type, pct) cell.
/// Records come back sorted by key.
std::vector<ExperimentRecord> run_grid(const GridSpec& spec, const Dataset& dataset,
                                       const GridOptions& options = {});

std::string records_csv_header();
std::string records_to_csv(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> records_from_csv(const std::string& text);
void emit_csv(const std::vector<ExperimentRecord>& records, const std::filesystem::path& path);
std::vector<ExperimentRecord> load_records_csv(const std::filesystem::path& path);

// ---- trend charts ----------------------------------------------------------

struct TrendSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct TrendChart {
  std::string metric;
  std::string x_field;
  std::vector<TrendSeries> series;
  double x_min = 0, x_max = 0;  // padded
  double y_min = 0, y_max = 0;  // padded
};

/// Groups records by the comma-separated `group_by` fields and averages the
/// metric over records sharing (group, x). x_field defaults to prune_pct
/// when grouping by sponge_pct and to sponge_pct otherwise. Axis ranges
/// span min..max of the data padded by 5% of the span on each side.
TrendChart build_trend(const std::vector<ExperimentRecord>& records, const std::string& metric,
                       const std::string& group_by, const std::string& x_field = "");
std::string render_svg(const TrendChart& chart);
void emit_trend_svg(const std::vector<ExperimentRecord>& records, const std::string& metric,
                    const std::string& group_by, const std::filesystem::path& path,
                    const std::string& x_field = "");

/// Writes text to a file, mapping failures onto IoError.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace spongelab
