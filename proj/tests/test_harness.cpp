#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <regex>

#include "spongelab/errors.hpp"
#include "spongelab/harness.hpp"

using namespace spongelab;
namespace fs = std::filesystem;

namespace {

GridSpec small_spec() {
  GridSpec s;
  s.sponge_pcts = {0, 100};
  s.prune_types = {PruneType::kWeight, PruneType::kNeuron};
  s.prune_pcts = {20, 40};
  s.seeds = {0, 1};
  s.model.hidden_dims = {12, 8};
  s.train.epochs = 3;
  s.train.batch_size = 16;
  s.train.learning_rate = 1e-2;
  return s;
}

Dataset small_data() { return synth_blobs(20, 3, 5, 0.3, 4); }

ExperimentRecord rec(std::string ds, int sponge, PruneType t, int pct, double acc, double ratio,
                     std::uint64_t seed = 0) {
  ExperimentRecord r;
  r.dataset = std::move(ds);
  r.sponge_pct = sponge;
  r.prune_type = t;
  r.prune_pct = pct;
  r.test_acc = acc;
  r.energy_ratio = ratio;
  r.proxy_energy = ratio * 1000;
  r.latency_ops = static_cast<std::uint64_t>(ratio * 1000);
  r.seed = seed;
  return r;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(GridSpec, DefaultCellCount) {
  const GridSpec s;
  EXPECT_EQ(s.cells_per_seed(), 121u);
  GridSpec none;
  none.sponge_pcts = {0};
  none.prune_types = {PruneType::kNone};
  EXPECT_EQ(none.cells_per_seed(), 1u);
}

TEST(GridSpec, Validation) {
  GridSpec s;
  s.sponge_pcts = {0, 0};
  EXPECT_THROW(s.validate(), ValidationError);
  s = GridSpec{};
  s.prune_pcts = {0};
  EXPECT_THROW(s.validate(), ValidationError);
  s = GridSpec{};
  s.sponge_pcts = {101};
  EXPECT_THROW(s.validate(), ValidationError);
  s = GridSpec{};
  s.seeds = {};
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(GridSpec, JsonRoundTripAndUnknownKeys) {
  const GridSpec s = small_spec();
  const GridSpec back = grid_spec_from_json(grid_spec_to_json(s));
  EXPECT_EQ(back.sponge_pcts, s.sponge_pcts);
  EXPECT_EQ(back.prune_types, s.prune_types);
  EXPECT_EQ(back.prune_pcts, s.prune_pcts);
  EXPECT_EQ(back.seeds, s.seeds);
  EXPECT_EQ(back.model.hidden_dims, s.model.hidden_dims);
  EXPECT_EQ(back.train.epochs, 3u);
  EXPECT_EQ(back.train.learning_rate, 1e-2);
  EXPECT_THROW(grid_spec_from_json("{\"sponge_pct\": [0]}"), ValidationError);
  EXPECT_THROW(grid_spec_from_json("{\"train\": {\"epoch\": 3}}"), ValidationError);
  EXPECT_THROW(grid_spec_from_json("[1,2"), ValidationError);
  const GridSpec partial = grid_spec_from_json("{\"seeds\": [7]}");
  EXPECT_EQ(partial.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(partial.cells_per_seed(), 121u);
}

TEST(RunGrid, EmitsOneRecordPerCellSorted) {
  const GridSpec s = small_spec();
  const auto records = run_grid(s, small_data());
  ASSERT_EQ(records.size(), s.cells_per_seed() * s.seeds.size());
  EXPECT_EQ(records.size(), 2u * 2u * (1 + 2 * 2));
  EXPECT_TRUE(std::is_sorted(records.begin(), records.end(), record_key_less));
  for (const auto& r : records) {
    EXPECT_EQ(r.dataset, "synth");
    EXPECT_GE(r.test_acc, 0.0);
    EXPECT_LE(r.test_acc, 100.0);
    EXPECT_GE(r.energy_ratio, 0.0);
    EXPECT_LE(r.energy_ratio, 1.0);
    EXPECT_EQ(r.wall_clock_s, 0.0);
  }
}

TEST(RunGrid, SingleCellGrid) {
  GridSpec s = small_spec();
  s.sponge_pcts = {0};
  s.prune_types = {PruneType::kNone};
  s.seeds = {0};
  const auto records = run_grid(s, small_data());
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].prune_type, PruneType::kNone);
  EXPECT_EQ(records[0].prune_pct, 0);
}

TEST(RunGrid, DeterministicAcrossRunsAndThreadCounts) {
  GridSpec s = small_spec();
  const auto a = run_grid(s, small_data());
  const auto b = run_grid(s, small_data());
  s.jobs = 3;
  const auto c = run_grid(s, small_data());
  EXPECT_EQ(records_to_csv(a), records_to_csv(b));
  EXPECT_EQ(records_to_csv(a), records_to_csv(c));
}

TEST(RunGrid, HalfWeightPruneNeverRaisesEnergyRatio) {
  GridSpec s = small_spec();
  s.sponge_pcts = {0, 50, 100};
  s.prune_types = {PruneType::kWeight};
  s.prune_pcts = {50};
  const auto records = run_grid(s, small_data());
  std::map<std::pair<int, std::uint64_t>, double> unpruned;
  for (const auto& r : records)
    if (r.prune_type == PruneType::kNone) unpruned[{r.sponge_pct, r.seed}] = r.energy_ratio;
  ASSERT_EQ(unpruned.size(), 6u);
  for (const auto& r : records) {
    if (r.prune_type != PruneType::kWeight) continue;
    EXPECT_LE(r.energy_ratio, unpruned.at({r.sponge_pct, r.seed}))
        << "sponge_pct=" << r.sponge_pct << " seed=" << r.seed;
  }
}

// A prune rate that removes nothing in any layer reproduces the unpruned cell.
TEST(RunGrid, NegligiblePruneMatchesUnpruned) {
  GridSpec s = small_spec();
  s.model.hidden_dims = {8};
  s.prune_pcts = {1};
  s.seeds = {0};
  s.sponge_pcts = {0};
  const auto records = run_grid(s, synth_blobs(20, 3, 4, 0.3, 2));
  ASSERT_EQ(records.size(), 3u);
  for (const auto& r : records) {
    EXPECT_EQ(r.test_acc, records[0].test_acc);
    EXPECT_EQ(r.proxy_energy, records[0].proxy_energy);
  }
}

TEST(RunGrid, FailureNamesCellAndWritesPartialCsv) {
  GridSpec s = small_spec();
  s.seeds = {0};
  s.model.hidden_dims = {8, 8, 8, 8, 8, 8};
  s.train.learning_rate = 1e-4;
  s.sponge.lambda = 1e308;  // the energy term overflows once any row is poisoned
  const fs::path partial = fs::temp_directory_path() / "spongelab_partial.csv";
  fs::remove(partial);
  GridOptions opts;
  opts.partial_csv = partial;
  try {
    run_grid(s, small_data(), opts);
    FAIL() << "expected a numerical failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("sponge_pct=100"), std::string::npos) << e.what();
  }
  const auto saved = load_records_csv(partial);
  EXPECT_EQ(saved.size(), 1u + 2 * 2);
  for (const auto& r : saved) EXPECT_EQ(r.sponge_pct, 0);
  fs::remove(partial);
}

TEST(Csv, HeaderAndRoundTrip) {
  EXPECT_EQ(records_csv_header(),
            "dataset,sponge_pct,prune_type,prune_pct,test_acc,energy_ratio,proxy_energy,"
            "latency_ops,wall_clock_s,seed");
  const std::vector<ExperimentRecord> rs{rec("synth", 0, PruneType::kNone, 0, 91.25, 0.5),
                                         rec("synth", 50, PruneType::kWeight, 30, 80, 0.625, 2)};
  const std::string text = records_to_csv(rs);
  EXPECT_EQ(count_of(text, "\n"), 3u);
  EXPECT_EQ(records_from_csv(text), rs);
}

TEST(Csv, SingleRecordIsTwoLines) {
  const fs::path p = fs::temp_directory_path() / "spongelab_one.csv";
  emit_csv({rec("d", 10, PruneType::kNeuron, 20, 50, 0.25)}, p);
  const std::string text = read_text_file(p);
  EXPECT_EQ(count_of(text, "\n"), 2u);
  EXPECT_EQ(text.substr(text.find('\n') + 1), "d,10,neuron,20,50,0.25,250,250,0,0\n");
  fs::remove(p);
}

TEST(Csv, Errors) {
  const fs::path p = fs::temp_directory_path() / "spongelab_empty.csv";
  EXPECT_THROW(emit_csv({}, p), ValidationError);
  EXPECT_THROW(records_from_csv("bad,header\n"), ValidationError);
  EXPECT_THROW(records_from_csv(records_csv_header() + "\nx,1,weight\n"), ValidationError);
  EXPECT_THROW(load_records_csv("/nonexistent/dir/x.csv"), IoError);
  EXPECT_THROW(emit_csv({rec("d", 0, PruneType::kNone, 0, 1, 0.1)}, "/nonexistent/dir/x.csv"),
               IoError);
}

TEST(Trend, OnePolylinePerGroup) {
  std::vector<ExperimentRecord> rs;
  for (int sponge : {0, 100})
    for (int pct : {10, 20, 30})
      rs.push_back(rec("synth", sponge, PruneType::kWeight, pct, 90 - pct - sponge / 10.0,
                       0.5 + sponge / 1000.0 - pct / 100.0));
  const TrendChart chart = build_trend(rs, "energy_ratio", "sponge_pct");
  ASSERT_EQ(chart.series.size(), 2u);
  EXPECT_EQ(chart.x_field, "prune_pct");
  EXPECT_EQ(chart.series[0].xs, (std::vector<double>{10, 20, 30}));
  const std::string svg = render_svg(chart);
  EXPECT_EQ(count_of(svg, "<polyline"), 2u);
  EXPECT_EQ(svg, render_svg(build_trend(rs, "energy_ratio", "sponge_pct")));
}

TEST(Trend, AxesPaddedByFivePercent) {
  const std::vector<ExperimentRecord> rs{rec("s", 0, PruneType::kWeight, 10, 50, 0.2),
                                         rec("s", 0, PruneType::kWeight, 50, 70, 0.6)};
  const TrendChart c = build_trend(rs, "test_acc", "sponge_pct");
  EXPECT_DOUBLE_EQ(c.x_min, 10 - 2.0);
  EXPECT_DOUBLE_EQ(c.x_max, 50 + 2.0);
  EXPECT_DOUBLE_EQ(c.y_min, 50 - 1.0);
  EXPECT_DOUBLE_EQ(c.y_max, 70 + 1.0);
}

TEST(Trend, AveragesOverSeedsAndEscapesLabels) {
  const std::vector<ExperimentRecord> rs{rec("a<b", 0, PruneType::kWeight, 10, 50, 0.2, 0),
                                         rec("a<b", 0, PruneType::kWeight, 10, 70, 0.4, 1)};
  const TrendChart c = build_trend(rs, "test_acc", "dataset", "prune_pct");
  ASSERT_EQ(c.series.size(), 1u);
  EXPECT_EQ(c.series[0].ys, std::vector<double>{60});
  const std::string svg = render_svg(c);
  EXPECT_EQ(svg.find("a<b"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
}

TEST(Trend, Errors) {
  const std::vector<ExperimentRecord> rs{rec("s", 0, PruneType::kWeight, 10, 50, 0.2)};
  EXPECT_THROW(build_trend(rs, "accuracy", "sponge_pct"), ValidationError);
  EXPECT_THROW(build_trend(rs, "test_acc", "colour"), ValidationError);
  EXPECT_THROW(build_trend({}, "test_acc", "sponge_pct"), ValidationError);
}
