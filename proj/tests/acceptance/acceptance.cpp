// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Tolerances and configurations are pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spongelab/autograd.hpp"
#include "spongelab/data.hpp"
#include "spongelab/energy.hpp"
#include "spongelab/harness.hpp"
#include "spongelab/pruning.hpp"
#include "spongelab/sponge.hpp"
#include "test_support.hpp"

using namespace spongelab;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTol = 1e-4;           // relative error, criterion 1
constexpr double kEnergyDelta = 0.03;       // absolute energy_ratio gain, criterion 2
constexpr double kAccuracyBand = 5.0;       // percentage points, criterion 3
constexpr double kPruneReduction = 0.45;    // proxy_energy fraction removed, criterion 4
constexpr double kL0Tol = 1e-8;             // criterion 7

// Synthetic attack setting shared by criteria 2-4.
constexpr std::size_t kPerClass = 100;  // 6 classes -> n = 600
constexpr std::size_t kClasses = 6;
constexpr std::size_t kDim = 20;
constexpr double kSpread = 0.8;  // 6 centers in [-1,1]^20 place reliably up to ~0.9
// Table-I optimizer settings; epochs are scaled so the 480-row training split
// sees an update count comparable to a full-size dataset at 100 epochs.
constexpr std::size_t kAttackEpochs = 1000;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Result {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const Result& r, double seconds) {
  std::printf("criterion %d %s: %s -- %s (%.1fs)\n", id, r.pass ? "PASS" : "FAIL", name,
              r.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!r.pass) ++failures;
}

template <typename F>
void run(int id, const char* name, F f) {
  const auto t0 = std::chrono::steady_clock::now();
  Result r{false, ""};
  try {
    r = f();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, r, s);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

Result gradient_check() {
  std::mt19937_64 rng(20240601);
  const SpongeConfig cfg{1.0, 1e-5, 1.0};
  int checked = 0, skipped = 0;
  double worst = 0.0;
  while (checked < 20) {
    const std::size_t d = 1 + rng() % 8, c = 2 + rng() % 7, m = 2 + rng() % 5;
    std::vector<std::size_t> hidden(1 + rng() % 2);  // 2 or 3 dense layers
    for (auto& h : hidden) h = 1 + rng() % 8;
    MlpModel model = MlpModel::init({d, hidden, c}, rng());
    for (auto& l : model.mutable_layers())
      for (double& b : l.bias.data()) b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    const auto xm = oracle::random_matrix(rng, m, d, -2, 2);
    const Tensor x = testing_support::to_tensor(xm);
    if (oracle::min_abs_preactivation(testing_support::to_net(model), xm) < 1e-3) {
      ++skipped;  // finite differences straddling a ReLU kink are meaningless
      continue;
    }
    std::vector<int> y(m);
    for (auto& v : y) v = static_cast<int>(rng() % c);
    const std::vector<bool> flags(m, true);

    const SpongeLoss sl = sponge_loss(model, x, y, flags, cfg);
    ag::backward(sl.loss);
    const ParamGrads g = ParamGrads::from_trace(sl.trace);

    auto loss_at = [&](const MlpModel& mm) {
      return sponge_loss(mm, x, y, flags, cfg).loss.value()[0];
    };
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      for (int which = 0; which < 2; ++which) {
        const Tensor& analytic = which == 0 ? g.weight[l] : g.bias[l];
        const std::size_t n = analytic.size();
        for (std::size_t i = 0; i < n; ++i) {
          auto f = [&](const std::vector<double>& p) {
            MlpModel probe = model;
            auto& layer = probe.mutable_layers()[l];
            (which == 0 ? layer.weight : layer.bias)[i] = p[0];
            return loss_at(probe);
          };
          const auto& layer = model.layers()[l];
          const double v = (which == 0 ? layer.weight : layer.bias)[i];
          worst = std::max(worst, oracle::rel_err(analytic[i], oracle::central_diff(f, {v}, 0)));
        }
      }
    }
    ++checked;
  }
  return {worst < kGradTol, "20 nets, worst relative error " + fmt("%.3g", worst) + " (tol " +
                                fmt("%.0e", kGradTol) + ", " + std::to_string(skipped) +
                                " kink draws redrawn)"};
}

// ---- 2-4 --------------------------------------------------------------------

struct SeedRun {
  double clean_ratio, sponge_ratio;
  double clean_acc, sponge_acc;
  double sponge_proxy, pruned_proxy, pruned_ratio;
};

std::map<std::uint64_t, SeedRun> attack_runs;

SeedRun attack_run(std::uint64_t seed, std::size_t epochs) {
  const Dataset data = synth_blobs(kPerClass, kClasses, kDim, kSpread, seed);
  TrainConfig tc;  // lr 1e-4, batch 64, split 0.2
  tc.seed = seed;
  tc.epochs = epochs;
  const MlpConfig arch{0, {128, 64}, 0};
  const TrainResult clean = train(data, arch, tc, SpongeConfig{1.0, 1e-5, 0.0});
  const TrainResult sponge = train(data, arch, tc, SpongeConfig{1.0, 1e-5, 1.0});
  const Dataset& test = sponge.data.test;
  const EnergyReport rc = energy_proxy(clean.model, test.features);
  const EnergyReport rs = energy_proxy(sponge.model, test.features);
  const EnergyReport rp = energy_proxy(weight_prune(sponge.model, 0.5), test.features);
  return {rc.energy_ratio, rs.energy_ratio,
          accuracy_pct(predict(clean.model, test.features), test.labels),
          accuracy_pct(predict(sponge.model, test.features), test.labels),
          rs.proxy_energy, rp.proxy_energy, rp.energy_ratio};
}

const SeedRun& cached_run(std::uint64_t seed) {
  auto it = attack_runs.find(seed);
  if (it == attack_runs.end()) it = attack_runs.emplace(seed, attack_run(seed, kAttackEpochs)).first;
  return it->second;
}

Result energy_direction() {
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun& r = cached_run(seed);
    const double delta = r.sponge_ratio - r.clean_ratio;
    ok += delta >= kEnergyDelta;
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.4f", r.clean_ratio) + " -> " +
              fmt("%.4f", r.sponge_ratio) + " (+" + fmt("%.4f", delta) + "); ";
  }
  return {ok >= 2, detail + std::to_string(ok) + "/3 seeds gain >= " + fmt("%.2f", kEnergyDelta)};
}

Result accuracy_preserved() {
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun& r = cached_run(seed);
    ok += std::abs(r.sponge_acc - r.clean_acc) <= kAccuracyBand;
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.1f", r.clean_acc) + "% vs " +
              fmt("%.1f", r.sponge_acc) + "%; ";
  }
  return {ok >= 2, detail + std::to_string(ok) + "/3 seeds within " + fmt("%.0f", kAccuracyBand) +
                       " points"};
}

Result pruning_defense() {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun& r = cached_run(seed);
    const double reduction = 1.0 - r.pruned_proxy / r.sponge_proxy;
    all = all && reduction >= kPruneReduction && r.pruned_ratio < r.sponge_ratio;
    detail += "seed " + std::to_string(seed) + ": proxy -" + fmt("%.1f", 100 * reduction) +
              "%, ratio " + fmt("%.4f", r.sponge_ratio) + " -> " + fmt("%.4f", r.pruned_ratio) + "; ";
  }
  return {all, detail + "need >= " + fmt("%.0f", 100 * kPruneReduction) + "% on every seed"};
}

// ---- 5 ----------------------------------------------------------------------

Result compact_equivalence() {
  std::mt19937_64 rng(55);
  std::size_t compared = 0;
  for (int k = 0; k < 10; ++k) {
    std::vector<std::size_t> hidden(1 + rng() % 3);
    for (auto& h : hidden) h = 4 + rng() % 29;
    const std::size_t d = 2 + rng() % 15, c = 2 + rng() % 6;
    MlpModel m = MlpModel::init({d, hidden, c}, rng());
    for (auto& l : m.mutable_layers())
      for (double& b : l.bias.data()) b = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    const double rate = 0.1 + 0.1 * static_cast<double>(k % 5);
    const MlpModel pruned = neuron_prune(m, rate);
    const MlpModel small = compact(pruned);
    const Tensor x = testing_support::to_tensor(oracle::random_matrix(rng, 1000, d, -3, 3));
    if (predict(small, x) != predict(pruned, x)) {
      return {false, "model " + std::to_string(k) + " disagrees"};
    }
    compared += x.rows();
  }
  return {true, "10 pruned models, " + std::to_string(compared) + " predictions identical"};
}

// ---- 6 ----------------------------------------------------------------------

Result grid_determinism() {
  GridSpec spec;
  spec.sponge_pcts = {0, 50, 100};
  spec.prune_pcts = {10, 30, 50};
  spec.seeds = {0, 1};
  spec.model.hidden_dims = {32, 16};
  spec.train.epochs = 10;
  const Dataset data = synth_blobs(40, 6, 20, kSpread, 3);
  const fs::path dir = fs::temp_directory_path() / "spongelab_acceptance";
  fs::create_directories(dir);
  emit_csv(run_grid(spec, data), dir / "a.csv");
  emit_csv(run_grid(spec, data), dir / "b.csv");
  const std::string a = read_text_file(dir / "a.csv");
  const std::string b = read_text_file(dir / "b.csv");
  fs::remove_all(dir);
  return {!a.empty() && a == b, std::to_string(a.size()) + " CSV bytes, identical: " +
                                    (a == b ? "yes" : "no")};
}

// ---- 7 ----------------------------------------------------------------------

Result unit_oracles() {
  std::vector<std::string> bad;
  const Tensor l0s = ag::l0_approx(ag::Node::leaf(Tensor{{0.0, 1.0}}, false), 1e-5).value();
  const Tensor l0u = ag::l0_approx(ag::Node::leaf(Tensor{{1.0}}, false), 1.0).value();
  if (l0s[0] != 0.0) bad.push_back("l0(0)");
  if (std::abs(l0s[1] - 0.99999000) > kL0Tol) bad.push_back("l0(1; 1e-5)");
  if (l0u[0] != 0.5) bad.push_back("l0(1; 1)");

  const MlpModel m = testing_support::make_model(
      {Tensor{{0.1, -0.5}, {0.05, 2.0}}, Tensor{{1, 1}, {1, 1}}}, {Tensor(1, 2), Tensor(1, 2)});
  if (weight_prune(m, 0.5).layers()[0].weight != Tensor{{0.0, -0.5}, {0.0, 2.0}}) {
    bad.push_back("weight prune example");
  }
  if (window_count(10, 4, 2) != 4) bad.push_back("window count");

  std::string detail = "l0 {0, 1@1e-5, 1@1}, weight-prune example, window count";
  for (const auto& b : bad) detail += "; mismatch: " + b;
  return {bad.empty(), detail};
}

// ---- 8 ----------------------------------------------------------------------

Result grid_cardinality() {
  GridSpec spec;  // default ranges: 11 sponge levels x (1 + 2 types x 5 rates)
  spec.model.hidden_dims = {8};
  spec.train.epochs = 1;
  const auto records = run_grid(spec, synth_blobs(10, 6, 20, kSpread, 1));
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> per;
  for (const auto& r : records) ++per[{r.dataset, r.seed}];
  bool ok = spec.cells_per_seed() == 121 && per.size() == spec.seeds.size();
  std::string detail;
  for (const auto& [key, n] : per) {
    ok = ok && n == 121;
    detail += key.first + "/seed " + std::to_string(key.second) + ": " + std::to_string(n) + "; ";
  }
  return {ok, detail + "expected 121 each"};
}

}  // namespace

int main() {
  run(1, "sponge-loss gradients match finite differences", gradient_check);
  run(2, "sponge poisoning raises energy_ratio", energy_direction);
  run(3, "sponge poisoning preserves accuracy", accuracy_preserved);
  run(4, "50% weight pruning cuts proxy energy", pruning_defense);
  run(5, "compacted neuron-pruned models predict identically", compact_equivalence);
  run(6, "grid CSV is byte-reproducible", grid_determinism);
  run(7, "unit oracle values", unit_oracles);
  run(8, "default grid yields 121 records per seed", grid_cardinality);

  // Informational: the same comparison at 100 epochs, the Table-I budget.
  const SeedRun r = attack_run(0, 100);
  std::printf("info: seed 0 at 100 epochs: energy_ratio %.4f -> %.4f (+%.4f)\n", r.clean_ratio,
              r.sponge_ratio, r.sponge_ratio - r.clean_ratio);

  std::printf("%s: %d of 8 criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
