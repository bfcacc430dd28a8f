#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spongelab/model.hpp"
#include "spongelab/tensor.hpp"

namespace spongelab {

/// Hardware-agnostic energy/latency accounting for a zero-skipping
/// accelerator: a multiply-accumulate is executed only when both the input
/// activation and the weight are nonzero.
struct EnergyReport {
  std::vector<double> per_layer_density;  // hidden layers, post-ReLU
  double mean_density = 0.0;
  double proxy_energy = 0.0;       // executed MACs
  double worst_case_energy = 0.0;  // all-dense MACs
  double energy_ratio = 0.0;       // proxy / worst case
  std::uint64_t latency_ops = 0;   // same count as proxy_energy
  double wall_clock_seconds = 0.0; // informational only
};

/// Fraction of entries with |v| > threshold for every hidden layer.
std::vector<double> density(const ForwardTrace& trace, double threshold = 0.0);
double fraction_active(const Tensor& activations, double threshold = 0.0);

/// Executed MACs of one dense layer: number of (row, i, j) with
/// |input(row,i)| > threshold and weight(i,j) != 0.
std::uint64_t count_macs(const Tensor& input, const Tensor& weight, double threshold = 0.0);

EnergyReport energy_proxy(const MlpModel& model, const Tensor& x, double threshold = 0.0);

/// Median wall-clock seconds of forward() over `repeats` runs.
double wall_clock_latency(const MlpModel& model, const Tensor& x, int repeats);

// One-row CSV form; field order is fixed.
std::string energy_csv_header();
std::string energy_csv_row(const EnergyReport& report);

}  // namespace spongelab
