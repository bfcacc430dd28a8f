#pragma once

#include <cstddef>
#include <string>

#include "spongelab/model.hpp"

namespace spongelab {

enum class PruneMethod { kWeight, kNeuron };

std::string to_string(PruneMethod m);
PruneMethod parse_prune_method(const std::string& s);

struct PruneConfig {
  PruneMethod method = PruneMethod::kWeight;
  double rate = 0.1;  // fraction in (0, 1), applied per layer
};

/// Number of items a per-layer rate removes from a population of `count`.
std::size_t prune_count(double rate, std::size_t count);

/// Unstructured magnitude pruning: in every layer, the floor(rate * count)
/// smallest |w| are set to zero (ties by ascending flat index). Biases are
/// left alone.
MlpModel weight_prune(const MlpModel& model, double rate);

/// Structured pruning: in every hidden layer, the floor(rate * width)
/// neurons with the smallest incoming-column L2 norm (ties by ascending
/// index) are masked.
MlpModel neuron_prune(const MlpModel& model, double rate);

MlpModel prune(const MlpModel& model, const PruneConfig& cfg);

/// Drops masked neurons, producing narrower dense layers with identical
/// outputs.
MlpModel compact(const MlpModel& model);

}  // namespace spongelab
