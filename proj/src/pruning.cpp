#include "spongelab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spongelab/errors.hpp"

namespace spongelab {

std::string to_string(PruneMethod m) { return m == PruneMethod::kWeight ? "weight" : "neuron"; }

PruneMethod parse_prune_method(const std::string& s) {
  if (s == "weight") return PruneMethod::kWeight;
  if (s == "neuron") return PruneMethod::kNeuron;
  throw ValidationError("unknown prune method '" + s + "' (expected weight or neuron)");
}

namespace {

void require_rate(double rate) {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw ValidationError("prune rate must lie in (0, 1), got " + std::to_string(rate));
  }
}

// Indices of the k smallest keys; ties resolved by ascending index.
std::vector<std::size_t> smallest_k(const std::vector<double>& keys, std::size_t k) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto less = [&keys](std::size_t a, std::size_t b) {
    return keys[a] < keys[b] || (keys[a] == keys[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
  idx.resize(k);
  return idx;
}

}  // namespace

std::size_t prune_count(double rate, std::size_t count) {
  // The epsilon absorbs representation error in products like 0.29 * 100.
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(count) + 1e-9));
}

MlpModel weight_prune(const MlpModel& model, double rate) {
  require_rate(rate);
  MlpModel out = model;
  for (auto& layer : out.mutable_layers()) {
    auto w = layer.weight.data();
    const std::size_t k = prune_count(rate, w.size());
    if (k == 0) continue;
    std::vector<double> mags(w.size());
    std::transform(w.begin(), w.end(), mags.begin(), [](double v) { return std::abs(v); });
    for (std::size_t i : smallest_k(mags, k)) w[i] = 0.0;
  }
  return out;
}

MlpModel neuron_prune(const MlpModel& model, double rate) {
  require_rate(rate);
  MlpModel out = model;
  const auto& hidden = model.config().hidden_dims;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::size_t width = hidden[l];
    const std::size_t k = prune_count(rate, width);
    if (k == 0) continue;
    if (k >= width) {
      throw ValidationError("neuron pruning at rate " + std::to_string(rate) +
                            " would empty hidden layer " + std::to_string(l));
    }
    const Tensor& w = model.layers()[l].weight;
    std::vector<double> norms(width, 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      for (std::size_t n = 0; n < width; ++n) norms[n] += w(r, n) * w(r, n);
    }
    for (double& v : norms) v = std::sqrt(v);
    for (std::size_t n : smallest_k(norms, k)) out.mask_neuron(l, n);
  }
  return out;
}

MlpModel prune(const MlpModel& model, const PruneConfig& cfg) {
  return cfg.method == PruneMethod::kWeight ? weight_prune(model, cfg.rate)
                                            : neuron_prune(model, cfg.rate);
}

MlpModel compact(const MlpModel& model) {
  const auto& masks = model.neuron_mask();
  const auto& layers = model.layers();
  std::vector<std::vector<std::size_t>> keep(masks.size());
  MlpConfig cfg = model.config();
  for (std::size_t l = 0; l < masks.size(); ++l) {
    for (std::size_t n = 0; n < masks[l].size(); ++n) {
      if (masks[l][n]) keep[l].push_back(n);
    }
    cfg.hidden_dims[l] = keep[l].size();
  }

  std::vector<DenseLayer> out_layers;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& w = layers[l].weight;
    const Tensor& b = layers[l].bias;
    const bool has_rows = l > 0;
    const bool has_cols = l < masks.size();
    std::vector<std::size_t> rows(w.rows()), cols(w.cols());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::iota(cols.begin(), cols.end(), std::size_t{0});
    if (has_rows) rows = keep[l - 1];
    if (has_cols) cols = keep[l];
    DenseLayer nl{Tensor(rows.size(), cols.size()), Tensor(1, cols.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) nl.weight(i, j) = w(rows[i], cols[j]);
    }
    for (std::size_t j = 0; j < cols.size(); ++j) nl.bias[j] = b[cols[j]];
    out_layers.push_back(std::move(nl));
  }
  MlpModel out(std::move(cfg), std::move(out_layers));
  out.set_scaler(model.scaler());
  return out;
}

}  // namespace spongelab
