#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spongelab/autograd.hpp"
#include "spongelab/scaler.hpp"
#include "spongelab/tensor.hpp"

namespace spongelab {

enum class Activation { kRelu };

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::kRelu;

  void validate() const;
  std::size_t num_hidden() const { return hidden_dims.size(); }

  // Architectures used for the two wearable datasets.
  static MlpConfig uci_har() { return {561, {256, 128}, 6}; }
  static MlpConfig motionsense(std::size_t flattened_window) {
    return {flattened_window, {128, 64}, 6};
  }

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct DenseLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected ReLU classifier. Hidden neuron i of layer l is "masked"
/// when neuron_mask[l][i] is false; a masked neuron has zero incoming
/// column, zero bias and zero outgoing row.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(MlpConfig config, std::vector<DenseLayer> layers,
           std::vector<std::vector<bool>> neuron_mask = {});

  /// Glorot-uniform weights, zero biases. Bit-identical for a given seed.
  static MlpModel init(const MlpConfig& config, std::uint64_t seed);

  const MlpConfig& config() const { return config_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  const std::vector<std::vector<bool>>& neuron_mask() const { return neuron_mask_; }

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t masked_count() const;

  /// Marks a hidden neuron as removed and zeroes its connections.
  void mask_neuron(std::size_t hidden_layer, std::size_t neuron);
  /// Re-zeroes every masked neuron's connections (after parameter updates).
  void apply_masks();

  /// Optional input standardization stored alongside the weights. forward()
  /// never applies it; callers that ingest raw features do.
  const std::optional<FeatureScaler>& scaler() const { return scaler_; }
  void set_scaler(std::optional<FeatureScaler> s) { scaler_ = std::move(s); }

  std::uint64_t checksum() const;
  /// Throws ValidationError if any structural invariant is broken.
  void validate() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  MlpConfig config_;
  std::vector<DenseLayer> layers_;
  std::vector<std::vector<bool>> neuron_mask_;
  std::optional<FeatureScaler> scaler_;
};

struct ForwardTrace {
  Tensor logits;
  std::vector<Tensor> hidden_activations;  // post-ReLU, one per hidden layer
};

ForwardTrace forward(const MlpModel& model, const Tensor& x);
/// Row-wise argmax of the logits; ties go to the lowest class index.
std::vector<int> predict(const MlpModel& model, const Tensor& x);
std::vector<int> argmax_rows(const Tensor& logits);
/// Percentage in [0, 100].
double accuracy_pct(std::span<const int> predicted, std::span<const int> labels);

/// Differentiable forward pass. Parameter leaves are fresh copies of the
/// model tensors; their grads hold dL/dθ after ag::backward.
struct GraphTrace {
  std::vector<ag::Node> weights;
  std::vector<ag::Node> biases;
  ag::Node logits;
  std::vector<ag::Node> hidden_activations;
};

GraphTrace forward_graph(const MlpModel& model, const Tensor& x);

// JSON model file: config, per-layer row-major weight/bias arrays, masks and
// the optional scaler. Doubles round-trip bit-exactly.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace spongelab
