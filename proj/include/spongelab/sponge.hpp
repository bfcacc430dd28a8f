#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spongelab/autograd.hpp"
#include "spongelab/data.hpp"
#include "spongelab/model.hpp"

namespace spongelab {

/// How the poisoned share p is applied.
enum class PoisonMode {
  kPerSample,  // fixed subset of training samples carries the energy term
  kPerUpdate,  // a share of mini-batch updates uses the energy term on the whole batch
};

std::string to_string(PoisonMode m);  // "per_sample" / "per_update"
PoisonMode parse_poison_mode(const std::string& s);

struct SpongeConfig {
  double lambda = 1.0;
  double sigma = 1e-5;
  double poison_fraction = 0.0;
  PoisonMode mode = PoisonMode::kPerSample;

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double test_split = 0.2;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct PoisonAssignment {
  std::vector<bool> flags;

  /// Exactly round(p * n) flags set; a pure function of (seed, p, n).
  static PoisonAssignment make(std::uint64_t seed, double p, std::size_t n);
  std::size_t count() const;
};

/// E = sum over hidden layers of the mean of v²/(v²+σ) over that layer's
/// activations. Differentiable.
ag::Node sponge_energy(const std::vector<ag::Node>& hidden_activations, double sigma);
/// Same quantity on a plain trace.
double sponge_energy(const ForwardTrace& trace, double sigma);

struct SpongeLoss {
  ag::Node loss;           // CE(all rows) - λ·E(poisoned rows)
  ag::Node cross_entropy;  // CE(all rows)
  bool energy_applied = false;
  GraphTrace trace;
};

/// When no row is poisoned or λ == 0 the loss node is the cross-entropy node
/// itself.
SpongeLoss sponge_loss(const MlpModel& model, const Tensor& x, std::span<const int> labels,
                       const std::vector<bool>& poison_flags, const SpongeConfig& cfg);

struct ParamGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  static ParamGrads from_trace(const GraphTrace& trace);
};

struct AdamState {
  std::vector<Tensor> m_weight, v_weight, m_bias, v_bias;
  std::uint64_t step = 0;

  static AdamState zeros_like(const MlpModel& model);
};

/// One bias-corrected Adam update with step count t (t >= 1).
void adam_step(MlpModel& model, const ParamGrads& grads, AdamState& state, std::uint64_t t,
               const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_ce = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double mean_density = 0.0;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> history;
  PreparedSplit data;  // standardized train/test used for this run
  double initial_train_ce = 0.0;
};

/// Splits (stratified, seeded) and standardizes `dataset`, then trains with
/// the sponge objective. Zero-valued input_dim / num_classes in `mlp` are
/// filled from the dataset. p = 0 reduces exactly to vanilla training.
TrainResult train(const Dataset& dataset, MlpConfig mlp, const TrainConfig& train_cfg,
                  const SpongeConfig& sponge_cfg);

/// Cross-entropy fine-tuning that keeps neuron masks and zeroed weights at
/// zero. Not part of the default defense.
void fine_tune(MlpModel& model, const Dataset& train_set, const TrainConfig& cfg,
               std::size_t epochs);

/// Mean cross-entropy of the model on a dataset (no graph kept).
double cross_entropy(const MlpModel& model, const Dataset& data);

std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace spongelab
