#include "spongelab/sponge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "spongelab/energy.hpp"
#include "spongelab/errors.hpp"
#include "spongelab/rng.hpp"

namespace spongelab {

std::string to_string(PoisonMode m) {
  return m == PoisonMode::kPerSample ? "per_sample" : "per_update";
}

PoisonMode parse_poison_mode(const std::string& s) {
  if (s == "per_sample") return PoisonMode::kPerSample;
  if (s == "per_update") return PoisonMode::kPerUpdate;
  throw ValidationError("unknown sponge mode '" + s + "' (expected per_sample or per_update)");
}

void SpongeConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be >= 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be > 0");
  if (!(poison_fraction >= 0.0 && poison_fraction <= 1.0)) {
    throw ValidationError("poison fraction must lie in [0, 1]");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (!(test_split > 0.0 && test_split < 1.0)) throw ValidationError("test split must lie in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be > 0");
}

PoisonAssignment PoisonAssignment::make(std::uint64_t seed, double p, std::size_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("poison fraction must lie in [0, 1]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, Stream::kPoison);
  rng.shuffle(std::span(order));
  const auto k = static_cast<std::size_t>(std::round(p * static_cast<double>(n)));
  PoisonAssignment out;
  out.flags.assign(n, false);
  for (std::size_t i = 0; i < k; ++i) out.flags[order[i]] = true;
  return out;
}

std::size_t PoisonAssignment::count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
}

ag::Node sponge_energy(const std::vector<ag::Node>& hidden_activations, double sigma) {
  if (hidden_activations.empty()) throw ValidationError("sponge energy needs hidden layers");
  ag::Node total;
  for (const auto& h : hidden_activations) {
    ag::Node layer = ag::mean(ag::l0_approx(h, sigma));
    total = total.valid() ? ag::add(total, layer) : layer;
  }
  return total;
}

double sponge_energy(const ForwardTrace& trace, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("sigma must be > 0");
  double total = 0.0;
  for (const auto& h : trace.hidden_activations) {
    double s = 0.0;
    for (double v : h.data()) s += v * v / (v * v + sigma);
    total += s / static_cast<double>(h.size());
  }
  return total;
}

SpongeLoss sponge_loss(const MlpModel& model, const Tensor& x, std::span<const int> labels,
                       const std::vector<bool>& poison_flags, const SpongeConfig& cfg) {
  cfg.validate();
  if (x.rows() == 0) throw ValidationError("sponge_loss on an empty batch");
  if (poison_flags.size() != x.rows()) {
    throw ValidationError("poison flags length does not match batch size");
  }
  SpongeLoss out;
  out.trace = forward_graph(model, x);
  out.cross_entropy = ag::softmax_cross_entropy(out.trace.logits, labels);
  out.loss = out.cross_entropy;

  std::vector<std::size_t> poisoned;
  for (std::size_t i = 0; i < poison_flags.size(); ++i) {
    if (poison_flags[i]) poisoned.push_back(i);
  }
  if (cfg.lambda == 0.0 || poisoned.empty()) return out;

  std::vector<ag::Node> subset;
  subset.reserve(out.trace.hidden_activations.size());
  for (const auto& h : out.trace.hidden_activations) {
    subset.push_back(poisoned.size() == x.rows() ? h : ag::select_rows(h, poisoned));
  }
  const ag::Node energy = sponge_energy(subset, cfg.sigma);
  out.loss = ag::sub(out.cross_entropy, ag::scale(energy, cfg.lambda));
  out.energy_applied = true;
  return out;
}

ParamGrads ParamGrads::from_trace(const GraphTrace& trace) {
  ParamGrads g;
  for (const auto& w : trace.weights) g.weight.push_back(w.grad());
  for (const auto& b : trace.biases) g.bias.push_back(b.grad());
  return g;
}

AdamState AdamState::zeros_like(const MlpModel& model) {
  AdamState s;
  for (const auto& l : model.layers()) {
    s.m_weight.emplace_back(l.weight.rows(), l.weight.cols());
    s.v_weight.emplace_back(l.weight.rows(), l.weight.cols());
    s.m_bias.emplace_back(l.bias.rows(), l.bias.cols());
    s.v_bias.emplace_back(l.bias.rows(), l.bias.cols());
  }
  return s;
}

namespace {

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, double c1, double c2,
                 const TrainConfig& cfg) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw ValidationError("Adam state shape mismatch for parameter " + param.shape_str());
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  require_finite(param, "adam_step");
}

}  // namespace

void adam_step(MlpModel& model, const ParamGrads& grads, AdamState& state, std::uint64_t t,
               const TrainConfig& cfg) {
  if (t < 1) throw ValidationError("Adam step count must be >= 1");
  auto& layers = model.mutable_layers();
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size() ||
      state.m_weight.size() != layers.size()) {
    throw ValidationError("Adam gradient/state layer count mismatch");
  }
  const auto td = static_cast<double>(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, td);
  const double c2 = 1.0 - std::pow(cfg.beta2, td);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    adam_update(layers[l].weight, grads.weight[l], state.m_weight[l], state.v_weight[l], c1, c2,
                cfg);
    adam_update(layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l], c1, c2, cfg);
  }
  state.step = t;
  if (model.masked_count() > 0) model.apply_masks();
}

double cross_entropy(const MlpModel& model, const Dataset& data) {
  const ForwardTrace tr = forward(model, data.features);
  return ag::softmax_cross_entropy(ag::Node::leaf(tr.logits, false), data.labels).value()[0];
}

namespace {

struct Batch {
  Tensor x;
  std::vector<int> y;
  std::vector<bool> poison;
};

Batch gather(const Dataset& data, std::span<const std::size_t> rows,
             const std::vector<bool>& flags) {
  Batch b;
  b.x = select_rows(data.features, rows);
  for (std::size_t r : rows) {
    b.y.push_back(data.labels[r]);
    b.poison.push_back(flags[r]);
  }
  return b;
}

double eval_accuracy(const MlpModel& model, const Dataset& d) {
  if (d.size() == 0) return 0.0;
  return accuracy_pct(predict(model, d.features), d.labels);
}

}  // namespace

TrainResult train(const Dataset& dataset, MlpConfig mlp, const TrainConfig& train_cfg,
                  const SpongeConfig& sponge_cfg) {
  train_cfg.validate();
  sponge_cfg.validate();
  if (dataset.size() == 0) throw ValidationError("cannot train on an empty dataset");
  dataset.validate();
  if (mlp.input_dim == 0) mlp.input_dim = dataset.dim();
  if (mlp.num_classes == 0) mlp.num_classes = dataset.num_classes;
  if (mlp.input_dim != dataset.dim() || mlp.num_classes < dataset.num_classes) {
    throw ValidationError("model config does not fit dataset '" + dataset.name + "'");
  }

  TrainResult res;
  res.data = prepare_split(dataset, train_cfg.test_split, train_cfg.seed);
  const Dataset& tr = res.data.train;
  const Dataset& te = res.data.test;
  res.model = MlpModel::init(mlp, train_cfg.seed);
  res.model.set_scaler(res.data.scaler);
  res.initial_train_ce = cross_entropy(res.model, tr);

  const std::size_t n = tr.size();
  const bool per_sample = sponge_cfg.mode == PoisonMode::kPerSample;
  const PoisonAssignment assignment =
      PoisonAssignment::make(train_cfg.seed, per_sample ? sponge_cfg.poison_fraction : 0.0, n);
  const std::vector<bool> all_poisoned(n, true);
  const std::vector<bool> none_poisoned(n, false);
  const std::size_t num_batches = (n + train_cfg.batch_size - 1) / train_cfg.batch_size;

  AdamState state = AdamState::zeros_like(res.model);
  std::uint64_t t = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(train_cfg.seed, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(epoch_seed, Stream::kEpoch).shuffle(std::span(order));

    // Per-update mode: round(p * batches) updates of this epoch are poisoned.
    std::vector<bool> poisoned_batch;
    if (!per_sample) {
      poisoned_batch = PoisonAssignment::make(epoch_seed, sponge_cfg.poison_fraction, num_batches).flags;
    }

    double loss_sum = 0.0, ce_sum = 0.0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * train_cfg.batch_size;
      const std::size_t hi = std::min(n, lo + train_cfg.batch_size);
      const auto rows = std::span(order).subspan(lo, hi - lo);
      const auto& flags = per_sample ? assignment.flags
                                     : (poisoned_batch[b] ? all_poisoned : none_poisoned);
      const Batch batch = gather(tr, rows, flags);
      const SpongeLoss sl = sponge_loss(res.model, batch.x, batch.y, batch.poison, sponge_cfg);
      ag::backward(sl.loss);
      adam_step(res.model, ParamGrads::from_trace(sl.trace), state, ++t, train_cfg);
      loss_sum += sl.loss.value()[0];
      ce_sum += sl.cross_entropy.value()[0];
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(num_batches);
    st.train_ce = ce_sum / static_cast<double>(num_batches);
    st.train_acc = eval_accuracy(res.model, tr);
    st.test_acc = eval_accuracy(res.model, te);
    const Dataset& probe = te.size() > 0 ? te : tr;
    const auto dens = density(forward(res.model, probe.features));
    st.mean_density = std::accumulate(dens.begin(), dens.end(), 0.0) / static_cast<double>(dens.size());
    res.history.push_back(st);
  }
  return res;
}

void fine_tune(MlpModel& model, const Dataset& train_set, const TrainConfig& cfg,
               std::size_t epochs) {
  cfg.validate();
  if (train_set.size() == 0) throw ValidationError("cannot fine-tune on an empty dataset");
  std::vector<std::vector<bool>> zero_weight;
  for (const auto& l : model.layers()) {
    std::vector<bool> z(l.weight.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = l.weight[i] == 0.0;
    zero_weight.push_back(std::move(z));
  }
  const SpongeConfig clean{0.0, 1.0, 0.0};
  const std::vector<bool> no_poison(train_set.size(), false);
  AdamState state = AdamState::zeros_like(model);
  std::uint64_t t = 0;
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(mix_seed(cfg.seed ^ 0xf1e7u, epoch), Stream::kEpoch).shuffle(std::span(order));
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const auto rows = std::span(order).subspan(lo, std::min(cfg.batch_size, n - lo));
      const Batch batch = gather(train_set, rows, no_poison);
      const SpongeLoss sl = sponge_loss(model, batch.x, batch.y, batch.poison, clean);
      ag::backward(sl.loss);
      adam_step(model, ParamGrads::from_trace(sl.trace), state, ++t, cfg);
      auto& layers = model.mutable_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < zero_weight[l].size(); ++i) {
          if (zero_weight[l][i]) layers[l].weight[i] = 0.0;
        }
      }
    }
  }
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,train_acc,test_acc,mean_density\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g\n", h.epoch, h.train_loss, h.train_acc,
                  h.test_acc, h.mean_density);
    out += buf;
  }
  return out;
}

}  // namespace spongelab
