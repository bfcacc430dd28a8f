#include "spongelab/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spongelab/errors.hpp"
#include "spongelab/rng.hpp"

namespace spongelab {

using nlohmann::json;

void MlpConfig::validate() const {
  if (input_dim == 0) throw ValidationError("input_dim must be positive");
  if (hidden_dims.empty()) throw ValidationError("hidden_dims must be non-empty");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ValidationError("hidden layer widths must be positive");
  }
  if (num_classes < 2) throw ValidationError("num_classes must be at least 2");
}

MlpModel::MlpModel(MlpConfig config, std::vector<DenseLayer> layers,
                   std::vector<std::vector<bool>> neuron_mask)
    : config_(std::move(config)), layers_(std::move(layers)), neuron_mask_(std::move(neuron_mask)) {
  if (neuron_mask_.empty()) {
    for (std::size_t h : config_.hidden_dims) neuron_mask_.emplace_back(h, true);
  }
  validate();
}

MlpModel MlpModel::init(const MlpConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, Stream::kInit);
  std::vector<DenseLayer> layers;
  std::size_t in = config.input_dim;
  auto widths = config.hidden_dims;
  widths.push_back(config.num_classes);
  for (std::size_t out : widths) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Tensor(in, out), Tensor(1, out)};
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
    in = out;
  }
  return MlpModel(config, std::move(layers));
}

std::size_t MlpModel::masked_count() const {
  std::size_t n = 0;
  for (const auto& m : neuron_mask_) n += static_cast<std::size_t>(std::count(m.begin(), m.end(), false));
  return n;
}

void MlpModel::mask_neuron(std::size_t hidden_layer, std::size_t neuron) {
  if (hidden_layer >= neuron_mask_.size() || neuron >= neuron_mask_[hidden_layer].size()) {
    throw ValidationError("mask_neuron index out of range");
  }
  neuron_mask_[hidden_layer][neuron] = false;
  apply_masks();
}

void MlpModel::apply_masks() {
  for (std::size_t l = 0; l < neuron_mask_.size(); ++l) {
    auto& in = layers_[l];
    auto& out = layers_[l + 1];
    for (std::size_t n = 0; n < neuron_mask_[l].size(); ++n) {
      if (neuron_mask_[l][n]) continue;
      for (std::size_t r = 0; r < in.weight.rows(); ++r) in.weight(r, n) = 0.0;
      in.bias[n] = 0.0;
      for (double& w : out.weight.row(n)) w = 0.0;
    }
  }
}

std::uint64_t MlpModel::checksum() const {
  std::uint64_t h = 0;
  for (const auto& l : layers_) {
    h = mix_seed(h, l.weight.checksum());
    h = mix_seed(h, l.bias.checksum());
  }
  return h;
}

void MlpModel::validate() const {
  config_.validate();
  if (layers_.size() != config_.hidden_dims.size() + 1) {
    throw ValidationError("expected " + std::to_string(config_.hidden_dims.size() + 1) +
                          " layers, got " + std::to_string(layers_.size()));
  }
  std::size_t in = config_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::size_t out =
        l < config_.hidden_dims.size() ? config_.hidden_dims[l] : config_.num_classes;
    const auto& layer = layers_[l];
    if (layer.weight.rows() != in || layer.weight.cols() != out || layer.bias.rows() != 1 ||
        layer.bias.cols() != out) {
      throw ValidationError("layer " + std::to_string(l) + " has weight " +
                            layer.weight.shape_str() + " and bias " + layer.bias.shape_str() +
                            ", expected [" + std::to_string(in) + "x" + std::to_string(out) + "]");
    }
    in = out;
  }
  if (neuron_mask_.size() != config_.hidden_dims.size()) {
    throw ValidationError("neuron mask count does not match hidden layer count");
  }
  for (std::size_t l = 0; l < neuron_mask_.size(); ++l) {
    if (neuron_mask_[l].size() != config_.hidden_dims[l]) {
      throw ValidationError("neuron mask " + std::to_string(l) + " has wrong length");
    }
    if (std::none_of(neuron_mask_[l].begin(), neuron_mask_[l].end(), [](bool b) { return b; })) {
      throw ValidationError("hidden layer " + std::to_string(l) + " has every neuron masked");
    }
  }
}

namespace {

void require_input(const MlpModel& model, const Tensor& x) {
  if (x.cols() != model.config().input_dim) {
    throw ValidationError("input has " + std::to_string(x.cols()) + " features, model expects " +
                          std::to_string(model.config().input_dim));
  }
}

}  // namespace

ForwardTrace forward(const MlpModel& model, const Tensor& x) {
  require_input(model, x);
  ForwardTrace trace;
  const auto& layers = model.layers();
  const auto& masks = model.neuron_mask();
  Tensor h = x;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = relu(add_bias(matmul(h, layers[l].weight), layers[l].bias));
    for (std::size_t n = 0; n < masks[l].size(); ++n) {
      if (masks[l][n]) continue;
      for (std::size_t r = 0; r < h.rows(); ++r) h(r, n) = 0.0;
    }
    require_finite(h, "forward");
    trace.hidden_activations.push_back(h);
  }
  trace.logits = add_bias(matmul(h, layers.back().weight), layers.back().bias);
  require_finite(trace.logits, "forward");
  return trace;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    // max_element returns the first maximum, i.e. the lowest tied index.
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

std::vector<int> predict(const MlpModel& model, const Tensor& x) {
  return argmax_rows(forward(model, x).logits);
}

double accuracy_pct(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ValidationError("prediction/label length mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

GraphTrace forward_graph(const MlpModel& model, const Tensor& x) {
  require_input(model, x);
  GraphTrace g;
  ag::Node h = ag::Node::leaf(x, false);
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    g.weights.push_back(ag::Node::leaf(layers[l].weight));
    g.biases.push_back(ag::Node::leaf(layers[l].bias));
    ag::Node z = ag::add_bias(ag::matmul(h, g.weights.back()), g.biases.back());
    if (l + 1 < layers.size()) {
      h = ag::relu(z);
      g.hidden_activations.push_back(h);
    } else {
      g.logits = z;
    }
  }
  return g;
}

// ---- serialization -------------------------------------------------------

namespace {

json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()},
              {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

std::string model_to_json(const MlpModel& model) {
  for (const auto& l : model.layers()) {
    require_finite(l.weight, "model serialization");
    require_finite(l.bias, "model serialization");
  }
  const auto& cfg = model.config();
  json j;
  j["format"] = "spongelab-mlp";
  j["version"] = 1;
  j["config"] = {{"input_dim", cfg.input_dim},
                 {"hidden_dims", cfg.hidden_dims},
                 {"num_classes", cfg.num_classes},
                 {"activation", "relu"}};
  json layers = json::array();
  for (const auto& l : model.layers()) {
    layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}});
  }
  j["layers"] = std::move(layers);
  json masks = json::array();
  for (const auto& m : model.neuron_mask()) masks.push_back(std::vector<bool>(m));
  j["neuron_mask"] = std::move(masks);
  if (model.scaler()) {
    j["scaler"] = {{"mean", model.scaler()->mean}, {"stddev", model.scaler()->stddev}};
  }
  return j.dump(1);
}

MlpModel model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "spongelab-mlp") {
      throw ValidationError("not a spongelab model file");
    }
    const auto& c = j.at("config");
    if (c.value("activation", "relu") != "relu") {
      throw ValidationError("unsupported activation " + c.value("activation", ""));
    }
    MlpConfig cfg{c.at("input_dim").get<std::size_t>(),
                  c.at("hidden_dims").get<std::vector<std::size_t>>(),
                  c.at("num_classes").get<std::size_t>()};
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back({tensor_from_json(l.at("weight")), tensor_from_json(l.at("bias"))});
    }
    std::vector<std::vector<bool>> masks;
    if (j.contains("neuron_mask")) masks = j.at("neuron_mask").get<std::vector<std::vector<bool>>>();
    MlpModel model(std::move(cfg), std::move(layers), std::move(masks));
    if (j.contains("scaler")) {
      FeatureScaler s{j["scaler"].at("mean").get<std::vector<double>>(),
                      j["scaler"].at("stddev").get<std::vector<double>>()};
      model.set_scaler(std::move(s));
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  const std::string text = model_to_json(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace spongelab
