#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "spongelab/errors.hpp"
#include "spongelab/model.hpp"
#include "spongelab/pruning.hpp"
#include "test_support.hpp"

using namespace spongelab;
using testing_support::make_model;
using testing_support::to_tensor;

namespace {

MlpModel hand_222() {
  return make_model({Tensor{{1, -1}, {2, 1}}, Tensor{{1, 2}, {3, -1}}},
                    {Tensor{{0, 0.5}}, Tensor{{0.1, -0.1}}});
}

}  // namespace

TEST(MlpConfig, Validation) {
  EXPECT_THROW((MlpConfig{4, {}, 3}.validate()), ValidationError);
  EXPECT_THROW((MlpConfig{4, {8}, 1}.validate()), ValidationError);
  EXPECT_THROW((MlpConfig{0, {8}, 3}.validate()), ValidationError);
  EXPECT_NO_THROW((MlpConfig{4, {8}, 3}.validate()));
}

TEST(MlpModel, InitIsDeterministic) {
  const MlpConfig cfg{20, {16, 8}, 6};
  EXPECT_EQ(MlpModel::init(cfg, 42).checksum(), MlpModel::init(cfg, 42).checksum());
  EXPECT_NE(MlpModel::init(cfg, 42).checksum(), MlpModel::init(cfg, 43).checksum());
}

TEST(MlpModel, InitBiasesAreZero) {
  const MlpModel m = MlpModel::init({20, {16, 8}, 6}, 1);
  for (const auto& l : m.layers())
    for (double b : l.bias.data()) EXPECT_EQ(b, 0.0);
}

TEST(MlpModel, InitRespectsGlorotBound) {
  // 100 x 100 first layer gives 10^4 samples.
  const MlpModel m = MlpModel::init({100, {100}, 2}, 9);
  const double bound = std::sqrt(6.0 / 200.0);
  double mx = 0.0;
  for (double w : m.layers()[0].weight.data()) mx = std::max(mx, std::abs(w));
  EXPECT_LE(mx, bound);
  EXPECT_GT(mx, 0.95 * bound);  // the range is actually used
}

TEST(Forward, ZeroWeightsZeroInput) {
  MlpModel m = MlpModel::init({3, {4, 2}, 2}, 0);
  for (auto& l : m.mutable_layers()) l.weight.fill(0.0);
  const ForwardTrace t = forward(m, Tensor(5, 3));
  for (double v : t.logits.data()) EXPECT_EQ(v, 0.0);
  for (const auto& h : t.hidden_activations)
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityChain) {
  const MlpModel m = make_model({Tensor{{1}}, Tensor{{1, -1}}}, {Tensor{{0}}, Tensor{{0, 0}}});
  const ForwardTrace t = forward(m, Tensor{{1}});
  EXPECT_EQ(t.hidden_activations.at(0)[0], 1.0);
}

TEST(Forward, HandBuiltNetwork) {
  const ForwardTrace t = forward(hand_222(), Tensor{{1, 1}, {1, -1}});
  // Row 0: z1 = [3, 0.5] -> logits [4.6, 5.4]; row 1: z1 < 0 -> logits = b2.
  EXPECT_NEAR(t.logits(0, 0), 4.6, 1e-12);
  EXPECT_NEAR(t.logits(0, 1), 5.4, 1e-12);
  EXPECT_NEAR(t.logits(1, 0), 0.1, 1e-12);
  EXPECT_NEAR(t.logits(1, 1), -0.1, 1e-12);
  EXPECT_EQ(t.hidden_activations.size(), 1u);
}

TEST(Forward, RejectsWrongInputWidth) {
  EXPECT_THROW(forward(hand_222(), Tensor(1, 3)), ValidationError);
}

TEST(Forward, AgreesWithGraphForward) {
  const MlpModel m = MlpModel::init({5, {7, 4}, 3}, 12);
  std::mt19937_64 rng(1);
  const Tensor x = to_tensor(oracle::random_matrix(rng, 9, 5));
  const ForwardTrace plain = forward(m, x);
  const GraphTrace graph = forward_graph(m, x);
  EXPECT_EQ(plain.logits, graph.logits.value());
  for (std::size_t l = 0; l < plain.hidden_activations.size(); ++l) {
    EXPECT_EQ(plain.hidden_activations[l], graph.hidden_activations[l].value());
  }
}

TEST(Predict, ArgmaxAndTieRule) {
  EXPECT_EQ(argmax_rows(Tensor{{0.1, 0.9}}), std::vector<int>{1});
  EXPECT_EQ(argmax_rows(Tensor{{0.5, 0.5}}), std::vector<int>{0});
}

TEST(Predict, SeparableHandNetIsPerfect) {
  // h = [relu(x0), relu(-x0)], logits = h: class 0 iff x0 > 0.
  const MlpModel m = make_model({Tensor{{1, -1}, {0, 0}}, Tensor{{1, 0}, {0, 1}}},
                                {Tensor{{0, 0}}, Tensor{{0, 0}}});
  const Tensor x{{1, 0}, {2, 1}, {-1, 0}, {-3, 2}};
  const std::vector<int> y{0, 0, 1, 1};
  EXPECT_EQ(accuracy_pct(predict(m, x), y), 100.0);
}

TEST(Predict, IsPure) {
  const MlpModel m = MlpModel::init({4, {6}, 3}, 3);
  std::mt19937_64 rng(2);
  const Tensor x = to_tensor(oracle::random_matrix(rng, 10, 4));
  EXPECT_EQ(predict(m, x), predict(m, x));
  EXPECT_EQ(forward(m, x).logits, forward(m, x).logits);
}

TEST(MlpModel, MaskedNeuronsAreSilent) {
  MlpModel m = MlpModel::init({6, {8, 5}, 3}, 4);
  m.mask_neuron(0, 2);
  m.mask_neuron(1, 4);
  std::mt19937_64 rng(8);
  for (int probe = 0; probe < 50; ++probe) {
    const Tensor x = to_tensor(oracle::random_matrix(rng, 1, 6, -5, 5));
    const ForwardTrace t = forward(m, x);
    EXPECT_EQ(t.hidden_activations[0][2], 0.0);
    EXPECT_EQ(t.hidden_activations[1][4], 0.0);
  }
  EXPECT_EQ(m.masked_count(), 2u);
  for (std::size_t r = 0; r < 6; ++r) EXPECT_EQ(m.layers()[0].weight(r, 2), 0.0);
  for (double w : m.layers()[1].weight.row(2)) EXPECT_EQ(w, 0.0);
  EXPECT_EQ(m.layers()[0].bias[2], 0.0);
}

TEST(MlpModel, HiddenActivationCountMatchesConfig) {
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    MlpConfig cfg{3, std::vector<std::size_t>(depth, 4), 2};
    EXPECT_EQ(forward(MlpModel::init(cfg, depth), Tensor(2, 3)).hidden_activations.size(), depth);
  }
}

TEST(MlpModel, RejectsBrokenShapes) {
  EXPECT_THROW(make_model({Tensor(2, 3), Tensor(4, 2)}, {Tensor(1, 3), Tensor(1, 2)}),
               ValidationError);
}

TEST(Serialization, RoundTripIsBitExact) {
  MlpModel m = MlpModel::init({7, {5, 4}, 3}, 77);
  m.mutable_layers()[0].weight[0] = 0.1 + 0.2;          // not representable compactly
  m.mutable_layers()[1].bias[1] = 5e-324;               // subnormal
  m.mutable_layers()[2].weight[3] = -1.0 / 3.0;
  m.mask_neuron(0, 1);
  m.set_scaler(FeatureScaler{{1, 2, 3, 4, 5, 6, 7}, {0.5, 1, 1, 1, 1, 1, 2}});
  const MlpModel back = model_from_json(model_to_json(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.checksum(), m.checksum());
}

TEST(Serialization, FileRoundTripAndErrors) {
  const auto path = std::filesystem::temp_directory_path() / "spongelab_model_rt.json";
  const MlpModel m = neuron_prune(MlpModel::init({4, {8}, 2}, 5), 0.25);
  save_model(m, path);
  EXPECT_EQ(load_model(path), m);
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), IoError);
  EXPECT_THROW(model_from_json("{\"format\": \"other\"}"), ValidationError);
  EXPECT_THROW(model_from_json("not json"), ValidationError);
}
