#include "spongelab/scaler.hpp"

#include <cmath>

#include "spongelab/errors.hpp"

namespace spongelab {

FeatureScaler FeatureScaler::fit(const Tensor& train) {
  if (train.rows() == 0) throw ValidationError("cannot fit a scaler on zero rows");
  const std::size_t d = train.cols();
  const auto n = static_cast<double>(train.rows());
  FeatureScaler s;
  s.mean.assign(d, 0.0);
  s.stddev.assign(d, 0.0);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += train(i, j);
  }
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train(i, j) - s.mean[j];
      s.stddev[j] += c * c;
    }
  }
  for (double& v : s.stddev) v = std::sqrt(v / n + kVarianceFloor);
  return s;
}

Tensor FeatureScaler::apply(const Tensor& x) const {
  if (x.cols() != mean.size()) {
    throw ValidationError("scaler fitted on " + std::to_string(mean.size()) +
                          " columns applied to " + x.shape_str());
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] = (r[j] - mean[j]) / stddev[j];
  }
  return out;
}

}  // namespace spongelab
