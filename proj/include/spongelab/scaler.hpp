#pragma once

#include <vector>

#include "spongelab/tensor.hpp"

namespace spongelab {

/// Per-column standardization fitted on training rows only.
struct FeatureScaler {
  static constexpr double kVarianceFloor = 1e-12;

  std::vector<double> mean;
  std::vector<double> stddev;

  static FeatureScaler fit(const Tensor& train);
  Tensor apply(const Tensor& x) const;
  bool empty() const { return mean.empty(); }

  friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

}  // namespace spongelab
