#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spongelab/scaler.hpp"
#include "spongelab/tensor.hpp"

namespace spongelab {

struct Dataset {
  Tensor features;          // [n x d]
  std::vector<int> labels;  // length n, values in [0, num_classes)
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
  std::vector<std::size_t> class_counts() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct WindowSpec {
  std::size_t window_len = 0;
  std::size_t stride = 0;
  bool flatten = true;
};

/// Header row, numeric columns, one integer label column. Returned features
/// are raw; standardization happens after splitting (see prepare_split).
Dataset load_feature_csv(const std::filesystem::path& path, const std::string& label_column);

/// Columns: session_id, label, then channels. Windows are cut per session in
/// order of first appearance; window label is the majority label (ties go to
/// the lower class). With flatten, a window is laid out time-major:
/// [t0c0, t0c1, ..., t1c0, ...].
Dataset window_series_csv(const std::filesystem::path& path, const WindowSpec& spec,
                          const std::string& label_column = "label");

/// Number of windows a series of `length` rows yields.
std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t stride);

/// Gaussian blobs with per-class centers in [-1, 1]^dim, rejection-sampled
/// so that every pair of centers is at least 4*spread apart.
Dataset synth_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim,
                    double spread, std::uint64_t seed);

/// Stratified seeded split; |test| = sum over classes of round(f * n_c).
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed);

struct PreparedSplit {
  Dataset train;
  Dataset test;
  FeatureScaler scaler;
};

/// split() followed by standardization with statistics from the train part.
PreparedSplit prepare_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

}  // namespace spongelab
