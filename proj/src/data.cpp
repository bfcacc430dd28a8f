#include "spongelab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <string_view>

#include "spongelab/errors.hpp"
#include "spongelab/rng.hpp"

namespace spongelab {

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw ValidationError("dataset '" + name + "' has " + std::to_string(features.rows()) +
                          " feature rows but " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ValidationError("dataset '" + name + "' is empty");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ValidationError("dataset '" + name + "' has label " + std::to_string(y) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!features.all_finite()) throw ValidationError("dataset '" + name + "' has non-finite features");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = select_rows(features, rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels[r]);
  out.num_classes = num_classes;
  out.name = name;
  return out;
}

// ---- CSV ------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_label(std::string_view s, int& out) {
  double v = 0.0;
  if (!parse_double(s, v) || v != std::floor(v) || v < 0 || v > 1e9) return false;
  out = static_cast<int>(v);
  return true;
}

struct CsvTable {
  std::vector<std::string> header;
  // (1-based line number, fields)
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    std::vector<std::string> owned(fields.begin(), fields.end());
    if (t.header.empty()) {
      t.header = std::move(owned);
      continue;
    }
    if (owned.size() != t.header.size()) {
      throw ValidationError(path.string() + ": line " + std::to_string(lineno) + " has " +
                            std::to_string(owned.size()) + " fields, header has " +
                            std::to_string(t.header.size()));
    }
    t.rows.emplace_back(lineno, std::move(owned));
  }
  if (t.header.empty()) throw ValidationError(path.string() + ": empty file");
  if (t.rows.empty()) throw ValidationError(path.string() + ": no data rows");
  return t;
}

std::size_t column_index(const CsvTable& t, const std::string& name,
                         const std::filesystem::path& path) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) {
    throw ValidationError(path.string() + ": no column named '" + name + "'");
  }
  return static_cast<std::size_t>(it - t.header.begin());
}

std::size_t infer_classes(const std::vector<int>& labels) {
  const int mx = *std::max_element(labels.begin(), labels.end());
  return std::max<std::size_t>(2, static_cast<std::size_t>(mx) + 1);
}

}  // namespace

Dataset load_feature_csv(const std::filesystem::path& path, const std::string& label_column) {
  const CsvTable t = read_csv(path);
  const std::size_t label_idx = column_index(t, label_column, path);
  const std::size_t d = t.header.size() - 1;
  if (d == 0) throw ValidationError(path.string() + ": no feature columns");

  Dataset ds;
  ds.name = path.stem().string();
  ds.features = Tensor(t.rows.size(), d);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& [lineno, fields] = t.rows[i];
    std::size_t c = 0;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == label_idx) {
        int y = 0;
        if (!parse_label(fields[j], y)) {
          throw ValidationError(path.string() + ": line " + std::to_string(lineno) +
                                ": label '" + fields[j] + "' is not a non-negative integer");
        }
        ds.labels.push_back(y);
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[j], v)) {
        throw ValidationError(path.string() + ": line " + std::to_string(lineno) +
                              ": non-numeric value '" + fields[j] + "' in column '" +
                              t.header[j] + "'");
      }
      ds.features(i, c++) = v;
    }
  }
  ds.num_classes = infer_classes(ds.labels);
  ds.validate();
  return ds;
}

std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t stride) {
  if (window_len == 0 || stride == 0 || length < window_len) return 0;
  return (length - window_len) / stride + 1;
}

Dataset window_series_csv(const std::filesystem::path& path, const WindowSpec& spec,
                          const std::string& label_column) {
  if (spec.window_len == 0 || spec.stride == 0) {
    throw ValidationError("window_len and stride must be positive");
  }
  const CsvTable t = read_csv(path);
  const std::size_t session_idx = column_index(t, "session_id", path);
  const std::size_t label_idx = column_index(t, label_column, path);
  std::vector<std::size_t> channel_idx;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j != session_idx && j != label_idx) channel_idx.push_back(j);
  }
  if (channel_idx.empty()) throw ValidationError(path.string() + ": no channel columns");
  const std::size_t channels = channel_idx.size();

  struct Session {
    std::string id;
    std::vector<double> values;  // time-major, `channels` per step
    std::vector<int> labels;
  };
  std::vector<Session> sessions;
  std::map<std::string, std::size_t> by_id;
  for (const auto& [lineno, fields] : t.rows) {
    const std::string& sid = fields[session_idx];
    auto [it, fresh] = by_id.try_emplace(sid, sessions.size());
    if (fresh) sessions.push_back({sid, {}, {}});
    Session& s = sessions[it->second];
    int y = 0;
    if (!parse_label(fields[label_idx], y)) {
      throw ValidationError(path.string() + ": line " + std::to_string(lineno) + ": label '" +
                            fields[label_idx] + "' is not a non-negative integer");
    }
    s.labels.push_back(y);
    for (std::size_t c : channel_idx) {
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw ValidationError(path.string() + ": line " + std::to_string(lineno) +
                              ": non-numeric value '" + fields[c] + "' in column '" +
                              t.header[c] + "'");
      }
      s.values.push_back(v);
    }
  }

  std::size_t num_classes = 0;
  for (const auto& s : sessions) {
    if (s.labels.size() < spec.window_len) {
      throw ValidationError("window length " + std::to_string(spec.window_len) +
                            " exceeds session '" + s.id + "' of length " +
                            std::to_string(s.labels.size()));
    }
    num_classes = std::max(num_classes, infer_classes(s.labels));
  }

  const std::size_t d = spec.flatten ? spec.window_len * channels : channels;
  std::vector<double> feats;
  Dataset ds;
  ds.name = path.stem().string();
  ds.num_classes = num_classes;
  for (const auto& s : sessions) {
    const std::size_t len = s.labels.size();
    const std::size_t count = window_count(len, spec.window_len, spec.stride);
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = w * spec.stride;
      std::vector<std::size_t> votes(num_classes, 0);
      for (std::size_t t_ = start; t_ < start + spec.window_len; ++t_) {
        ++votes[static_cast<std::size_t>(s.labels[t_])];
      }
      ds.labels.push_back(
          static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
      if (spec.flatten) {
        const auto* first = s.values.data() + start * channels;
        feats.insert(feats.end(), first, first + spec.window_len * channels);
      } else {
        // Unflattened windows are summarized by their per-channel mean.
        for (std::size_t c = 0; c < channels; ++c) {
          double acc = 0.0;
          for (std::size_t t_ = start; t_ < start + spec.window_len; ++t_) {
            acc += s.values[t_ * channels + c];
          }
          feats.push_back(acc / static_cast<double>(spec.window_len));
        }
      }
    }
  }
  ds.features = Tensor(ds.labels.size(), d, std::move(feats));
  ds.validate();
  return ds;
}

// ---- synthetic data ------------------------------------------------------

Dataset synth_blobs(std::size_t n_per_class, std::size_t num_classes, std::size_t dim,
                    double spread, std::uint64_t seed) {
  if (n_per_class == 0 || num_classes == 0 || dim == 0 || !(spread > 0.0)) {
    throw ValidationError("synth_blobs parameters must all be positive");
  }
  constexpr int kMaxAttempts = 1000;
  Rng rng(seed, Stream::kData);
  const double min_dist2 = 16.0 * spread * spread;
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < num_classes; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      std::vector<double> cand(dim);
      for (double& v : cand) v = rng.uniform(-1.0, 1.0);
      placed = std::all_of(centers.begin(), centers.end(), [&](const auto& other) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < dim; ++k) d2 += (cand[k] - other[k]) * (cand[k] - other[k]);
        return d2 >= min_dist2;
      });
      if (placed) centers.push_back(std::move(cand));
    }
    if (!placed) {
      throw ValidationError("synth_blobs: could not place center " + std::to_string(c) +
                            " after 1000 attempts (spread too large)");
    }
  }

  Dataset ds;
  ds.name = "synth";
  ds.num_classes = num_classes;
  ds.features = Tensor(n_per_class * num_classes, dim);
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t k = 0; k < dim; ++k) {
        ds.features(row, k) = centers[c][k] + spread * rng.normal();
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  ds.validate();
  return ds;
}

// ---- splitting -----------------------------------------------------------

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction,
                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ValidationError("test fraction must lie in (0, 1)");
  }
  dataset.validate();
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  }
  Rng rng(seed, Stream::kSplit);
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw ValidationError("class " + std::to_string(c) + " has fewer than 2 samples");
    }
    rng.shuffle(std::span(rows));
    // Every class keeps at least one training row.
    const auto n_test = std::min(
        rows.size() - 1,
        static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(rows.size()))));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  if (test_rows.empty()) {
    throw ValidationError("test fraction " + std::to_string(test_fraction) +
                          " leaves the test split empty");
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {dataset.subset(train_rows), dataset.subset(test_rows)};
}

PreparedSplit prepare_split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
  auto [train, test] = split(dataset, test_fraction, seed);
  PreparedSplit out;
  out.scaler = FeatureScaler::fit(train.features);
  train.features = out.scaler.apply(train.features);
  if (!test.labels.empty()) test.features = out.scaler.apply(test.features);
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

}  // namespace spongelab
