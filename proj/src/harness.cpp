#include "spongelab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "spongelab/energy.hpp"
#include "spongelab/errors.hpp"
#include "spongelab/pruning.hpp"

namespace spongelab {

using nlohmann::json;

std::string to_string(PruneType t) {
  switch (t) {
    case PruneType::kNone: return "none";
    case PruneType::kWeight: return "weight";
    case PruneType::kNeuron: return "neuron";
  }
  return "none";
}

PruneType parse_prune_type(const std::string& s) {
  if (s == "none") return PruneType::kNone;
  if (s == "weight") return PruneType::kWeight;
  if (s == "neuron") return PruneType::kNeuron;
  throw ValidationError("unknown prune type '" + s + "' (expected none, weight or neuron)");
}

bool record_key_less(const ExperimentRecord& a, const ExperimentRecord& b) {
  return std::tie(a.dataset, a.seed, a.sponge_pct, a.prune_type, a.prune_pct) <
         std::tie(b.dataset, b.seed, b.sponge_pct, b.prune_type, b.prune_pct);
}

// ---- grid spec -----------------------------------------------------------

namespace {

template <typename T>
void require_unique(const std::vector<T>& v, const char* what) {
  std::set<T> s(v.begin(), v.end());
  if (s.size() != v.size()) throw ValidationError(std::string(what) + " contains duplicates");
}

std::size_t active_prune_types(const std::vector<PruneType>& types) {
  return static_cast<std::size_t>(
      std::count_if(types.begin(), types.end(), [](PruneType t) { return t != PruneType::kNone; }));
}

}  // namespace

void GridSpec::validate() const {
  if (sponge_pcts.empty() || prune_types.empty() || seeds.empty()) {
    throw ValidationError("grid spec lists must be non-empty");
  }
  if (active_prune_types(prune_types) > 0 && prune_pcts.empty()) {
    throw ValidationError("grid spec prune_pcts must be non-empty");
  }
  for (int p : sponge_pcts) {
    if (p < 0 || p > 100) throw ValidationError("sponge_pct " + std::to_string(p) + " outside [0, 100]");
  }
  for (int p : prune_pcts) {
    if (p <= 0 || p >= 100) throw ValidationError("prune_pct " + std::to_string(p) + " outside (0, 100)");
  }
  require_unique(sponge_pcts, "sponge_pcts");
  require_unique(prune_pcts, "prune_pcts");
  require_unique(prune_types, "prune_types");
  require_unique(seeds, "seeds");
  if (model.hidden_dims.empty()) throw ValidationError("grid spec model needs hidden_dims");
  train.validate();
  sponge.validate();
  if (timing_repeats < 0) throw ValidationError("timing_repeats must be >= 0");
  if (density_threshold < 0.0) throw ValidationError("density_threshold must be >= 0");
  if (jobs == 0) throw ValidationError("jobs must be >= 1");
}

std::size_t GridSpec::cells_per_seed() const {
  return sponge_pcts.size() * (1 + active_prune_types(prune_types) * prune_pcts.size());
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ValidationError(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

}  // namespace

GridSpec grid_spec_from_json(const std::string& text) {
  GridSpec s;
  try {
    const json j = json::parse(text);
    reject_unknown_keys(j, {"sponge_pcts", "prune_types", "prune_pcts", "seeds", "model", "train",
                            "sponge", "timing_repeats", "fine_tune_epochs", "density_threshold",
                            "jobs"}, "grid spec");
    if (j.contains("sponge_pcts")) s.sponge_pcts = j["sponge_pcts"].get<std::vector<int>>();
    if (j.contains("prune_pcts")) s.prune_pcts = j["prune_pcts"].get<std::vector<int>>();
    if (j.contains("seeds")) s.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("prune_types")) {
      s.prune_types.clear();
      for (const auto& t : j["prune_types"]) s.prune_types.push_back(parse_prune_type(t.get<std::string>()));
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown_keys(m, {"hidden_dims", "input_dim", "num_classes"}, "grid spec model");
      if (m.contains("hidden_dims")) s.model.hidden_dims = m["hidden_dims"].get<std::vector<std::size_t>>();
      s.model.input_dim = m.value("input_dim", s.model.input_dim);
      s.model.num_classes = m.value("num_classes", s.model.num_classes);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      reject_unknown_keys(t, {"learning_rate", "batch_size", "epochs", "test_split", "beta1",
                              "beta2", "epsilon"}, "grid spec train");
      s.train.learning_rate = t.value("learning_rate", s.train.learning_rate);
      s.train.batch_size = t.value("batch_size", s.train.batch_size);
      s.train.epochs = t.value("epochs", s.train.epochs);
      s.train.test_split = t.value("test_split", s.train.test_split);
      s.train.beta1 = t.value("beta1", s.train.beta1);
      s.train.beta2 = t.value("beta2", s.train.beta2);
      s.train.epsilon = t.value("epsilon", s.train.epsilon);
    }
    if (j.contains("sponge")) {
      const auto& sp = j["sponge"];
      reject_unknown_keys(sp, {"lambda", "sigma", "mode"}, "grid spec sponge");
      s.sponge.lambda = sp.value("lambda", s.sponge.lambda);
      s.sponge.sigma = sp.value("sigma", s.sponge.sigma);
      s.sponge.mode = parse_poison_mode(sp.value("mode", to_string(s.sponge.mode)));
    }
    s.timing_repeats = j.value("timing_repeats", s.timing_repeats);
    s.fine_tune_epochs = j.value("fine_tune_epochs", s.fine_tune_epochs);
    s.density_threshold = j.value("density_threshold", s.density_threshold);
    s.jobs = j.value("jobs", s.jobs);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed grid spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string grid_spec_to_json(const GridSpec& s) {
  json j;
  j["sponge_pcts"] = s.sponge_pcts;
  json types = json::array();
  for (PruneType t : s.prune_types) types.push_back(to_string(t));
  j["prune_types"] = types;
  j["prune_pcts"] = s.prune_pcts;
  j["seeds"] = s.seeds;
  j["model"] = {{"hidden_dims", s.model.hidden_dims}};
  j["train"] = {{"learning_rate", s.train.learning_rate}, {"batch_size", s.train.batch_size},
                {"epochs", s.train.epochs},               {"test_split", s.train.test_split},
                {"beta1", s.train.beta1},                 {"beta2", s.train.beta2},
                {"epsilon", s.train.epsilon}};
  j["sponge"] = {{"lambda", s.sponge.lambda},
                 {"sigma", s.sponge.sigma},
                 {"mode", to_string(s.sponge.mode)}};
  j["timing_repeats"] = s.timing_repeats;
  j["fine_tune_epochs"] = s.fine_tune_epochs;
  j["density_threshold"] = s.density_threshold;
  j["jobs"] = s.jobs;
  return j.dump(2);
}

// ---- grid execution ------------------------------------------------------

namespace {

struct Job {
  std::uint64_t seed;
  int sponge_pct;
};

std::string cell_key(const std::string& dataset, const Job& job, PruneType type, int prune_pct) {
  return "grid cell (dataset=" + dataset + ", seed=" + std::to_string(job.seed) +
         ", sponge_pct=" + std::to_string(job.sponge_pct) + ", prune_type=" + to_string(type) +
         ", prune_pct=" + std::to_string(prune_pct) + ")";
}

ExperimentRecord evaluate(const MlpModel& model, const Dataset& test, const GridSpec& spec,
                          const std::string& dataset, const Job& job, PruneType type,
                          int prune_pct) {
  ExperimentRecord r;
  r.dataset = dataset;
  r.sponge_pct = job.sponge_pct;
  r.prune_type = type;
  r.prune_pct = prune_pct;
  r.seed = job.seed;
  r.test_acc = accuracy_pct(predict(model, test.features), test.labels);
  const EnergyReport rep = energy_proxy(model, test.features, spec.density_threshold);
  r.energy_ratio = rep.energy_ratio;
  r.proxy_energy = rep.proxy_energy;
  r.latency_ops = rep.latency_ops;
  if (spec.timing_repeats > 0) {
    r.wall_clock_s = wall_clock_latency(model, test.features, spec.timing_repeats);
  }
  return r;
}

[[noreturn]] void rethrow_with_key(std::exception_ptr e, const std::string& key) {
  try {
    std::rethrow_exception(e);
  } catch (const ValidationError& x) {
    throw ValidationError(key + ": " + x.what());
  } catch (const IoError& x) {
    throw IoError(key + ": " + x.what());
  } catch (const NumericalError& x) {
    throw NumericalError(key + ": " + x.what());
  } catch (const std::exception& x) {
    throw std::runtime_error(key + ": " + x.what());
  }
}

}  // namespace

std::vector<ExperimentRecord> run_grid(const GridSpec& spec, const Dataset& dataset,
                                       const GridOptions& options) {
  spec.validate();
  dataset.validate();
  if (dataset.name.find_first_of(",\n\"") != std::string::npos) {
    throw ValidationError("dataset name must not contain commas, quotes or newlines");
  }

  std::vector<Job> jobs;
  for (std::uint64_t seed : spec.seeds) {
    for (int pct : spec.sponge_pcts) jobs.push_back({seed, pct});
  }

  std::mutex mu;
  std::vector<ExperimentRecord> records;
  std::exception_ptr failure;
  std::string failure_key;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    while (!stop) {
      const std::size_t i = next++;
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      std::string key = cell_key(dataset.name, job, PruneType::kNone, 0);
      try {
        TrainConfig tc = spec.train;
        tc.seed = job.seed;
        SpongeConfig sc = spec.sponge;
        sc.poison_fraction = job.sponge_pct / 100.0;
        const TrainResult trained = train(dataset, spec.model, tc, sc);
        const Dataset& test = trained.data.test;

        std::vector<ExperimentRecord> local;
        local.push_back(evaluate(trained.model, test, spec, dataset.name, job, PruneType::kNone, 0));
        for (PruneType type : spec.prune_types) {
          if (type == PruneType::kNone) continue;
          for (int pct : spec.prune_pcts) {
            key = cell_key(dataset.name, job, type, pct);
            const PruneConfig pc{type == PruneType::kWeight ? PruneMethod::kWeight
                                                            : PruneMethod::kNeuron,
                                 pct / 100.0};
            MlpModel pruned = prune(trained.model, pc);
            if (spec.fine_tune_epochs > 0) {
              fine_tune(pruned, trained.data.train, tc, spec.fine_tune_epochs);
            }
            local.push_back(evaluate(pruned, test, spec, dataset.name, job, type, pct));
          }
        }
        std::lock_guard lock(mu);
        records.insert(records.end(), local.begin(), local.end());
        if (options.progress) {
          options.progress("seed " + std::to_string(job.seed) + " sponge " +
                           std::to_string(job.sponge_pct) + "% done (" +
                           std::to_string(local.size()) + " records)");
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) {
          failure = std::current_exception();
          failure_key = key;
        }
        stop = true;
        return;
      }
    }
  };

  const std::size_t n_threads = std::min(spec.jobs, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  std::sort(records.begin(), records.end(), record_key_less);
  if (failure) {
    if (options.partial_csv && !records.empty()) {
      write_text_file(*options.partial_csv, records_to_csv(records));
    }
    rethrow_with_key(failure, failure_key);
  }
  return records;
}

// ---- CSV -----------------------------------------------------------------

std::string records_csv_header() {
  return "dataset,sponge_pct,prune_type,prune_pct,test_acc,energy_ratio,proxy_energy,latency_ops,"
         "wall_clock_s,seed";
}

std::string records_to_csv(const std::vector<ExperimentRecord>& records) {
  std::string out = records_csv_header() + "\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%d,%s,%d,%.6g,%.6g,%.6g,%llu,%.6g,%llu\n",
                  r.dataset.c_str(), r.sponge_pct, to_string(r.prune_type).c_str(), r.prune_pct,
                  r.test_acc, r.energy_ratio, r.proxy_energy,
                  static_cast<unsigned long long>(r.latency_ops), r.wall_clock_s,
                  static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

std::vector<ExperimentRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("records CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != records_csv_header()) throw ValidationError("records CSV has an unexpected header");
  std::vector<ExperimentRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) {
      throw ValidationError("records CSV line " + std::to_string(lineno) + " has " +
                            std::to_string(f.size()) + " fields, expected 10");
    }
    try {
      ExperimentRecord r;
      r.dataset = f[0];
      r.sponge_pct = std::stoi(f[1]);
      r.prune_type = parse_prune_type(f[2]);
      r.prune_pct = std::stoi(f[3]);
      r.test_acc = std::stod(f[4]);
      r.energy_ratio = std::stod(f[5]);
      r.proxy_energy = std::stod(f[6]);
      r.latency_ops = std::stoull(f[7]);
      r.wall_clock_s = std::stod(f[8]);
      r.seed = std::stoull(f[9]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ValidationError("records CSV line " + std::to_string(lineno) + " is not numeric");
    }
  }
  return out;
}

void emit_csv(const std::vector<ExperimentRecord>& records, const std::filesystem::path& path) {
  if (records.empty()) throw ValidationError("no records to write");
  write_text_file(path, records_to_csv(records));
}

std::vector<ExperimentRecord> load_records_csv(const std::filesystem::path& path) {
  return records_from_csv(read_text_file(path));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- trend charts ----------------------------------------------------------

namespace {

double metric_value(const ExperimentRecord& r, const std::string& metric) {
  if (metric == "test_acc") return r.test_acc;
  if (metric == "energy_ratio") return r.energy_ratio;
  if (metric == "latency_ops") return static_cast<double>(r.latency_ops);
  throw ValidationError("unknown metric '" + metric +
                        "' (expected test_acc, energy_ratio or latency_ops)");
}

std::string field_text(const ExperimentRecord& r, const std::string& field) {
  if (field == "dataset") return r.dataset;
  if (field == "sponge_pct") return std::to_string(r.sponge_pct);
  if (field == "prune_type") return to_string(r.prune_type);
  if (field == "prune_pct") return std::to_string(r.prune_pct);
  if (field == "seed") return std::to_string(r.seed);
  throw ValidationError("unknown group-by field '" + field + "'");
}

double x_value(const ExperimentRecord& r, const std::string& field) {
  if (field == "sponge_pct") return r.sponge_pct;
  if (field == "prune_pct") return r.prune_pct;
  throw ValidationError("x axis must be sponge_pct or prune_pct, got '" + field + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::pair<double, double> padded(double lo, double hi) {
  double pad = 0.05 * (hi - lo);
  if (pad == 0.0) pad = lo == 0.0 ? 0.5 : 0.05 * std::abs(lo);
  return {lo - pad, hi + pad};
}

}  // namespace

TrendChart build_trend(const std::vector<ExperimentRecord>& records, const std::string& metric,
                       const std::string& group_by, const std::string& x_field) {
  if (records.empty()) throw ValidationError("no records to plot");
  metric_value(records.front(), metric);
  const auto groups = split_list(group_by);
  if (groups.empty()) throw ValidationError("group-by needs at least one field");
  for (const auto& g : groups) field_text(records.front(), g);

  TrendChart chart;
  chart.metric = metric;
  chart.x_field = x_field.empty()
                      ? (std::find(groups.begin(), groups.end(), "sponge_pct") != groups.end()
                             ? "prune_pct"
                             : "sponge_pct")
                      : x_field;
  x_value(records.front(), chart.x_field);

  // group label -> x -> (sum, count)
  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  for (const auto& r : records) {
    std::string label;
    for (const auto& g : groups) label += (label.empty() ? "" : " ") + g + "=" + field_text(r, g);
    auto& cell = acc[label][x_value(r, chart.x_field)];
    cell.first += metric_value(r, metric);
    cell.second += 1;
  }

  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& [label, points] : acc) {
    TrendSeries s{label, {}, {}};
    for (const auto& [x, sc] : points) {
      const double y = sc.first / sc.second;
      s.xs.push_back(x);
      s.ys.push_back(y);
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
    chart.series.push_back(std::move(s));
  }
  std::tie(chart.x_min, chart.x_max) = padded(xlo, xhi);
  std::tie(chart.y_min, chart.y_max) = padded(ylo, yhi);
  return chart;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const TrendChart& c) {
  constexpr double kW = 720, kH = 440, kLeft = 80, kRight = 200, kTop = 40, kBottom = 60;
  constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - c.x_min) / (c.x_max - c.x_min) * pw; };
  auto sy = [&](double y) { return kTop + ph - (y - c.y_min) / (c.y_max - c.y_min) * ph; };

  std::string out;
  char buf[512];
  auto emit = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out += buf;
  };
  emit("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
       "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\" font-size=\"12\">\n",
       kW, kH, kW, kH);
  emit("<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"white\"/>\n", kW, kH);
  emit("<text x=\"%.2f\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">", kLeft + pw / 2);
  out += xml_escape(c.metric) + " vs " + xml_escape(c.x_field) + "</text>\n";
  emit("<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
       "stroke=\"black\"/>\n", kLeft, kTop, pw, ph);
  for (int i = 0; i <= 4; ++i) {
    const double xv = c.x_min + (c.x_max - c.x_min) * i / 4.0;
    const double yv = c.y_min + (c.y_max - c.y_min) * i / 4.0;
    emit("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n", sx(xv),
         kTop, sx(xv), kTop + ph);
    emit("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n", kLeft,
         sy(yv), kLeft + pw, sy(yv));
    emit("<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%.4g</text>\n", sx(xv),
         kTop + ph + 18, xv);
    emit("<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\">%.4g</text>\n", kLeft - 6, sy(yv) + 4,
         yv);
  }
  emit("<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%s</text>\n", kLeft + pw / 2, kH - 16,
       c.x_field.c_str());
  emit("<text x=\"18\" y=\"%.2f\" text-anchor=\"middle\" transform=\"rotate(-90 18 %.2f)\">%s"
       "</text>\n", kTop + ph / 2, kTop + ph / 2, c.metric.c_str());

  for (std::size_t s = 0; s < c.series.size(); ++s) {
    const auto& series = c.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    out += "<polyline fill=\"none\" stroke=\"";
    out += color;
    out += "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series.xs.size(); ++i) {
      emit("%s%.2f,%.2f", i ? " " : "", sx(series.xs[i]), sy(series.ys[i]));
    }
    out += "\"/>\n";
    const double ly = kTop + 14 + 18 * static_cast<double>(s);
    emit("<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-width=\"2\"/>\n",
         kLeft + pw + 12, ly - 4, kLeft + pw + 32, ly - 4, color);
    emit("<text x=\"%.2f\" y=\"%.2f\">", kLeft + pw + 38, ly);
    out += xml_escape(series.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

void emit_trend_svg(const std::vector<ExperimentRecord>& records, const std::string& metric,
                    const std::string& group_by, const std::filesystem::path& path,
                    const std::string& x_field) {
  write_text_file(path, render_svg(build_trend(records, metric, group_by, x_field)));
}

}  // namespace spongelab
