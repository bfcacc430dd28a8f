#include "spongelab/energy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "spongelab/errors.hpp"

namespace spongelab {

double fraction_active(const Tensor& activations, double threshold) {
  if (activations.empty()) return 0.0;
  std::size_t active = 0;
  for (double v : activations.data()) active += std::abs(v) > threshold;
  return static_cast<double>(active) / static_cast<double>(activations.size());
}

std::vector<double> density(const ForwardTrace& trace, double threshold) {
  if (threshold < 0.0) throw ValidationError("density threshold must be non-negative");
  std::vector<double> out;
  out.reserve(trace.hidden_activations.size());
  for (const auto& h : trace.hidden_activations) out.push_back(fraction_active(h, threshold));
  return out;
}

std::uint64_t count_macs(const Tensor& input, const Tensor& weight, double threshold) {
  if (input.cols() != weight.rows()) {
    throw ValidationError("count_macs dimension mismatch: " + input.shape_str() + " x " +
                          weight.shape_str());
  }
  std::vector<std::uint64_t> fan_out(weight.rows(), 0);
  for (std::size_t i = 0; i < weight.rows(); ++i) {
    for (double w : weight.row(i)) fan_out[i] += w != 0.0;
  }
  std::uint64_t macs = 0;
  for (std::size_t r = 0; r < input.rows(); ++r) {
    auto a = input.row(r);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::abs(a[i]) > threshold) macs += fan_out[i];
    }
  }
  return macs;
}

EnergyReport energy_proxy(const MlpModel& model, const Tensor& x, double threshold) {
  if (threshold < 0.0) throw ValidationError("density threshold must be non-negative");
  const ForwardTrace trace = forward(model, x);
  EnergyReport rep;
  rep.per_layer_density = density(trace, threshold);
  double dsum = 0.0;
  for (double d : rep.per_layer_density) dsum += d;
  rep.mean_density = rep.per_layer_density.empty()
                         ? 0.0
                         : dsum / static_cast<double>(rep.per_layer_density.size());

  std::uint64_t executed = 0;
  std::uint64_t worst = 0;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor& input = l == 0 ? x : trace.hidden_activations[l - 1];
    executed += count_macs(input, layers[l].weight, threshold);
    worst += static_cast<std::uint64_t>(x.rows()) * layers[l].weight.rows() *
             layers[l].weight.cols();
  }
  rep.latency_ops = executed;
  rep.proxy_energy = static_cast<double>(executed);
  rep.worst_case_energy = static_cast<double>(worst);
  rep.energy_ratio = worst == 0 ? 0.0 : rep.proxy_energy / rep.worst_case_energy;
  return rep;
}

double wall_clock_latency(const MlpModel& model, const Tensor& x, int repeats) {
  if (repeats < 1) throw ValidationError("repeats must be at least 1");
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const ForwardTrace trace = forward(model, x);
    const auto t1 = std::chrono::steady_clock::now();
    // Keep the result observable so the call is not elided.
    if (trace.logits.rows() != x.rows()) throw NumericalError("forward lost rows");
    samples.push_back(std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9));
  }
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

std::string energy_csv_header() {
  return "mean_density,energy_ratio,proxy_energy,worst_case_energy,latency_ops,wall_clock_seconds";
}

std::string energy_csv_row(const EnergyReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.0f,%.0f,%llu,%.6f", r.mean_density, r.energy_ratio,
                r.proxy_energy, r.worst_case_energy,
                static_cast<unsigned long long>(r.latency_ops), r.wall_clock_seconds);
  return buf;
}

}  // namespace spongelab
