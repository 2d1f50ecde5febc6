#include "dsr/bench.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "dsr/rng.hpp"

namespace dsr {

std::vector<BenchmarkRecord> benchmark_optimizers(
    int scenario_id, std::span<const std::size_t> sizes, std::size_t reps,
    const std::map<OptimizerKind, FitConfig>& config_map, std::uint64_t seed) {
  if (reps == 0) throw std::invalid_argument("reps must be at least 1");
  if (config_map.empty()) throw std::invalid_argument("no optimizer configs given");

  std::vector<BenchmarkRecord> records;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const std::size_t n = sizes[si];
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const std::uint64_t cell = si * 1000003ull + rep;
      // One dataset per (n, rep), shared by all methods.
      SimulatedSample sample;
      bool generated = false;
      std::string generate_error;
      try {
        sample = generate_scenario(scenario_id, n,
                                   substream_seed(seed, "bench-data", cell));
        generated = true;
      } catch (const std::exception& e) {
        generate_error = e.what();
      }

      std::size_t method_slot = 0;
      for (const auto& [method, base_config] : config_map) {
        BenchmarkRecord record;
        record.method = method;
        record.n = n;
        record.rep = rep;
        if (!generated) {
          record.failed = true;
          record.error = generate_error;
          records.push_back(std::move(record));
          ++method_slot;
          continue;
        }
        FitConfig config = base_config;
        config.optimizer = method;
        config.seed =
            substream_seed(seed, "bench-fit", cell * 8ull + method_slot);
        try {
          const auto started = std::chrono::steady_clock::now();
          const ModelFit model = fit(sample.dataset, config);
          record.runtime_s = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
          record.objective = model.objective_value;
          record.heatmap_mse = g_mse(model, sample.truth, 200);
        } catch (const std::exception& e) {
          record.failed = true;
          record.error = e.what();
        }
        records.push_back(std::move(record));
        ++method_slot;
      }
    }
  }
  return records;
}

namespace {

struct Accumulator {
  double sum = 0.0, sumsq = 0.0;
  std::size_t count = 0;
  void add(double v) {
    sum += v;
    sumsq += v * v;
    ++count;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  double sd() const {
    if (count < 2) return 0.0;
    const double var = (sumsq - sum * sum / static_cast<double>(count)) /
                       static_cast<double>(count - 1);
    return std::sqrt(std::max(var, 0.0));
  }
};

}  // namespace

std::vector<BenchmarkCell> summarize_benchmark(
    std::span<const BenchmarkRecord> records) {
  std::map<std::pair<int, std::size_t>, std::array<Accumulator, 3>> cells;
  for (const BenchmarkRecord& r : records) {
    if (r.failed) continue;
    auto& acc = cells[{static_cast<int>(r.method), r.n}];
    acc[0].add(r.runtime_s);
    acc[1].add(r.objective);
    acc[2].add(r.heatmap_mse);
  }
  std::vector<BenchmarkCell> out;
  for (const auto& [key, acc] : cells) {
    BenchmarkCell cell;
    cell.method = static_cast<OptimizerKind>(key.first);
    cell.n = key.second;
    cell.reps_ok = acc[0].count;
    cell.runtime_mean = acc[0].mean();
    cell.runtime_sd = acc[0].sd();
    cell.objective_mean = acc[1].mean();
    cell.objective_sd = acc[1].sd();
    cell.mse_mean = acc[2].mean();
    cell.mse_sd = acc[2].sd();
    out.push_back(cell);
  }
  return out;
}

}  // namespace dsr
