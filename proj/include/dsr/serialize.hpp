#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "dsr/bench.hpp"
#include "dsr/gbt.hpp"
#include "dsr/model.hpp"
#include "dsr/simulate.hpp"
#include "dsr/tableio.hpp"

namespace dsr {

// Shortest decimal that round-trips the exact double.
std::string format_double(double value);

// Writes to a temp file in the target directory, then renames into place.
void atomic_write_text(const std::filesystem::path& path, std::string_view text);

std::string model_to_text(const ModelFit& fit);
ModelFit model_from_text(std::string_view text);
void save_model(const std::filesystem::path& path, const ModelFit& fit);
ModelFit load_model(const std::filesystem::path& path);

std::string expert_to_text(const ExpertModel& model);
ExpertModel expert_from_text(std::string_view text);
void save_expert(const std::filesystem::path& path, const ExpertModel& model);
ExpertModel load_expert(const std::filesystem::path& path);

// Heatmap: two header lines carrying the axes, then one comma-separated
// row per prognostic value.
void write_heatmap(const std::filesystem::path& path, const HeatmapGrid& grid);
HeatmapGrid read_heatmap(const std::filesystem::path& path);

void write_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset_csv(const std::filesystem::path& path);

void write_truth(const std::filesystem::path& path, const ScenarioTruth& truth);
ScenarioTruth read_truth(const std::filesystem::path& path);

void write_benchmark_records(const std::filesystem::path& path,
                             std::span<const BenchmarkRecord> records);
void write_benchmark_summary(const std::filesystem::path& path,
                             std::span<const BenchmarkCell> cells);

void write_convergence(const std::filesystem::path& path,
                       const ConvergenceOutcome& outcome);

void write_bootstrap(const std::filesystem::path& path,
                     const BootstrapResult& result,
                     std::span<const std::string> feature_names);

std::string transform_to_text(const TransformRecord& record);
void save_transform(const std::filesystem::path& path,
                    const TransformRecord& record);

}  // namespace dsr
