#pragma once

#include "simnl/harness.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace simnl {

inline constexpr int kReportFormatVersion = 1;

nlohmann::json config_to_json(const ExperimentConfig& config);

/// Parses a config document; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path);

/// The deterministic part of a run (everything except wall time).
nlohmann::json metrics_to_json(const SeedRun& run);

nlohmann::json run_to_json(const SeedRun& run);
nlohmann::json record_to_json(const ReportRecord& record);

nlohmann::json train_eval_report(const ReportRecord& record);
nlohmann::json sweep_report(const ExperimentConfig& config, SweepParam param,
                            const std::vector<SweepRow>& rows);
nlohmann::json noise_report(const ExperimentConfig& config, const std::vector<NoiseRow>& rows);
nlohmann::json ablation_report(const ExperimentConfig& config,
                               const std::vector<AblationRow>& rows);

/// Flat CSV (one line per table row) for sweep/noise/ablate reports.
std::string report_csv(const nlohmann::json& report);

/// Writes to a temp file in the same directory, then renames over `path`.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace simnl
