#pragma once

#include "simnl/classifier.hpp"
#include "simnl/embedding_store.hpp"
#include "simnl/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace simnl {

/// Precomputed stores on disk.
struct FileSource {
    std::filesystem::path support;
    std::filesystem::path query;
    std::filesystem::path text_pos;
    std::filesystem::path text_neg;
};

/// Generated data. Without a fixed seed, each run seed generates its own dataset.
struct SyntheticSource {
    SyntheticParams params;
    std::optional<std::uint64_t> fixed_seed;
};

struct ExperimentConfig {
    std::optional<FileSource> files;
    std::optional<SyntheticSource> synthetic;
    HyperParams hp;
    Variant variant = Variant::full;
    LossMode loss_mode = LossMode::ensemble_ce;
    double noise_fraction = 0.0;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::optional<std::filesystem::path> output;
};

// Every random stream of a run derives from its seed by a fixed offset.
inline constexpr std::uint64_t kNegativeCacheSeedOffset = 101;
inline constexpr std::uint64_t kShuffleSeedOffset = 202;
inline constexpr std::uint64_t kFlipSeedOffset = 303;

/// Throws ArgumentError when the config cannot run (no data source, empty
/// seeds, bad fractions, missing files, ...).
void check_config(const ExperimentConfig& config);

struct BranchMeans {
    double t_pos = 0.0;
    double v_pos = 0.0;
    double t_neg = 0.0;
    double v_neg = 0.0;
    double final = 0.0;
    double positive_mix = 0.0;  // mean of lambda * (S_T+ + S_V+)
    double negative_mix = 0.0;  // mean of (1 - lambda) * (S_T- + S_V-)
};

struct ResidualMaxAbs {
    double t_pos = 0.0;
    double t_neg = 0.0;
    double v_pos = 0.0;
    double v_neg = 0.0;
};

/// Mean positive-cache confidence of support rows whose label was flipped vs
/// rows that kept their label. Computed even when reweighting is off.
struct ConfidenceSplit {
    std::optional<double> clean_mean;
    std::optional<double> flipped_mean;
    std::int64_t clean_count = 0;
    std::int64_t flipped_count = 0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    EvalMetrics metrics;
    double zero_shot_top1 = 0.0;
    Deltas deltas;
    BranchMeans branch_means;
    ResidualMaxAbs residual_max_abs;
    ConfidenceSplit confidence;
    TrainTrace trace;
    double wall_time_seconds = 0.0;
};

struct Aggregate {
    double top1_mean = 0.0;
    double top1_sd = 0.0;  // sample standard deviation; 0 for a single seed
    double zero_shot_top1_mean = 0.0;
    double zero_shot_top1_sd = 0.0;
    std::size_t runs = 0;
};

Aggregate aggregate(const std::vector<SeedRun>& runs);

struct ReportRecord {
    ExperimentConfig config;
    std::vector<SeedRun> runs;
    Aggregate summary;
};

/// One complete pipeline for one seed: data, optional label flips, caches,
/// reweighting, delta calibration, training, evaluation.
SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed);

ReportRecord run_train_eval(const ExperimentConfig& config);

enum class SweepParam { lambda, tau, alpha, beta };
std::string_view to_string(SweepParam param);
SweepParam parse_sweep_param(std::string_view text);

struct SweepRow {
    double value = 0.0;
    ReportRecord record;
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepParam param,
                                const std::vector<double>& grid);

struct NoiseRow {
    double fraction = 0.0;
    bool reweighting = false;
    ReportRecord record;
};

/// Every fraction is run with reweighting on and off over the same seeds.
std::vector<NoiseRow> run_noise(const ExperimentConfig& config,
                                const std::vector<double>& fractions);

struct AblationRow {
    Variant variant = Variant::full;
    ReportRecord record;
};

/// Runs full, T, V, P and N with shared seeds.
std::vector<AblationRow> run_ablation(const ExperimentConfig& config);

struct GeneratedFiles {
    std::filesystem::path support;
    std::filesystem::path query;
    std::filesystem::path text_pos;
    std::filesystem::path text_neg;
};

/// Writes support.snle, query.snle, text_pos.snle and text_neg.snle into `out_dir`.
GeneratedFiles write_synthetic(const SyntheticParams& params, const std::filesystem::path& out_dir);

}  // namespace simnl
