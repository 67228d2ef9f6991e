#include "simnl/harness.hpp"

#include "simnl/caches.hpp"
#include "simnl/errors.hpp"
#include "simnl/reweighting.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

namespace simnl {

namespace {

struct RunData {
    SupportQuerySplit split;
    EmbeddingSet text_pos;
    EmbeddingSet text_neg;
};

int infer_shots(const EmbeddingSet& support) {
    if (!support.labels || support.num_classes < 1) {
        throw ArgumentError("support store must be labeled");
    }
    if (support.size() % support.num_classes != 0) {
        throw ArgumentError("support rows (" + std::to_string(support.size()) +
                            ") are not a multiple of the class count");
    }
    return static_cast<int>(support.size() / support.num_classes);
}

RunData load_data(const ExperimentConfig& config, std::uint64_t seed) {
    if (config.synthetic) {
        SyntheticParams params = config.synthetic->params;
        params.seed = config.synthetic->fixed_seed.value_or(seed);
        auto ds = synth_generate(params);
        return {std::move(ds.split), std::move(ds.text_pos), std::move(ds.text_neg)};
    }
    const auto& f = *config.files;
    RunData data;
    data.split.support = load_store(f.support);
    data.split.query = load_store(f.query);
    data.split.shots = infer_shots(data.split.support);
    data.text_pos = load_store(f.text_pos);
    data.text_neg = load_store(f.text_neg);
    if (!data.split.query.labels) throw ArgumentError("query store must be labeled");
    return data;
}

double mean_of(const MatrixF& m) { return m.size() ? m.cast<double>().mean() : 0.0; }

ConfidenceSplit split_confidences(const CacheSet& cache, const SupportQuerySplit& noisy,
                                  const SupportQuerySplit& clean, double tau) {
    ConfidenceSplit out;
    const auto rw = reweight_rows(cache.v_pos, cache.num_classes, cache.shots, tau);
    const auto order = cache_row_order(noisy);
    double clean_sum = 0.0;
    double flipped_sum = 0.0;
    for (int c = 0; c < cache.num_classes; ++c) {
        for (int k = 0; k < cache.shots; ++k) {
            const auto row = static_cast<std::size_t>(order[static_cast<std::size_t>(c) * cache.shots + k]);
            const double confidence = rw.confidences[c][k];
            if ((*noisy.support.labels)[row] != (*clean.support.labels)[row]) {
                flipped_sum += confidence;
                ++out.flipped_count;
            } else {
                clean_sum += confidence;
                ++out.clean_count;
            }
        }
    }
    if (out.clean_count > 0) out.clean_mean = clean_sum / static_cast<double>(out.clean_count);
    if (out.flipped_count > 0) out.flipped_mean = flipped_sum / static_cast<double>(out.flipped_count);
    return out;
}

}  // namespace

void check_config(const ExperimentConfig& config) {
    if (config.files.has_value() == config.synthetic.has_value()) {
        throw ArgumentError("config needs exactly one data source: files or synthetic");
    }
    if (config.seeds.empty()) throw ArgumentError("seeds list must not be empty");
    if (!(config.noise_fraction >= 0.0 && config.noise_fraction <= 1.0)) {
        throw ArgumentError("noise_fraction must lie in [0, 1]");
    }
    const auto& hp = config.hp;
    if (!(hp.lambda >= 0.0 && hp.lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
    if (!(hp.tau > 0.0)) throw ArgumentError("tau must be > 0");
    if (!(hp.alpha >= 0.0) || !std::isfinite(hp.alpha)) throw ArgumentError("alpha must be >= 0");
    if (!(hp.beta >= 0.0) || !std::isfinite(hp.beta)) throw ArgumentError("beta must be >= 0");
    if (!(hp.logit_scale > 0.0)) throw ArgumentError("logit_scale must be > 0");
    if (!(hp.lr_pos >= 0.0) || !(hp.lr_neg >= 0.0)) throw ArgumentError("learning rates must be >= 0");
    if (!(hp.weight_decay >= 0.0)) throw ArgumentError("weight_decay must be >= 0");
    if (hp.epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (hp.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (config.files) {
        for (const auto* path : {&config.files->support, &config.files->query,
                                 &config.files->text_pos, &config.files->text_neg}) {
            if (!std::filesystem::exists(*path)) {
                throw IoError("input file not found: " + path->string());
            }
        }
    }
    if (config.synthetic) {
        const auto& p = config.synthetic->params;
        if (p.num_classes < 2 || p.dim < 2 || p.shots < 1 || p.queries_per_class < 1 ||
            !(p.spread >= 0.0)) {
            throw ArgumentError("invalid synthetic parameters");
        }
    }
}

SeedRun run_seed(const ExperimentConfig& config, std::uint64_t seed) {
    const auto start = std::chrono::steady_clock::now();
    check_config(config);

    RunData data = load_data(config, seed);
    const SupportQuerySplit clean = data.split;
    SupportQuerySplit split = config.noise_fraction > 0.0
                                  ? flip_labels(clean, config.noise_fraction, seed + kFlipSeedOffset)
                                  : clean;

    const CacheSet cache =
        build_caches(split, data.text_pos, data.text_neg, seed + kNegativeCacheSeedOffset);
    const WeightedLabels weighted = reweight_caches(cache, config.hp.tau, config.hp.reweighting);

    HyperParams hp = config.hp;
    const Deltas deltas = calibrate_deltas<float>(split.support.rows, cache, weighted, hp);
    hp.delta_t = deltas.delta_t;
    hp.delta_v = deltas.delta_v;
    hp.seed = seed + kShuffleSeedOffset;

    SeedRun run;
    run.seed = seed;
    run.deltas = deltas;
    run.confidence = split_confidences(cache, split, clean, config.hp.tau);

    TrainResult trained = train(split, cache, weighted, hp, config.variant, config.loss_mode);
    run.trace = std::move(trained.trace);
    const ResidualSet& res = trained.residuals;

    run.metrics = evaluate(split.query, cache, res, weighted, hp);
    const auto zs = zero_shot_predict(split.query.rows, cache.t_pos, hp.logit_scale);
    run.zero_shot_top1 = score_predictions(split.query, zs.predictions).top1;

    const auto bundle = forward_final(split.query.rows, cache, res, weighted, hp);
    run.branch_means.t_pos = mean_of(bundle.s_t_pos);
    run.branch_means.v_pos = mean_of(bundle.s_v_pos);
    run.branch_means.t_neg = mean_of(bundle.s_t_neg);
    run.branch_means.v_neg = mean_of(bundle.s_v_neg);
    run.branch_means.final = mean_of(bundle.s_final);
    const auto lambda = static_cast<float>(hp.lambda);
    run.branch_means.positive_mix = mean_of(lambda * (bundle.s_t_pos + bundle.s_v_pos));
    run.branch_means.negative_mix = mean_of((1.0f - lambda) * (bundle.s_t_neg + bundle.s_v_neg));

    run.residual_max_abs = {res.t_pos.cwiseAbs().maxCoeff(), res.t_neg.cwiseAbs().maxCoeff(),
                            res.v_pos.cwiseAbs().maxCoeff(), res.v_neg.cwiseAbs().maxCoeff()};
    run.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return run;
}

Aggregate aggregate(const std::vector<SeedRun>& runs) {
    Aggregate agg;
    agg.runs = runs.size();
    if (runs.empty()) return agg;
    const auto stats = [&](auto field, double& mean, double& sd) {
        double sum = 0.0;
        for (const auto& r : runs) sum += field(r);
        mean = sum / static_cast<double>(runs.size());
        if (runs.size() < 2) {
            sd = 0.0;
            return;
        }
        double sq = 0.0;
        for (const auto& r : runs) sq += (field(r) - mean) * (field(r) - mean);
        sd = std::sqrt(sq / static_cast<double>(runs.size() - 1));
    };
    stats([](const SeedRun& r) { return r.metrics.top1; }, agg.top1_mean, agg.top1_sd);
    stats([](const SeedRun& r) { return r.zero_shot_top1; }, agg.zero_shot_top1_mean,
          agg.zero_shot_top1_sd);
    return agg;
}

ReportRecord run_train_eval(const ExperimentConfig& config) {
    check_config(config);
    ReportRecord record;
    record.config = config;
    for (std::uint64_t seed : config.seeds) record.runs.push_back(run_seed(config, seed));
    record.summary = aggregate(record.runs);
    return record;
}

std::string_view to_string(SweepParam param) {
    switch (param) {
        case SweepParam::lambda: return "lambda";
        case SweepParam::tau: return "tau";
        case SweepParam::alpha: return "alpha";
        case SweepParam::beta: return "beta";
    }
    return "?";
}

SweepParam parse_sweep_param(std::string_view text) {
    if (text == "lambda") return SweepParam::lambda;
    if (text == "tau") return SweepParam::tau;
    if (text == "alpha") return SweepParam::alpha;
    if (text == "beta") return SweepParam::beta;
    throw ArgumentError("cannot sweep \"" + std::string(text) + "\" (expected lambda|tau|alpha|beta)");
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, SweepParam param,
                                const std::vector<double>& grid) {
    if (grid.empty()) throw ArgumentError("sweep grid must not be empty");
    std::vector<ExperimentConfig> points;
    for (double value : grid) {
        ExperimentConfig& point = points.emplace_back(config);
        switch (param) {
            case SweepParam::lambda: point.hp.lambda = value; break;
            case SweepParam::tau: point.hp.tau = value; break;
            case SweepParam::alpha: point.hp.alpha = value; break;
            case SweepParam::beta: point.hp.beta = value; break;
        }
        check_config(point);  // reject the whole grid before running any of it
    }
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) rows.push_back({grid[i], run_train_eval(points[i])});
    return rows;
}

std::vector<NoiseRow> run_noise(const ExperimentConfig& config,
                                const std::vector<double>& fractions) {
    if (fractions.empty()) throw ArgumentError("noise fractions must not be empty");
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ArgumentError("noise fraction " + std::to_string(f) + " outside [0, 1]");
        }
    }
    std::vector<NoiseRow> rows;
    for (double fraction : fractions) {
        for (bool reweighting : {true, false}) {
            ExperimentConfig point = config;
            point.noise_fraction = fraction;
            point.hp.reweighting = reweighting;
            rows.push_back({fraction, reweighting, run_train_eval(point)});
        }
    }
    return rows;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config) {
    std::vector<AblationRow> rows;
    for (Variant v : {Variant::full, Variant::textual, Variant::visual, Variant::positive,
                      Variant::negative}) {
        ExperimentConfig point = config;
        point.variant = v;
        rows.push_back({v, run_train_eval(point)});
    }
    return rows;
}

GeneratedFiles write_synthetic(const SyntheticParams& params, const std::filesystem::path& out_dir) {
    const auto ds = synth_generate(params);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string());
    GeneratedFiles files{out_dir / "support.snle", out_dir / "query.snle",
                         out_dir / "text_pos.snle", out_dir / "text_neg.snle"};
    save_store(ds.split.support, files.support);
    save_store(ds.split.query, files.query);
    save_store(ds.text_pos, files.text_pos);
    save_store(ds.text_neg, files.text_neg);
    return files;
}

}  // namespace simnl
