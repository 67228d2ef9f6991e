// simnl: generate data, run experiments, write JSON reports.

#include "simnl/embedding_store.hpp"
#include "simnl/errors.hpp"
#include "simnl/harness.hpp"
#include "simnl/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Overrides {
    std::string config_path;
    std::optional<double> lambda;
    std::optional<double> tau;
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::vector<std::uint64_t> seeds;
    std::optional<std::string> variant;
    std::optional<std::string> loss_mode;
    std::optional<double> noise_fraction;
    std::optional<std::string> reweighting;
    std::optional<std::string> out;
    std::optional<std::string> csv;
    std::optional<std::string> data_dir;
    std::optional<std::string> support;
    std::optional<std::string> query;
    std::optional<std::string> text_pos;
    std::optional<std::string> text_neg;
};

void add_experiment_flags(CLI::App& app, Overrides& o) {
    app.add_option("--config", o.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--lambda", o.lambda, "positive/negative mix weight");
    app.add_option("--tau", o.tau, "reweighting temperature");
    app.add_option("--alpha", o.alpha, "affinity scale");
    app.add_option("--beta", o.beta, "affinity sharpness");
    app.add_option("--epochs", o.epochs);
    app.add_option("--batch-size", o.batch_size);
    app.add_option("--seed", o.seeds, "run seed (repeatable)");
    app.add_option("--variant", o.variant)->check(CLI::IsMember({"full", "T", "V", "P", "N"}));
    app.add_option("--loss-mode", o.loss_mode)
        ->check(CLI::IsMember({"ensemble_ce", "negative_ce"}));
    app.add_option("--noise-fraction", o.noise_fraction);
    app.add_option("--reweighting", o.reweighting)->check(CLI::IsMember({"on", "off"}));
    app.add_option("--out", o.out, "report path (default: stdout)");
    app.add_option("--csv", o.csv, "also write a flat CSV table");
    app.add_option("--data-dir", o.data_dir, "directory written by `simnl gen`");
    app.add_option("--support", o.support);
    app.add_option("--query", o.query);
    app.add_option("--text-pos", o.text_pos);
    app.add_option("--text-neg", o.text_neg);
}

simnl::ExperimentConfig resolve_config(const Overrides& o) {
    simnl::ExperimentConfig config;
    if (!o.config_path.empty()) config = simnl::load_config(o.config_path);

    if (o.data_dir) {
        const std::filesystem::path dir = *o.data_dir;
        config.files = simnl::FileSource{dir / "support.snle", dir / "query.snle",
                                         dir / "text_pos.snle", dir / "text_neg.snle"};
        config.synthetic.reset();
    }
    if (o.support || o.query || o.text_pos || o.text_neg) {
        simnl::FileSource files = config.files.value_or(simnl::FileSource{});
        if (o.support) files.support = *o.support;
        if (o.query) files.query = *o.query;
        if (o.text_pos) files.text_pos = *o.text_pos;
        if (o.text_neg) files.text_neg = *o.text_neg;
        config.files = files;
        config.synthetic.reset();
    }
    if (!config.files && !config.synthetic) config.synthetic = simnl::SyntheticSource{};

    auto& hp = config.hp;
    if (o.lambda) hp.lambda = *o.lambda;
    if (o.tau) hp.tau = *o.tau;
    if (o.alpha) hp.alpha = *o.alpha;
    if (o.beta) hp.beta = *o.beta;
    if (o.epochs) hp.epochs = *o.epochs;
    if (o.batch_size) hp.batch_size = *o.batch_size;
    if (o.reweighting) hp.reweighting = *o.reweighting == "on";
    if (o.variant) config.variant = simnl::parse_variant(*o.variant);
    if (o.loss_mode) config.loss_mode = simnl::parse_loss_mode(*o.loss_mode);
    if (o.noise_fraction) config.noise_fraction = *o.noise_fraction;
    if (o.out) config.output = *o.out;

    if (const char* env = std::getenv("SIMNL_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto value = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            config.seeds = {value};
        } catch (const std::exception&) {
            throw simnl::ArgumentError(std::string("SIMNL_SEED is not an unsigned integer: ") + env);
        }
    }
    if (!o.seeds.empty()) config.seeds = o.seeds;
    simnl::check_config(config);
    return config;
}

void emit(const nlohmann::json& report, const simnl::ExperimentConfig& config,
          const std::optional<std::string>& csv) {
    // Serialize everything before touching the filesystem so a failure leaves nothing behind.
    const std::string text = report.dump(2) + "\n";
    const std::string table = csv ? simnl::report_csv(report) : std::string();
    if (config.output) {
        simnl::write_text_atomic(*config.output, text);
    } else {
        std::cout << text;
    }
    if (csv) simnl::write_text_atomic(*csv, table);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = text.find(',', pos);
        const std::string item =
            text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw simnl::ArgumentError(std::string("bad ") + what + " entry \"" + item + "\"");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return values;
}

int run_validate(const std::vector<std::string>& files, const std::string& config_path) {
    int failures = 0;
    for (const auto& file : files) {
        try {
            const auto set = simnl::load_store(file);
            std::cout << file << ": ok, " << set.size() << " rows, dim " << set.dim() << ", "
                      << set.num_classes << " classes, " << simnl::to_string(set.kind)
                      << (set.has_labels() ? ", labeled" : ", unlabeled") << "\n";
        } catch (const simnl::Error& e) {
            std::cerr << file << ": " << e.what() << "\n";
            ++failures;
        }
    }
    if (!config_path.empty()) {
        try {
            simnl::check_config(simnl::load_config(config_path));
            std::cout << config_path << ": ok\n";
        } catch (const simnl::Error& e) {
            std::cerr << config_path << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SimNL few-shot classification over precomputed embeddings"};
    app.require_subcommand(1);

    simnl::SyntheticParams gen_params;
    std::string gen_dir;
    auto* gen = app.add_subcommand("gen", "write a synthetic dataset as four SNLE files");
    gen->add_option("--classes", gen_params.num_classes);
    gen->add_option("--dim", gen_params.dim);
    gen->add_option("--shots", gen_params.shots);
    gen->add_option("--queries", gen_params.queries_per_class, "queries per class");
    gen->add_option("--spread", gen_params.spread);
    gen->add_option("--seed", gen_params.seed);
    gen->add_option("--out-dir", gen_dir)->required();

    Overrides train_opts;
    auto* train_eval = app.add_subcommand("train-eval", "train and evaluate over every seed");
    add_experiment_flags(*train_eval, train_opts);

    Overrides sweep_opts;
    std::string sweep_param;
    std::string sweep_grid;
    auto* sweep = app.add_subcommand("sweep", "one-parameter grid sweep");
    add_experiment_flags(*sweep, sweep_opts);
    sweep->add_option("--param", sweep_param)
        ->required()
        ->check(CLI::IsMember({"lambda", "tau", "alpha", "beta"}));
    sweep->add_option("--grid", sweep_grid, "comma-separated values")->required();

    Overrides noise_opts;
    std::string fractions = "0,0.1,0.2,0.3,0.4,0.5";
    auto* noise = app.add_subcommand("noise", "label-flip benchmark, reweighting on vs off");
    add_experiment_flags(*noise, noise_opts);
    noise->add_option("--fractions", fractions, "comma-separated flip fractions");

    Overrides ablate_opts;
    auto* ablate = app.add_subcommand("ablate", "run variants full, T, V, P, N");
    add_experiment_flags(*ablate, ablate_opts);

    std::vector<std::string> validate_files;
    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "check SNLE files and configs");
    validate->add_option("files", validate_files, "SNLE files");
    validate->add_option("--config", validate_config);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto files = simnl::write_synthetic(gen_params, gen_dir);
            for (const auto& path : {files.support, files.query, files.text_pos, files.text_neg}) {
                std::cout << path.string() << "\n";
            }
            return 0;
        }
        if (*train_eval) {
            const auto config = resolve_config(train_opts);
            emit(simnl::train_eval_report(simnl::run_train_eval(config)), config, train_opts.csv);
            return 0;
        }
        if (*sweep) {
            const auto config = resolve_config(sweep_opts);
            const auto param = simnl::parse_sweep_param(sweep_param);
            const auto rows = simnl::run_sweep(config, param, parse_list(sweep_grid, "grid"));
            emit(simnl::sweep_report(config, param, rows), config, sweep_opts.csv);
            return 0;
        }
        if (*noise) {
            const auto config = resolve_config(noise_opts);
            const auto rows = simnl::run_noise(config, parse_list(fractions, "fraction"));
            emit(simnl::noise_report(config, rows), config, noise_opts.csv);
            return 0;
        }
        if (*ablate) {
            const auto config = resolve_config(ablate_opts);
            emit(simnl::ablation_report(config, simnl::run_ablation(config)), config,
                 ablate_opts.csv);
            return 0;
        }
        if (*validate) {
            if (validate_files.empty() && validate_config.empty()) {
                throw simnl::ArgumentError("validate needs SNLE files or --config");
            }
            return run_validate(validate_files, validate_config);
        }
    } catch (const simnl::Error& e) {
        std::cerr << "simnl: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "simnl: unexpected failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
