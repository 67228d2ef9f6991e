#include "simnl/report.hpp"

#include "simnl/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <system_error>

namespace simnl {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const char* where) {
    if (!obj.is_object()) throw ArgumentError(std::string(where) + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            throw ArgumentError(std::string("unknown key \"") + key + "\" in " + where);
        }
    }
}

template <typename T>
void read_if(const json& obj, const char* key, T& target) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ArgumentError(std::string("bad value for \"") + key + "\": " + e.what());
    }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json aggregate_to_json(const Aggregate& a) {
    return {{"runs", a.runs},
            {"top1_mean", a.top1_mean},
            {"top1_sd", a.top1_sd},
            {"zero_shot_top1_mean", a.zero_shot_top1_mean},
            {"zero_shot_top1_sd", a.zero_shot_top1_sd}};
}

json confidence_summary(const ReportRecord& record) {
    double clean = 0.0;
    double flipped = 0.0;
    int clean_n = 0;
    int flipped_n = 0;
    for (const auto& run : record.runs) {
        if (run.confidence.clean_mean) {
            clean += *run.confidence.clean_mean;
            ++clean_n;
        }
        if (run.confidence.flipped_mean) {
            flipped += *run.confidence.flipped_mean;
            ++flipped_n;
        }
    }
    return {{"clean_mean", clean_n ? json(clean / clean_n) : json(nullptr)},
            {"flipped_mean", flipped_n ? json(flipped / flipped_n) : json(nullptr)}};
}

json envelope(const char* command, const ExperimentConfig& config) {
    return {{"format_version", kReportFormatVersion},
            {"command", command},
            {"config", config_to_json(config)}};
}

}  // namespace

json config_to_json(const ExperimentConfig& config) {
    json doc;
    if (config.files) {
        doc["data"] = {{"support", config.files->support.string()},
                       {"query", config.files->query.string()},
                       {"text_pos", config.files->text_pos.string()},
                       {"text_neg", config.files->text_neg.string()}};
    }
    if (config.synthetic) {
        const auto& p = config.synthetic->params;
        json syn = {{"classes", p.num_classes},
                    {"dim", p.dim},
                    {"shots", p.shots},
                    {"queries_per_class", p.queries_per_class},
                    {"spread", p.spread}};
        if (config.synthetic->fixed_seed) syn["seed"] = *config.synthetic->fixed_seed;
        doc["synthetic"] = syn;
    }
    const auto& hp = config.hp;
    doc["hyperparams"] = {{"lambda", hp.lambda},       {"tau", hp.tau},
                          {"alpha", hp.alpha},         {"beta", hp.beta},
                          {"logit_scale", hp.logit_scale}, {"lr_pos", hp.lr_pos},
                          {"lr_neg", hp.lr_neg},       {"weight_decay", hp.weight_decay},
                          {"epochs", hp.epochs},       {"batch_size", hp.batch_size}};
    doc["variant"] = std::string(to_string(config.variant));
    doc["loss_mode"] = std::string(to_string(config.loss_mode));
    doc["noise_fraction"] = config.noise_fraction;
    doc["seeds"] = config.seeds;
    doc["reweighting"] = hp.reweighting;
    if (config.output) doc["output"] = config.output->string();
    return doc;
}

ExperimentConfig config_from_json(const json& doc) {
    reject_unknown(doc,
                   {"data", "synthetic", "hyperparams", "variant", "loss_mode", "noise_fraction",
                    "seeds", "reweighting", "output"},
                   "config");
    ExperimentConfig config;
    if (doc.contains("data")) {
        const auto& d = doc["data"];
        reject_unknown(d, {"support", "query", "text_pos", "text_neg"}, "data");
        FileSource files;
        std::string support, query, text_pos, text_neg;
        read_if(d, "support", support);
        read_if(d, "query", query);
        read_if(d, "text_pos", text_pos);
        read_if(d, "text_neg", text_neg);
        if (support.empty() || query.empty() || text_pos.empty() || text_neg.empty()) {
            throw ArgumentError("data needs support, query, text_pos and text_neg paths");
        }
        config.files = FileSource{support, query, text_pos, text_neg};
    }
    if (doc.contains("synthetic")) {
        const auto& s = doc["synthetic"];
        reject_unknown(s, {"classes", "dim", "shots", "queries_per_class", "spread", "seed"},
                       "synthetic");
        SyntheticSource syn;
        read_if(s, "classes", syn.params.num_classes);
        read_if(s, "dim", syn.params.dim);
        read_if(s, "shots", syn.params.shots);
        read_if(s, "queries_per_class", syn.params.queries_per_class);
        read_if(s, "spread", syn.params.spread);
        if (s.contains("seed")) {
            std::uint64_t seed = 0;
            read_if(s, "seed", seed);
            syn.fixed_seed = seed;
        }
        config.synthetic = syn;
    }
    if (doc.contains("hyperparams")) {
        const auto& h = doc["hyperparams"];
        reject_unknown(h,
                       {"lambda", "tau", "alpha", "beta", "logit_scale", "lr_pos", "lr_neg",
                        "weight_decay", "epochs", "batch_size"},
                       "hyperparams");
        auto& hp = config.hp;
        read_if(h, "lambda", hp.lambda);
        read_if(h, "tau", hp.tau);
        read_if(h, "alpha", hp.alpha);
        read_if(h, "beta", hp.beta);
        read_if(h, "logit_scale", hp.logit_scale);
        read_if(h, "lr_pos", hp.lr_pos);
        read_if(h, "lr_neg", hp.lr_neg);
        read_if(h, "weight_decay", hp.weight_decay);
        read_if(h, "epochs", hp.epochs);
        read_if(h, "batch_size", hp.batch_size);
    }
    if (doc.contains("variant")) config.variant = parse_variant(doc["variant"].get<std::string>());
    if (doc.contains("loss_mode")) {
        config.loss_mode = parse_loss_mode(doc["loss_mode"].get<std::string>());
    }
    read_if(doc, "noise_fraction", config.noise_fraction);
    read_if(doc, "seeds", config.seeds);
    read_if(doc, "reweighting", config.hp.reweighting);
    if (doc.contains("output")) config.output = doc["output"].get<std::string>();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
        return config_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ArgumentError("config " + path.string() + " is not valid JSON: " + e.what());
    }
}

json metrics_to_json(const SeedRun& run) {
    const auto& m = run.metrics;
    const auto& b = run.branch_means;
    const auto& r = run.residual_max_abs;
    return {{"top1", m.top1},
            {"correct", m.correct},
            {"total", m.total},
            {"per_class_accuracy", m.per_class_accuracy},
            {"mean_ce_loss", m.mean_ce_loss},
            {"zero_shot_top1", run.zero_shot_top1},
            {"delta_t", run.deltas.delta_t},
            {"delta_v", run.deltas.delta_v},
            {"branch_mean_logits",
             {{"t_pos", b.t_pos},
              {"v_pos", b.v_pos},
              {"t_neg", b.t_neg},
              {"v_neg", b.v_neg},
              {"final", b.final},
              {"positive_mix", b.positive_mix},
              {"negative_mix", b.negative_mix}}},
            {"residual_max_abs",
             {{"t_pos", r.t_pos}, {"t_neg", r.t_neg}, {"v_pos", r.v_pos}, {"v_neg", r.v_neg}}},
            {"confidence",
             {{"clean_mean", optional_number(run.confidence.clean_mean)},
              {"flipped_mean", optional_number(run.confidence.flipped_mean)},
              {"clean_count", run.confidence.clean_count},
              {"flipped_count", run.confidence.flipped_count}}},
            {"epoch_loss", run.trace.epoch_loss},
            {"epoch_lr_pos", run.trace.epoch_lr_pos},
            {"epoch_lr_neg", run.trace.epoch_lr_neg}};
}

json run_to_json(const SeedRun& run) {
    return {{"seed", run.seed}, {"metrics", metrics_to_json(run)}, {"wall_time_s", run.wall_time_seconds}};
}

json record_to_json(const ReportRecord& record) {
    json runs = json::array();
    for (const auto& run : record.runs) runs.push_back(run_to_json(run));
    return {{"runs", runs}, {"aggregate", aggregate_to_json(record.summary)}};
}

json train_eval_report(const ReportRecord& record) {
    json doc = envelope("train-eval", record.config);
    doc.update(record_to_json(record));
    return doc;
}

json sweep_report(const ExperimentConfig& config, SweepParam param, const std::vector<SweepRow>& rows) {
    json doc = envelope("sweep", config);
    doc["param"] = std::string(to_string(param));
    doc["rows"] = json::array();
    for (const auto& row : rows) {
        json entry = record_to_json(row.record);
        entry["value"] = row.value;
        doc["rows"].push_back(entry);
    }
    return doc;
}

json noise_report(const ExperimentConfig& config, const std::vector<NoiseRow>& rows) {
    json doc = envelope("noise", config);
    doc["rows"] = json::array();
    for (const auto& row : rows) {
        json entry = record_to_json(row.record);
        entry["fraction"] = row.fraction;
        entry["reweighting"] = row.reweighting;
        entry["confidence"] = confidence_summary(row.record);
        doc["rows"].push_back(entry);
    }
    return doc;
}

json ablation_report(const ExperimentConfig& config, const std::vector<AblationRow>& rows) {
    json doc = envelope("ablate", config);
    doc["rows"] = json::array();
    for (const auto& row : rows) {
        json entry = record_to_json(row.record);
        entry["variant"] = std::string(to_string(row.variant));
        doc["rows"].push_back(entry);
    }
    return doc;
}

std::string report_csv(const json& report) {
    std::ostringstream out;
    out.precision(17);
    const std::string command = report.at("command").get<std::string>();
    const auto cell = [](const json& v) {
        if (v.is_null()) return std::string();
        if (v.is_string()) return v.get<std::string>();
        return v.dump();
    };
    if (command == "train-eval") {
        out << "seed,top1,zero_shot_top1,mean_ce_loss,delta_t,delta_v\n";
        for (const auto& run : report.at("runs")) {
            const auto& m = run.at("metrics");
            out << run.at("seed").dump() << ',' << cell(m.at("top1")) << ','
                << cell(m.at("zero_shot_top1")) << ',' << cell(m.at("mean_ce_loss")) << ','
                << cell(m.at("delta_t")) << ',' << cell(m.at("delta_v")) << '\n';
        }
        return out.str();
    }
    if (command == "sweep") {
        out << "param,value,top1_mean,top1_sd,zero_shot_top1_mean\n";
    } else if (command == "noise") {
        out << "fraction,reweighting,top1_mean,top1_sd,clean_confidence,flipped_confidence\n";
    } else if (command == "ablate") {
        out << "variant,top1_mean,top1_sd\n";
    } else {
        throw ArgumentError("no CSV layout for command " + command);
    }
    for (const auto& row : report.at("rows")) {
        const auto& agg = row.at("aggregate");
        if (command == "sweep") {
            out << cell(report.at("param")) << ',' << cell(row.at("value")) << ','
                << cell(agg.at("top1_mean")) << ',' << cell(agg.at("top1_sd")) << ','
                << cell(agg.at("zero_shot_top1_mean")) << '\n';
        } else if (command == "noise") {
            out << cell(row.at("fraction")) << ',' << (row.at("reweighting").get<bool>() ? "on" : "off")
                << ',' << cell(agg.at("top1_mean")) << ',' << cell(agg.at("top1_sd")) << ','
                << cell(row.at("confidence").at("clean_mean")) << ','
                << cell(row.at("confidence").at("flipped_mean")) << '\n';
        } else {
            out << cell(row.at("variant")) << ',' << cell(agg.at("top1_mean")) << ','
                << cell(agg.at("top1_sd")) << '\n';
        }
    }
    return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << text;
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move report into place at " + path.string());
    }
}

}  // namespace simnl
