#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fairgap/data.hpp"
#include "fairgap/errors.hpp"
#include "fairgap/losses.hpp"
#include "fairgap/metrics.hpp"
#include "fairgap/theory.hpp"
#include "fairgap/trainer.hpp"

namespace fs = std::filesystem;
using fairgap::ConfigError;
using fairgap::IngestError;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void atomic_write(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IngestError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw IngestError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// Refuses to clobber existing outputs unless --force was given.
struct OutputDir {
    fs::path dir;
    bool force = false;

    void prepare(const std::vector<std::string>& filenames) const {
        fs::create_directories(dir);
        if (force) return;
        for (const auto& name : filenames) {
            if (fs::exists(dir / name))
                throw ConfigError("output file " + (dir / name).string() +
                                  " exists; pass --force to overwrite");
        }
    }

    void write(const std::string& name, const std::string& content) const {
        atomic_write(dir / name, content);
    }
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return j;
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_manifest(const OutputDir& out, const std::string& command, const json& resolved_config,
                    std::uint64_t seed, std::size_t jobs) {
    ordered_json manifest;
    manifest["command"] = command;
    manifest["version"] = kVersion;
    manifest["config"] = resolved_config;
    manifest["config_hash"] = hex64(fnv1a(resolved_config.dump()));
    manifest["seed"] = seed;
    manifest["threads"] = jobs;
    manifest["timestamp"] = timestamp_utc();
    out.write("manifest.json", manifest.dump(2));
}

std::size_t default_jobs() {
    if (const char* env = std::getenv("FAIRGAP_JOBS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

fairgap::SyntheticSpec parse_synthetic_spec(const json& j) {
    fairgap::SyntheticSpec spec;
    spec.n_samples = j.at("n_samples").get<std::size_t>();
    spec.feature_dim = j.at("feature_dim").get<std::size_t>();
    spec.base_rates = j.at("base_rates").get<std::vector<double>>();
    spec.separability = j.value("separability", 1.0);
    spec.noise_scale = j.value("noise_scale", 1.0);
    spec.correlation = j.value("correlation", 0.0);
    spec.prototype_dim = j.value("prototype_dim", 0U);
    spec.seed = j.value("seed", 0ULL);
    if (j.contains("group_names"))
        spec.group_names = j.at("group_names").get<std::vector<std::string>>();
    spec.validate();
    return spec;
}

fairgap::LossConfig parse_loss_config(const json& j) {
    fairgap::LossConfig cfg;
    cfg.kind = fairgap::loss_kind_from_name(j.at("kind").get<std::string>());
    cfg.lambda = j.value("lambda", 1.0);
    if (j.contains("class_weights")) {
        const auto pos = j.at("class_weights").at("pos").get<std::vector<double>>();
        const auto neg = j.at("class_weights").at("neg").get<std::vector<double>>();
        if (pos.size() != neg.size())
            throw ConfigError("class_weights pos/neg lengths disagree");
        for (std::size_t g = 0; g < pos.size(); ++g)
            cfg.class_weights.push_back({pos[g], neg[g]});
    }
    return cfg;
}

fairgap::TrainConfig parse_train_fields(const json& j) {
    fairgap::TrainConfig cfg;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (m.contains("hidden_sizes"))
            cfg.hidden_sizes = m.at("hidden_sizes").get<std::vector<std::size_t>>();
        cfg.dropout_rate = m.value("dropout_rate", cfg.dropout_rate);
    }
    if (j.contains("optimizer"))
        cfg.learning_rate = j.at("optimizer").value("learning_rate", cfg.learning_rate);
    cfg.epochs_max = j.value("epochs_max", cfg.epochs_max);
    cfg.steps_per_epoch = j.value("steps_per_epoch", cfg.steps_per_epoch);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.early_stop_min_delta = j.value("early_stop_min_delta", cfg.early_stop_min_delta);
    cfg.early_stop_patience = j.value("early_stop_patience", cfg.early_stop_patience);
    cfg.threshold = j.value("threshold", cfg.threshold);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.allow_degenerate_groups = j.value("allow_degenerate_groups", false);
    if (j.contains("loss")) cfg.loss = parse_loss_config(j.at("loss"));
    cfg.validate();
    return cfg;
}

fairgap::SplitIndices parse_split(const json& j, const fairgap::Dataset& d) {
    const double fraction = j.value("test_fraction", 0.2);
    const std::uint64_t seed = j.value("seed", 0ULL);
    return fairgap::stratified_split(d, fraction, seed);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, OutputDir out) {
    const json config = load_json_file(config_path);
    const auto spec = parse_synthetic_spec(config);
    out.prepare({"dataset.csv", "manifest.json"});
    const auto dataset = fairgap::generate(spec);
    fairgap::save_dataset(dataset, (out.dir / "dataset.csv.tmp").string());
    fs::rename(out.dir / "dataset.csv.tmp", out.dir / "dataset.csv");
    write_manifest(out, "gen-data", config, spec.seed, 1);
    std::cout << "wrote " << (out.dir / "dataset.csv").string() << " (" << dataset.n_samples()
              << " samples, " << dataset.n_groups() << " groups)\n";
    return 0;
}

int cmd_stats(const std::string& data_path, OutputDir out) {
    out.prepare({"prevalence.json", "manifest.json"});
    const auto dataset = fairgap::load_dataset(data_path);
    const auto stats = fairgap::prevalence_stats(dataset);
    out.write("prevalence.json", fairgap::prevalence_to_json(stats));
    write_manifest(out, "stats", json{{"data", data_path}}, 0, 1);
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_override, OutputDir out) {
    json config = load_json_file(config_path);
    if (!data_override.empty()) config["data"] = data_override;
    if (!config.contains("data")) throw ConfigError("train config needs a 'data' path");

    const auto dataset = fairgap::load_dataset(config.at("data").get<std::string>());
    const auto split = parse_split(config.value("split", json::object()), dataset);
    const auto cfg = parse_train_fields(config);

    out.prepare({"model.json", "trace.json", "metrics.json", "split.json", "manifest.json"});

    const auto d_train = dataset.subset(split.train_indices);
    const auto d_test = dataset.subset(split.test_indices);
    auto [params, trace] = fairgap::train(d_train, cfg, &d_test);
    const auto report = fairgap::evaluate(params, d_test, cfg.threshold);

    out.write("model.json", fairgap::params_to_json(params));
    out.write("trace.json", fairgap::trace_to_json(trace));
    out.write("metrics.json", fairgap::report_to_json(report));
    ordered_json split_doc;
    split_doc["train_indices"] = split.train_indices;
    split_doc["test_indices"] = split.test_indices;
    split_doc["warnings"] = split.warnings;
    out.write("split.json", split_doc.dump(2));
    write_manifest(out, "train", config, cfg.seed, 1);
    std::cout << "trained " << fairgap::loss_kind_name(cfg.loss.kind) << ": avg_ba="
              << report.avg_ba << " max_diff=" << report.max_diff << " epochs="
              << trace.epochs_run << "\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path, double threshold,
             OutputDir out) {
    out.prepare({"metrics.json", "ba_diff.csv", "manifest.json"});
    const auto params = fairgap::params_from_json(read_file(model_path));
    const auto dataset = fairgap::load_dataset(data_path);
    const auto report = fairgap::evaluate(params, dataset, threshold);
    out.write("metrics.json", fairgap::report_to_json(report));
    out.write("ba_diff.csv", fairgap::ba_diff_to_csv(report.group_names, report.ba_diff));
    write_manifest(out, "eval",
                   json{{"model", model_path}, {"data", data_path}, {"threshold", threshold}}, 0, 1);
    return 0;
}

int cmd_compare(const std::string& config_path, std::size_t jobs, OutputDir out) {
    const json config = load_json_file(config_path);
    if (!config.contains("data")) throw ConfigError("compare config needs a 'data' path");
    const auto dataset = fairgap::load_dataset(config.at("data").get<std::string>());
    const auto split = parse_split(config.value("split", json::object()), dataset);

    const json base = config.value("base", json::object());
    std::vector<std::pair<std::string, fairgap::TrainConfig>> configs;
    std::vector<std::string> outputs = {"comparison.json", "manifest.json"};
    for (const auto& loss_json : config.at("losses")) {
        fairgap::TrainConfig cfg = parse_train_fields(base);
        cfg.loss = parse_loss_config(loss_json);
        std::string label = loss_json.value("label", fairgap::loss_kind_name(cfg.loss.kind));
        outputs.push_back("heatmap_" + label + ".csv");
        configs.emplace_back(std::move(label), cfg);
    }
    const auto n_seeds = config.value("n_seeds", 5U);
    out.prepare(outputs);

    const auto report = fairgap::compare_losses(dataset, split, configs, n_seeds, jobs);
    out.write("comparison.json", fairgap::comparison_to_json(report));
    for (const auto& summary : report.losses) {
        const auto heat = fairgap::ba_diff_matrix(summary.mean_per_group_ba);
        out.write("heatmap_" + summary.label + ".csv",
                  fairgap::ba_diff_to_csv(report.group_names, heat));
    }
    write_manifest(out, "compare", config, parse_train_fields(base).seed, jobs);
    for (const auto& summary : report.losses)
        std::cout << summary.label << ": avg_ba=" << summary.avg_ba.mean << "+-"
                  << summary.avg_ba.stddev << " max_diff=" << summary.max_diff.mean << "+-"
                  << summary.max_diff.stddev << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, std::size_t jobs, OutputDir out) {
    const json config = load_json_file(config_path);
    if (!config.contains("data")) throw ConfigError("sweep config needs a 'data' path");
    const auto dataset = fairgap::load_dataset(config.at("data").get<std::string>());
    const auto split = parse_split(config.value("split", json::object()), dataset);
    const auto base = parse_train_fields(config.value("base", json::object()));
    const auto lambdas = config.at("lambdas").get<std::vector<double>>();
    const auto n_seeds = config.value("n_seeds", 5U);

    out.prepare({"sweep.json", "manifest.json"});
    const auto report = fairgap::lambda_sweep(dataset, split, base, lambdas, n_seeds, jobs);
    out.write("sweep.json", fairgap::sweep_to_json(report));
    write_manifest(out, "sweep", config, base.seed, jobs);
    for (const auto& row : report.rows)
        std::cout << "lambda=" << row.lambda << ": avg_ba=" << row.avg_ba.mean
                  << " max_diff=" << row.max_diff.mean << "\n";
    return 0;
}

std::vector<std::int64_t> parse_counts(const std::string& text) {
    std::vector<std::int64_t> counts;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            counts.push_back(std::stoll(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ConfigError("--counts: '" + cell + "' is not an integer");
        }
    }
    if (counts.size() != 4)
        throw ConfigError("--counts expects P_A,N_A,P_B,N_B");
    for (auto c : counts)
        if (c < 1) throw ConfigError("--counts entries must be positive integers");
    return counts;
}

int cmd_verify(int theorem, const std::string& counts_text, bool table2, std::size_t resolution,
               double epsilon, bool exclude_line, OutputDir out) {
    bool all_pass = true;
    std::vector<std::string> outputs = {"manifest.json"};
    if (table2) {
        outputs.push_back("table2.csv");
        outputs.push_back("table2.json");
    }
    if (theorem == 1) outputs.push_back("theorem1.json");
    if (theorem == 2) outputs.push_back("theorem2.json");
    out.prepare(outputs);

    json resolved{{"theorem", theorem}, {"counts", counts_text}, {"table2", table2},
                  {"resolution", resolution}, {"epsilon", epsilon}};

    if (table2) {
        const auto rows = fairgap::table2_scenario();
        const bool pass = fairgap::table2_matches_reference(rows);
        std::string csv = "scenario,group,targeted,not_targeted,tp,fn,fp,tn,acc,tpr,fpr\n";
        for (const auto& row : rows) {
            std::ostringstream line;
            line << row.scenario << ',' << row.group << ',' << row.positives << ','
                 << row.negatives << ',' << row.tp << ',' << row.fn << ',' << row.fp << ','
                 << row.tn << ',' << row.acc << ',' << row.tpr << ',' << row.fpr << '\n';
            csv += line.str();
        }
        out.write("table2.csv", csv);
        ordered_json doc;
        doc["pass"] = pass;
        ordered_json cells = ordered_json::array();
        for (const auto& row : rows) {
            cells.push_back(ordered_json{{"scenario", row.scenario},
                                         {"group", row.group},
                                         {"tp", row.tp},
                                         {"fn", row.fn},
                                         {"fp", row.fp},
                                         {"tn", row.tn},
                                         {"acc", row.acc},
                                         {"tpr", row.tpr},
                                         {"fpr", row.fpr}});
        }
        doc["rows"] = cells;
        out.write("table2.json", doc.dump(2));
        std::cout << "table2 reconstruction: " << (pass ? "PASS" : "FAIL") << "\n";
        all_pass = all_pass && pass;
    }

    if (theorem == 1 || theorem == 2) {
        const auto counts = parse_counts(counts_text);
        const fairgap::GroupCounts a{counts[0], counts[1]};
        const fairgap::GroupCounts b{counts[2], counts[3]};
        const bool rates_equal = fairgap::fpned_ap_consistency(a, b);

        if (theorem == 1) {
            const auto scan = fairgap::eo_ap_scan(a, b, resolution, epsilon, exclude_line);
            const auto expected = rates_equal ? fairgap::FeasibilityClass::AllFeasible
                                  : exclude_line ? fairgap::FeasibilityClass::Empty
                                                 : fairgap::FeasibilityClass::OnlyRandomLine;
            const bool pass = scan.classification == expected;
            ordered_json doc;
            doc["counts"] = {{"P_A", a.positives}, {"N_A", a.negatives},
                             {"P_B", b.positives}, {"N_B", b.negatives}};
            doc["grid_resolution"] = scan.grid_resolution;
            doc["epsilon"] = scan.epsilon;
            doc["exclude_random_line"] = exclude_line;
            doc["classification"] = fairgap::feasibility_class_name(scan.classification);
            doc["feasible_count"] = scan.feasible_points.size();
            doc["total_points"] = scan.total_points;
            ordered_json witnesses = ordered_json::array();
            for (std::size_t i = 0; i < std::min<std::size_t>(32, scan.feasible_points.size()); ++i)
                witnesses.push_back({scan.feasible_points[i].first, scan.feasible_points[i].second});
            doc["witness_points"] = witnesses;
            doc["base_rates_equal"] = rates_equal;
            doc["pass"] = pass;
            out.write("theorem1.json", doc.dump(2));
            std::cout << "theorem 1 scan: " << fairgap::feasibility_class_name(scan.classification)
                      << " (" << (pass ? "PASS" : "FAIL") << ")\n";
            all_pass = all_pass && pass;
        } else {
            const bool consistent = fairgap::fpned_ap_consistency(a, b);
            // Independent route: compare the gcd-reduced base-rate fractions.
            auto reduce = [](std::int64_t p, std::int64_t n) {
                const std::int64_t g = std::gcd(p, n);
                return std::pair<std::int64_t, std::int64_t>{p / g, n / g};
            };
            const bool reduced_equal = reduce(a.positives, a.negatives) ==
                                       reduce(b.positives, b.negatives);
            const bool pass = consistent == reduced_equal;
            ordered_json doc;
            doc["counts"] = {{"P_A", a.positives}, {"N_A", a.negatives},
                             {"P_B", b.positives}, {"N_B", b.negatives}};
            doc["consistent"] = consistent;
            doc["base_rates_equal"] = reduced_equal;
            doc["pass"] = pass;
            out.write("theorem2.json", doc.dump(2));
            std::cout << "theorem 2: consistent=" << (consistent ? "true" : "false") << " ("
                      << (pass ? "PASS" : "FAIL") << ")\n";
            all_pass = all_pass && pass;
        }
    }

    write_manifest(out, "verify", resolved, 0, 1);
    if (!all_pass) throw fairgap::NumericError("verify: reconstruction mismatch");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fairness-aware multi-label classification toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_path, model_path, counts_text = "100,100,20,180";
    std::string out_dir, data_override;
    bool force = false, table2 = false, exclude_line = false;
    double threshold = 0.5, epsilon = 1e-9;
    std::size_t jobs = default_jobs(), resolution = 1001;
    int theorem = 0;

    auto add_out = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir, "Output directory")->required();
        cmd->add_flag("--force", force, "Overwrite existing outputs");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--config", config_path, "Synthetic spec JSON")->required();
    add_out(gen);

    auto* stats = app.add_subcommand("stats", "Prevalence statistics for a dataset");
    stats->add_option("--data", data_path, "Dataset CSV")->required();
    add_out(stats);

    auto* train = app.add_subcommand("train", "Train one model");
    train->add_option("--config", config_path, "Train config JSON")->required();
    train->add_option("--data", data_override, "Dataset CSV (overrides config)");
    add_out(train);

    auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
    eval->add_option("--model", model_path, "Model JSON")->required();
    eval->add_option("--data", data_path, "Dataset CSV")->required();
    eval->add_option("--threshold", threshold, "Classification threshold");
    add_out(eval);

    auto* compare = app.add_subcommand("compare", "Train and compare several losses");
    compare->add_option("--config", config_path, "Benchmark config JSON")->required();
    compare->add_option("--jobs", jobs, "Parallel training runs");
    add_out(compare);

    auto* sweep = app.add_subcommand("sweep", "Sweep the regularization strength");
    sweep->add_option("--config", config_path, "Sweep config JSON")->required();
    sweep->add_option("--jobs", jobs, "Parallel training runs");
    add_out(sweep);

    auto* verify = app.add_subcommand("verify", "Run the impossibility-theorem checks");
    verify->add_option("--theorem", theorem, "Theorem to check (1 or 2)");
    verify->add_option("--counts", counts_text, "P_A,N_A,P_B,N_B");
    verify->add_flag("--table2", table2, "Reconstruct the two-group worked example");
    verify->add_option("--resolution", resolution, "Grid resolution per axis");
    verify->add_option("--epsilon", epsilon, "Feasibility tolerance");
    verify->add_flag("--exclude-line", exclude_line, "Drop the random-prediction line");
    add_out(verify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

    try {
        OutputDir out{fs::path(out_dir), force};
        if (gen->parsed()) return cmd_gen_data(config_path, out);
        if (stats->parsed()) return cmd_stats(data_path, out);
        if (train->parsed()) return cmd_train(config_path, data_override, out);
        if (eval->parsed()) return cmd_eval(model_path, data_path, threshold, out);
        if (compare->parsed()) return cmd_compare(config_path, jobs, out);
        if (sweep->parsed()) return cmd_sweep(config_path, jobs, out);
        if (verify->parsed()) {
            if (!table2 && theorem != 1 && theorem != 2)
                throw ConfigError("verify: pass --theorem 1, --theorem 2 and/or --table2");
            return cmd_verify(theorem, counts_text, table2, resolution, epsilon, exclude_line, out);
        }
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: config field problem: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
