#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "vmclass/data.hpp"
#include "vmclass/error.hpp"
#include "vmclass/model.hpp"
#include "vmclass/serialize.hpp"
#include "vmclass/synth.hpp"
#include "vmclass/training.hpp"

namespace vmclass::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRunConfigName = "run.conf";

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw DataError("cannot write " + path.string());
}

void prepare_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

void require_file(const fs::path& path, const char* what) {
    if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path.string());
}

json dataset_summary(const data::PreparedData& prepared, std::span<const data::VmTrace> traces) {
    std::size_t dropped = 0;
    for (const auto& t : traces) dropped += t.dropped_rows;
    return {{"traces", traces.size()},
            {"short_traces", prepared.short_traces},
            {"dropped_rows", dropped},
            {"overlap", prepared.overlap},
            {"train", prepared.split.train.size()},
            {"validation", prepared.split.validation.size()},
            {"test", prepared.split.test.size()}};
}

std::vector<data::WindowSample> windows_for_model(std::span<const data::VmTrace> traces,
                                                  const model::ModelFile& file) {
    const std::size_t window = file.network.spec().window;
    const bool overlap = file.metadata.value("overlap", data::overlap_for_window(window));
    auto result = data::window_traces(traces, window, overlap);
    if (result.windows.empty()) {
        throw DataError("no trace holds a full window of " + std::to_string(window) + " rows");
    }
    if (file.normalizer) data::apply_normalizer(result.windows, *file.normalizer);
    return std::move(result.windows);
}

}  // namespace

KeyValueConfig resolve_config(const CommonOptions& options) {
    KeyValueConfig kv = KeyValueConfig::parse(data::default_synth_config_text(), "<defaults>");
    training::TrainConfig train;
    training::store_train_config(kv, train);
    training::store_pipeline_options(kv, training::pipeline_options_from(kv, train));
    if (options.config) {
        require_file(*options.config, "config file");
        kv.merge(KeyValueConfig::load(*options.config));
    }
    if (options.seed) kv.set("run", "seed", std::to_string(*options.seed));
    if (options.window) kv.set_int("train", "window", static_cast<std::int64_t>(*options.window));
    if (options.variant) kv.set("train", "variant", *options.variant);
    if (options.epochs) kv.set_int("train", "epochs", static_cast<std::int64_t>(*options.epochs));

    // Normalize through the typed readers so the saved file is fully resolved.
    KeyValueConfig resolved;
    data::store_synth_config(resolved, data::synth_config_from(kv));
    const auto resolved_train = training::train_config_from(kv);
    training::store_train_config(resolved, resolved_train);
    training::store_pipeline_options(resolved, training::pipeline_options_from(kv, resolved_train));
    for (const auto& section : kv.sections()) {
        if (!resolved.has_section(section)) throw ConfigError(kv.source() + ": unknown section [" + section + "]");
    }
    return resolved;
}

GenerateResult cmd_generate(const CommonOptions& options, std::ostream& log) {
    const auto kv = resolve_config(options);
    const auto synth = data::synth_config_from(kv);
    const auto seed = training::train_config_from(kv).seed;
    const auto traces = data::synthesize(synth, seed);

    prepare_out_dir(options.out);
    GenerateResult result;
    std::vector<data::ManifestEntry> entries;
    for (const auto& trace : traces) {
        const fs::path csv = options.out / (trace.vm_id + ".csv");
        data::write_trace_csv(csv, trace);
        result.traces.push_back(csv);
        entries.push_back({fs::path(trace.vm_id + ".csv"), trace.vm_id, trace.class_label});
    }
    result.manifest = options.out / "manifest.csv";
    data::write_manifest(result.manifest, entries);
    kv.save(options.out / kRunConfigName);
    log << "wrote " << traces.size() << " traces and " << result.manifest.string() << '\n';
    return result;
}

TrainArtifacts cmd_train(const fs::path& manifest, const CommonOptions& options, std::ostream& log) {
    const auto kv = resolve_config(options);
    const auto config = training::train_config_from(kv);
    const auto pipeline = training::pipeline_options_from(kv, config);
    require_file(manifest, "manifest");
    const auto traces = data::ingest_csv(manifest);
    auto prepared = data::prepare_dataset(traces, pipeline);

    auto result = training::train(prepared.split, config, [&](const training::EpochRecord& r) {
        log << "epoch " << r.epoch << '/' << config.epochs << "  train_loss " << r.train_loss << "  val_loss "
            << r.val_loss << "  val_acc " << r.val_accuracy << "  lr " << r.learning_rate << '\n';
    });
    model::round_to_storage_precision(result.best);
    auto report = training::evaluate(result.best, prepared.split.test);
    report.epoch_of_best = result.best_epoch;

    json metadata = {{"variant", model::variant_name(config.variant)},
                     {"window", config.window},
                     {"overlap", prepared.overlap},
                     {"overlap_threshold", pipeline.overlap_threshold},
                     {"split_mode", data::split_mode_name(pipeline.split_mode)},
                     {"seed", config.seed},
                     {"best_epoch", result.best_epoch},
                     {"epochs", config.epochs}};
    json report_json = {{"variant", model::variant_name(config.variant)},
                        {"window", config.window},
                        {"best_epoch", result.best_epoch},
                        {"final_learning_rate", result.history.back().learning_rate},
                        {"dataset", dataset_summary(prepared, traces)},
                        {"test", training::report_to_json(report)}};

    prepare_out_dir(options.out);
    TrainArtifacts artifacts{options.out / "model.dvmw", options.out / "history.log", options.out / "report.json",
                             options.out / kRunConfigName, report.error_percent};
    model::save(result.best, artifacts.weights, &prepared.split.normalizer, metadata);
    write_text(artifacts.history, training::history_log(result.history));
    write_text(artifacts.report, report_json.dump(2) + '\n');
    kv.save(artifacts.config);
    log << "best epoch " << result.best_epoch << ", test error " << report.error_percent << "% on "
        << prepared.split.test.size() << " windows\n";
    return artifacts;
}

fs::path cmd_evaluate(const fs::path& weights, const fs::path& manifest, const CommonOptions& options,
                      std::ostream& log) {
    require_file(weights, "weight file");
    require_file(manifest, "manifest");
    const auto file = model::load_model_file(weights);
    const auto traces = data::ingest_csv(manifest);
    const auto windows = windows_for_model(traces, file);
    const auto report = training::evaluate(file.network, windows);

    prepare_out_dir(options.out);
    const fs::path path = options.out / "evaluation.json";
    json j = {{"weights", weights.filename().string()}, {"manifest", manifest.filename().string()},
              {"report", training::report_to_json(report)}};
    write_text(path, j.dump(2) + '\n');
    log << "error " << report.error_percent << "% on " << windows.size() << " windows\n";
    return path;
}

Classification cmd_classify(const fs::path& weights, const fs::path& csv, std::ostream& out) {
    require_file(weights, "weight file");
    require_file(csv, "trace");
    const auto file = model::load_model_file(weights);
    const auto trace = data::read_trace_csv(csv, csv.stem().string(), 0);
    if (trace.timesteps < file.network.spec().window) {
        throw DataError(csv.string() + ": " + std::to_string(trace.timesteps) + " rows, the model needs at least " +
                        std::to_string(file.network.spec().window));
    }
    const auto windows = windows_for_model(std::span(&trace, 1), file);
    const auto report = training::evaluate(file.network, windows);

    Classification result;
    std::vector<std::size_t> votes(file.network.spec().classes, 0);
    out << "start";
    for (std::size_t c = 0; c < votes.size(); ++c) out << ",p_" << data::class_name(static_cast<int>(c));
    out << ",predicted\n";
    char buf[32];
    for (const auto& s : report.per_sample) {
        out << s.origin.start;
        for (double p : s.probabilities) {
            std::snprintf(buf, sizeof buf, "%.17g", p);
            out << ',' << buf;
        }
        out << ',' << data::class_name(s.predicted) << '\n';
        ++votes[static_cast<std::size_t>(s.predicted)];
        result.starts.push_back(s.origin.start);
        result.probabilities.push_back(s.probabilities);
        result.predicted.push_back(s.predicted);
    }
    // Ties go to the lower label.
    result.majority = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    out << "# " << trace.vm_id << " majority " << data::class_name(result.majority) << ' '
        << votes[static_cast<std::size_t>(result.majority)] << '/' << report.per_sample.size() << '\n';
    return result;
}

CompareArtifacts cmd_compare(const fs::path& manifest, const std::vector<std::size_t>& windows,
                             const std::vector<std::string>& variants, std::size_t jobs,
                             const CommonOptions& options, std::ostream& log) {
    const auto kv = resolve_config(options);
    training::SweepOptions sweep;
    sweep.base = training::train_config_from(kv);
    sweep.pipeline = training::pipeline_options_from(kv, sweep.base);
    if (!windows.empty()) sweep.windows = windows;
    if (!variants.empty()) {
        sweep.variants.clear();
        for (const auto& v : variants) sweep.variants.push_back(model::parse_variant(v));
    }
    for (auto w : sweep.windows) model::block_count(w);
    sweep.jobs = std::max<std::size_t>(jobs, 1);
    require_file(manifest, "manifest");
    const auto traces = data::ingest_csv(manifest);

    log << "training " << sweep.windows.size() * sweep.variants.size() << " models\n";
    const auto table = training::sweep(traces, sweep);

    prepare_out_dir(options.out);
    CompareArtifacts artifacts{options.out / "comparison.txt", options.out / "comparison.json",
                               options.out / "accuracy_by_window.csv"};
    const auto text = training::format_table(table);
    write_text(artifacts.table_text, text);
    write_text(artifacts.table_json, training::table_to_json(table).dump(2) + '\n');
    write_text(artifacts.plot_data, training::plot_data_csv(table));
    KeyValueConfig saved = kv;
    std::string list;
    for (auto w : sweep.windows) list += (list.empty() ? "" : " ") + std::to_string(w);
    saved.set("compare", "windows", list);
    list.clear();
    for (auto v : sweep.variants) list += (list.empty() ? "" : " ") + std::string(model::variant_name(v));
    saved.set("compare", "variants", list);
    saved.save(options.out / kRunConfigName);
    log << text;
    return artifacts;
}

int run(int argc, char** argv) {
    CLI::App app{"Behavior classification of VM resource traces with 1D convolutional networks"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string variant;
    auto add_common = [&](CLI::App* cmd, bool model_flags) {
        cmd->add_option_function<std::string>("--config", [&](const std::string& p) { common.config = p; },
                                              "Key/value run config");
        cmd->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { common.seed = s; }, "Run seed");
        cmd->add_option("--out", common.out, "Output directory")->capture_default_str();
        if (model_flags) {
            cmd->add_option_function<std::size_t>("--window", [&](std::size_t w) { common.window = w; },
                                                   "Window length W (power of two, >= 4)");
            cmd->add_option_function<std::string>("--variant", [&](const std::string& v) { common.variant = v; },
                                                  "Model variant")
                ->check(CLI::IsMember({"deepconv", "deepfft"}));
            cmd->add_option_function<std::size_t>("--epochs", [&](std::size_t e) { common.epochs = e; },
                                                   "Override the epoch count");
        }
    };

    auto* generate = app.add_subcommand("generate", "Write synthetic traces and a manifest");
    add_common(generate, false);

    fs::path manifest;
    fs::path weights;
    fs::path csv;
    auto* train = app.add_subcommand("train", "Train one model on a manifest");
    add_common(train, true);
    train->add_option("--manifest", manifest, "Manifest of trace CSVs")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Score a weight file on every window of a manifest");
    add_common(evaluate, false);
    evaluate->add_option("--weights", weights, "Weight file")->required();
    evaluate->add_option("--manifest", manifest, "Manifest of trace CSVs")->required();

    auto* classify = app.add_subcommand("classify", "Per-window class probabilities for one trace");
    classify->add_option("--weights", weights, "Weight file")->required();
    classify->add_option("--csv", csv, "Trace CSV")->required();

    std::vector<std::size_t> windows;
    std::vector<std::string> variants;
    std::size_t jobs = 1;
    auto* compare = app.add_subcommand("compare", "Train every (variant, window) pair and tabulate errors");
    add_common(compare, true);
    compare->add_option("--manifest", manifest, "Manifest of trace CSVs")->required();
    compare->add_option("--windows", windows, "Window lengths")->delimiter(',');
    compare->add_option("--variants", variants, "Variants")->delimiter(',')->check(
        CLI::IsMember({"deepconv", "deepfft"}));
    compare->add_option("--jobs", jobs, "Concurrent trainings")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kUsageError;
    }

    try {
        if (*generate) {
            cmd_generate(common, std::cerr);
        } else if (*train) {
            cmd_train(manifest, common, std::cerr);
        } else if (*evaluate) {
            cmd_evaluate(weights, manifest, common, std::cerr);
        } else if (*classify) {
            cmd_classify(weights, csv, std::cout);
        } else if (*compare) {
            cmd_compare(manifest, windows, variants, jobs, common, std::cerr);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDivergence;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kSuccess;
}

}  // namespace vmclass::cli
