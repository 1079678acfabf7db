#include "vmclass/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "vmclass/embedded_data.hpp"
#include "vmclass/error.hpp"
#include "vmclass/optim.hpp"
#include "vmclass/random.hpp"

namespace vmclass::training {

using nlohmann::json;

namespace {

constexpr std::string_view kTrainSection = "train";
constexpr std::string_view kDataSection = "data";
constexpr std::string_view kRunSection = "run";

// Stream ids for seeds derived from TrainConfig::seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

}  // namespace

void validate(const TrainConfig& config) {
    auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
    if (!(config.learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(config.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
    if (config.batch_size < 2) fail("batch_size must be at least 2");
    if (config.epochs == 0) fail("epochs must be positive");
    if (!(config.plateau_factor > 0.0 && config.plateau_factor < 1.0)) fail("plateau_factor must lie in (0, 1)");
    if (config.plateau_patience < 1) fail("plateau_patience must be at least 1");
    model::block_count(config.window);
}

TrainConfig train_config_from(const KeyValueConfig& kv, const TrainConfig& base) {
    kv.require_known_keys(kTrainSection, {"learning_rate", "weight_decay", "batch_size", "epochs",
                                          "plateau_factor", "plateau_patience", "window", "variant"});
    kv.require_known_keys(kRunSection, {"seed"});
    TrainConfig c = base;
    c.learning_rate = kv.get_double(kTrainSection, "learning_rate", c.learning_rate);
    c.weight_decay = kv.get_double(kTrainSection, "weight_decay", c.weight_decay);
    c.batch_size = kv.get_uint(kTrainSection, "batch_size", c.batch_size);
    c.epochs = kv.get_uint(kTrainSection, "epochs", c.epochs);
    c.plateau_factor = kv.get_double(kTrainSection, "plateau_factor", c.plateau_factor);
    c.plateau_patience = kv.get_uint(kTrainSection, "plateau_patience", c.plateau_patience);
    c.seed = kv.get_uint(kRunSection, "seed", c.seed);
    c.window = kv.get_uint(kTrainSection, "window", c.window);
    if (auto v = kv.get(kTrainSection, "variant")) c.variant = model::parse_variant(*v);
    validate(c);
    return c;
}

void store_train_config(KeyValueConfig& kv, const TrainConfig& c) {
    kv.set_double(kTrainSection, "learning_rate", c.learning_rate);
    kv.set_double(kTrainSection, "weight_decay", c.weight_decay);
    kv.set_int(kTrainSection, "batch_size", static_cast<std::int64_t>(c.batch_size));
    kv.set_int(kTrainSection, "epochs", static_cast<std::int64_t>(c.epochs));
    kv.set_double(kTrainSection, "plateau_factor", c.plateau_factor);
    kv.set_int(kTrainSection, "plateau_patience", static_cast<std::int64_t>(c.plateau_patience));
    kv.set(kRunSection, "seed", std::to_string(c.seed));
    kv.set_int(kTrainSection, "window", static_cast<std::int64_t>(c.window));
    kv.set(kTrainSection, "variant", std::string(model::variant_name(c.variant)));
}

data::PipelineOptions pipeline_options_from(const KeyValueConfig& kv, const TrainConfig& train) {
    kv.require_known_keys(kDataSection, {"overlap_threshold", "split_mode", "train_fraction",
                                         "validation_fraction", "test_fraction"});
    data::PipelineOptions o;
    o.window = train.window;
    o.seed = derive_seed(train.seed, 0);
    o.overlap_threshold = kv.get_uint(kDataSection, "overlap_threshold", o.overlap_threshold);
    if (auto mode = kv.get(kDataSection, "split_mode")) o.split_mode = data::parse_split_mode(*mode);
    o.fractions.train = kv.get_double(kDataSection, "train_fraction", o.fractions.train);
    o.fractions.validation = kv.get_double(kDataSection, "validation_fraction", o.fractions.validation);
    o.fractions.test = kv.get_double(kDataSection, "test_fraction", o.fractions.test);
    return o;
}

void store_pipeline_options(KeyValueConfig& kv, const data::PipelineOptions& o) {
    kv.set_int(kDataSection, "overlap_threshold", static_cast<std::int64_t>(o.overlap_threshold));
    kv.set(kDataSection, "split_mode", std::string(data::split_mode_name(o.split_mode)));
    kv.set_double(kDataSection, "train_fraction", o.fractions.train);
    kv.set_double(kDataSection, "validation_fraction", o.fractions.validation);
    kv.set_double(kDataSection, "test_fraction", o.fractions.test);
}

PlateauScheduler::PlateauScheduler(double learning_rate, double factor, std::size_t patience)
    : learning_rate_(learning_rate), factor_(factor), patience_(patience),
      best_(std::numeric_limits<double>::infinity()) {
    if (patience_ < 1) throw ConfigError("plateau patience must be at least 1");
}

bool PlateauScheduler::step(double loss) {
    if (loss < best_) {
        best_ = loss;
        stale_ = 0;
        return false;
    }
    if (++stale_ < patience_) return false;
    learning_rate_ *= factor_;
    ++reductions_;
    stale_ = 0;
    return true;
}

Tensor make_batch(std::span<const data::WindowSample> samples) {
    std::vector<std::size_t> all(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return make_batch(samples, all);
}

Tensor make_batch(std::span<const data::WindowSample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DataError("cannot build an empty batch");
    const auto& first = samples[indices.front()];
    const std::size_t w = first.length;
    const std::size_t m = first.metrics;
    Tensor batch({indices.size(), w, m});
    double* dst = batch.data().data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto& s = samples[indices[i]];
        if (s.length != w || s.metrics != m) throw ShapeError("batch samples disagree on (W, M)");
        std::copy(s.values.begin(), s.values.end(), dst + i * w * m);
    }
    return batch;
}

namespace {

std::vector<int> labels_of(std::span<const data::WindowSample> samples, std::span<const std::size_t> indices) {
    std::vector<int> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back(samples[i].label);
    return labels;
}

void check_split_part(std::span<const data::WindowSample> part, const char* name, std::size_t window) {
    if (part.empty()) throw DataError(std::string("training: ") + name + " split is empty");
    for (const auto& s : part) {
        if (s.length != window) {
            throw DataError(std::string("training: ") + name + " sample of length " +
                            std::to_string(s.length) + " for window " + std::to_string(window));
        }
    }
}

// Consecutive index ranges of `batch_size`; a trailing singleton joins the previous range.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t start = 0; start < count; start += batch_size) {
        ranges.emplace_back(start, std::min(count, start + batch_size));
    }
    if (ranges.size() > 1 && ranges.back().second - ranges.back().first == 1) {
        ranges.pop_back();
        ranges.back().second = count;
    }
    return ranges;
}

}  // namespace

TrainResult train(const data::DatasetSplit& split, const TrainConfig& config, const EpochCallback& on_epoch) {
    validate(config);
    check_split_part(split.train, "train", config.window);
    check_split_part(split.validation, "validation", config.window);
    check_split_part(split.test, "test", config.window);
    if (split.train.size() < 2) throw DataError("training: need at least 2 training samples");

    const auto spec = model::make_spec(config.window, config.variant, split.train.front().metrics,
                                       data::kClassCount);
    model::Network net = model::Network::build(spec, derive_seed(config.seed, kInitStream));
    Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
    nn::AdamState adam = nn::make_adam_state(config.learning_rate, config.weight_decay);
    PlateauScheduler scheduler(config.learning_rate, config.plateau_factor, config.plateau_patience);

    TrainResult result;
    double best_acc = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochRecord record;
        record.epoch = epoch;
        record.learning_rate = scheduler.learning_rate();
        adam.learning_rate = scheduler.learning_rate();

        double loss_sum = 0.0;
        for (const auto& [begin, end] : batch_ranges(order.size(), config.batch_size)) {
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const Tensor batch = make_batch(split.train, idx);
            const auto labels = labels_of(split.train, idx);
            net.zero_grad();
            net.forward(batch, true);
            double loss = 0.0;
            try {
                loss = net.backward(labels);
            } catch (const DivergenceError&) {
                throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch starting at sample " + std::to_string(begin));
            }
            loss_sum += loss * static_cast<double>(idx.size());
            auto params = net.parameters();
            nn::adam_step(params, adam);
        }
        net.clear_cache();
        record.train_loss = loss_sum / static_cast<double>(order.size());

        const auto val = evaluate(net, split.validation);
        record.val_loss = val.mean_loss;
        record.val_accuracy = val.accuracy;
        if (!std::isfinite(record.train_loss) || !std::isfinite(record.val_loss)) {
            throw DivergenceError("training diverged: non-finite loss after epoch " + std::to_string(epoch));
        }

        if (record.val_accuracy > best_acc || (record.val_accuracy == best_acc && record.val_loss < best_loss)) {
            best_acc = record.val_accuracy;
            best_loss = record.val_loss;
            result.best = net;
            result.best_epoch = epoch;
        }
        scheduler.step(record.val_loss);
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);
    }
    return result;
}

EvalReport evaluate(const model::Network& net, std::span<const data::WindowSample> samples,
                    std::size_t batch_size) {
    if (samples.empty()) throw DataError("evaluate: no samples");
    if (batch_size == 0) batch_size = samples.size();
    const std::size_t classes = net.spec().classes;

    EvalReport report;
    report.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    report.per_sample.reserve(samples.size());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
        const std::size_t end = std::min(samples.size(), begin + batch_size);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Tensor logits = net.infer(make_batch(samples, idx));
        const auto labels = labels_of(samples, idx);
        const auto loss = nn::cross_entropy_loss(logits, labels);
        loss_sum += loss.loss * static_cast<double>(idx.size());
        const Tensor probs = nn::softmax(logits);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* z = logits.data().data() + r * classes;
            const auto predicted = static_cast<int>(std::max_element(z, z + classes) - z);
            const auto& s = samples[idx[r]];
            report.confusion[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(predicted)] += 1;
            if (predicted == s.label) ++correct;
            const double* p = probs.data().data() + r * classes;
            report.per_sample.push_back({s.origin, predicted, s.label, std::vector<double>(p, p + classes)});
        }
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    report.error_percent = 100.0 * (1.0 - report.accuracy);
    report.mean_loss = loss_sum / static_cast<double>(samples.size());
    return report;
}

json report_to_json(const EvalReport& report, bool include_samples) {
    json j;
    j["accuracy"] = report.accuracy;
    j["error_percent"] = report.error_percent;
    j["mean_loss"] = report.mean_loss;
    j["confusion"] = report.confusion;
    j["epoch_of_best"] = report.epoch_of_best;
    j["samples"] = report.per_sample.size();
    if (include_samples) {
        json rows = json::array();
        for (const auto& s : report.per_sample) {
            rows.push_back({{"vm_id", s.origin.vm_id},
                            {"start", s.origin.start},
                            {"predicted", s.predicted},
                            {"true", s.truth},
                            {"probabilities", s.probabilities}});
        }
        j["per_sample"] = std::move(rows);
    }
    return j;
}

std::string history_log(std::span<const EpochRecord> history) {
    std::ostringstream out;
    out << "# epoch train_loss val_loss val_accuracy lr\n";
    out << std::setprecision(10);
    for (const auto& r : history) {
        out << r.epoch << ' ' << r.train_loss << ' ' << r.val_loss << ' ' << r.val_accuracy << ' '
            << r.learning_rate << '\n';
    }
    return out.str();
}

std::vector<std::size_t> reference_windows() {
    const auto j = json::parse(embedded::kReferenceBaselines);
    return j.at("windows").get<std::vector<std::size_t>>();
}

std::vector<ReferenceRow> reference_rows(std::span<const std::size_t> windows) {
    const auto j = json::parse(embedded::kReferenceBaselines);
    const auto known = j.at("windows").get<std::vector<std::size_t>>();
    std::vector<ReferenceRow> rows;
    for (const auto& row : j.at("rows")) {
        ReferenceRow out;
        out.method = row.at("method").get<std::string>();
        out.measure = row.at("measure").get<std::string>();
        const auto& values = row.at("values");
        for (std::size_t w : windows) {
            const auto it = std::find(known.begin(), known.end(), w);
            const auto& v = it == known.end() ? json(nullptr) : values.at(static_cast<std::size_t>(it - known.begin()));
            out.values.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
        }
        rows.push_back(std::move(out));
    }
    return rows;
}

const SweepCell& ComparisonTable::cell(model::Variant variant, std::size_t window) const {
    for (const auto& c : cells) {
        if (c.variant == variant && c.window == window) return c;
    }
    throw Error("comparison table has no cell for " + std::string(model::variant_name(variant)) +
                " at W=" + std::to_string(window));
}

ComparisonTable sweep(std::span<const data::VmTrace> traces, const SweepOptions& options) {
    if (options.windows.empty() || options.variants.empty()) throw ConfigError("sweep: nothing to train");
    for (std::size_t w : options.windows) model::block_count(w);
    std::size_t longest = 0;
    for (const auto& t : traces) longest = std::max(longest, t.timesteps);
    const std::size_t widest = *std::max_element(options.windows.begin(), options.windows.end());
    if (longest < widest) {
        throw DataError("sweep: traces have at most " + std::to_string(longest) +
                        " timesteps, window " + std::to_string(widest) + " requested");
    }

    ComparisonTable table;
    table.windows = options.windows;
    table.variants = options.variants;
    table.references = reference_rows(options.windows);

    struct Job {
        model::Variant variant;
        std::size_t window;
    };
    std::vector<Job> jobs;
    for (auto v : options.variants) {
        for (std::size_t w : options.windows) jobs.push_back({v, w});
    }

    auto run = [&](const Job& job) {
        data::PipelineOptions pipeline = options.pipeline;
        pipeline.window = job.window;
        pipeline.seed = derive_seed(options.base.seed, 1000 + job.window);
        const auto prepared = data::prepare_dataset(traces, pipeline);

        TrainConfig config = options.base;
        config.window = job.window;
        config.variant = job.variant;
        config.seed = derive_seed(options.base.seed, (job.variant == model::Variant::DeepFFT ? 2000 : 3000) + job.window);
        auto trained = train(prepared.split, config);
        SweepCell cell;
        cell.variant = job.variant;
        cell.window = job.window;
        cell.report = evaluate(trained.best, prepared.split.test);
        cell.report.epoch_of_best = trained.best_epoch;
        cell.train_samples = prepared.split.train.size();
        cell.test_samples = prepared.split.test.size();
        return cell;
    };

    table.cells.resize(jobs.size());
    const std::size_t workers = std::max<std::size_t>(1, options.jobs);
    for (std::size_t start = 0; start < jobs.size(); start += workers) {
        const std::size_t stop = std::min(jobs.size(), start + workers);
        if (workers == 1) {
            table.cells[start] = run(jobs[start]);
            continue;
        }
        std::vector<std::future<SweepCell>> pending;
        for (std::size_t i = start; i < stop; ++i) {
            pending.push_back(std::async(std::launch::async, run, jobs[i]));
        }
        for (std::size_t i = start; i < stop; ++i) table.cells[i] = pending[i - start].get();
    }
    return table;
}

namespace {

std::string fixed(double value, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << value;
    return os.str();
}

}  // namespace

std::string format_table(const ComparisonTable& table) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Method", ""};
    for (std::size_t w : table.windows) header.push_back(std::to_string(w));
    header.push_back("");
    rows.push_back(header);
    for (const auto& ref : table.references) {
        std::vector<std::string> row{ref.method, ref.measure};
        for (const auto& v : ref.values) row.push_back(v ? fixed(*v, 1) + "*" : "-");
        row.push_back("reference, not computed");
        rows.push_back(std::move(row));
    }
    for (auto variant : table.variants) {
        std::vector<std::string> row{variant == model::Variant::DeepFFT ? "DeepFFT" : "DeepConv", "error"};
        for (std::size_t w : table.windows) row.push_back(fixed(table.cell(variant, w).report.error_percent, 2));
        row.push_back("computed");
        rows.push_back(std::move(row));
    }

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            if (c >= 2 && c + 1 < row.size()) {
                out << std::setw(static_cast<int>(width[c])) << std::right << row[c];
            } else if (c + 1 < row.size()) {
                out << std::setw(static_cast<int>(width[c])) << std::left << row[c];
            } else {
                out << row[c];
            }
        }
        out << '\n';
    }
    out << "Values are test error percentages. '*' rows are published reference figures.\n";
    return out.str();
}

json table_to_json(const ComparisonTable& table) {
    json j;
    j["windows"] = table.windows;
    json refs = json::array();
    for (const auto& ref : table.references) {
        json values = json::array();
        for (const auto& v : ref.values) values.push_back(v ? json(*v) : json(nullptr));
        refs.push_back({{"method", ref.method}, {"measure", ref.measure}, {"values", values},
                        {"computed", false}});
    }
    j["reference_rows"] = std::move(refs);
    json computed = json::array();
    for (auto variant : table.variants) {
        json errors = json::array();
        json accuracy = json::array();
        json best_epoch = json::array();
        for (std::size_t w : table.windows) {
            const auto& cell = table.cell(variant, w);
            errors.push_back(cell.report.error_percent);
            accuracy.push_back(cell.report.accuracy);
            best_epoch.push_back(cell.report.epoch_of_best);
        }
        computed.push_back({{"method", model::variant_name(variant)}, {"error_percent", errors},
                            {"accuracy", accuracy}, {"epoch_of_best", best_epoch}, {"computed", true}});
    }
    j["computed_rows"] = std::move(computed);
    return j;
}

std::string plot_data_csv(const ComparisonTable& table) {
    std::ostringstream out;
    out << "variant,window,accuracy\n" << std::setprecision(10);
    for (const auto& cell : table.cells) {
        out << model::variant_name(cell.variant) << ',' << cell.window << ',' << cell.report.accuracy << '\n';
    }
    return out.str();
}

}  // namespace vmclass::training
