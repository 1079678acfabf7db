#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmclass/config.hpp"
#include "vmclass/data.hpp"
#include "vmclass/model.hpp"

namespace vmclass::training {

struct TrainConfig {
    double learning_rate = 0.0003;
    double weight_decay = 0.0012;
    std::size_t batch_size = 64;
    std::size_t epochs = 110;
    double plateau_factor = 0.6;
    std::size_t plateau_patience = 10;
    std::uint64_t seed = 0;
    std::size_t window = 4;
    model::Variant variant = model::Variant::DeepConv;
};

void validate(const TrainConfig& config);

// [train] section of a run config; the seed is [run] seed.
TrainConfig train_config_from(const KeyValueConfig& config, const TrainConfig& base = {});
void store_train_config(KeyValueConfig& config, const TrainConfig& train);

// [data] section of a run config; the window and seed come from the train config.
data::PipelineOptions pipeline_options_from(const KeyValueConfig& config, const TrainConfig& train);
void store_pipeline_options(KeyValueConfig& config, const data::PipelineOptions& options);

// Multiplies the rate by `factor` once the monitored loss has failed to drop
// strictly below its best value for `patience` consecutive epochs. The
// counter restarts after an improvement or a reduction.
class PlateauScheduler {
public:
    PlateauScheduler(double learning_rate, double factor, std::size_t patience);

    // Returns true when this observation triggered a reduction.
    bool step(double loss);

    double learning_rate() const noexcept { return learning_rate_; }
    std::size_t reductions() const noexcept { return reductions_; }
    std::size_t stale_epochs() const noexcept { return stale_; }
    double best_loss() const noexcept { return best_; }

private:
    double learning_rate_;
    double factor_;
    std::size_t patience_;
    double best_;
    std::size_t stale_ = 0;
    std::size_t reductions_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double learning_rate = 0.0;  // rate used during this epoch
};

struct TrainResult {
    model::Network best;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Runs exactly config.epochs epochs and returns the snapshot with the best
// validation accuracy (ties: lower validation loss, then earlier epoch).
// A final batch of a single sample is merged into the preceding batch since
// batch statistics need two values. Throws DivergenceError on a non-finite loss.
TrainResult train(const data::DatasetSplit& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// (N, W, M) batch from the given samples.
Tensor make_batch(std::span<const data::WindowSample> samples);
Tensor make_batch(std::span<const data::WindowSample> samples, std::span<const std::size_t> indices);

struct SamplePrediction {
    data::Origin origin;
    int predicted = 0;
    int truth = 0;
    std::vector<double> probabilities;
};

struct EvalReport {
    double accuracy = 0.0;
    double error_percent = 100.0;
    double mean_loss = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<SamplePrediction> per_sample;
    std::size_t epoch_of_best = 0;
};

// Eval-mode predictions (argmax of the logits).
EvalReport evaluate(const model::Network& net, std::span<const data::WindowSample> samples,
                    std::size_t batch_size = 256);

nlohmann::json report_to_json(const EvalReport& report, bool include_samples = true);
// One line per epoch: epoch train_loss val_loss val_accuracy lr
std::string history_log(std::span<const EpochRecord> history);

struct ReferenceRow {
    std::string method;
    std::string measure;
    std::vector<std::optional<double>> values;  // aligned with ComparisonTable::windows
};

// Published baseline figures shipped with the toolkit; not computed.
std::vector<std::size_t> reference_windows();
std::vector<ReferenceRow> reference_rows(std::span<const std::size_t> windows);

struct SweepCell {
    model::Variant variant = model::Variant::DeepConv;
    std::size_t window = 0;
    EvalReport report;
    std::size_t train_samples = 0;
    std::size_t test_samples = 0;
};

struct ComparisonTable {
    std::vector<std::size_t> windows;
    std::vector<model::Variant> variants;
    std::vector<SweepCell> cells;  // variant-major, window-minor
    std::vector<ReferenceRow> references;

    const SweepCell& cell(model::Variant variant, std::size_t window) const;
};

struct SweepOptions {
    std::vector<std::size_t> windows{4, 8, 16, 32, 64, 128, 256};
    std::vector<model::Variant> variants{model::Variant::DeepFFT, model::Variant::DeepConv};
    TrainConfig base;
    data::PipelineOptions pipeline;
    std::size_t jobs = 1;  // concurrent (variant, window) trainings
};

// Trains and evaluates every (variant, window) pair. Each pair gets a seed
// derived from (base seed, variant, window), so results do not depend on
// `jobs`.
ComparisonTable sweep(std::span<const data::VmTrace> traces, const SweepOptions& options);

std::string format_table(const ComparisonTable& table);
nlohmann::json table_to_json(const ComparisonTable& table);
// variant,window,accuracy lines for plotting accuracy against W.
std::string plot_data_csv(const ComparisonTable& table);

}  // namespace vmclass::training
