#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "vmclass/error.hpp"
#include "vmclass/serialize.hpp"
#include "vmclass/synth.hpp"
#include "vmclass/training.hpp"

using namespace vmclass;
using namespace vmclass::training;

namespace {

// Class 0 windows hover around -1 on every metric, class 1 around +1.
std::vector<data::WindowSample> toy_windows(std::size_t count, std::size_t window, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<data::WindowSample> out;
    for (std::size_t i = 0; i < count; ++i) {
        data::WindowSample s;
        s.length = window;
        s.metrics = data::kMetricCount;
        s.label = static_cast<int>(i % 2);
        s.origin = {"toy", i};
        for (std::size_t k = 0; k < window * data::kMetricCount; ++k) s.values.push_back((s.label ? 1.0 : -1.0) + noise(rng));
        out.push_back(std::move(s));
    }
    return out;
}

data::DatasetSplit toy_split(std::size_t train, std::size_t window = 4) {
    data::DatasetSplit split;
    split.train = toy_windows(train, window, 1);
    split.validation = toy_windows(8, window, 2);
    split.test = toy_windows(8, window, 3);
    return split;
}

}  // namespace

TEST_CASE("train config defaults") {
    const TrainConfig c;
    CHECK(c.learning_rate == 0.0003);
    CHECK(c.weight_decay == 0.0012);
    CHECK(c.batch_size == 64);
    CHECK(c.epochs == 110);
    CHECK(c.plateau_factor == 0.6);
    CHECK(c.plateau_patience == 10);
}

TEST_CASE("train config validation and text round trip") {
    TrainConfig c;
    c.batch_size = 1;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = {};
    c.learning_rate = -1;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = {};
    c.seed = 99;
    c.window = 32;
    c.variant = model::Variant::DeepFFT;
    KeyValueConfig kv;
    store_train_config(kv, c);
    const auto back = train_config_from(kv);
    CHECK(back.seed == 99);
    CHECK(back.window == 32);
    CHECK(back.variant == model::Variant::DeepFFT);
    CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("[train]\nlr = 1\n")), ConfigError);
    CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("[train]\nvariant = lstm\n")), ConfigError);
}

TEST_CASE("plateau scheduler: 30 constant epochs after the best give 3 reductions") {
    PlateauScheduler s(0.0003, 0.6, 10);
    CHECK_FALSE(s.step(1.0));
    std::vector<std::size_t> reduced_at;
    for (std::size_t e = 1; e <= 30; ++e)
        if (s.step(1.0)) reduced_at.push_back(e);
    CHECK(reduced_at == std::vector<std::size_t>{10, 20, 30});
    CHECK(s.reductions() == 3);
    CHECK(s.learning_rate() == doctest::Approx(0.0003 * 0.6 * 0.6 * 0.6).epsilon(1e-15));
}

TEST_CASE("plateau scheduler: improvements reset the counter, ties do not") {
    PlateauScheduler s(1.0, 0.5, 3);
    s.step(5.0);
    s.step(5.0);
    s.step(5.0);
    CHECK_FALSE(s.step(4.0));
    CHECK(s.stale_epochs() == 0);
    s.step(4.0);
    s.step(4.0);
    CHECK(s.step(4.0));
    CHECK(s.learning_rate() == 0.5);
    CHECK_THROWS_AS(PlateauScheduler(1.0, 0.5, 0), ConfigError);
}

TEST_CASE("overfits a 16-sample separable toy set at W=4") {
    // 16 samples make one optimizer step per epoch at batch 64; the toy run
    // uses batch 8 and lr 1e-3 so 110 epochs are enough to drive the loss down.
    TrainConfig c;
    c.window = 4;
    c.seed = 1;
    c.batch_size = 8;
    c.learning_rate = 0.001;
    const auto result = train(toy_split(16), c);
    REQUIRE(result.history.size() == 110);
    CHECK(result.history.back().train_loss < 0.01);

    TrainConfig defaults;
    defaults.seed = 1;
    const auto slow = train(toy_split(16), defaults);
    CHECK(slow.history.back().train_loss < 0.05);
    CHECK(slow.history.back().train_loss < slow.history.front().train_loss / 10.0);
}

TEST_CASE("training contract: epochs, lr schedule, best selection, determinism") {
    TrainConfig c;
    c.window = 4;
    c.epochs = 25;
    c.seed = 5;
    c.batch_size = 16;
    c.plateau_patience = 3;
    const auto split = toy_split(65);
    std::vector<EpochRecord> seen;
    const auto a = train(split, c, [&](const EpochRecord& r) { seen.push_back(r); });
    CHECK(a.history.size() == 25);
    CHECK(seen.size() == 25);
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        const auto& r = a.history[i];
        CHECK(r.epoch == i + 1);
        CHECK(std::isfinite(r.train_loss));
        if (i > 0) CHECK(r.learning_rate <= a.history[i - 1].learning_rate);
        const double reductions = std::round(std::log(r.learning_rate / c.learning_rate) / std::log(0.6));
        CHECK(r.learning_rate == doctest::Approx(c.learning_rate * std::pow(0.6, reductions)).epsilon(1e-12));
    }
    const auto& best = a.history[a.best_epoch - 1];
    for (const auto& r : a.history) {
        CHECK(best.val_accuracy >= r.val_accuracy);
        if (r.val_accuracy == best.val_accuracy) CHECK(best.val_loss <= r.val_loss);
    }
    CHECK(best.val_accuracy >= a.history.back().val_accuracy);
    const auto report = evaluate(a.best, split.validation);
    CHECK(report.accuracy == doctest::Approx(best.val_accuracy));

    const auto b = train(split, c);
    CHECK(model::serialize(a.best) == model::serialize(b.best));
    CHECK(history_log(a.history) == history_log(b.history));
}

TEST_CASE("training rejects empty splits and mismatched windows") {
    auto split = toy_split(16);
    TrainConfig c;
    c.epochs = 1;
    auto empty = split;
    empty.test.clear();
    CHECK_THROWS_AS(train(empty, c), DataError);
    c.window = 8;
    CHECK_THROWS_AS(train(split, c), Error);
}

TEST_CASE("non-finite inputs abort training with a divergence error") {
    auto split = toy_split(16);
    split.train[3].values[5] = std::nan("");
    TrainConfig c;
    c.epochs = 2;
    CHECK_THROWS_AS(train(split, c), DivergenceError);
}

TEST_CASE("evaluate: constant predictor on a balanced set scores 0.5") {
    auto net = model::Network::build(model::make_spec(4, model::Variant::DeepConv), 0);
    for (auto& v : net.head().weight.data()) v = 0.0;
    net.head().bias[0] = 1.0;
    net.head().bias[1] = 0.0;
    const auto samples = toy_windows(10, 4, 4);
    const auto r = evaluate(net, samples);
    CHECK(r.accuracy == 0.5);
    CHECK(r.error_percent == 50.0);
    CHECK(r.confusion[0][0] == 5);
    CHECK(r.confusion[1][0] == 5);
    std::size_t total = 0, diagonal = 0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            total += r.confusion[i][j];
            if (i == j) diagonal += r.confusion[i][j];
        }
    CHECK(total == samples.size());
    CHECK(r.accuracy == static_cast<double>(diagonal) / static_cast<double>(total));
    for (const auto& s : r.per_sample) CHECK(s.probabilities[0] + s.probabilities[1] == doctest::Approx(1.0));
    CHECK_THROWS_AS(evaluate(net, std::span<const data::WindowSample>{}), DataError);
}

TEST_CASE("evaluate: perfect predictions give 0.00 percent error") {
    TrainConfig c;
    c.seed = 2;
    c.epochs = 30;
    const auto split = toy_split(32);
    const auto result = train(split, c);
    const auto r = evaluate(result.best, split.test);
    CHECK(r.error_percent == 0.0);
    const auto j = report_to_json(r);
    CHECK(j["error_percent"] == 0.0);
    CHECK(j["per_sample"].size() == split.test.size());
}

TEST_CASE("history log has one line per epoch") {
    std::vector<EpochRecord> h{{1, 0.5, 0.6, 0.75, 0.0003}, {2, 0.4, 0.5, 0.8, 0.0003}};
    std::istringstream in(history_log(h));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') lines.push_back(line);
    REQUIRE(lines.size() == 2);
    CHECK(lines[1].rfind("2 0.4 0.5 0.8 0.0003", 0) == 0);
}

TEST_CASE("reference rows quote the published baselines") {
    const auto windows = reference_windows();
    CHECK(windows == std::vector<std::size_t>{4, 8, 16, 32, 64, 128, 256});
    const auto rows = reference_rows(windows);
    REQUIRE(rows.size() == 3);
    auto find = [&](const std::string& method, const std::string& measure) {
        for (const auto& r : rows)
            if (r.method == method && r.measure == measure) return r;
        FAIL("row not found");
        return rows.front();
    };
    CHECK(*find("PCA-based", "error").values[1] == 17.9);
    CHECK(*find("AGATE", "grey-area").values[1] == 47.8);
    CHECK(*find("AGATE", "error").values[6] == 2.4);
    CHECK_FALSE(find("AGATE", "error").values[0].has_value());
    const std::vector<std::size_t> subset{8, 512};
    const auto partial = reference_rows(subset);
    CHECK(*partial[0].values[0] == 17.9);
    CHECK_FALSE(partial[0].values[1].has_value());
}

TEST_CASE("sweep: one model per (variant, W), table layout, plot data") {
    auto synth = data::default_synth_config();
    synth.length = 600;
    synth.vms_per_class = 2;
    const auto traces = data::synthesize(synth, 1);
    SweepOptions options;
    options.base.epochs = 1;
    options.jobs = 3;
    const auto table = sweep(traces, options);
    CHECK(table.cells.size() == 14);
    CHECK(table.references.size() == 3);
    const auto text = format_table(table);
    CHECK(text.find("47.8*") != std::string::npos);
    CHECK(text.find("2.4*") != std::string::npos);
    CHECK(text.find("reference, not computed") != std::string::npos);
    const auto csv = plot_data_csv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 15);
    const auto j = table_to_json(table);
    CHECK(j["windows"].size() == 7);

    options.jobs = 1;
    const auto serial = sweep(traces, options);
    CHECK(table_to_json(serial) == j);
    CHECK(table.cell(model::Variant::DeepConv, 8).window == 8);
}
