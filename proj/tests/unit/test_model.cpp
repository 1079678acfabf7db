#include <doctest.h>

#include <cmath>
#include <random>

#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "vmclass/error.hpp"
#include "vmclass/model.hpp"

using namespace vmclass;
using namespace vmclass::model;

TEST_CASE("block count table") {
    const std::pair<std::size_t, std::size_t> table[] = {{4, 2}, {8, 2}, {16, 3}, {32, 4}, {64, 5}, {128, 6}, {256, 7}};
    for (auto [w, n] : table) {
        CAPTURE(w);
        CHECK(block_count(w) == n);
    }
    CHECK(block_count(1024) == 9);
    CHECK_THROWS_AS(block_count(2), ShapeError);
    CHECK_THROWS_AS(block_count(12), ShapeError);
}

TEST_CASE("channel plan doubles from 32 and caps at 128") {
    CHECK(default_channel_plan(2) == std::vector<std::size_t>{32, 64});
    CHECK(default_channel_plan(5) == std::vector<std::size_t>{32, 64, 128, 128, 128});
}

TEST_CASE("sequence lengths follow floor((L-1)/2)+1") {
    CHECK(sequence_lengths(make_spec(32, Variant::DeepConv)) == std::vector<std::size_t>{32, 16, 8, 4, 2});
    CHECK(sequence_lengths(make_spec(4, Variant::DeepConv)) == std::vector<std::size_t>{4, 2, 1});
    for (std::size_t w = 4; w <= 256; w *= 2) {
        const auto lengths = sequence_lengths(make_spec(w, Variant::DeepFFT));
        for (std::size_t i = 1; i < lengths.size(); ++i) CHECK(lengths[i] == (lengths[i - 1] - 1) / 2 + 1);
    }
}

TEST_CASE("head input size equals the flattened conv output") {
    for (std::size_t w = 4; w <= 256; w *= 2) {
        const auto spec = make_spec(w, Variant::DeepConv);
        const auto net = Network::build(spec, 1);
        CHECK(net.head().in_features() == spec.channel_plan.back() * sequence_lengths(spec).back());
        CHECK(net.head().out_features() == 2);
        CHECK(net.blocks().size() == block_count(w));
        CHECK(net.blocks().front().conv.in_channels() == 16);
    }
}

TEST_CASE("infeasible specs are rejected") {
    auto spec = make_spec(8, Variant::DeepConv);
    spec.padding = 0;
    spec.kernel = 5;
    CHECK_THROWS_AS(validate(spec), ShapeError);
    spec = make_spec(8, Variant::DeepConv);
    spec.channel_plan.pop_back();
    CHECK_THROWS_AS(Network::build(spec, 0), ShapeError);
}

TEST_CASE("build is deterministic in (spec, seed) and uses fan-in bounds") {
    const auto spec = make_spec(16, Variant::DeepConv);
    auto a = Network::build(spec, 42);
    auto b = Network::build(spec, 42);
    auto c = Network::build(spec, 43);
    const auto ta = a.named_tensors();
    const auto tb = b.named_tensors();
    const auto tc = c.named_tensors();
    bool differs = false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].name == tb[i].name);
        CHECK(*ta[i].tensor == *tb[i].tensor);
        differs = differs || !(*ta[i].tensor == *tc[i].tensor);
    }
    CHECK(differs);
    for (const auto& block : a.blocks()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(block.conv.in_channels() * block.conv.kernel()));
        for (double v : block.conv.weight.data()) CHECK(std::abs(v) <= bound);
    }
    const double head_bound = 1.0 / std::sqrt(static_cast<double>(a.head().in_features()));
    for (double v : a.head().weight.data()) CHECK(std::abs(v) <= head_bound);
}

TEST_CASE("variants share initialization and differ only by the front end") {
    auto conv = Network::build(make_spec(8, Variant::DeepConv), 7);
    auto fft = Network::build(make_spec(8, Variant::DeepFFT), 7);
    CHECK_FALSE(conv.frontend().has_value());
    CHECK(fft.frontend().has_value());
    CHECK(conv.head().weight == fft.head().weight);
}

TEST_CASE("input layout transposes (N, W, M) to (N, M, W)") {
    Tensor x({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const auto y = to_channels_first(x);
    CHECK(y.shape() == Shape{1, 3, 2});
    CHECK(y.at({0, 0, 1}) == 4);
    CHECK(to_time_major(y) == x);
}

TEST_CASE("forward shapes, eval determinism and batch independence") {
    std::mt19937_64 rng(9);
    auto net = Network::build(make_spec(8, Variant::DeepFFT), 3);
    const auto batch = oracle::random_tensor({5, 8, 16}, rng);
    const auto logits = net.infer(batch);
    CHECK(logits.shape() == Shape{5, 2});
    CHECK(net.infer(batch) == logits);
    // Eval-mode rows do not depend on the rest of the batch.
    Tensor one({1, 8, 16});
    std::copy_n(batch.data().begin() + 8 * 16 * 2, 8 * 16, one.data().begin());
    const auto single = net.infer(one);
    CHECK(single[0] == doctest::Approx(logits.at({2, 0})).epsilon(1e-12));
    CHECK_THROWS_AS(net.infer(Tensor({2, 4, 16})), ShapeError);
}

TEST_CASE("training forward updates running statistics, eval does not") {
    std::mt19937_64 rng(1);
    auto net = Network::build(make_spec(4, Variant::DeepConv), 3);
    const auto batch = oracle::random_tensor({4, 4, 16}, rng);
    const auto before = net.blocks()[0].norm.running_mean;
    net.infer(batch);
    CHECK(net.blocks()[0].norm.running_mean == before);
    net.forward(batch, true);
    CHECK_FALSE(net.blocks()[0].norm.running_mean == before);
}

TEST_CASE("backward bookkeeping") {
    std::mt19937_64 rng(1);
    auto net = Network::build(make_spec(4, Variant::DeepConv), 3);
    const std::vector<int> labels{0, 1};
    CHECK_THROWS(net.backward(labels));
    net.zero_grad();
    net.forward(oracle::random_tensor({2, 4, 16}, rng), true);
    const double loss = net.backward(labels);
    CHECK(std::isfinite(loss));
    net.forward(oracle::random_tensor({2, 4, 16}, rng), true);
    CHECK_THROWS(net.backward(labels));
}

TEST_CASE("parameter inventory") {
    auto net = Network::build(make_spec(4, Variant::DeepConv), 0);
    // Per block: conv weight, conv bias, gamma, beta. Then the head.
    CHECK(net.parameters().size() == 2 * 4 + 2);
    CHECK(net.named_tensors().size() == 2 * 6 + 2);
    CHECK(net.named_tensors().front().name == "blocks.0.conv.weight");
    const std::size_t expected = (32 * 16 * 3 + 32) + 2 * 32 + (64 * 32 * 3 + 64) + 2 * 64 + (2 * 64 + 2);
    CHECK(net.parameter_count() == expected);
}

TEST_CASE("network gradients match central differences") {
    for (auto variant : {Variant::DeepConv, Variant::DeepFFT}) {
        const auto outcome = gradsuite::network(variant);
        INFO(outcome.name);
        CHECK(outcome.probes >= gradsuite::kMinProbes);
        CHECK(outcome.max_rel_error < gradsuite::kTolerance);
    }
}
