#include <doctest.h>

#include <cmath>

#include "vmclass/error.hpp"
#include "vmclass/synth.hpp"

using namespace vmclass;
using namespace vmclass::data;

namespace {

double metric_mean(const VmTrace& t, std::size_t m) {
    double sum = 0;
    for (std::size_t s = 0; s < t.timesteps; ++s) sum += t.at(s, m);
    return sum / static_cast<double>(t.timesteps);
}

}  // namespace

TEST_CASE("default config produces 8 week-long traces with 16 columns") {
    const auto traces = synthesize(default_synth_config(), 1);
    REQUIRE(traces.size() == 8);
    CHECK(traces[0].vm_id == "web-00");
    CHECK(traces[4].vm_id == "sql-00");
    for (const auto& t : traces) {
        CHECK(t.timesteps == 2016);
        CHECK(t.metric_count() == 16);
        for (double v : t.samples) CHECK((std::isfinite(v) && v >= 0.0));
    }
    CHECK(traces[0].class_label == 0);
    CHECK(traces[7].class_label == 1);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
    const auto a = synthesize(default_synth_config(), 3);
    const auto b = synthesize(default_synth_config(), 3);
    const auto c = synthesize(default_synth_config(), 4);
    CHECK(a[2].samples == b[2].samples);
    CHECK(a[2].samples != c[2].samples);
    CHECK(a[2].samples.size() == c[2].samples.size());
}

TEST_CASE("separability 0 makes the archetypes identical") {
    auto config = default_synth_config();
    config.separability = 0.0;
    const auto e = effective_archetypes(config);
    for (std::size_t m = 0; m < kMetricCount; ++m) CHECK(e[0][m] == e[1][m]);
    config.separability = 1.0;
    CHECK(effective_archetypes(config) == config.classes);
}

TEST_CASE("zero noise traces follow the deterministic cycle") {
    auto config = default_synth_config();
    config.noise_scale = 0.0;
    config.vms_per_class = 2;
    const auto traces = synthesize(config, 8);
    CHECK(traces[0].samples == traces[1].samples);
    const auto& a = config.classes[0][1];
    const double expected = std::max(0.0, a.baseline + a.amplitude * std::sin(2 * std::numbers::pi * 10 / a.period));
    CHECK(traces[0].at(10, 1) == doctest::Approx(expected));
}

TEST_CASE("class means differ under the default archetypes") {
    const auto traces = synthesize(default_synth_config(), 2);
    // Memory: web 40, sql 75.
    CHECK(metric_mean(traces[0], 6) < metric_mean(traces[4], 6) - 20.0);
}

TEST_CASE("config text round trip and overrides") {
    KeyValueConfig kv;
    store_synth_config(kv, default_synth_config());
    CHECK(synth_config_from(kv) == default_synth_config());
    auto over = KeyValueConfig::parse("[generator]\nseparability = 0\nlength = 64\n[sql-server]\nCPU = 1 2 3 4 0.5\n");
    const auto c = synth_config_from(over);
    CHECK(c.separability == 0.0);
    CHECK(c.length == 64);
    CHECK(c.classes[1][1] == MetricArchetype{1, 2, 3, 4, 0.5});
    CHECK(c.classes[0][1] == default_synth_config().classes[0][1]);
}

TEST_CASE("invalid synth configs are rejected") {
    CHECK_THROWS_AS(synth_config_from(KeyValueConfig::parse("[generator]\nseparability = 1.5\n")), ConfigError);
    CHECK_THROWS_AS(synth_config_from(KeyValueConfig::parse("[generator]\nnoise = 1\n")), ConfigError);
    CHECK_THROWS_AS(synth_config_from(KeyValueConfig::parse("[web-server]\nCPU = 1 2 0 4 0\n")), ConfigError);
    CHECK_THROWS_AS(synth_config_from(KeyValueConfig::parse("[web-server]\nGPU = 1 2 3 4 0\n")), ConfigError);
    CHECK_THROWS_AS(synth_config_from(KeyValueConfig::parse("[web-server]\nCPU = 1 2 3\n")), ConfigError);
}
