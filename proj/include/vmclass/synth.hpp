#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vmclass/config.hpp"
#include "vmclass/data.hpp"

namespace vmclass::data {

struct MetricArchetype {
    double baseline = 0.0;
    double amplitude = 0.0;
    double period = 288.0;  // timesteps
    double noise_std = 0.0;
    double burst_probability = 0.0;

    friend bool operator==(const MetricArchetype&, const MetricArchetype&) = default;
};

using ClassArchetype = std::array<MetricArchetype, kMetricCount>;

struct SynthConfig {
    std::size_t vms_per_class = 4;
    std::size_t length = 2016;  // one week of 5-minute steps
    double separability = 1.0;  // 0: identical classes, 1: archetypes as given
    double noise_scale = 1.0;   // multiplies noise and bursts
    double burst_height = 4.0;  // in units of the metric's noise_std
    std::array<ClassArchetype, kClassCount> classes{};

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

// Built-in defaults, parsed from the shipped configs/synth_default.conf.
const SynthConfig& default_synth_config();
std::string default_synth_config_text();

SynthConfig synth_config_from(const KeyValueConfig& config, const SynthConfig& base = default_synth_config());
void store_synth_config(KeyValueConfig& config, const SynthConfig& synth);

// Throws ConfigError when a field is outside its valid range.
void validate(const SynthConfig& config);

// Per-class archetypes after applying the separability knob.
std::array<ClassArchetype, kClassCount> effective_archetypes(const SynthConfig& config);

// vms_per_class traces per class, ids "web-00", ..., "sql-00", ...; class
// blocks in label order. Deterministic in (config, seed).
std::vector<VmTrace> synthesize(const SynthConfig& config, std::uint64_t seed);

}  // namespace vmclass::data
