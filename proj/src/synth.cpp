#include "vmclass/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "vmclass/embedded_data.hpp"
#include "vmclass/error.hpp"
#include "vmclass/random.hpp"

namespace vmclass::data {

namespace {

constexpr std::string_view kGeneratorSection = "generator";

MetricArchetype parse_archetype(const std::string& text, const std::string& where) {
    std::istringstream in(text);
    MetricArchetype a;
    if (!(in >> a.baseline >> a.amplitude >> a.period >> a.noise_std >> a.burst_probability)) {
        throw ConfigError(where + ": expected 'baseline amplitude period noise_std burst_probability'");
    }
    std::string extra;
    if (in >> extra) throw ConfigError(where + ": unexpected trailing value '" + extra + "'");
    return a;
}

std::string format_archetype(const MetricArchetype& a) {
    return format_double(a.baseline) + ' ' + format_double(a.amplitude) + ' ' +
           format_double(a.period) + ' ' + format_double(a.noise_std) + ' ' +
           format_double(a.burst_probability);
}

double lerp(double mid, double value, double s) { return mid + s * (value - mid); }

}  // namespace

std::string default_synth_config_text() { return std::string(embedded::kSynthDefaultConfig); }

const SynthConfig& default_synth_config() {
    static const SynthConfig config = [] {
        const auto kv = KeyValueConfig::parse(embedded::kSynthDefaultConfig, "synth_default.conf");
        const SynthConfig base;
        for (std::size_t c = 0; c < kClassCount; ++c) {
            const auto section = class_name(static_cast<int>(c));
            if (!kv.has_section(section)) {
                throw ConfigError("synth_default.conf: missing [" + std::string(section) + "]");
            }
        }
        return synth_config_from(kv, base);
    }();
    return config;
}

SynthConfig synth_config_from(const KeyValueConfig& kv, const SynthConfig& base) {
    SynthConfig config = base;
    kv.require_known_keys(kGeneratorSection,
                          {"vms_per_class", "length", "separability", "noise_scale", "burst_height"});
    config.vms_per_class = kv.get_uint(kGeneratorSection, "vms_per_class", config.vms_per_class);
    config.length = kv.get_uint(kGeneratorSection, "length", config.length);
    config.separability = kv.get_double(kGeneratorSection, "separability", config.separability);
    config.noise_scale = kv.get_double(kGeneratorSection, "noise_scale", config.noise_scale);
    config.burst_height = kv.get_double(kGeneratorSection, "burst_height", config.burst_height);

    const auto& names = metric_names();
    for (std::size_t c = 0; c < kClassCount; ++c) {
        const auto section = class_name(static_cast<int>(c));
        for (const auto& [key, value] : kv.entries(section)) {
            const auto it = std::find(names.begin(), names.end(), key);
            if (it == names.end()) {
                throw ConfigError(kv.source() + ": unknown metric '" + key + "' in [" +
                                  std::string(section) + "]");
            }
            config.classes[c][static_cast<std::size_t>(it - names.begin())] =
                parse_archetype(value, kv.source() + ": [" + std::string(section) + "] " + key);
        }
    }
    validate(config);
    return config;
}

void store_synth_config(KeyValueConfig& kv, const SynthConfig& config) {
    kv.set_int(kGeneratorSection, "vms_per_class", static_cast<std::int64_t>(config.vms_per_class));
    kv.set_int(kGeneratorSection, "length", static_cast<std::int64_t>(config.length));
    kv.set_double(kGeneratorSection, "separability", config.separability);
    kv.set_double(kGeneratorSection, "noise_scale", config.noise_scale);
    kv.set_double(kGeneratorSection, "burst_height", config.burst_height);
    const auto& names = metric_names();
    for (std::size_t c = 0; c < kClassCount; ++c) {
        const auto section = class_name(static_cast<int>(c));
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            kv.set(section, names[m], format_archetype(config.classes[c][m]));
        }
    }
}

void validate(const SynthConfig& config) {
    auto fail = [](const std::string& what) { throw ConfigError("synthetic config: " + what); };
    if (config.vms_per_class == 0) fail("vms_per_class must be positive");
    if (config.length == 0) fail("length must be positive");
    if (!(config.separability >= 0.0 && config.separability <= 1.0)) fail("separability must lie in [0, 1]");
    if (!(config.noise_scale >= 0.0)) fail("noise_scale must be non-negative");
    if (!(config.burst_height >= 0.0)) fail("burst_height must be non-negative");
    const auto& names = metric_names();
    for (std::size_t c = 0; c < kClassCount; ++c) {
        for (std::size_t m = 0; m < kMetricCount; ++m) {
            const auto& a = config.classes[c][m];
            const std::string where =
                std::string(class_name(static_cast<int>(c))) + "." + std::string(names[m]);
            if (!std::isfinite(a.baseline)) fail(where + ": baseline must be finite");
            if (!(a.amplitude >= 0.0)) fail(where + ": amplitude must be non-negative");
            if (!(a.period > 0.0)) fail(where + ": period must be positive");
            if (!(a.noise_std >= 0.0)) fail(where + ": noise_std must be non-negative");
            if (!(a.burst_probability >= 0.0 && a.burst_probability <= 1.0)) {
                fail(where + ": burst_probability must lie in [0, 1]");
            }
        }
    }
}

std::array<ClassArchetype, kClassCount> effective_archetypes(const SynthConfig& config) {
    std::array<ClassArchetype, kClassCount> out = config.classes;
    const double s = config.separability;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        MetricArchetype mid{0.0, 0.0, 0.0, 0.0, 0.0};
        for (std::size_t c = 0; c < kClassCount; ++c) {
            const auto& a = config.classes[c][m];
            mid.baseline += a.baseline / kClassCount;
            mid.amplitude += a.amplitude / kClassCount;
            mid.period += a.period / kClassCount;
            mid.noise_std += a.noise_std / kClassCount;
            mid.burst_probability += a.burst_probability / kClassCount;
        }
        for (std::size_t c = 0; c < kClassCount; ++c) {
            const auto& a = config.classes[c][m];
            auto& e = out[c][m];
            e.baseline = lerp(mid.baseline, a.baseline, s);
            e.amplitude = lerp(mid.amplitude, a.amplitude, s);
            e.period = lerp(mid.period, a.period, s);
            e.noise_std = lerp(mid.noise_std, a.noise_std, s);
            e.burst_probability = lerp(mid.burst_probability, a.burst_probability, s);
        }
    }
    return out;
}

std::vector<VmTrace> synthesize(const SynthConfig& config, std::uint64_t seed) {
    validate(config);
    const auto archetypes = effective_archetypes(config);
    const auto& names = metric_names();
    const char* prefixes[kClassCount] = {"web", "sql"};

    std::vector<VmTrace> traces;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        for (std::size_t v = 0; v < config.vms_per_class; ++v) {
            // one stream per VM so changing vms_per_class leaves earlier VMs intact
            Rng rng(derive_seed(seed, c * 1'000'003 + v));
            VmTrace trace;
            std::ostringstream id;
            id << prefixes[c] << '-' << std::setw(2) << std::setfill('0') << v;
            trace.vm_id = id.str();
            trace.class_label = static_cast<int>(c);
            trace.timesteps = config.length;
            trace.metric_names.assign(names.begin(), names.end());
            trace.samples.assign(config.length * kMetricCount, 0.0);

            for (std::size_t t = 0; t < config.length; ++t) {
                for (std::size_t m = 0; m < kMetricCount; ++m) {
                    const auto& a = archetypes[c][m];
                    const double cycle = std::sin(2.0 * std::numbers::pi *
                                                  static_cast<double>(t) / a.period);
                    const double z = rng.normal();
                    const bool burst = rng.bernoulli(a.burst_probability);
                    double value = a.baseline + a.amplitude * cycle;
                    value += config.noise_scale *
                             (a.noise_std * z + (burst ? config.burst_height * a.noise_std : 0.0));
                    trace.samples[t * kMetricCount + m] = std::max(0.0, value);
                }
            }
            traces.push_back(std::move(trace));
        }
    }
    return traces;
}

}  // namespace vmclass::data
