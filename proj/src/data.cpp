#include "vmclass/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "vmclass/error.hpp"
#include "vmclass/random.hpp"

namespace vmclass::data {

namespace fs = std::filesystem;

const std::array<std::string_view, kMetricCount>& metric_names() {
    static constexpr std::array<std::string_view, kMetricCount> names = {
        "SysCallRate", "CPU",        "IdleCPU",     "I/O buffer", "DiskAvl",   "CacheMiss",
        "Memory",      "UserMem",    "PgOutRate",   "InPktRate",  "OutPktRate", "InByteRate",
        "OutByteRate", "AliveProc",  "ActiveProc",  "RunTime",
    };
    return names;
}

std::string_view class_name(int label) {
    switch (label) {
        case 0: return "web-server";
        case 1: return "sql-server";
        default: throw DataError("unknown class label " + std::to_string(label));
    }
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (c == '_') c = '-';
    }
    return out;
}

std::string where(const fs::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line) + ": ";
}

// NaN for empty or "nan" fields; false when the text is not a number.
bool parse_value(std::string_view text, double& value) {
    if (text.empty()) {
        value = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    return ec == std::errc() && ptr == text.data() + text.size();
}

std::string format_value(double value) {
    std::array<char, 32> buffer{};
    const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    return std::string(buffer.data(), ptr);
}

}  // namespace

int parse_class(std::string_view text) {
    const std::string key = lowercase(trim(text));
    if (key == "web-server" || key == "webserver" || key == "web" || key == "0") return 0;
    if (key == "sql-server" || key == "sqlserver" || key == "sql" || key == "1") return 1;
    throw DataError("unknown VM class '" + std::string(text) + "'");
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest " + manifest_path.string());
    const fs::path base = manifest_path.parent_path();

    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto content = trim(line);
        if (content.empty() || content.front() == '#') continue;
        const auto fields = split_fields(content);
        if (fields.size() != 3) {
            throw DataError(where(manifest_path, line_no) + "expected path,vm_id,class");
        }
        if (lowercase(fields[0]) == "path" && lowercase(fields[1]) == "vm-id") continue;
        ManifestEntry entry;
        entry.csv_path = fs::path(std::string(fields[0]));
        if (entry.csv_path.is_relative()) entry.csv_path = base / entry.csv_path;
        entry.vm_id = std::string(fields[1]);
        if (entry.vm_id.empty()) throw DataError(where(manifest_path, line_no) + "empty vm_id");
        try {
            entry.class_label = parse_class(fields[2]);
        } catch (const DataError& e) {
            throw DataError(where(manifest_path, line_no) + e.what());
        }
        entries.push_back(std::move(entry));
    }
    if (entries.empty()) throw DataError("manifest " + manifest_path.string() + " lists no traces");
    return entries;
}

void write_manifest(const fs::path& manifest_path, std::span<const ManifestEntry> entries) {
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest " + manifest_path.string());
    out << "path,vm_id,class\n";
    for (const auto& entry : entries) {
        out << entry.csv_path.generic_string() << ',' << entry.vm_id << ','
            << class_name(entry.class_label) << '\n';
    }
    if (!out) throw DataError("failed writing manifest " + manifest_path.string());
}

VmTrace read_trace_csv(const fs::path& csv_path, std::string vm_id, int class_label) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open trace " + csv_path.string());

    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (!have_header && std::getline(in, line)) {
        ++line_no;
        have_header = !trim(line).empty();
    }
    if (!have_header) throw DataError(csv_path.string() + ": empty file");

    const auto& canonical = metric_names();
    const auto header = split_fields(line);
    // column index in the file -> canonical metric index
    std::vector<std::size_t> column_to_metric(header.size());
    std::array<bool, kMetricCount> seen{};
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto it = std::find(canonical.begin(), canonical.end(), header[c]);
        if (it == canonical.end()) {
            throw DataError(where(csv_path, line_no) + "unknown metric column '" +
                            std::string(header[c]) + "'");
        }
        const auto m = static_cast<std::size_t>(it - canonical.begin());
        if (seen[m]) {
            throw DataError(where(csv_path, line_no) + "duplicate metric column '" +
                            std::string(header[c]) + "'");
        }
        seen[m] = true;
        column_to_metric[c] = m;
    }
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        if (!seen[m]) {
            throw DataError(where(csv_path, line_no) + "missing metric column '" +
                            std::string(canonical[m]) + "'");
        }
    }

    VmTrace trace;
    trace.vm_id = std::move(vm_id);
    trace.class_label = class_label;
    trace.metric_names.assign(canonical.begin(), canonical.end());
    std::array<double, kMetricCount> row{};
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(where(csv_path, line_no) + "expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        }
        bool has_nan = false;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            double value = 0.0;
            if (!parse_value(fields[c], value)) {
                throw DataError(where(csv_path, line_no) + "cannot parse '" + std::string(fields[c]) +
                                "' as a number");
            }
            has_nan = has_nan || std::isnan(value);
            row[column_to_metric[c]] = value;
        }
        if (has_nan) {
            ++trace.dropped_rows;
            continue;
        }
        trace.samples.insert(trace.samples.end(), row.begin(), row.end());
        ++trace.timesteps;
    }
    if (trace.timesteps == 0) throw DataError(csv_path.string() + ": no usable data rows");
    return trace;
}

void write_trace_csv(const fs::path& csv_path, const VmTrace& trace) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw DataError("cannot write trace " + csv_path.string());
    const std::size_t m_count = trace.metric_count();
    for (std::size_t m = 0; m < m_count; ++m) {
        if (m) out << ',';
        out << trace.metric_names[m];
    }
    out << '\n';
    for (std::size_t t = 0; t < trace.timesteps; ++t) {
        for (std::size_t m = 0; m < m_count; ++m) {
            if (m) out << ',';
            out << format_value(trace.at(t, m));
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing trace " + csv_path.string());
}

std::vector<VmTrace> ingest_csv(const fs::path& manifest_path) {
    const auto entries = read_manifest(manifest_path);
    std::vector<VmTrace> traces;
    traces.reserve(entries.size());
    for (const auto& entry : entries) {
        traces.push_back(read_trace_csv(entry.csv_path, entry.vm_id, entry.class_label));
    }
    return traces;
}

bool overlap_for_window(std::size_t window, std::size_t threshold) { return window > threshold; }

std::size_t window_stride(std::size_t window, bool overlap) {
    if (window == 0) throw DataError("window length must be positive");
    if (!overlap) return window;
    if (window % 4 != 0) throw DataError("75% overlap needs a window divisible by 4");
    return window / 4;
}

std::vector<WindowSample> window_trace(const VmTrace& trace, std::size_t window, bool overlap) {
    const std::size_t stride = window_stride(window, overlap);
    std::vector<WindowSample> out;
    if (trace.timesteps < window) return out;
    const std::size_t m_count = trace.metric_count();
    out.reserve((trace.timesteps - window) / stride + 1);
    for (std::size_t start = 0; start + window <= trace.timesteps; start += stride) {
        WindowSample sample;
        sample.length = window;
        sample.metrics = m_count;
        sample.label = trace.class_label;
        sample.origin = {trace.vm_id, start};
        const auto first = trace.samples.begin() + static_cast<std::ptrdiff_t>(start * m_count);
        sample.values.assign(first, first + static_cast<std::ptrdiff_t>(window * m_count));
        out.push_back(std::move(sample));
    }
    return out;
}

WindowingResult window_traces(std::span<const VmTrace> traces, std::size_t window, bool overlap) {
    WindowingResult result;
    for (const auto& trace : traces) {
        auto windows = window_trace(trace, window, overlap);
        if (windows.empty()) ++result.short_traces;
        std::move(windows.begin(), windows.end(), std::back_inserter(result.windows));
    }
    return result;
}

Normalizer fit_normalizer(std::span<const WindowSample> windows) {
    if (windows.empty()) throw DataError("cannot fit a normalizer on an empty training set");
    const std::size_t m_count = windows.front().metrics;
    std::vector<double> sum(m_count, 0.0);
    std::size_t rows = 0;
    for (const auto& w : windows) {
        if (w.metrics != m_count) throw DataError("windows disagree on metric count");
        for (std::size_t t = 0; t < w.length; ++t) {
            for (std::size_t m = 0; m < m_count; ++m) sum[m] += w.at(t, m);
        }
        rows += w.length;
    }
    if (rows < 2) throw DataError("normalizer needs at least 2 values per metric");

    Normalizer norm;
    norm.mean.resize(m_count);
    norm.std.resize(m_count);
    for (std::size_t m = 0; m < m_count; ++m) norm.mean[m] = sum[m] / static_cast<double>(rows);
    std::vector<double> sq(m_count, 0.0);
    for (const auto& w : windows) {
        for (std::size_t t = 0; t < w.length; ++t) {
            for (std::size_t m = 0; m < m_count; ++m) {
                const double d = w.at(t, m) - norm.mean[m];
                sq[m] += d * d;
            }
        }
    }
    for (std::size_t m = 0; m < m_count; ++m) {
        const double sd = std::sqrt(sq[m] / static_cast<double>(rows));
        // relative cutoff: a constant channel leaves only rounding residue
        const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(norm.mean[m])));
        norm.std[m] = degenerate ? 1.0 : sd;
    }
    return norm;
}

void apply_normalizer(std::span<WindowSample> windows, const Normalizer& normalizer) {
    for (auto& w : windows) {
        if (w.metrics != normalizer.mean.size()) {
            throw DataError("normalizer has " + std::to_string(normalizer.mean.size()) +
                            " metrics, window has " + std::to_string(w.metrics));
        }
        for (std::size_t t = 0; t < w.length; ++t) {
            for (std::size_t m = 0; m < w.metrics; ++m) {
                double& v = w.values[t * w.metrics + m];
                v = (v - normalizer.mean[m]) / normalizer.std[m];
            }
        }
    }
}

std::vector<WindowSample> normalized(std::vector<WindowSample> windows, const Normalizer& normalizer) {
    apply_normalizer(windows, normalizer);
    return windows;
}

std::string_view split_mode_name(SplitMode mode) {
    return mode == SplitMode::Window ? "window" : "per-vm-time";
}

SplitMode parse_split_mode(std::string_view text) {
    const std::string key = lowercase(trim(text));
    if (key == "window") return SplitMode::Window;
    if (key == "per-vm-time" || key == "time") return SplitMode::PerVmTime;
    throw ConfigError("unknown split mode '" + std::string(text) + "'");
}

namespace {

void check_fractions(const SplitFractions& f) {
    if (f.train < 0 || f.validation < 0 || f.test < 0 ||
        std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
}

std::vector<std::vector<WindowSample>> group_by_class(std::vector<WindowSample> windows,
                                                      std::size_t class_count) {
    std::vector<std::vector<WindowSample>> by_class(class_count);
    for (auto& w : windows) {
        if (w.label < 0 || static_cast<std::size_t>(w.label) >= class_count) {
            throw DataError("window label " + std::to_string(w.label) + " out of range");
        }
        by_class[static_cast<std::size_t>(w.label)].push_back(std::move(w));
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        if (by_class[c].empty()) {
            throw DataError("class '" + std::string(class_name(static_cast<int>(c))) +
                            "' has no windows");
        }
    }
    return by_class;
}

// Shuffles each class and truncates it to the minority count.
void downsample(std::vector<std::vector<WindowSample>>& by_class, Rng& rng) {
    std::size_t minority = std::numeric_limits<std::size_t>::max();
    for (const auto& group : by_class) minority = std::min(minority, group.size());
    for (auto& group : by_class) {
        rng.shuffle(group);
        group.resize(minority);
    }
}

// Spreads `total` over classes; classes from `offset` (cyclic) get the remainder.
std::vector<std::size_t> distribute(std::size_t total, std::size_t classes, std::size_t offset) {
    std::vector<std::size_t> counts(classes, total / classes);
    const std::size_t extra = total % classes;
    for (std::size_t i = 0; i < extra; ++i) counts[(offset + i) % classes] += 1;
    return counts;
}

std::vector<WindowSample> balanced_subset(std::vector<WindowSample> windows, std::size_t class_count,
                                          Rng& rng) {
    auto by_class = group_by_class(std::move(windows), class_count);
    downsample(by_class, rng);
    std::vector<WindowSample> out;
    for (auto& group : by_class) std::move(group.begin(), group.end(), std::back_inserter(out));
    rng.shuffle(out);
    return out;
}

}  // namespace

DatasetSplit balance_and_split(std::vector<WindowSample> windows, const SplitFractions& fractions,
                               std::uint64_t seed, std::size_t class_count) {
    check_fractions(fractions);
    Rng rng(seed);
    auto by_class = group_by_class(std::move(windows), class_count);
    downsample(by_class, rng);

    const std::size_t per_class = by_class.front().size();
    const std::size_t total = per_class * class_count;
    const auto train_total = static_cast<std::size_t>(std::lround(fractions.train * static_cast<double>(total)));
    const auto val_total = std::min(total - train_total,
        static_cast<std::size_t>(std::lround(fractions.validation * static_cast<double>(total))));
    const auto train_counts = distribute(train_total, class_count, 0);
    // validation remainder goes to the classes that did not get a train extra
    const auto val_counts = distribute(val_total, class_count, train_total % class_count);

    DatasetSplit split;
    for (std::size_t c = 0; c < class_count; ++c) {
        auto& group = by_class[c];
        const std::size_t n_train = std::min(train_counts[c], per_class);
        const std::size_t n_val = std::min(val_counts[c], per_class - n_train);
        auto it = group.begin();
        std::move(it, it + static_cast<std::ptrdiff_t>(n_train), std::back_inserter(split.train));
        it += static_cast<std::ptrdiff_t>(n_train);
        std::move(it, it + static_cast<std::ptrdiff_t>(n_val), std::back_inserter(split.validation));
        it += static_cast<std::ptrdiff_t>(n_val);
        std::move(it, group.end(), std::back_inserter(split.test));
    }
    rng.shuffle(split.train);
    rng.shuffle(split.validation);
    rng.shuffle(split.test);
    return split;
}

DatasetSplit split_by_time(std::span<const VmTrace> traces, std::size_t window, bool overlap,
                           const SplitFractions& fractions, std::uint64_t seed,
                           std::size_t class_count) {
    check_fractions(fractions);
    std::vector<WindowSample> parts[3];
    for (const auto& trace : traces) {
        const double T = static_cast<double>(trace.timesteps);
        // slack: 0.7 + 0.2 < 0.9 in binary
        const auto train_end = static_cast<std::size_t>(std::floor(fractions.train * T + 1e-9));
        const auto val_end =
            static_cast<std::size_t>(std::floor((fractions.train + fractions.validation) * T + 1e-9));
        for (auto& w : window_trace(trace, window, overlap)) {
            const std::size_t begin = w.origin.start;
            const std::size_t end = begin + window;
            if (end <= train_end) {
                parts[0].push_back(std::move(w));
            } else if (begin >= train_end && end <= val_end) {
                parts[1].push_back(std::move(w));
            } else if (begin >= val_end) {
                parts[2].push_back(std::move(w));
            }
        }
    }
    Rng rng(seed);
    DatasetSplit split;
    split.train = balanced_subset(std::move(parts[0]), class_count, rng);
    split.validation = balanced_subset(std::move(parts[1]), class_count, rng);
    split.test = balanced_subset(std::move(parts[2]), class_count, rng);
    return split;
}

void normalize_split(DatasetSplit& split) {
    split.normalizer = fit_normalizer(split.train);
    apply_normalizer(split.train, split.normalizer);
    apply_normalizer(split.validation, split.normalizer);
    apply_normalizer(split.test, split.normalizer);
}

PreparedData prepare_dataset(std::span<const VmTrace> traces, const PipelineOptions& options) {
    PreparedData prepared;
    prepared.overlap = overlap_for_window(options.window, options.overlap_threshold);
    if (options.split_mode == SplitMode::Window) {
        auto windowed = window_traces(traces, options.window, prepared.overlap);
        prepared.short_traces = windowed.short_traces;
        prepared.split = balance_and_split(std::move(windowed.windows), options.fractions, options.seed);
    } else {
        for (const auto& trace : traces) {
            if (trace.timesteps < options.window) ++prepared.short_traces;
        }
        prepared.split = split_by_time(traces, options.window, prepared.overlap, options.fractions,
                                       options.seed);
    }
    normalize_split(prepared.split);
    return prepared;
}

}  // namespace vmclass::data
