#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vmclass::data {

inline constexpr std::size_t kMetricCount = 16;
inline constexpr std::size_t kClassCount = 2;

// Canonical column order of a trace.
const std::array<std::string_view, kMetricCount>& metric_names();

// 0 = web-server, 1 = sql-server.
std::string_view class_name(int label);
// Accepts the class name (case-insensitive, '_' or '-') or the integer label.
int parse_class(std::string_view text);

struct VmTrace {
    std::string vm_id;
    int class_label = 0;
    std::size_t timesteps = 0;
    std::vector<double> samples;  // timesteps x metrics, row-major
    std::vector<std::string> metric_names;
    std::size_t dropped_rows = 0;  // rows removed for holding NaN

    std::size_t metric_count() const { return metric_names.size(); }
    double at(std::size_t t, std::size_t m) const { return samples[t * metric_count() + m]; }
};

struct ManifestEntry {
    std::filesystem::path csv_path;
    std::string vm_id;
    int class_label = 0;
};

// Manifest: `path,vm_id,class` records, optional header of the same names,
// '#' comments. Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const std::filesystem::path& manifest_path, std::span<const ManifestEntry> entries);

VmTrace read_trace_csv(const std::filesystem::path& csv_path, std::string vm_id, int class_label);
void write_trace_csv(const std::filesystem::path& csv_path, const VmTrace& trace);
std::vector<VmTrace> ingest_csv(const std::filesystem::path& manifest_path);

struct Origin {
    std::string vm_id;
    std::size_t start = 0;

    friend bool operator==(const Origin&, const Origin&) = default;
};

struct WindowSample {
    std::size_t length = 0;   // W
    std::size_t metrics = 0;  // M
    std::vector<double> values;  // W x M, row-major (timestep-major)
    int label = 0;
    Origin origin;

    double at(std::size_t t, std::size_t m) const { return values[t * metrics + m]; }
};

// Overlapping windows are used only for windows strictly longer than the threshold.
inline constexpr std::size_t kDefaultOverlapThreshold = 64;
bool overlap_for_window(std::size_t window, std::size_t threshold = kDefaultOverlapThreshold);
// W without overlap, W/4 (75% overlap) with it.
std::size_t window_stride(std::size_t window, bool overlap);

// Windows [k*stride, k*stride + W) with end <= T. Empty when T < W.
std::vector<WindowSample> window_trace(const VmTrace& trace, std::size_t window, bool overlap);

struct WindowingResult {
    std::vector<WindowSample> windows;
    std::size_t short_traces = 0;  // traces with T < W, skipped
};
WindowingResult window_traces(std::span<const VmTrace> traces, std::size_t window, bool overlap);

struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std;
};

// Per-metric mean and population std over every timestep of the windows;
// constant metrics get std 1.
Normalizer fit_normalizer(std::span<const WindowSample> windows);
void apply_normalizer(std::span<WindowSample> windows, const Normalizer& normalizer);
std::vector<WindowSample> normalized(std::vector<WindowSample> windows, const Normalizer& normalizer);

struct SplitFractions {
    double train = 0.7;
    double validation = 0.2;
    double test = 0.1;
};

enum class SplitMode {
    Window,      // balance, shuffle and stratify individual windows
    PerVmTime,   // contiguous time ranges per VM; no timestep shared across splits
};

std::string_view split_mode_name(SplitMode mode);
SplitMode parse_split_mode(std::string_view text);

struct DatasetSplit {
    std::vector<WindowSample> train;
    std::vector<WindowSample> validation;
    std::vector<WindowSample> test;
    Normalizer normalizer;  // empty until normalize_split()
};

// Downsamples every class to the minority count, then splits each class by
// the fractions so the split totals stay within one sample of the targets
// and class counts within a split differ by at most one.
DatasetSplit balance_and_split(std::vector<WindowSample> windows, const SplitFractions& fractions,
                               std::uint64_t seed, std::size_t class_count = kClassCount);

// Each trace's timeline is cut at the fraction boundaries; windows crossing a
// boundary are dropped, then each split is balanced by downsampling.
DatasetSplit split_by_time(std::span<const VmTrace> traces, std::size_t window, bool overlap,
                           const SplitFractions& fractions, std::uint64_t seed,
                           std::size_t class_count = kClassCount);

// Fits the normalizer on train and applies it to all three parts.
void normalize_split(DatasetSplit& split);

struct PipelineOptions {
    std::size_t window = 4;
    std::size_t overlap_threshold = kDefaultOverlapThreshold;
    SplitMode split_mode = SplitMode::Window;
    SplitFractions fractions;
    std::uint64_t seed = 0;
};

struct PreparedData {
    DatasetSplit split;
    bool overlap = false;
    std::size_t short_traces = 0;
};

// window -> balance/split -> normalize with train statistics.
PreparedData prepare_dataset(std::span<const VmTrace> traces, const PipelineOptions& options);

}  // namespace vmclass::data
