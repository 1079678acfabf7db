#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "temp_dir.hpp"
#include "vmclass/data.hpp"
#include "vmclass/error.hpp"
#include "vmclass/random.hpp"

using namespace vmclass;
using namespace vmclass::data;

namespace {

VmTrace ramp_trace(std::string id, int label, std::size_t timesteps, double offset = 0.0) {
    VmTrace t;
    t.vm_id = std::move(id);
    t.class_label = label;
    t.timesteps = timesteps;
    t.metric_names.assign(metric_names().begin(), metric_names().end());
    t.samples.resize(timesteps * kMetricCount);
    for (std::size_t s = 0; s < timesteps; ++s)
        for (std::size_t m = 0; m < kMetricCount; ++m)
            t.samples[s * kMetricCount + m] = offset + static_cast<double>(s) + 1000.0 * static_cast<double>(m);
    return t;
}

std::vector<WindowSample> labelled_windows(std::size_t per_class0, std::size_t per_class1, std::size_t w = 4) {
    std::vector<WindowSample> out;
    for (std::size_t i = 0; i < per_class0 + per_class1; ++i) {
        WindowSample s;
        s.length = w;
        s.metrics = 2;
        s.values.assign(w * 2, static_cast<double>(i));
        s.label = i < per_class0 ? 0 : 1;
        s.origin = {"vm", i};
        out.push_back(std::move(s));
    }
    return out;
}

std::string header_line() {
    std::string h;
    for (auto name : metric_names()) h += (h.empty() ? "" : ",") + std::string(name);
    return h;
}

std::map<int, std::size_t> class_counts(const std::vector<WindowSample>& samples) {
    std::map<int, std::size_t> counts;
    for (const auto& s : samples) ++counts[s.label];
    return counts;
}

}  // namespace

TEST_CASE("metric columns follow the canonical table") {
    CHECK(metric_names().size() == 16);
    CHECK(metric_names().front() == "SysCallRate");
    CHECK(metric_names()[3] == "I/O buffer");
    CHECK(metric_names().back() == "RunTime");
}

TEST_CASE("class names parse in several spellings") {
    CHECK(parse_class("web-server") == 0);
    CHECK(parse_class("SQL_Server") == 1);
    CHECK(parse_class("1") == 1);
    CHECK(class_name(1) == "sql-server");
    CHECK_THROWS_AS(parse_class("mail"), DataError);
}

TEST_CASE("window counts without and with overlap") {
    const auto trace = ramp_trace("a", 0, 1000);
    CHECK(window_trace(trace, 64, overlap_for_window(64)).size() == 15);
    CHECK(window_trace(trace, 128, overlap_for_window(128)).size() == 28);
    CHECK(window_stride(128, true) == 32);
    CHECK(window_stride(64, false) == 64);
    CHECK_FALSE(overlap_for_window(64));
    CHECK(overlap_for_window(65));
}

TEST_CASE("windows copy contiguous rows and record their origin") {
    const auto trace = ramp_trace("vm7", 1, 20);
    const auto windows = window_trace(trace, 8, false);
    REQUIRE(windows.size() == 2);
    CHECK(windows[1].origin == Origin{"vm7", 8});
    CHECK(windows[1].label == 1);
    CHECK(windows[1].at(3, 2) == trace.at(11, 2));
    for (const auto& w : window_trace(trace, 8, true)) CHECK(w.origin.start + 8 <= 20);
}

TEST_CASE("traces shorter than W are skipped and counted") {
    const std::vector<VmTrace> traces{ramp_trace("a", 0, 3), ramp_trace("b", 1, 9)};
    const auto r = window_traces(traces, 4, false);
    CHECK(r.short_traces == 1);
    CHECK(r.windows.size() == 2);
    const auto exact = window_trace(ramp_trace("c", 0, 4), 4, false);
    CHECK(exact.size() == 1);
}

TEST_CASE("balanced split of 120/80 windows is 112/32/16") {
    const auto split = balance_and_split(labelled_windows(120, 80), {}, 5);
    CHECK(split.train.size() == 112);
    CHECK(split.validation.size() == 32);
    CHECK(split.test.size() == 16);
    CHECK(class_counts(split.train)[0] == 56);
    CHECK(class_counts(split.validation)[1] == 16);
    CHECK(class_counts(split.test)[0] == 8);
}

TEST_CASE("split property: sizes within one sample, classes within one, disjoint") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t a = 3 + rng.index(200), b = 3 + rng.index(200);
        const auto split = balance_and_split(labelled_windows(a, b), {}, rng.index(1000));
        const double total = 2.0 * static_cast<double>(std::min(a, b));
        CAPTURE(a);
        CAPTURE(b);
        CHECK(std::abs(static_cast<double>(split.train.size()) - 0.7 * total) <= 1.0);
        CHECK(std::abs(static_cast<double>(split.validation.size()) - 0.2 * total) <= 1.0);
        CHECK(std::abs(static_cast<double>(split.test.size()) - 0.1 * total) <= 1.0);
        CHECK(split.train.size() + split.validation.size() + split.test.size() == static_cast<std::size_t>(total));
        for (const auto* part : {&split.train, &split.validation, &split.test}) {
            auto counts = class_counts(*part);
            CHECK(std::max(counts[0], counts[1]) - std::min(counts[0], counts[1]) <= 1);
        }
        std::set<std::size_t> seen;
        for (const auto* part : {&split.train, &split.validation, &split.test})
            for (const auto& s : *part) CHECK(seen.insert(s.origin.start).second);
    }
}

TEST_CASE("split is deterministic in the seed") {
    const auto a = balance_and_split(labelled_windows(50, 40), {}, 9);
    const auto b = balance_and_split(labelled_windows(50, 40), {}, 9);
    const auto c = balance_and_split(labelled_windows(50, 40), {}, 10);
    auto starts = [](const std::vector<WindowSample>& v) {
        std::vector<std::size_t> s;
        for (const auto& w : v) s.push_back(w.origin.start);
        return s;
    };
    CHECK(starts(a.train) == starts(b.train));
    CHECK(starts(a.train) != starts(c.train));
}

TEST_CASE("split errors") {
    CHECK_THROWS_AS(balance_and_split(labelled_windows(10, 0), {}, 1), DataError);
    CHECK_THROWS_AS(balance_and_split(labelled_windows(10, 10), {0.5, 0.2, 0.1}, 1), ConfigError);
}

TEST_CASE("per-VM time split keeps every timestep in a single part") {
    const std::vector<VmTrace> traces{ramp_trace("a", 0, 200), ramp_trace("b", 1, 200)};
    const auto split = split_by_time(traces, 4, false, {}, 3);
    auto range = [](const std::vector<WindowSample>& part) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& w : part) {
            lo = std::min(lo, w.origin.start);
            hi = std::max(hi, w.origin.start + w.length);
        }
        return std::pair{lo, hi};
    };
    const auto train = range(split.train), val = range(split.validation), test = range(split.test);
    CHECK(train.second <= val.first);
    CHECK(val.second <= test.first);
    CHECK(split.train.size() == 70);
    CHECK(split.validation.size() == 20);
    CHECK(split.test.size() == 10);
}

TEST_CASE("normalizer: train statistics, population std, constant metric std 1") {
    auto windows = labelled_windows(3, 3);
    for (std::size_t i = 0; i < windows.size(); ++i)
        for (std::size_t t = 0; t < 4; ++t) {
            windows[i].values[t * 2] = static_cast<double>(i * 4 + t);
            windows[i].values[t * 2 + 1] = 5.0;
        }
    const auto n = fit_normalizer(windows);
    CHECK(n.mean[0] == doctest::Approx(11.5));
    CHECK(n.std[0] == doctest::Approx(std::sqrt((24.0 * 24.0 - 1.0) / 12.0)));
    CHECK(n.mean[1] == doctest::Approx(5.0));
    CHECK(n.std[1] == 1.0);
    apply_normalizer(windows, n);
    for (const auto& w : windows) CHECK(w.at(0, 1) == 0.0);
}

TEST_CASE("normalized training metrics have zero mean and unit variance") {
    std::vector<VmTrace> traces;
    for (int i = 0; i < 4; ++i) traces.push_back(ramp_trace("v" + std::to_string(i), i % 2, 300, 37.0 * i));
    PipelineOptions options;
    options.window = 8;
    options.seed = 4;
    const auto prepared = prepare_dataset(traces, options);
    const auto& train = prepared.split.train;
    for (std::size_t m = 0; m < kMetricCount; ++m) {
        double sum = 0, sq = 0, count = 0;
        for (const auto& w : train)
            for (std::size_t t = 0; t < w.length; ++t) {
                sum += w.at(t, m);
                sq += w.at(t, m) * w.at(t, m);
                ++count;
            }
        const double mean = sum / count;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sq / count - mean * mean - 1.0) < 1e-9);
    }
}

TEST_CASE("CSV round trip, column reordering, NaN rows") {
    TempDir dir;
    const auto trace = ramp_trace("x", 1, 12, 0.125);
    write_trace_csv(dir / "x.csv", trace);
    const auto back = read_trace_csv(dir / "x.csv", "x", 1);
    CHECK(back.timesteps == 12);
    CHECK(back.samples == trace.samples);

    // Reverse the columns and add a NaN row.
    std::vector<std::string> names(metric_names().rbegin(), metric_names().rend());
    std::ofstream out(dir / "rev.csv");
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << '\n';
    for (int r = 0; r < 3; ++r) {
        for (std::size_t i = 0; i < 16; ++i) out << (i ? "," : "") << (r == 1 && i == 4 ? std::string("nan") : std::to_string(i + 100 * r));
        out << '\n';
    }
    out.close();
    const auto rev = read_trace_csv(dir / "rev.csv", "rev", 0);
    CHECK(rev.timesteps == 2);
    CHECK(rev.dropped_rows == 1);
    CHECK(rev.at(0, 15) == 0.0);
    CHECK(rev.at(1, 0) == 215.0);
}

TEST_CASE("CSV errors carry file:line context") {
    TempDir dir;
    {
        std::ofstream out(dir / "bad.csv");
        out << header_line() << "\n";
        for (int i = 0; i < 15; ++i) out << "1,";
        out << "1\n1,2\n";
    }
    try {
        read_trace_csv(dir / "bad.csv", "b", 0);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
    }
    {
        std::ofstream out(dir / "cols.csv");
        out << "CPU,Bogus\n1,2\n";
    }
    CHECK_THROWS_WITH_AS(read_trace_csv(dir / "cols.csv", "c", 0), doctest::Contains("Bogus"), DataError);
    {
        std::ofstream out(dir / "missing.csv");
        std::string h = header_line();
        out << h.substr(0, h.rfind(',')) << "\n";
    }
    CHECK_THROWS_WITH_AS(read_trace_csv(dir / "missing.csv", "m", 0), doctest::Contains("RunTime"), DataError);
    CHECK_THROWS_AS(read_trace_csv(dir / "absent.csv", "a", 0), DataError);
}

TEST_CASE("manifest round trip resolves relative paths") {
    TempDir dir;
    write_trace_csv(dir / "a.csv", ramp_trace("a", 0, 10));
    write_trace_csv(dir / "b.csv", ramp_trace("b", 1, 10));
    const std::vector<ManifestEntry> entries{{"a.csv", "a", 0}, {"b.csv", "b", 1}};
    write_manifest(dir / "manifest.csv", entries);
    const auto read = read_manifest(dir / "manifest.csv");
    REQUIRE(read.size() == 2);
    CHECK(read[1].csv_path == dir / "b.csv");
    CHECK(read[1].class_label == 1);
    const auto traces = ingest_csv(dir / "manifest.csv");
    CHECK(traces[0].vm_id == "a");
    {
        std::ofstream out(dir / "broken.csv");
        out << "# comment\na.csv,a,web-server\nb.csv,b\n";
    }
    CHECK_THROWS_WITH_AS(read_manifest(dir / "broken.csv"), doctest::Contains("broken.csv:3"), DataError);
}
