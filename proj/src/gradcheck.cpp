#include "vmclass/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vmclass/error.hpp"

namespace vmclass::nn {

double relative_error(double analytic, double numeric, double abs_floor) {
    const double diff = std::abs(analytic - numeric);
    if (diff == 0.0) return 0.0;
    return diff / std::max({std::abs(analytic), std::abs(numeric), abs_floor});
}

GradCheckReport gradient_check(const std::function<double()>& loss, std::span<GradTarget> targets,
                               const GradCheckOptions& options) {
    GradCheckReport report;
    for (auto& target : targets) {
        if (target.values.size() != target.analytic.size()) {
            throw ShapeError("gradient_check: '" + target.name +
                             "' has mismatched value and gradient lengths");
        }
        std::vector<std::size_t> indices = target.indices;
        if (indices.empty()) {
            indices.resize(target.values.size());
            std::iota(indices.begin(), indices.end(), std::size_t{0});
        }

        GradTargetReport entry;
        entry.name = target.name;
        for (std::size_t idx : indices) {
            if (idx >= target.values.size()) throw ShapeError("gradient_check: probe index out of range");
            double& x = target.values[idx];
            if (std::abs(x) <= options.skip_below) continue;
            const double original = x;
            x = original + options.step;
            const double up = loss();
            x = original - options.step;
            const double down = loss();
            x = original;

            GradProbe probe;
            probe.index = idx;
            probe.analytic = target.analytic[idx];
            probe.numeric = (up - down) / (2.0 * options.step);
            probe.rel_error = relative_error(probe.analytic, probe.numeric, options.abs_floor);
            entry.max_rel_error = std::max(entry.max_rel_error, probe.rel_error);
            entry.probes.push_back(probe);
        }
        entry.passed = entry.max_rel_error < options.tolerance;
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.probe_count += entry.probes.size();
        report.passed = report.passed && entry.passed;
        report.targets.push_back(std::move(entry));
    }
    return report;
}

}  // namespace vmclass::nn
