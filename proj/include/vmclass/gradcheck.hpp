#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vmclass::nn {

// A buffer whose entries are perturbed in place, together with the analytic
// gradient of the scalar loss with respect to it.
struct GradTarget {
    std::string name;
    std::span<double> values;
    std::span<const double> analytic;
    // Entries to probe; empty means every entry.
    std::vector<std::size_t> indices;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-6;
    // Entries with |value| <= skip_below are not probed (kinks such as ReLU at 0).
    double skip_below = -1.0;
    // Denominator floor for the relative error when both gradients are ~0.
    double abs_floor = 1e-8;
};

struct GradProbe {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradTargetReport {
    std::string name;
    std::vector<GradProbe> probes;
    double max_rel_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GradTargetReport> targets;
    double max_rel_error = 0.0;
    std::size_t probe_count = 0;
    bool passed = true;
};

double relative_error(double analytic, double numeric, double abs_floor);

// Central differences (f(x+h) - f(x-h)) / 2h for each probed entry; `loss`
// must read the current contents of every target buffer.
GradCheckReport gradient_check(const std::function<double()>& loss, std::span<GradTarget> targets,
                               const GradCheckOptions& options = {});

}  // namespace vmclass::nn
