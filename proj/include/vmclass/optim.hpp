#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vmclass/tensor.hpp"

namespace vmclass::nn {

// Adam with coupled L2 weight decay: the decay term is added to the raw
// gradient before the moment updates.
struct AdamState {
    std::size_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
};

AdamState make_adam_state(double learning_rate, double weight_decay);

// Updates every parameter in place from its gradient buffer. Moment buffers
// are sized lazily on the first step; the parameter list must keep the same
// order and shapes across calls.
void adam_step(std::span<Tensor* const> params, AdamState& state);

}  // namespace vmclass::nn
