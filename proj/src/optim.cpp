#include "vmclass/optim.hpp"

#include <cmath>
#include <string>

#include "vmclass/error.hpp"

namespace vmclass::nn {

AdamState make_adam_state(double learning_rate, double weight_decay) {
    if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("adam: weight decay must be non-negative");
    AdamState state;
    state.learning_rate = learning_rate;
    state.weight_decay = weight_decay;
    return state;
}

void adam_step(std::span<Tensor* const> params, AdamState& state) {
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p]->has_grad()) {
            throw Error("adam: parameter " + std::to_string(p) + " has no gradient");
        }
    }
    if (state.step_count == 0 || state.first_moment.size() != params.size()) {
        if (state.step_count != 0) throw Error("adam: parameter list changed between steps");
        state.first_moment.assign(params.size(), {});
        state.second_moment.assign(params.size(), {});
        for (std::size_t p = 0; p < params.size(); ++p) {
            state.first_moment[p].assign(params[p]->size(), 0.0);
            state.second_moment[p].assign(params[p]->size(), 0.0);
        }
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    const double step_size = state.learning_rate / bias1;
    const double sqrt_bias2 = std::sqrt(bias2);

    for (std::size_t p = 0; p < params.size(); ++p) {
        auto value = params[p]->data();
        auto grad = params[p]->grad();
        auto& m = state.first_moment[p];
        auto& v = state.second_moment[p];
        if (m.size() != value.size()) throw Error("adam: parameter shape changed between steps");
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i] + state.weight_decay * value[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double denom = std::sqrt(v[i]) / sqrt_bias2 + state.epsilon;
            value[i] -= step_size * m[i] / denom;
        }
    }
}

}  // namespace vmclass::nn
