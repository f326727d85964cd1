// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "meshmask/common.hpp"
#include "meshmask/tensor.hpp"

namespace meshmask::ad {

template <class S>
struct AdamState {
    int64_t step_count = 0;
    std::vector<S> first_moment;
    std::vector<S> second_moment;
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S epsilon = S(1e-8);
};

// Standard Adam update with bias correction. Aborts on non-finite gradients.
template <class S>
void adam_step(std::vector<S>& params, const std::vector<S>& grads, AdamState<S>& state,
               S lr, const std::string& name = "param") {
    require(params.size() == grads.size(), "adam_step: param/grad size mismatch for " + name);
    if (state.first_moment.empty()) {
        state.first_moment.assign(params.size(), S(0));
        state.second_moment.assign(params.size(), S(0));
    }
    require(state.first_moment.size() == params.size(),
            "adam_step: moment buffers do not match parameter shape for " + name);
    for (size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(double(grads[i])))
            fail("adam_step: non-finite gradient in " + name + " at index " +
                 std::to_string(i));
    }
    state.step_count += 1;
    const S b1 = state.beta1, b2 = state.beta2;
    const S bc1 = S(1) - std::pow(b1, S(state.step_count));
    const S bc2 = S(1) - std::pow(b2, S(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        const S g = grads[i];
        state.first_moment[i] = b1 * state.first_moment[i] + (S(1) - b1) * g;
        state.second_moment[i] = b2 * state.second_moment[i] + (S(1) - b2) * g * g;
        const S mhat = state.first_moment[i] / bc1;
        const S vhat = state.second_moment[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

template <class S>
void adam_step(Tensor<S>& param, AdamState<S>& state, S lr, const std::string& name = "param") {
    adam_step(param.values(), param.grad(), state, lr, name);
}

}  // namespace meshmask::ad
