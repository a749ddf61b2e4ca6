#ifndef SCIDT_ADAM_HPP
#define SCIDT_ADAM_HPP

#include "scidt/numkernel.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace scidt {

    struct AdamConfig {
        double alpha = 0.001;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    struct AdamState {
        std::map<std::string, Array> m;
        std::map<std::string, Array> v;
        std::uint64_t t = 0;
    };

    // One bias-corrected update, minimizing: theta -= alpha * mhat / (sqrt(vhat) + eps).
    // Moments are created lazily on first use of a parameter name.
    void adam_step(param_refs const& params, grad_store const& grads, AdamState& state,
        AdamConfig const& cfg);

}

#endif
