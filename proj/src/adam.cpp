#include "scidt/adam.hpp"
#include "scidt/error.hpp"

#include <cmath>

namespace scidt {

    void adam_step(param_refs const& params, grad_store const& grads, AdamState& state,
        AdamConfig const& cfg)
    {
        ++state.t;
        double t = static_cast<double>(state.t);
        double c1 = 1.0 - std::pow(cfg.beta1, t);
        double c2 = 1.0 - std::pow(cfg.beta2, t);

        for (auto const& p : params) {
            Array& theta = *p.value;
            Array const& g = grads.at(p.name);
            if (g.shape() != theta.shape()) {
                throw dimension_error("adam: gradient for '" + p.name + "' has shape "
                    + g.shape_string() + ", parameter " + theta.shape_string());
            }
            auto [mit, m_new] = state.m.try_emplace(p.name, zeros_like(theta));
            auto [vit, v_new] = state.v.try_emplace(p.name, zeros_like(theta));
            Array& m = mit->second;
            Array& v = vit->second;
            if (m.shape() != theta.shape() || v.shape() != theta.shape()) {
                throw dimension_error("adam: moment shape mismatch for '" + p.name + "'");
            }
            for (std::size_t k = 0; k < theta.size(); ++k) {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
                double mhat = m[k] / c1;
                double vhat = v[k] / c2;
                theta[k] -= cfg.alpha * mhat / (std::sqrt(vhat) + cfg.epsilon);
            }
        }
    }

}
