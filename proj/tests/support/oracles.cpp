#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace scidt::testing {

    Array fd_gradient(std::function<double()> const& f, Array& x, double eps)
    {
        Array g(x.shape());
        for (std::size_t k = 0; k < x.size(); ++k) {
            double keep = x[k];
            x[k] = keep + eps;
            double up = f();
            x[k] = keep - eps;
            double down = f();
            x[k] = keep;
            g[k] = (up - down) / (2 * eps);
        }
        return g;
    }

    double max_rel_error(Array const& analytic, Array const& numeric, double floor)
    {
        double worst = 0.0;
        for (std::size_t k = 0; k < analytic.size(); ++k) {
            double a = analytic[k];
            double n = numeric[k];
            double denom = std::max({std::abs(a), std::abs(n), floor});
            worst = std::max(worst, std::abs(a - n) / denom);
        }
        return worst;
    }

    double max_abs_diff(Array const& a, Array const& b)
    {
        double worst = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
        return worst;
    }

    Array random_array(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale)
    {
        Array a(std::move(shape));
        std::uniform_real_distribution<double> u(-scale, scale);
        for (double& v : a.data()) v = u(rng);
        return a;
    }

    double probe(Array const& y, Array const& r)
    {
        double s = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) s += y[k] * r[k];
        return s;
    }

}
