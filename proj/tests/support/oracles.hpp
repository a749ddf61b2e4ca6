#ifndef SCIDT_TESTS_ORACLES_HPP
#define SCIDT_TESTS_ORACLES_HPP

#include "scidt/numkernel.hpp"

#include <functional>

namespace scidt::testing {

    // Central-difference gradient of f with respect to every entry of x,
    // written independently of the library's checker.
    Array fd_gradient(std::function<double()> const& f, Array& x, double eps = 1e-5);

    // max over entries of |a - n| / max(|a|, |n|, floor)
    double max_rel_error(Array const& analytic, Array const& numeric, double floor = 1e-6);
    double max_abs_diff(Array const& a, Array const& b);

    // Random array with entries uniform in [-scale, scale].
    Array random_array(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0);

    // sum of r .* y, a generic scalar probe of a vector-valued op
    double probe(Array const& y, Array const& r);

}

#endif
