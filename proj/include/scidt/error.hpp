#ifndef SCIDT_ERROR_HPP
#define SCIDT_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scidt {

    // Root of every error the library throws.
    struct error : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    struct dimension_error : error {
        using error::error;
    };

    // NaN/Inf produced or consumed by a numeric op.
    struct numeric_error : error {
        using error::error;
    };

    // Masked softmax with no surviving entry.
    struct degenerate_input_error : error {
        using error::error;
    };

    struct parse_error : error {
        parse_error(std::string const& file, std::size_t line, std::string const& what)
            : error(file + ":" + std::to_string(line) + ": " + what), line(line)
        {}

        std::size_t line;
    };

    struct config_error : error {
        using error::error;
    };

    struct data_error : error {
        using error::error;
    };

    struct capacity_error : error {
        using error::error;
    };

    struct io_error : error {
        using error::error;
    };

    // Saved model incompatible with the requested configuration.
    struct model_load_error : config_error {
        using config_error::config_error;
    };

    // Non-finite training objective.
    struct divergence_error : error {
        using error::error;
    };

}

#endif
