#ifndef SCIDT_MANIFEST_HPP
#define SCIDT_MANIFEST_HPP

#include "scidt/numkernel.hpp"

#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace scidt {

    // Ordered key=value text file. Lines starting with '#' are comments.
    class Manifest {
    public:
        void set(std::string const& key, std::string const& value);
        template <class T>
            requires std::is_arithmetic_v<T>
        void set(std::string const& key, T const& value) { set(key, std::to_string(value)); }

        bool has(std::string const& key) const;
        std::string const& get(std::string const& key) const;
        std::string get_or(std::string const& key, std::string const& fallback) const;
        std::size_t get_size(std::string const& key) const;
        double get_real(std::string const& key) const;

        std::vector<std::pair<std::string, std::string>> const& entries() const { return entries_; }

        void write(std::string const& path) const;
        static Manifest read(std::string const& path);

    private:
        std::vector<std::pair<std::string, std::string>> entries_;
    };

    std::string format_real(double v);

    // Flat little-endian float64 arrays, concatenated in the given order.
    void write_weights(std::string const& path, std::vector<Array const*> const& arrays);
    // Fills arrays (already shaped) from path; the file size must match exactly.
    void read_weights(std::string const& path, std::vector<Array*> const& arrays);

    // "3x4" <-> shape
    std::string shape_token(std::vector<std::size_t> const& shape);
    std::vector<std::size_t> parse_shape_token(std::string const& s);

}

#endif
