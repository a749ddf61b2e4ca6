#include "scidt/manifest.hpp"
#include "scidt/error.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scidt {

    void Manifest::set(std::string const& key, std::string const& value)
    {
        for (auto& [k, v] : entries_) {
            if (k == key) {
                v = value;
                return;
            }
        }
        entries_.emplace_back(key, value);
    }

    bool Manifest::has(std::string const& key) const
    {
        for (auto const& [k, v] : entries_) {
            if (k == key) return true;
        }
        return false;
    }

    std::string const& Manifest::get(std::string const& key) const
    {
        for (auto const& [k, v] : entries_) {
            if (k == key) return v;
        }
        throw model_load_error("manifest is missing key '" + key + "'");
    }

    std::string Manifest::get_or(std::string const& key, std::string const& fallback) const
    {
        return has(key) ? get(key) : fallback;
    }

    std::size_t Manifest::get_size(std::string const& key) const
    {
        std::string const& s = get(key);
        std::size_t v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
            throw model_load_error("manifest key '" + key + "' is not an integer: '" + s + "'");
        }
        return v;
    }

    double Manifest::get_real(std::string const& key) const
    {
        std::string const& s = get(key);
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size()) {
            throw model_load_error("manifest key '" + key + "' is not a number: '" + s + "'");
        }
        return v;
    }

    void Manifest::write(std::string const& path) const
    {
        std::ofstream ofs(path);
        if (!ofs) throw io_error("cannot write '" + path + "'");
        for (auto const& [k, v] : entries_) {
            ofs << k << "=" << v << "\n";
        }
    }

    Manifest Manifest::read(std::string const& path)
    {
        std::ifstream ifs(path);
        if (!ifs) throw io_error("cannot open '" + path + "'");
        Manifest m;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(ifs, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw parse_error(path, lineno, "expected key=value");
            }
            m.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        }
        return m;
    }

    std::string format_real(double v)
    {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

    namespace {

        std::uint64_t to_le(std::uint64_t v)
        {
            if constexpr (std::endian::native == std::endian::big) {
                std::uint64_t r = 0;
                for (int i = 0; i < 8; ++i) {
                    r = (r << 8) | (v & 0xff);
                    v >>= 8;
                }
                return r;
            }
            return v;
        }

    }

    void write_weights(std::string const& path, std::vector<Array const*> const& arrays)
    {
        std::ofstream ofs(path, std::ios::binary);
        if (!ofs) throw io_error("cannot write '" + path + "'");
        for (Array const* a : arrays) {
            for (double d : a->data()) {
                auto bits = to_le(std::bit_cast<std::uint64_t>(d));
                char buf[8];
                std::memcpy(buf, &bits, 8);
                ofs.write(buf, 8);
            }
        }
        if (!ofs) throw io_error("write failed for '" + path + "'");
    }

    void read_weights(std::string const& path, std::vector<Array*> const& arrays)
    {
        std::ifstream ifs(path, std::ios::binary);
        if (!ifs) throw io_error("cannot open '" + path + "'");
        std::size_t expected = 0;
        for (Array* a : arrays) expected += a->size();
        ifs.seekg(0, std::ios::end);
        auto bytes = static_cast<std::size_t>(ifs.tellg());
        ifs.seekg(0);
        if (bytes != expected * 8) {
            throw model_load_error("'" + path + "' holds " + std::to_string(bytes) + " bytes, manifest declares "
                + std::to_string(expected) + " float64 values");
        }
        for (Array* a : arrays) {
            for (double& d : a->data()) {
                char buf[8];
                ifs.read(buf, 8);
                std::uint64_t bits = 0;
                std::memcpy(&bits, buf, 8);
                d = std::bit_cast<double>(to_le(bits));
            }
        }
        if (!ifs) throw io_error("read failed for '" + path + "'");
    }

    std::string shape_token(std::vector<std::size_t> const& shape)
    {
        std::string s;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s;
    }

    std::vector<std::size_t> parse_shape_token(std::string const& s)
    {
        std::vector<std::size_t> shape;
        std::size_t start = 0;
        while (start <= s.size()) {
            auto x = s.find('x', start);
            std::string part = s.substr(start, x == std::string::npos ? std::string::npos : x - start);
            std::size_t v = 0;
            auto r = std::from_chars(part.data(), part.data() + part.size(), v);
            if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size()) {
                throw model_load_error("bad shape '" + s + "'");
            }
            shape.push_back(v);
            if (x == std::string::npos) break;
            start = x + 1;
        }
        return shape;
    }

}
