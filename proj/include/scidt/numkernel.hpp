#ifndef SCIDT_NUMKERNEL_HPP
#define SCIDT_NUMKERNEL_HPP

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scidt {

    // Dense row-major array of doubles with 1 to 3 axes.
    class Array {
    public:
        Array() = default;
        explicit Array(std::vector<std::size_t> shape, double fill = 0.0);
        Array(std::vector<std::size_t> shape, std::vector<double> data);

        static Array vector(std::vector<double> values);
        static Array matrix(std::vector<std::vector<double>> const& rows);

        std::vector<std::size_t> const& shape() const { return shape_; }
        std::size_t rank() const { return shape_.size(); }
        std::size_t size() const { return data_.size(); }
        std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
        bool empty() const { return data_.empty(); }

        double& operator[](std::size_t i) { return data_[i]; }
        double operator[](std::size_t i) const { return data_[i]; }

        double& operator()(std::size_t i, std::size_t j)
        {
            assert(rank() == 2);
            return data_[i * shape_[1] + j];
        }
        double operator()(std::size_t i, std::size_t j) const
        {
            assert(rank() == 2);
            return data_[i * shape_[1] + j];
        }
        double& operator()(std::size_t i, std::size_t j, std::size_t k)
        {
            assert(rank() == 3);
            return data_[(i * shape_[1] + j) * shape_[2] + k];
        }
        double operator()(std::size_t i, std::size_t j, std::size_t k) const
        {
            assert(rank() == 3);
            return data_[(i * shape_[1] + j) * shape_[2] + k];
        }

        std::span<double> data() { return data_; }
        std::span<double const> data() const { return data_; }
        std::vector<double> const& values() const { return data_; }

        // Innermost-axis slice: row(i) of a matrix, row(i, j) of a 3-axis array.
        std::span<double> row(std::size_t i);
        std::span<double const> row(std::size_t i) const;
        std::span<double> row(std::size_t i, std::size_t j);
        std::span<double const> row(std::size_t i, std::size_t j) const;

        void fill(double v);
        bool all_finite() const;
        std::string shape_string() const;

        friend bool operator==(Array const&, Array const&) = default;

    private:
        std::vector<std::size_t> shape_;
        std::vector<double> data_;
    };

    std::string shape_string(std::vector<std::size_t> const& shape);

    // Boolean mask with 1 or 2 axes, stored as bytes.
    class Mask {
    public:
        Mask() = default;
        explicit Mask(std::vector<std::size_t> shape, bool fill = false);

        std::vector<std::size_t> const& shape() const { return shape_; }
        std::size_t size() const { return data_.size(); }

        bool operator[](std::size_t i) const { return data_[i] != 0; }
        bool operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j] != 0; }
        void set(std::size_t i, bool v) { data_[i] = v ? 1 : 0; }
        void set(std::size_t i, std::size_t j, bool v) { data_[i * shape_[1] + j] = v ? 1 : 0; }

        std::span<std::uint8_t const> row(std::size_t i) const
        {
            return std::span<std::uint8_t const>(data_).subspan(i * shape_[1], shape_[1]);
        }
        std::span<std::uint8_t const> data() const { return data_; }
        std::size_t count() const;

        friend bool operator==(Mask const&, Mask const&) = default;

    private:
        std::vector<std::size_t> shape_;
        std::vector<std::uint8_t> data_;
    };

    // Throws numeric_error when any entry is NaN or infinite.
    void check_finite(std::span<double const> values, char const* where);
    inline void check_finite(Array const& a, char const* where) { check_finite(a.data(), where); }

    Array zeros_like(Array const& a);

    // out = x . m, with x a row vector of length m.rows.
    void vec_mat(std::span<double const> x, Array const& m, std::span<double> out);
    // out += g . m^T, with g of length m.cols.
    void vec_mat_t_acc(std::span<double const> g, Array const& m, std::span<double> out);
    // m += x^T g.
    void outer_acc(std::span<double const> x, std::span<double const> g, Array& m);
    double dot(std::span<double const> a, std::span<double const> b);
    // y += alpha * x
    void axpy(double alpha, std::span<double const> x, std::span<double> y);

    Array matmul(Array const& a, Array const& b);

    struct matmul_grads {
        Array da;
        Array db;
    };

    matmul_grads matmul_backward(Array const& a, Array const& b, Array const& dout);

    Array tanh_elem(Array const& x);
    // dL/dx given tanh output and dL/dout.
    Array tanh_backward(Array const& out, Array const& dout);

    double sigmoid(double x);

    // Masked, max-shifted softmax. Masked entries are exactly zero.
    std::vector<double> softmax_vec(std::span<double const> x, std::span<std::uint8_t const> mask);
    std::vector<double> softmax_vec(std::span<double const> x);
    // dL/dx given softmax output p and dL/dp; zero on masked entries.
    std::vector<double> softmax_backward(std::span<double const> p, std::span<double const> dp,
        std::span<std::uint8_t const> mask);

    enum class gate { input = 0, forget = 1, output = 2, cell = 3 };

    // Gate order: input, forget, output, candidate.
    struct lstm_params {
        std::array<Array, 4> wx;   // input_dim x hidden
        std::array<Array, 4> wh;   // hidden x hidden
        std::array<Array, 4> b;    // hidden

        lstm_params() = default;
        lstm_params(std::size_t input_dim, std::size_t hidden_dim);

        std::size_t input_dim() const { return wx[0].dim(0); }
        std::size_t hidden_dim() const { return wh[0].dim(0); }
    };

    struct lstm_step {
        std::vector<double> i, f, o, g;
        std::vector<double> c, tanh_c, h;
    };

    lstm_step lstm_cell_step(std::span<double const> x, std::span<double const> h_prev,
        std::span<double const> c_prev, lstm_params const& p);

    struct lstm_step_grads {
        std::vector<double> dx;
        std::vector<double> dh_prev;
        std::vector<double> dc_prev;
    };

    // Accumulates parameter gradients into grads and returns input/state gradients.
    lstm_step_grads lstm_cell_backward(lstm_step const& step, std::span<double const> x,
        std::span<double const> h_prev, std::span<double const> c_prev,
        lstm_params const& p, std::span<double const> dh, std::span<double const> dc,
        lstm_params& grads);

    struct named_param {
        std::string name;
        Array* value;
    };

    using param_refs = std::vector<named_param>;

    // Gradient accumulators keyed by parameter name.
    class grad_store {
    public:
        grad_store() = default;
        explicit grad_store(param_refs const& params);

        Array& at(std::string const& name);
        Array const& at(std::string const& name) const;
        bool contains(std::string const& name) const { return grads_.count(name) != 0; }
        Array& add(std::string const& name, std::vector<std::size_t> const& shape);

        void zero();
        // this += scale * other
        void accumulate(grad_store const& other, double scale = 1.0);

        std::map<std::string, Array> const& items() const { return grads_; }
        std::map<std::string, Array>& items() { return grads_; }

    private:
        std::map<std::string, Array> grads_;
    };

    struct grad_check_entry {
        std::string name;
        double max_rel_error = 0.0;
        double max_abs_error = 0.0;
    };

    struct grad_check_report {
        std::vector<grad_check_entry> entries;
        double max_rel_error() const;
    };

    // Relative error |a - n| / max(|a|, |n|, floor).
    double relative_error(double analytic, double numeric, double floor = 1e-6);

    // Central differences (f(t+eps) - f(t-eps)) / 2eps for every entry of every
    // parameter, compared against analytic. f is evaluated with parameters
    // perturbed in place and restored afterwards.
    grad_check_report gradient_check(std::function<double()> const& f, param_refs const& params,
        grad_store const& analytic, double eps = 1e-5);

    // 53-bit uniform in [0, 1). Used instead of <random> distributions so that
    // seeded runs agree across standard library implementations.
    double uniform01(std::mt19937_64& rng);
    // Fisher-Yates driven by uniform01-style draws.
    void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng);

    // Uniform in +-sqrt(6 / (fan_in + fan_out)).
    void glorot_uniform(Array& m, std::mt19937_64& rng);
    void fill_uniform(Array& a, double lo, double hi, std::mt19937_64& rng);
    void fill_normal(Array& a, double stddev, std::mt19937_64& rng);

}

#endif
