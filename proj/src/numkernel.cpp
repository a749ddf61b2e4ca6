#include "scidt/numkernel.hpp"
#include "scidt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace scidt {

    namespace {

        std::size_t product(std::vector<std::size_t> const& shape)
        {
            return std::accumulate(shape.begin(), shape.end(), std::size_t {1},
                std::multiplies<std::size_t>());
        }

    }

    std::string shape_string(std::vector<std::size_t> const& shape)
    {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << "x";
            os << shape[i];
        }
        os << "]";
        return os.str();
    }

    Array::Array(std::vector<std::size_t> shape, double fill)
        : shape_(std::move(shape)), data_(product(shape_), fill)
    {
        if (shape_.empty() || shape_.size() > 3) {
            throw dimension_error("array rank must be 1..3, got " + std::to_string(shape_.size()));
        }
    }

    Array::Array(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_.empty() || shape_.size() > 3) {
            throw dimension_error("array rank must be 1..3, got " + std::to_string(shape_.size()));
        }
        if (product(shape_) != data_.size()) {
            throw dimension_error("data length " + std::to_string(data_.size())
                + " does not match shape " + scidt::shape_string(shape_));
        }
    }

    Array Array::vector(std::vector<double> values)
    {
        std::size_t n = values.size();
        return Array({n}, std::move(values));
    }

    Array Array::matrix(std::vector<std::vector<double>> const& rows)
    {
        std::size_t r = rows.size();
        std::size_t c = r ? rows[0].size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (auto const& row : rows) {
            if (row.size() != c) {
                throw dimension_error("ragged matrix literal");
            }
            data.insert(data.end(), row.begin(), row.end());
        }
        return Array({r, c}, std::move(data));
    }

    std::span<double> Array::row(std::size_t i)
    {
        assert(rank() == 2);
        return std::span<double>(data_).subspan(i * shape_[1], shape_[1]);
    }

    std::span<double const> Array::row(std::size_t i) const
    {
        assert(rank() == 2);
        return std::span<double const>(data_).subspan(i * shape_[1], shape_[1]);
    }

    std::span<double> Array::row(std::size_t i, std::size_t j)
    {
        assert(rank() == 3);
        return std::span<double>(data_).subspan((i * shape_[1] + j) * shape_[2], shape_[2]);
    }

    std::span<double const> Array::row(std::size_t i, std::size_t j) const
    {
        assert(rank() == 3);
        return std::span<double const>(data_).subspan((i * shape_[1] + j) * shape_[2], shape_[2]);
    }

    void Array::fill(double v)
    {
        std::fill(data_.begin(), data_.end(), v);
    }

    bool Array::all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    std::string Array::shape_string() const
    {
        return scidt::shape_string(shape_);
    }

    Mask::Mask(std::vector<std::size_t> shape, bool fill)
        : shape_(std::move(shape)), data_(product(shape_), fill ? 1 : 0)
    {
        if (shape_.empty() || shape_.size() > 2) {
            throw dimension_error("mask rank must be 1..2");
        }
    }

    std::size_t Mask::count() const
    {
        return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t {1}));
    }

    void check_finite(std::span<double const> values, char const* where)
    {
        for (double v : values) {
            if (!std::isfinite(v)) {
                throw numeric_error(std::string("non-finite value in ") + where);
            }
        }
    }

    Array zeros_like(Array const& a)
    {
        return Array(a.shape(), 0.0);
    }

    void vec_mat(std::span<double const> x, Array const& m, std::span<double> out)
    {
        assert(m.rank() == 2 && x.size() == m.dim(0) && out.size() == m.dim(1));
        std::fill(out.begin(), out.end(), 0.0);
        std::size_t cols = m.dim(1);
        auto md = m.data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            double xk = x[k];
            if (xk == 0.0) continue;
            double const* mrow = md.data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                out[j] += xk * mrow[j];
            }
        }
    }

    void vec_mat_t_acc(std::span<double const> g, Array const& m, std::span<double> out)
    {
        assert(m.rank() == 2 && g.size() == m.dim(1) && out.size() == m.dim(0));
        std::size_t cols = m.dim(1);
        auto md = m.data();
        for (std::size_t k = 0; k < out.size(); ++k) {
            double const* mrow = md.data() + k * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                s += g[j] * mrow[j];
            }
            out[k] += s;
        }
    }

    void outer_acc(std::span<double const> x, std::span<double const> g, Array& m)
    {
        assert(m.rank() == 2 && x.size() == m.dim(0) && g.size() == m.dim(1));
        std::size_t cols = m.dim(1);
        auto md = m.data();
        for (std::size_t k = 0; k < x.size(); ++k) {
            double xk = x[k];
            if (xk == 0.0) continue;
            double* mrow = md.data() + k * cols;
            for (std::size_t j = 0; j < cols; ++j) {
                mrow[j] += xk * g[j];
            }
        }
    }

    double dot(std::span<double const> a, std::span<double const> b)
    {
        assert(a.size() == b.size());
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            s += a[i] * b[i];
        }
        return s;
    }

    void axpy(double alpha, std::span<double const> x, std::span<double> y)
    {
        assert(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] += alpha * x[i];
        }
    }

    Array matmul(Array const& a, Array const& b)
    {
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
            throw dimension_error("matmul: cannot multiply " + a.shape_string()
                + " by " + b.shape_string());
        }
        Array out({a.dim(0), b.dim(1)});
        for (std::size_t i = 0; i < a.dim(0); ++i) {
            vec_mat(a.row(i), b, out.row(i));
        }
        check_finite(out, "matmul");
        return out;
    }

    matmul_grads matmul_backward(Array const& a, Array const& b, Array const& dout)
    {
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)
                || dout.rank() != 2 || dout.dim(0) != a.dim(0) || dout.dim(1) != b.dim(1)) {
            throw dimension_error("matmul_backward: inconsistent shapes " + a.shape_string()
                + ", " + b.shape_string() + ", " + dout.shape_string());
        }
        matmul_grads g {zeros_like(a), zeros_like(b)};
        for (std::size_t i = 0; i < a.dim(0); ++i) {
            // da[i,:] = dout[i,:] . b^T ; db += a[i,:]^T dout[i,:]
            vec_mat_t_acc(dout.row(i), b, g.da.row(i));
            outer_acc(a.row(i), dout.row(i), g.db);
        }
        return g;
    }

    Array tanh_elem(Array const& x)
    {
        Array out = x;
        for (double& v : out.data()) {
            v = std::tanh(v);
        }
        check_finite(out, "tanh");
        return out;
    }

    Array tanh_backward(Array const& out, Array const& dout)
    {
        if (out.shape() != dout.shape()) {
            throw dimension_error("tanh_backward: " + out.shape_string() + " vs " + dout.shape_string());
        }
        Array dx = dout;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] *= 1.0 - out[i] * out[i];
        }
        return dx;
    }

    double sigmoid(double x)
    {
        if (x >= 0) {
            return 1.0 / (1.0 + std::exp(-x));
        }
        double e = std::exp(x);
        return e / (1.0 + e);
    }

    std::vector<double> softmax_vec(std::span<double const> x, std::span<std::uint8_t const> mask)
    {
        if (mask.size() != x.size()) {
            throw dimension_error("softmax: mask length " + std::to_string(mask.size())
                + " vs input length " + std::to_string(x.size()));
        }
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (mask[i]) {
                mx = std::max(mx, x[i]);
                any = true;
            }
        }
        if (!any) {
            throw degenerate_input_error("softmax over a fully masked vector");
        }
        check_finite(x, "softmax input");
        std::vector<double> p(x.size(), 0.0);
        double z = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (mask[i]) {
                p[i] = std::exp(x[i] - mx);
                z += p[i];
            }
        }
        for (double& v : p) {
            v /= z;
        }
        return p;
    }

    std::vector<double> softmax_vec(std::span<double const> x)
    {
        std::vector<std::uint8_t> all(x.size(), 1);
        return softmax_vec(x, all);
    }

    std::vector<double> softmax_backward(std::span<double const> p, std::span<double const> dp,
        std::span<std::uint8_t const> mask)
    {
        assert(p.size() == dp.size() && p.size() == mask.size());
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (mask[i]) s += p[i] * dp[i];
        }
        std::vector<double> dx(p.size(), 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (mask[i]) dx[i] = p[i] * (dp[i] - s);
        }
        return dx;
    }

    lstm_params::lstm_params(std::size_t input_dim, std::size_t hidden_dim)
    {
        for (int k = 0; k < 4; ++k) {
            wx[k] = Array({input_dim, hidden_dim});
            wh[k] = Array({hidden_dim, hidden_dim});
            b[k] = Array({hidden_dim});
        }
    }

    lstm_step lstm_cell_step(std::span<double const> x, std::span<double const> h_prev,
        std::span<double const> c_prev, lstm_params const& p)
    {
        std::size_t n = p.hidden_dim();
        if (x.size() != p.input_dim() || h_prev.size() != n || c_prev.size() != n) {
            throw dimension_error("lstm step: input " + std::to_string(x.size()) + ", state "
                + std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size())
                + " vs params " + std::to_string(p.input_dim()) + "->" + std::to_string(n));
        }
        std::array<std::vector<double>, 4> pre;
        std::vector<double> tmp(n);
        for (int k = 0; k < 4; ++k) {
            pre[k].assign(p.b[k].data().begin(), p.b[k].data().end());
            vec_mat(x, p.wx[k], tmp);
            axpy(1.0, tmp, pre[k]);
            vec_mat(h_prev, p.wh[k], tmp);
            axpy(1.0, tmp, pre[k]);
        }
        lstm_step s;
        s.i.resize(n); s.f.resize(n); s.o.resize(n); s.g.resize(n);
        s.c.resize(n); s.tanh_c.resize(n); s.h.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            s.i[j] = sigmoid(pre[0][j]);
            s.f[j] = sigmoid(pre[1][j]);
            s.o[j] = sigmoid(pre[2][j]);
            s.g[j] = std::tanh(pre[3][j]);
            s.c[j] = s.f[j] * c_prev[j] + s.i[j] * s.g[j];
            s.tanh_c[j] = std::tanh(s.c[j]);
            s.h[j] = s.o[j] * s.tanh_c[j];
        }
        check_finite(s.c, "lstm cell");
        check_finite(s.h, "lstm hidden");
        return s;
    }

    lstm_step_grads lstm_cell_backward(lstm_step const& s, std::span<double const> x,
        std::span<double const> h_prev, std::span<double const> c_prev,
        lstm_params const& p, std::span<double const> dh, std::span<double const> dc,
        lstm_params& grads)
    {
        std::size_t n = p.hidden_dim();
        std::array<std::vector<double>, 4> dpre;
        for (auto& v : dpre) v.assign(n, 0.0);

        lstm_step_grads r;
        r.dc_prev.assign(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double dct = dc[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            double d_o = dh[j] * s.tanh_c[j];
            double d_i = dct * s.g[j];
            double d_g = dct * s.i[j];
            double d_f = dct * c_prev[j];
            r.dc_prev[j] = dct * s.f[j];
            dpre[0][j] = d_i * s.i[j] * (1.0 - s.i[j]);
            dpre[1][j] = d_f * s.f[j] * (1.0 - s.f[j]);
            dpre[2][j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dpre[3][j] = d_g * (1.0 - s.g[j] * s.g[j]);
        }

        r.dx.assign(x.size(), 0.0);
        r.dh_prev.assign(n, 0.0);
        for (int k = 0; k < 4; ++k) {
            outer_acc(x, dpre[k], grads.wx[k]);
            outer_acc(h_prev, dpre[k], grads.wh[k]);
            axpy(1.0, dpre[k], grads.b[k].data());
            vec_mat_t_acc(dpre[k], p.wx[k], r.dx);
            vec_mat_t_acc(dpre[k], p.wh[k], r.dh_prev);
        }
        return r;
    }

    grad_store::grad_store(param_refs const& params)
    {
        for (auto const& p : params) {
            grads_.emplace(p.name, zeros_like(*p.value));
        }
    }

    Array& grad_store::at(std::string const& name)
    {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            throw error("no gradient slot for parameter '" + name + "'");
        }
        return it->second;
    }

    Array const& grad_store::at(std::string const& name) const
    {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            throw error("no gradient slot for parameter '" + name + "'");
        }
        return it->second;
    }

    Array& grad_store::add(std::string const& name, std::vector<std::size_t> const& shape)
    {
        return grads_.insert_or_assign(name, Array(shape)).first->second;
    }

    void grad_store::zero()
    {
        for (auto& [name, g] : grads_) {
            g.fill(0.0);
        }
    }

    void grad_store::accumulate(grad_store const& other, double scale)
    {
        for (auto const& [name, g] : other.grads_) {
            Array& mine = at(name);
            if (mine.shape() != g.shape()) {
                throw dimension_error("gradient '" + name + "' shape " + mine.shape_string()
                    + " vs " + g.shape_string());
            }
            axpy(scale, g.data(), mine.data());
        }
    }

    double grad_check_report::max_rel_error() const
    {
        double m = 0.0;
        for (auto const& e : entries) {
            m = std::max(m, e.max_rel_error);
        }
        return m;
    }

    double relative_error(double analytic, double numeric, double floor)
    {
        double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
        return std::fabs(analytic - numeric) / denom;
    }

    grad_check_report gradient_check(std::function<double()> const& f, param_refs const& params,
        grad_store const& analytic, double eps)
    {
        grad_check_report report;
        for (auto const& p : params) {
            Array& theta = *p.value;
            Array const& g = analytic.at(p.name);
            if (g.shape() != theta.shape()) {
                throw dimension_error("gradient_check: '" + p.name + "' gradient shape "
                    + g.shape_string() + " vs parameter " + theta.shape_string());
            }
            grad_check_entry e {p.name};
            for (std::size_t k = 0; k < theta.size(); ++k) {
                double orig = theta[k];
                theta[k] = orig + eps;
                double fp = f();
                theta[k] = orig - eps;
                double fm = f();
                theta[k] = orig;
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    throw numeric_error("gradient_check: non-finite objective while perturbing '"
                        + p.name + "'[" + std::to_string(k) + "]");
                }
                double numeric = (fp - fm) / (2.0 * eps);
                e.max_rel_error = std::max(e.max_rel_error, relative_error(g[k], numeric));
                e.max_abs_error = std::max(e.max_abs_error, std::fabs(g[k] - numeric));
            }
            report.entries.push_back(e);
        }
        return report;
    }

    double uniform01(std::mt19937_64& rng)
    {
        return static_cast<double>(rng() >> 11) * 0x1.0p-53;
    }

    void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    void glorot_uniform(Array& m, std::mt19937_64& rng)
    {
        assert(m.rank() == 2);
        double r = std::sqrt(6.0 / static_cast<double>(m.dim(0) + m.dim(1)));
        fill_uniform(m, -r, r, rng);
    }

    void fill_uniform(Array& a, double lo, double hi, std::mt19937_64& rng)
    {
        for (double& v : a.data()) {
            v = lo + (hi - lo) * uniform01(rng);
        }
    }

    void fill_normal(Array& a, double stddev, std::mt19937_64& rng)
    {
        // Box-Muller, one variate per pair of uniforms.
        for (double& v : a.data()) {
            double u1 = 1.0 - uniform01(rng);
            double u2 = uniform01(rng);
            v = stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        }
    }

}
