#include "doctest.h"

#include "oracles.hpp"
#include "scidt/error.hpp"
#include "scidt/numkernel.hpp"

#include <cmath>
#include <numeric>

using namespace scidt;
using namespace scidt::testing;

namespace {

    std::vector<double> to_vec(std::span<double const> s) { return {s.begin(), s.end()}; }

    // Scalar probe through one LSTM step: sum rh.*h + rc.*c.
    struct lstm_probe {
        Array x, h, c;
        lstm_params p;
        std::vector<double> rh, rc;

        double operator()() const
        {
            auto s = lstm_cell_step(x.data(), h.data(), c.data(), p);
            double v = 0.0;
            for (std::size_t k = 0; k < s.h.size(); ++k) v += rh[k] * s.h[k] + rc[k] * s.c[k];
            return v;
        }
    };

    lstm_probe random_lstm(std::size_t in, std::size_t hid, std::mt19937_64& rng)
    {
        lstm_probe t;
        t.x = random_array({in}, rng);
        t.h = random_array({hid}, rng);
        t.c = random_array({hid}, rng);
        t.p = lstm_params(in, hid);
        for (std::size_t g = 0; g < 4; ++g) {
            t.p.wx[g] = random_array({in, hid}, rng);
            t.p.wh[g] = random_array({hid, hid}, rng);
            t.p.b[g] = random_array({hid}, rng);
        }
        t.rh = to_vec(random_array({hid}, rng).data());
        t.rc = to_vec(random_array({hid}, rng).data());
        return t;
    }

    // Worst relative error over every input and parameter of one LSTM step.
    double lstm_grad_error(lstm_probe& t)
    {
        auto s = lstm_cell_step(t.x.data(), t.h.data(), t.c.data(), t.p);
        lstm_params grads(t.p.input_dim(), t.p.hidden_dim());
        auto d = lstm_cell_backward(s, t.x.data(), t.h.data(), t.c.data(), t.p, t.rh, t.rc, grads);
        double worst = 0.0;
        auto check = [&](Array& v, Array const& analytic) {
            worst = std::max(worst, max_rel_error(analytic, fd_gradient(std::cref(t), v)));
        };
        check(t.x, Array::vector(d.dx));
        check(t.h, Array::vector(d.dh_prev));
        check(t.c, Array::vector(d.dc_prev));
        for (std::size_t g = 0; g < 4; ++g) {
            check(t.p.wx[g], grads.wx[g]);
            check(t.p.wh[g], grads.wh[g]);
            check(t.p.b[g], grads.b[g]);
        }
        return worst;
    }

}

TEST_CASE("array shape and indexing")
{
    Array a({2, 3, 4});
    CHECK(a.size() == 24);
    CHECK(a.rank() == 3);
    a(1, 2, 3) = 7.0;
    CHECK(a[23] == 7.0);
    CHECK(a.row(1, 2)[3] == 7.0);
    CHECK(a.shape_string() == "[2x3x4]");
    CHECK_THROWS_AS(Array({1, 2, 3, 4}), dimension_error);
    CHECK_THROWS_AS(Array({2, 2}, std::vector<double> {1, 2, 3}), dimension_error);
}

TEST_CASE("matmul examples")
{
    auto id = Array::matrix({{1, 0}, {0, 1}});
    auto b = Array::matrix({{3, 4}, {5, 6}});
    CHECK(matmul(id, b) == b);
    CHECK(matmul(Array::matrix({{1, 2}}), Array::matrix({{3}, {4}})) == Array::matrix({{11}}));
}

TEST_CASE("matmul shape mismatch names both shapes")
{
    try {
        matmul(Array({2, 3}), Array({4, 2}));
        FAIL("expected a dimension error");
    } catch (dimension_error const& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul backward against finite differences")
{
    std::mt19937_64 rng(11);
    Array a = random_array({3, 4}, rng);
    Array b = random_array({4, 2}, rng);
    Array r = random_array({3, 2}, rng);
    auto f = [&] { return probe(matmul(a, b), r); };
    auto g = matmul_backward(a, b, r);
    CHECK(max_rel_error(g.da, fd_gradient(f, a)) < 1e-6);
    CHECK(max_rel_error(g.db, fd_gradient(f, b)) < 1e-6);
}

TEST_CASE("tanh values, saturation and gradient")
{
    CHECK(tanh_elem(Array::vector({0.0}))[0] == 0.0);
    Array big = tanh_elem(Array::vector({50.0}));
    CHECK(std::abs(big[0] - 1.0) < 1e-12);
    CHECK(std::abs(tanh_backward(big, Array::vector({1.0}))[0]) < 1e-12);

    std::mt19937_64 rng(3);
    Array x = random_array({2, 3}, rng);
    Array r = random_array({2, 3}, rng);
    auto f = [&] { return probe(tanh_elem(x), r); };
    Array analytic = tanh_backward(tanh_elem(x), r);
    CHECK(max_rel_error(analytic, fd_gradient(f, x)) < 1e-6);
}

TEST_CASE("softmax examples")
{
    auto u = softmax_vec(std::vector<double> {0, 0, 0});
    for (double v : u) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

    std::vector<std::uint8_t> m {1, 0};
    auto s = softmax_vec(std::vector<double> {5, 5}, m);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == 0.0);

    auto p = softmax_vec(std::vector<double> {1, 2, 3});
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(p[k] - std::exp(k + 1.0) / z) < 1e-15);
    CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) < 1e-12);
}

TEST_CASE("softmax over a fully masked vector is degenerate")
{
    std::vector<std::uint8_t> m {0, 0};
    CHECK_THROWS_AS(softmax_vec(std::vector<double> {1, 2}, m), degenerate_input_error);
}

TEST_CASE("softmax laws on random masked inputs")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng() % 8;
        Array x = random_array({n}, rng, 1e3);
        std::vector<std::uint8_t> m(n);
        for (auto& v : m) v = rng() % 3 != 0;
        m[rng() % n] = 1;
        auto p = softmax_vec(x.data(), m);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(p[k] >= 0.0);
            CHECK(std::isfinite(p[k]));
            if (!m[k]) CHECK(p[k] == 0.0);
            sum += p[k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("cross-entropy through softmax gradient")
{
    std::mt19937_64 rng(8);
    Array x = random_array({4}, rng);
    std::vector<std::uint8_t> mask(4, 1);
    std::size_t gold = 2;
    auto f = [&] { return -std::log(softmax_vec(x.data(), mask)[gold]); };
    auto p = softmax_vec(x.data(), mask);
    std::vector<double> dp(4, 0.0);
    dp[gold] = -1.0 / p[gold];
    Array analytic = Array::vector(softmax_backward(p, dp, mask));
    CHECK(max_rel_error(analytic, fd_gradient(f, x)) < 1e-7);
    // closed form p - onehot
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(analytic[k] - (p[k] - (k == gold ? 1.0 : 0.0))) < 1e-12);
}

TEST_CASE("lstm step examples")
{
    lstm_params p(3, 2);
    std::vector<double> x {0.3, -0.2, 0.9};
    std::vector<double> zero(2, 0.0);
    auto s = lstm_cell_step(x, zero, zero, p);
    for (double v : s.h) CHECK(v == 0.0);
    for (double v : s.c) CHECK(v == 0.0);

    // forget gate saturated open, input gate contributes i * tanh(0) = 0
    p.b[static_cast<std::size_t>(gate::forget)].fill(50.0);
    std::vector<double> v {0.7, -1.3};
    auto t = lstm_cell_step(x, zero, v, p);
    CHECK(std::abs(t.c[0] - 0.7) < 1e-12);
    CHECK(std::abs(t.c[1] + 1.3) < 1e-12);
}

TEST_CASE("lstm backward covers every input and block")
{
    std::mt19937_64 rng(21);
    auto t = random_lstm(3, 4, rng);
    CHECK(lstm_grad_error(t) < 1e-5);
}

TEST_CASE("gradient_check examples")
{
    Array x = Array::vector({3.0});
    param_refs params {{"x", &x}};
    grad_store g(params);
    g.at("x")[0] = 6.0;
    auto rep = gradient_check([&] { return x[0] * x[0]; }, params, g);
    REQUIRE(rep.entries.size() == 1);
    CHECK(rep.entries[0].max_abs_error < 1e-8);
    CHECK(x[0] == 3.0);   // restored

    // a wrong analytic gradient is reported, not hidden
    g.at("x")[0] = 5.0;
    CHECK(gradient_check([&] { return x[0] * x[0]; }, params, g).max_rel_error() > 0.1);

    g.at("x")[0] = 6.0;
    CHECK_THROWS_AS(gradient_check([&] { return x[0] > 3.0 ? NAN : 0.0; }, params, g), numeric_error);
}

TEST_CASE("gradient_check agrees with the independent oracle")
{
    std::mt19937_64 rng(4);
    Array a = random_array({2, 3}, rng);
    Array b = random_array({3, 3}, rng);
    Array r = random_array({2, 3}, rng);
    auto f = [&] { return probe(tanh_elem(matmul(a, b)), r); };
    Array y = tanh_elem(matmul(a, b));
    auto mg = matmul_backward(a, b, tanh_backward(y, r));
    param_refs params {{"a", &a}, {"b", &b}};
    grad_store g(params);
    g.at("a") = mg.da;
    g.at("b") = mg.db;
    CHECK(gradient_check(f, params, g).max_rel_error() < 1e-7);
    CHECK(max_rel_error(mg.da, fd_gradient(f, a)) < 1e-7);
}

TEST_CASE("backward ops match finite differences over 100 seeds")
{
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::size_t n = 1 + rng() % 4;
        std::size_t k = 1 + rng() % 4;
        std::size_t m = 1 + rng() % 4;
        Array a = random_array({n, k}, rng);
        Array b = random_array({k, m}, rng);
        Array r = random_array({n, m}, rng);
        auto fm = [&] { return probe(matmul(a, b), r); };
        auto mg = matmul_backward(a, b, r);
        worst = std::max(worst, max_rel_error(mg.da, fd_gradient(fm, a)));
        worst = std::max(worst, max_rel_error(mg.db, fd_gradient(fm, b)));

        auto ft = [&] { return probe(tanh_elem(a), Array(a.shape(), 0.5)); };
        worst = std::max(worst, max_rel_error(tanh_backward(tanh_elem(a), Array(a.shape(), 0.5)), fd_gradient(ft, a)));

        Array x = random_array({k + 1}, rng, 3.0);
        Array rs = random_array({k + 1}, rng);
        std::vector<std::uint8_t> mask(k + 1, 1);
        mask[0] = rng() % 2;
        auto fs = [&] { return probe(Array::vector(softmax_vec(x.data(), mask)), rs); };
        auto p = softmax_vec(x.data(), mask);
        Array sg = Array::vector(softmax_backward(p, rs.data(), mask));
        worst = std::max(worst, max_rel_error(sg, fd_gradient(fs, x)));

        auto t = random_lstm(k, m, rng);
        worst = std::max(worst, lstm_grad_error(t));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("matmul is associative")
{
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng() % 5, k = 1 + rng() % 5, m = 1 + rng() % 5, q = 1 + rng() % 5;
        Array a = random_array({n, k}, rng);
        Array b = random_array({k, m}, rng);
        Array c = random_array({m, q}, rng);
        Array left = matmul(matmul(a, b), c);
        Array right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            double denom = std::max({std::abs(left[i]), std::abs(right[i]), 1e-12});
            CHECK(std::abs(left[i] - right[i]) / denom < 1e-9);
        }
    }
}

TEST_CASE("ops stay finite on inputs up to 1e3")
{
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Array a = random_array({3, 3}, rng, 1e3);
        Array b = random_array({3, 3}, rng, 1e3);
        CHECK(matmul(a, b).all_finite());
        CHECK(tanh_elem(a).all_finite());
        auto p = softmax_vec(a.row(0));
        CHECK(Array::vector(p).all_finite());
        lstm_params lp(3, 3);
        for (std::size_t g = 0; g < 4; ++g) {
            lp.wx[g] = random_array({3, 3}, rng, 1e3);
            lp.wh[g] = random_array({3, 3}, rng, 1e3);
            lp.b[g] = random_array({3}, rng, 1e3);
        }
        auto s = lstm_cell_step(a.row(0), a.row(1), a.row(2), lp);
        CHECK(Array::vector(s.h).all_finite());
        CHECK(Array::vector(s.c).all_finite());
    }
}

TEST_CASE("check_finite rejects NaN and Inf")
{
    CHECK_NOTHROW(check_finite(Array::vector({1, 2}), "test"));
    CHECK_THROWS_AS(check_finite(Array::vector({1, NAN}), "test"), numeric_error);
    CHECK_THROWS_AS(check_finite(Array::vector({INFINITY}), "test"), numeric_error);
}

TEST_CASE("grad_store zero and accumulate")
{
    Array w({2, 2}, 1.0);
    param_refs params {{"w", &w}};
    grad_store g(params);
    CHECK(g.at("w").shape() == w.shape());
    g.at("w").fill(2.0);
    grad_store h(params);
    h.at("w").fill(1.0);
    g.accumulate(h, 0.5);
    CHECK(g.at("w")[3] == 2.5);
    g.zero();
    CHECK(g.at("w")[0] == 0.0);
    CHECK_THROWS(g.at("missing"));
}

TEST_CASE("seeded helpers are deterministic")
{
    std::mt19937_64 r1(42), r2(42);
    std::vector<std::size_t> a(20), b(20);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), 0);
    shuffle_indices(a, r1);
    shuffle_indices(b, r2);
    CHECK(a == b);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> expect(20);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);

    Array m({10, 6});
    glorot_uniform(m, r1);
    double bound = std::sqrt(6.0 / 16.0);
    for (double v : m.data()) CHECK(std::abs(v) <= bound);
    for (int i = 0; i < 1000; ++i) {
        double u = uniform01(r1);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}
