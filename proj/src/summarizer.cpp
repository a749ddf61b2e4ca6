#include "scidt/summarizer.hpp"
#include "scidt/error.hpp"

#include <cmath>

namespace scidt {

    namespace {

        void require(bool ok, std::string const& what)
        {
            if (!ok) throw dimension_error(what);
        }

        bool any_unmasked(Mask const& word_mask, std::size_t i)
        {
            for (auto m : word_mask.row(i)) {
                if (m) return true;
            }
            return false;
        }

        void check_attention_shapes(Array const& d_l, Mask const& word_mask, char const* op)
        {
            require(d_l.rank() == 3, std::string(op) + ": expected c x w x p input, got " + d_l.shape_string());
            require(word_mask.shape().size() == 2 && word_mask.shape()[0] == d_l.dim(0)
                    && word_mask.shape()[1] == d_l.dim(1),
                std::string(op) + ": word mask " + shape_string(word_mask.shape())
                    + " does not match input " + d_l.shape_string());
        }

    }

    std::string_view variant_name(AttentionVariant v)
    {
        switch (v) {
        case AttentionVariant::none: return "none";
        case AttentionVariant::simple: return "simple";
        case AttentionVariant::recurrent: return "recurrent";
        }
        return "none";
    }

    std::optional<AttentionVariant> parse_variant(std::string_view s)
    {
        if (s == "none") return AttentionVariant::none;
        if (s == "simple") return AttentionVariant::simple;
        if (s == "recurrent") return AttentionVariant::recurrent;
        return std::nullopt;
    }

    Array project(Array const& d, Array const& projection)
    {
        require(d.rank() == 3 && projection.rank() == 2 && d.dim(2) == projection.dim(0),
            "project: word vectors " + d.shape_string() + " vs projection " + projection.shape_string());
        std::size_t c = d.dim(0);
        std::size_t w = d.dim(1);
        std::size_t p = projection.dim(1);
        Array out({c, w, p});
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                auto o = out.row(i, j);
                vec_mat(d.row(i, j), projection, o);
                for (double& v : o) v = std::tanh(v);
            }
        }
        check_finite(out, "project");
        return out;
    }

    void project_backward(Array const& d, Array const& projection, Array const& d_l,
        Array const& d_d_l, Array& d_projection, Array* dd)
    {
        std::size_t c = d.dim(0);
        std::size_t w = d.dim(1);
        std::size_t p = projection.dim(1);
        if (dd && dd->shape() != d.shape()) *dd = zeros_like(d);
        std::vector<double> dz(p);
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                auto y = d_l.row(i, j);
                auto g = d_d_l.row(i, j);
                bool nonzero = false;
                for (std::size_t k = 0; k < p; ++k) {
                    dz[k] = g[k] * (1.0 - y[k] * y[k]);
                    nonzero = nonzero || dz[k] != 0.0;
                }
                if (!nonzero) continue;
                outer_acc(d.row(i, j), dz, d_projection);
                if (dd) vec_mat_t_acc(dz, projection, dd->row(i, j));
            }
        }
    }

    Array attend_simple(Array const& d_l, Array const& scorer, Mask const& word_mask)
    {
        check_attention_shapes(d_l, word_mask, "attend_simple");
        require(scorer.rank() == 1 && scorer.dim(0) == d_l.dim(2),
            "attend_simple: scorer " + scorer.shape_string() + " vs input " + d_l.shape_string());
        std::size_t c = d_l.dim(0);
        std::size_t w = d_l.dim(1);
        Array a({c, w});
        std::vector<double> scores(w);
        for (std::size_t i = 0; i < c; ++i) {
            if (!any_unmasked(word_mask, i)) continue;
            for (std::size_t j = 0; j < w; ++j) {
                scores[j] = word_mask(i, j) ? dot(d_l.row(i, j), scorer.data()) : 0.0;
            }
            auto row = softmax_vec(scores, word_mask.row(i));
            std::copy(row.begin(), row.end(), a.row(i).begin());
        }
        return a;
    }

    void attend_simple_backward(Array const& d_l, Array const& scorer, Mask const& word_mask,
        Array const& attention, Array const& d_attention, Array& d_d_l, Array& d_scorer)
    {
        std::size_t c = d_l.dim(0);
        std::size_t w = d_l.dim(1);
        for (std::size_t i = 0; i < c; ++i) {
            if (!any_unmasked(word_mask, i)) continue;
            auto ds = softmax_backward(attention.row(i), d_attention.row(i), word_mask.row(i));
            for (std::size_t j = 0; j < w; ++j) {
                if (!word_mask(i, j) || ds[j] == 0.0) continue;
                axpy(ds[j], scorer.data(), d_d_l.row(i, j));
                axpy(ds[j], d_l.row(i, j), d_scorer.data());
            }
        }
    }

    Array attend_recurrent(Array const& d_l, RecurrentAttentionParams const& params,
        Mask const& word_mask, Array* hidden)
    {
        check_attention_shapes(d_l, word_mask, "attend_recurrent");
        std::size_t c = d_l.dim(0);
        std::size_t w = d_l.dim(1);
        std::size_t p = d_l.dim(2);
        require(params.w_ih.rank() == 2 && params.w_ih.dim(0) == p && params.w_ih.dim(1) == p
                && params.w_hh.rank() == 2 && params.w_hh.dim(0) == p && params.w_hh.dim(1) == p
                && params.scorer.rank() == 1 && params.scorer.dim(0) == p,
            "attend_recurrent: parameters do not match projection width " + std::to_string(p));

        Array h_all({c, w, p});
        Array a({c, w});
        std::vector<double> scores(w);
        std::vector<double> h_prev(p);
        std::vector<double> tmp(p);
        for (std::size_t i = 0; i < c; ++i) {
            if (!any_unmasked(word_mask, i)) continue;
            if (params.h0.empty()) {
                std::fill(h_prev.begin(), h_prev.end(), 0.0);
            } else {
                std::copy(params.h0.data().begin(), params.h0.data().end(), h_prev.begin());
            }
            for (std::size_t j = 0; j < w; ++j) {
                scores[j] = 0.0;
                if (!word_mask(i, j)) continue;
                auto h = h_all.row(i, j);
                vec_mat(d_l.row(i, j), params.w_ih, h);
                vec_mat(h_prev, params.w_hh, tmp);
                for (std::size_t k = 0; k < p; ++k) {
                    h[k] = std::tanh(h[k] + tmp[k]);
                }
                std::copy(h.begin(), h.end(), h_prev.begin());
                scores[j] = dot(h, params.scorer.data());
            }
            auto row = softmax_vec(scores, word_mask.row(i));
            std::copy(row.begin(), row.end(), a.row(i).begin());
        }
        check_finite(h_all, "recurrent attention");
        if (hidden) *hidden = std::move(h_all);
        return a;
    }

    void attend_recurrent_backward(Array const& d_l, RecurrentAttentionParams const& params,
        Mask const& word_mask, Array const& hidden, Array const& attention,
        Array const& d_attention, Array& d_d_l, RecurrentAttentionGrads& grads)
    {
        std::size_t c = d_l.dim(0);
        std::size_t w = d_l.dim(1);
        std::size_t p = d_l.dim(2);
        std::vector<double> dh_next(p);
        std::vector<double> du(p);
        std::vector<double> h0(p, 0.0);
        if (!params.h0.empty()) {
            std::copy(params.h0.data().begin(), params.h0.data().end(), h0.begin());
        }
        for (std::size_t i = 0; i < c; ++i) {
            if (!any_unmasked(word_mask, i)) continue;
            auto ds = softmax_backward(attention.row(i), d_attention.row(i), word_mask.row(i));
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            for (std::size_t jj = w; jj-- > 0;) {
                if (!word_mask(i, jj)) continue;
                auto h = hidden.row(i, jj);
                axpy(ds[jj], h, grads.scorer.data());
                // previous unmasked hidden state, or h0
                std::span<double const> h_prev = h0;
                for (std::size_t k = jj; k-- > 0;) {
                    if (word_mask(i, k)) {
                        h_prev = hidden.row(i, k);
                        break;
                    }
                }
                for (std::size_t k = 0; k < p; ++k) {
                    double dh = dh_next[k] + ds[jj] * params.scorer[k];
                    du[k] = dh * (1.0 - h[k] * h[k]);
                }
                outer_acc(d_l.row(i, jj), du, grads.w_ih);
                outer_acc(h_prev, du, grads.w_hh);
                vec_mat_t_acc(du, params.w_ih, d_d_l.row(i, jj));
                std::fill(dh_next.begin(), dh_next.end(), 0.0);
                vec_mat_t_acc(du, params.w_hh, dh_next);
            }
        }
    }

    Array summarize(Array const& d, Array const& attention)
    {
        require(d.rank() == 3 && attention.rank() == 2 && attention.dim(0) == d.dim(0)
                && attention.dim(1) == d.dim(1),
            "summarize: attention " + attention.shape_string() + " vs word vectors " + d.shape_string());
        std::size_t c = d.dim(0);
        std::size_t w = d.dim(1);
        Array out({c, d.dim(2)});
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                double a = attention(i, j);
                if (a == 0.0) continue;
                axpy(a, d.row(i, j), out.row(i));
            }
        }
        check_finite(out, "summarize");
        return out;
    }

    void summarize_backward(Array const& d, Array const& attention, Array const& d_summ_grad,
        Array& d_attention, Array* dd)
    {
        std::size_t c = d.dim(0);
        std::size_t w = d.dim(1);
        if (d_attention.shape() != attention.shape()) d_attention = zeros_like(attention);
        if (dd && dd->shape() != d.shape()) *dd = zeros_like(d);
        for (std::size_t i = 0; i < c; ++i) {
            auto g = d_summ_grad.row(i);
            for (std::size_t j = 0; j < w; ++j) {
                d_attention(i, j) += dot(g, d.row(i, j));
                if (dd) axpy(attention(i, j), g, dd->row(i, j));
            }
        }
    }

    Array uniform_attention(Mask const& word_mask)
    {
        std::size_t c = word_mask.shape()[0];
        std::size_t w = word_mask.shape()[1];
        Array a({c, w});
        for (std::size_t i = 0; i < c; ++i) {
            std::size_t n = 0;
            for (auto m : word_mask.row(i)) n += m ? 1 : 0;
            if (n == 0) continue;
            for (std::size_t j = 0; j < w; ++j) {
                if (word_mask(i, j)) a(i, j) = 1.0 / static_cast<double>(n);
            }
        }
        return a;
    }

    Array summarize_average(Array const& d, Mask const& word_mask)
    {
        return summarize(d, uniform_attention(word_mask));
    }

    SummarizerParams::SummarizerParams(AttentionVariant variant, std::size_t dim, std::size_t proj_dim)
        : variant(variant)
    {
        if (variant == AttentionVariant::none) return;
        if (proj_dim == 0 || dim == 0) {
            throw config_error("attention needs positive embedding and projection widths");
        }
        projection = Array({dim, proj_dim});
        scorer = Array({proj_dim});
        if (variant == AttentionVariant::recurrent) {
            w_ih = Array({proj_dim, proj_dim});
            w_hh = Array({proj_dim, proj_dim});
            h0 = Array({proj_dim});
        }
    }

    param_refs SummarizerParams::refs()
    {
        param_refs r;
        if (variant == AttentionVariant::none) return r;
        r.push_back({"attn.projection", &projection});
        r.push_back({"attn.scorer", &scorer});
        if (variant == AttentionVariant::recurrent) {
            r.push_back({"attn.w_ih", &w_ih});
            r.push_back({"attn.w_hh", &w_hh});
        }
        return r;
    }

    void SummarizerParams::init(std::mt19937_64& rng)
    {
        if (variant == AttentionVariant::none) return;
        glorot_uniform(projection, rng);
        scorer.fill(0.0);
        if (variant == AttentionVariant::recurrent) {
            glorot_uniform(w_ih, rng);
            glorot_uniform(w_hh, rng);
            h0.fill(0.0);
        }
    }

    Array summarizer_forward(SummarizerParams const& params, Array const& d, Mask const& word_mask,
        double dropout_p, std::mt19937_64* rng, SummarizerCache& cache)
    {
        if (params.variant == AttentionVariant::none) {
            cache = SummarizerCache {};
            cache.attention = uniform_attention(word_mask);
            return summarize(d, cache.attention);
        }
        cache.d_l = project(d, params.projection);
        cache.dropout = Array();
        if (dropout_p > 0.0) {
            if (!rng) throw config_error("dropout requested without a random source");
            cache.dropout = Array(cache.d_l.shape(), 0.0);
            double keep = 1.0 / (1.0 - dropout_p);
            std::size_t p = cache.d_l.dim(2);
            for (std::size_t i = 0; i < d.dim(0); ++i) {
                for (std::size_t j = 0; j < d.dim(1); ++j) {
                    if (!word_mask(i, j)) continue;
                    auto m = cache.dropout.row(i, j);
                    for (std::size_t k = 0; k < p; ++k) {
                        m[k] = uniform01(*rng) < dropout_p ? 0.0 : keep;
                    }
                }
            }
            cache.d_l_in = cache.d_l;
            for (std::size_t k = 0; k < cache.d_l_in.size(); ++k) {
                cache.d_l_in[k] *= cache.dropout[k];
            }
        } else {
            cache.d_l_in = cache.d_l;
        }

        if (params.variant == AttentionVariant::simple) {
            cache.attention = attend_simple(cache.d_l_in, params.scorer, word_mask);
        } else {
            RecurrentAttentionParams rp {params.w_ih, params.w_hh, params.scorer, params.h0};
            cache.attention = attend_recurrent(cache.d_l_in, rp, word_mask, &cache.hidden);
        }
        return summarize(d, cache.attention);
    }

    void summarizer_backward(SummarizerParams const& params, Array const& d, Mask const& word_mask,
        SummarizerCache const& cache, Array const& d_summ_grad, SummarizerParams& grads)
    {
        if (params.variant == AttentionVariant::none) return;  // embeddings are frozen
        Array d_attention({d.dim(0), d.dim(1)});
        summarize_backward(d, cache.attention, d_summ_grad, d_attention);

        Array d_d_l(cache.d_l.shape(), 0.0);
        if (params.variant == AttentionVariant::simple) {
            attend_simple_backward(cache.d_l_in, params.scorer, word_mask, cache.attention,
                d_attention, d_d_l, grads.scorer);
        } else {
            RecurrentAttentionParams rp {params.w_ih, params.w_hh, params.scorer, params.h0};
            RecurrentAttentionGrads rg {std::move(grads.w_ih), std::move(grads.w_hh), std::move(grads.scorer)};
            attend_recurrent_backward(cache.d_l_in, rp, word_mask, cache.hidden, cache.attention,
                d_attention, d_d_l, rg);
            grads.w_ih = std::move(rg.w_ih);
            grads.w_hh = std::move(rg.w_hh);
            grads.scorer = std::move(rg.scorer);
        }
        if (!cache.dropout.empty()) {
            for (std::size_t k = 0; k < d_d_l.size(); ++k) d_d_l[k] *= cache.dropout[k];
        }
        project_backward(d, params.projection, cache.d_l, d_d_l, grads.projection);
    }

}
