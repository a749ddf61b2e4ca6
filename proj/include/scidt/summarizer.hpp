#ifndef SCIDT_SUMMARIZER_HPP
#define SCIDT_SUMMARIZER_HPP

#include "scidt/numkernel.hpp"

#include <optional>
#include <random>
#include <string_view>

namespace scidt {

    enum class AttentionVariant { none, simple, recurrent };

    std::string_view variant_name(AttentionVariant v);
    std::optional<AttentionVariant> parse_variant(std::string_view s);

    // Low-dimensional word view: tanh(D . P), c x w x p.
    Array project(Array const& d, Array const& projection);
    // dP += sum over positions of D[i,j,:]^T (dD_l[i,j,:] * (1 - D_l^2)).
    // When dd is non-null, dL/dD is added to it (reshaped to zeros first if needed).
    void project_backward(Array const& d, Array const& projection, Array const& d_l,
        Array const& d_d_l, Array& d_projection, Array* dd = nullptr);

    // Attention rows: softmax over unmasked words of D_l[i] . scorer.
    // Rows of clauses with no unmasked word are all zero.
    Array attend_simple(Array const& d_l, Array const& scorer, Mask const& word_mask);
    void attend_simple_backward(Array const& d_l, Array const& scorer, Mask const& word_mask,
        Array const& attention, Array const& d_attention, Array& d_d_l, Array& d_scorer);

    struct RecurrentAttentionParams {
        Array w_ih;     // p x p
        Array w_hh;     // p x p
        Array scorer;   // p
        Array h0;       // p, not trained
    };

    struct RecurrentAttentionGrads {
        Array w_ih;
        Array w_hh;
        Array scorer;
    };

    // h_j = tanh(D_l[i,j,:] . W_IH + h_{j-1} . W_HH) left to right over the
    // unmasked words of each clause; scores h_j . scorer. Hidden states are
    // written to hidden (c x w x p, zero at masked positions).
    Array attend_recurrent(Array const& d_l, RecurrentAttentionParams const& params,
        Mask const& word_mask, Array* hidden = nullptr);
    void attend_recurrent_backward(Array const& d_l, RecurrentAttentionParams const& params,
        Mask const& word_mask, Array const& hidden, Array const& attention,
        Array const& d_attention, Array& d_d_l, RecurrentAttentionGrads& grads);

    // D_summ[i,:] = A[i,:] . D[i,:,:]
    Array summarize(Array const& d, Array const& attention);
    // Adds dL/dA to d_attention and, when dd is non-null, dL/dD to dd.
    // Either is reset to zeros first when its shape does not fit.
    void summarize_backward(Array const& d, Array const& attention, Array const& d_summ_grad,
        Array& d_attention, Array* dd = nullptr);

    Array uniform_attention(Mask const& word_mask);
    Array summarize_average(Array const& d, Mask const& word_mask);

    // Trainable parameters of one summarizer. Unused blocks stay empty.
    struct SummarizerParams {
        AttentionVariant variant = AttentionVariant::none;
        Array projection;   // d x p
        Array scorer;       // p (s_s or s_r)
        Array w_ih;         // recurrent only
        Array w_hh;         // recurrent only
        Array h0;           // recurrent only, fixed

        SummarizerParams() = default;
        SummarizerParams(AttentionVariant variant, std::size_t dim, std::size_t proj_dim);

        std::size_t dim() const { return projection.empty() ? 0 : projection.dim(0); }
        std::size_t proj_dim() const { return projection.empty() ? 0 : projection.dim(1); }

        // Trainable blocks in a fixed order, names prefixed with "attn.".
        param_refs refs();
        void init(std::mt19937_64& rng);
    };

    struct SummarizerCache {
        Array d_l;            // tanh(D . P) before dropout
        Array dropout;        // multiplicative mask on d_l, empty when inactive
        Array d_l_in;         // attention input (after dropout)
        Array hidden;         // recurrent hidden states
        Array attention;      // c x w
    };

    // Inverted dropout with rate dropout_p on the attention input; rng is only
    // drawn from when dropout_p > 0, once per unmasked entry.
    Array summarizer_forward(SummarizerParams const& params, Array const& d, Mask const& word_mask,
        double dropout_p, std::mt19937_64* rng, SummarizerCache& cache);

    // Accumulates into grads (same layout as params).
    void summarizer_backward(SummarizerParams const& params, Array const& d, Mask const& word_mask,
        SummarizerCache const& cache, Array const& d_summ_grad, SummarizerParams& grads);

}

#endif
