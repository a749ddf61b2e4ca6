#ifndef SCIDT_TAGGER_HPP
#define SCIDT_TAGGER_HPP

#include "scidt/adam.hpp"
#include "scidt/data.hpp"
#include "scidt/numkernel.hpp"
#include "scidt/summarizer.hpp"

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace scidt {

    struct ModelConfig {
        AttentionVariant variant = AttentionVariant::recurrent;
        std::size_t embedding_dim = 200;
        std::size_t projection_dim = 50;
        std::size_t hidden_dim = 50;
        bool bidirectional = false;
    };

    // Every trainable block of the clause tagger. Gradients use the same layout.
    struct TaggerParams {
        ModelConfig config;
        SummarizerParams summarizer;
        lstm_params lstm;
        lstm_params lstm_rev;   // only when bidirectional
        Array out_w;            // (hidden or 2*hidden) x 8
        Array out_b;            // 8

        TaggerParams() = default;
        explicit TaggerParams(ModelConfig const& config);

        // Fixed order; names are stable and written to the model manifest.
        param_refs refs();
        std::vector<std::pair<std::string, Array const*>> const_refs() const;

        // Glorot-uniform matrices, zero scorers and biases.
        void init(std::uint64_t seed);
        TaggerParams zeros() const;
        std::size_t parameter_count() const;
    };

    grad_store to_grad_store(TaggerParams& grads);

    struct ForwardOptions {
        double dropout_p = 0.0;        // on the attention input
        double lstm_dropout_p = 0.0;   // on the clause LSTM input
        std::mt19937_64* rng = nullptr;
    };

    struct ForwardCache {
        SummarizerCache summarizer;
        Array d_summ;                  // c x d
        Array lstm_dropout;            // c x d multiplicative mask, empty when inactive
        Array lstm_in;                 // c x d
        std::vector<std::size_t> real; // indices of unmasked clauses, in order
        std::vector<lstm_step> fwd;    // per real clause
        std::vector<lstm_step> bwd;    // per real clause (reverse pass), bidirectional only
        Array probs;                   // c x 8, zero rows for padded clauses
    };

    // Pipeline: project -> attend -> summarize -> LSTM over clauses -> affine -> softmax.
    Array forward(EmbeddedParagraph const& ep, TaggerParams const& params,
        ForwardOptions const& opts, ForwardCache& cache);
    Array forward(EmbeddedParagraph const& ep, TaggerParams const& params);

    struct LossSum {
        double total = 0.0;     // summed negative log-likelihood
        std::size_t count = 0;  // scored clauses
    };

    LossSum loss_sum(Array const& probs, std::vector<std::optional<Label>> const& gold,
        Mask const& clause_mask);
    // Mean negative log-probability of the gold labels over unmasked clauses.
    double loss(Array const& probs, std::vector<std::optional<Label>> const& gold,
        Mask const& clause_mask);

    // Accumulates scale * dNLL/dtheta into grads (layout of params). With
    // scale = 1/n this is the gradient of the mean loss over n clauses.
    void backward(EmbeddedParagraph const& ep, TaggerParams const& params,
        ForwardCache const& cache, double scale, TaggerParams& grads);

    // Convenience: gradient of loss() for one paragraph.
    grad_store backward(EmbeddedParagraph const& ep, TaggerParams const& params,
        ForwardCache const& cache);

    std::vector<Label> predict(EmbeddedParagraph const& ep, TaggerParams const& params);

    struct TrainConfig {
        std::size_t max_epochs = 100;
        std::size_t patience = 5;
        double dropout_p = 0.5;
        double lstm_dropout_p = 0.0;
        AdamConfig adam;
        std::size_t batch_size = 10;
        std::uint64_t seed = 0;
    };

    void validate(TrainConfig const& cfg);

    struct EpochLog {
        std::size_t epoch = 0;
        double train_loss = 0.0;
        double val_accuracy = 0.0;
        double best_so_far = 0.0;
    };

    void write_training_log(std::string const& path, std::vector<EpochLog> const& log);
    std::vector<EpochLog> read_training_log(std::string const& path);

    // A trained tagger plus everything needed to embed new input.
    struct TaggerModel {
        TaggerParams params;
        CorpusExtent extent;
        UnkPolicy unk_policy = UnkPolicy::zero;
        std::size_t hash_buckets = 0;
        std::uint64_t unk_seed = 0;
        std::vector<std::pair<std::string, std::string>> notes;   // recorded in the manifest
    };

    struct TrainResult {
        TaggerModel model;
        std::vector<EpochLog> log;
        std::size_t best_epoch = 0;
        double best_val_accuracy = 0.0;
    };

    using EpochCallback = std::function<void(EpochLog const&)>;

    // Shuffled mini-batches, ADAM, validation clause accuracy after every
    // epoch; returns the best-validation snapshot.
    TrainResult train_tagger(Corpus const& train, Corpus const& validation, EmbeddingTable const& emb,
        ModelConfig const& model_cfg, TrainConfig const& cfg, EpochCallback const& on_epoch = {});

    // Embeds with the model's extent, truncating overflow. truncated is set when any was cut.
    EmbeddedParagraph embed_for_model(Paragraph const& p, EmbeddingTable const& emb,
        TaggerModel const& model, bool* truncated = nullptr);

    double clause_accuracy(Corpus const& corpus, EmbeddingTable const& emb, TaggerParams const& params);

    void save_model(std::string const& dir, TaggerModel const& model);

    struct LoadExpectations {
        std::optional<AttentionVariant> variant;
        std::optional<std::size_t> embedding_dim;
    };

    TaggerModel load_model(std::string const& dir, LoadExpectations const& expect = {});

    inline constexpr char const* tagger_format = "scidt-tagger";
    inline constexpr int tagger_format_version = 1;

}

#endif
