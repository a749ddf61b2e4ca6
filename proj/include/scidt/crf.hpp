#ifndef SCIDT_CRF_HPP
#define SCIDT_CRF_HPP

#include "scidt/adam.hpp"
#include "scidt/data.hpp"
#include "scidt/numkernel.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace scidt {

    // Cue phrases per class. Single-word cues match any token they prefix
    // ("suggest" fires on "suggests"); multi-word cues match a contiguous run.
    struct Lexicon {
        std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> classes;

        bool empty() const { return classes.empty(); }
    };

    // One "class: cue[, cue...]" line per class; '#' comments and blank lines skipped.
    Lexicon read_lexicon(std::istream& is, std::string const& source = "<stream>");
    Lexicon load_lexicon(std::string const& path);
    void write_lexicon(std::ostream& os, Lexicon const& lex);
    Lexicon default_lexicon();

    // Indicator feature names for the clause at position of n clauses:
    // bias, lexicon classes, figure references, citations, position bucket,
    // and suffix-based verb/adverb identities. Sorted, unique.
    std::vector<std::string> extract_feature_names(Clause const& clause, std::size_t position,
        std::size_t n_clauses, Lexicon const& lexicon);

    bool has_figure_reference(std::string const& text);
    bool has_citation(std::string const& text);

    class FeatureIndex {
    public:
        std::size_t size() const { return names_.size(); }
        std::optional<std::size_t> find(std::string const& name) const;
        std::size_t add(std::string const& name);
        std::string const& name(std::size_t id) const { return names_.at(id); }
        std::vector<std::string> const& names() const { return names_; }

    private:
        std::unordered_map<std::string, std::size_t> ids_;
        std::vector<std::string> names_;
    };

    // Sparse (feature id, value) pairs.
    using FeatureVector = std::vector<std::pair<std::size_t, double>>;
    using FeatureSequence = std::vector<FeatureVector>;

    // Unknown names are dropped, or registered when grow is set.
    FeatureVector to_feature_vector(std::vector<std::string> const& names, FeatureIndex& index, bool grow);
    FeatureVector to_feature_vector(std::vector<std::string> const& names, FeatureIndex const& index);

    struct CrfModel {
        FeatureIndex index;
        Lexicon lexicon;
        Array emission;     // features x 8
        Array transition;   // 8 x 8, [previous, current]
        Array begin;        // 8
        Array end;          // 8
        double l2 = 1e-4;

        CrfModel() = default;
        CrfModel(FeatureIndex index, Lexicon lexicon, double l2 = 1e-4);

        param_refs refs();
        CrfModel zeros() const;
    };

    FeatureSequence featurize(Paragraph const& p, CrfModel const& model);

    // Per-position label scores plus the shared transition terms.
    struct CrfPotentials {
        Array emit;          // n x 8
        Array transition;    // 8 x 8
        Array begin;         // 8
        Array end;           // 8

        std::size_t length() const { return emit.dim(0); }
    };

    CrfPotentials potentials(CrfModel const& model, FeatureSequence const& feats);

    double sequence_score(CrfPotentials const& pot, std::vector<Label> const& labels);
    double sequence_score(CrfModel const& model, FeatureSequence const& feats, std::vector<Label> const& labels);

    double log_partition(CrfPotentials const& pot);
    double log_partition(CrfModel const& model, FeatureSequence const& feats);

    struct ViterbiResult {
        std::vector<Label> labels;
        double score = 0.0;
    };

    // Ties go to the lowest label index.
    ViterbiResult viterbi(CrfPotentials const& pot);
    ViterbiResult viterbi(CrfModel const& model, FeatureSequence const& feats);

    struct CrfMarginals {
        Array node;      // n x 8
        Array edge;      // (n-1) x 8 x 8, absent when n == 1
        double log_z = 0.0;
    };

    CrfMarginals marginals(CrfPotentials const& pot);

    // log p(labels | feats), and accumulates scale * d/dtheta of it into grads
    // (empirical minus expected feature counts).
    double log_likelihood(CrfModel const& model, FeatureSequence const& feats,
        std::vector<Label> const& labels, double scale, CrfModel* grads);

    // sum of squared weights, and grads += scale * 2 * l2 * w.
    double l2_penalty(CrfModel& model, double scale, CrfModel* grads);

    enum class CrfOptimizer { adam, gradient };

    struct CrfTrainConfig {
        double l2 = 1e-4;
        std::size_t max_epochs = 100;
        std::size_t patience = 5;
        std::size_t batch_size = 10;
        std::uint64_t seed = 0;
        CrfOptimizer optimizer = CrfOptimizer::adam;
        AdamConfig adam {0.05, 0.9, 0.999, 1e-8};
        double step = 0.1;   // plain gradient ascent step
    };

    struct CrfEpochLog {
        std::size_t epoch = 0;
        double objective = 0.0;      // mean log-likelihood over training paragraphs minus penalty
        double val_accuracy = 0.0;
        double best_so_far = 0.0;
    };

    struct CrfTrainResult {
        CrfModel model;
        std::vector<CrfEpochLog> log;
        std::size_t best_epoch = 0;
    };

    // Maximizes mean per-paragraph log-likelihood - l2 * |w|^2 with
    // validation-accuracy early stopping. Features come from train only.
    CrfTrainResult train_crf(Corpus const& train, Corpus const& validation, Lexicon const& lexicon,
        CrfTrainConfig const& cfg, std::function<void(CrfEpochLog const&)> const& on_epoch = {});

    // Mean log-likelihood over the corpus minus the penalty.
    double crf_objective(CrfModel& model, std::vector<FeatureSequence> const& feats,
        std::vector<std::vector<Label>> const& labels);

    std::vector<Label> crf_predict(CrfModel const& model, Paragraph const& p);

    void save_crf(std::string const& dir, CrfModel const& model);
    CrfModel load_crf(std::string const& dir);

    inline constexpr char const* crf_format = "scidt-crf";
    inline constexpr int crf_format_version = 1;

}

#endif
