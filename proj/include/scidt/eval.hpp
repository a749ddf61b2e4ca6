#ifndef SCIDT_EVAL_HPP
#define SCIDT_EVAL_HPP

#include "scidt/data.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace scidt {

    // Gold rows, predicted columns.
    struct ConfusionMatrix {
        std::array<std::array<std::size_t, label_count>, label_count> counts {};

        void add(Label gold, Label pred) { ++counts[label_index(gold)][label_index(pred)]; }
        std::size_t total() const;
        std::size_t trace() const;
    };

    struct ClassMetrics {
        double precision = 0.0;
        double recall = 0.0;
        double f1 = 0.0;
        std::size_t support = 0;
    };

    struct MetricsReport {
        double accuracy = 0.0;
        double weighted_f1 = 0.0;
        std::size_t total = 0;
        std::array<ClassMetrics, label_count> per_class {};
        ConfusionMatrix confusion;
    };

    // Undefined precision/recall/F1 (no predictions or no support) are 0.
    // weighted_f1 = sum_c (support_c / total) F1_c.
    MetricsReport report_from_confusion(ConfusionMatrix const& cm);

    struct LabeledSequence {
        std::string id;
        std::vector<Label> labels;
    };

    // Sequences are aligned by position; ids name paragraphs in errors.
    MetricsReport score(std::vector<LabeledSequence> const& gold, std::vector<LabeledSequence> const& pred);
    // Gold labels from gold, predictions from the labels carried by pred.
    MetricsReport score(Corpus const& gold, Corpus const& pred);

    std::vector<LabeledSequence> gold_sequences(Corpus const& corpus);

    // label,precision,recall,f1,support rows then accuracy and weighted_f1 rows.
    void write_report_csv(std::ostream& os, MetricsReport const& r);
    // Restores the scalar metrics, per-class values and total (not the confusion matrix).
    MetricsReport read_report_csv(std::istream& is, std::string const& source = "<stream>");
    void write_report_text(std::ostream& os, MetricsReport const& r);

    using Predictor = std::function<std::vector<Label>(Paragraph const&)>;
    // Trains on (train, validation) for the given fold and returns a predictor.
    using FoldTrainer = std::function<Predictor(Corpus const& train, Corpus const& validation, std::size_t fold)>;

    struct FoldResult {
        std::size_t fold = 0;
        std::vector<LabeledSequence> gold;
        std::vector<LabeledSequence> pred;
        MetricsReport report;
    };

    struct CvResult {
        FoldSplit split;
        std::vector<FoldResult> folds;
        MetricsReport pooled;
        double mean_accuracy = 0.0;
        double mean_weighted_f1 = 0.0;
    };

    struct CvOptions {
        std::size_t k = 5;
        std::uint64_t seed = 0;
        double validation_fraction = 0.1;
        bool parallel = false;   // folds on separate threads; trainer must be reentrant
    };

    CvResult cross_validate(Corpus const& corpus, FoldTrainer const& trainer, CvOptions const& opts);

    // fold,paragraph,clause,gold,pred
    void write_predictions_csv(std::ostream& os, CvResult const& cv);
    struct PredictionRow {
        std::size_t fold = 0;
        std::string paragraph;
        std::size_t clause = 0;
        Label gold = Label::none;
        Label pred = Label::none;
    };
    std::vector<PredictionRow> read_predictions_csv(std::istream& is, std::string const& source = "<stream>");

    inline constexpr std::size_t position_buckets = 5;

    // floor(5 i / n) for clause i of an n-clause paragraph.
    std::size_t position_bucket(std::size_t i, std::size_t n);

    struct PositionStats {
        // p(bucket | label); rows of labels with no clauses are zero.
        std::array<std::array<double, position_buckets>, label_count> prob {};
        std::array<std::size_t, label_count> count {};
    };

    PositionStats position_stats(Corpus const& corpus);
    void write_position_csv(std::ostream& os, PositionStats const& s);
    PositionStats read_position_csv(std::istream& is, std::string const& source = "<stream>");

}

#endif
