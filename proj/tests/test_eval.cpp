#include "doctest.h"

#include "synthetic.hpp"
#include "scidt/error.hpp"
#include "scidt/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

using namespace scidt;
using namespace scidt::testing;

namespace {

    std::vector<LabeledSequence> seqs(std::vector<std::vector<Label>> const& labels)
    {
        std::vector<LabeledSequence> out;
        for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({"p" + std::to_string(i), labels[i]});
        return out;
    }

    // Predicts the label of each clause's cue token, or none.
    Predictor cue_predictor()
    {
        return [](Paragraph const& p) {
            std::vector<Label> out;
            for (auto const& c : p.clauses) {
                Label guess = Label::none;
                for (Label l : all_labels) {
                    if (std::find(c.tokens.begin(), c.tokens.end(), cue_token(l)) != c.tokens.end()) guess = l;
                }
                out.push_back(guess);
            }
            return out;
        };
    }

    // Deliberately imperfect: always the first label of the training portion.
    FoldTrainer majority_trainer()
    {
        return [](Corpus const& train, Corpus const&, std::size_t) -> Predictor {
            Label l = *train.front().clauses.front().gold;
            return [l](Paragraph const& p) { return std::vector<Label>(p.clauses.size(), l); };
        };
    }

}

TEST_CASE("perfect predictions")
{
    auto g = seqs({{Label::goal, Label::method}, {Label::result}});
    auto r = score(g, g);
    CHECK(r.accuracy == 1.0);
    CHECK(r.weighted_f1 == 1.0);
    CHECK(r.total == 3);
}

TEST_CASE("single-class predictions on a balanced two-class set")
{
    auto gold = seqs({{Label::goal, Label::goal, Label::result, Label::result}});
    auto pred = seqs({{Label::goal, Label::goal, Label::goal, Label::goal}});
    auto r = score(gold, pred);
    CHECK(r.accuracy == 0.5);
    CHECK(std::abs(r.weighted_f1 - 1.0 / 3.0) < 1e-15);
    CHECK(std::abs(r.per_class[0].precision - 0.5) < 1e-15);
    CHECK(r.per_class[0].recall == 1.0);
    CHECK(r.per_class[2].f1 == 0.0);
}

TEST_CASE("classes absent from gold carry no weight")
{
    auto gold = seqs({{Label::goal, Label::fact}});
    auto pred = seqs({{Label::goal, Label::none}});
    auto r = score(gold, pred);
    CHECK(r.per_class[label_index(Label::none)].support == 0);
    CHECK(r.per_class[label_index(Label::none)].f1 == 0.0);
    CHECK(std::abs(r.weighted_f1 - 0.5) < 1e-15);
}

TEST_CASE("length mismatch names the paragraph")
{
    auto gold = seqs({{Label::goal}, {Label::goal, Label::fact}});
    auto pred = seqs({{Label::goal}, {Label::goal}});
    try {
        score(gold, pred);
        FAIL("expected data error");
    } catch (data_error const& e) {
        CHECK(std::string(e.what()).find("p1") != std::string::npos);
    }
    CHECK_THROWS_AS(score(gold, seqs({{Label::goal}})), data_error);
}

TEST_CASE("accuracy is trace over total and weighted F1 ignores paragraph order")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<Label>> g, p;
        for (int k = 0; k < 6; ++k) {
            std::size_t n = 1 + rng() % 5;
            std::vector<Label> a, b;
            for (std::size_t i = 0; i < n; ++i) {
                a.push_back(label_from_index(rng() % 8));
                b.push_back(rng() % 2 ? a.back() : label_from_index(rng() % 8));
            }
            g.push_back(a);
            p.push_back(b);
        }
        auto r = score(seqs(g), seqs(p));
        CHECK(r.accuracy == static_cast<double>(r.confusion.trace()) / r.confusion.total());
        CHECK(std::abs(r.accuracy - naive_accuracy(g, p)) < 1e-15);
        double wf = 0.0;
        for (auto const& c : r.per_class) wf += c.f1 * c.support / static_cast<double>(r.total);
        CHECK(std::abs(r.weighted_f1 - wf) < 1e-15);
        for (auto const& c : r.per_class) {
            CHECK(c.precision >= 0.0);
            CHECK(c.precision <= 1.0);
            CHECK(c.f1 <= 1.0);
        }

        std::reverse(g.begin(), g.end());
        std::reverse(p.begin(), p.end());
        CHECK(std::abs(score(seqs(g), seqs(p)).weighted_f1 - r.weighted_f1) < 1e-12);
    }
}

TEST_CASE("corpus scoring requires gold labels")
{
    auto corpus = make_cue_corpus(3, 1);
    CHECK(score(corpus, corpus).accuracy == 1.0);
    auto unlabeled = corpus;
    unlabeled[2].clauses[1].gold.reset();
    CHECK_THROWS_AS(score(unlabeled, corpus), data_error);
}

TEST_CASE("report csv round-trip")
{
    auto gold = seqs({{Label::goal, Label::result, Label::result, Label::implication}});
    auto pred = seqs({{Label::goal, Label::result, Label::method, Label::implication}});
    auto r = score(gold, pred);
    std::ostringstream os;
    write_report_csv(os, r);
    std::istringstream is(os.str());
    auto back = read_report_csv(is);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.weighted_f1 == r.weighted_f1);
    CHECK(back.total == r.total);
    for (std::size_t k = 0; k < label_count; ++k) {
        CHECK(back.per_class[k].f1 == r.per_class[k].f1);
        CHECK(back.per_class[k].support == r.per_class[k].support);
    }
    std::ostringstream again;
    write_report_csv(again, back);
    CHECK(again.str() == os.str());
    CHECK(os.str().rfind("label,precision,recall,f1,support\n", 0) == 0);

    std::ostringstream text;
    write_report_text(text, r);
    CHECK(text.str().find("weighted") != std::string::npos);
}

TEST_CASE("k=2 on four paragraphs runs two train/score cycles")
{
    auto corpus = make_cue_corpus(4, 5);
    std::atomic<int> calls = 0;
    FoldTrainer trainer = [&](Corpus const& train, Corpus const& val, std::size_t) -> Predictor {
        ++calls;
        CHECK(train.size() + val.size() == 2);
        return cue_predictor();
    };
    auto cv = cross_validate(corpus, trainer, {2, 3, 0.1, false});
    CHECK(calls == 2);
    CHECK(cv.folds.size() == 2);
    CHECK(cv.pooled.accuracy == 1.0);
}

TEST_CASE("cross-validation is deterministic and pooled accuracy recomputes")
{
    auto corpus = make_cue_corpus(15, 6);
    CvOptions opts {5, 7, 0.1, false};
    auto a = cross_validate(corpus, majority_trainer(), opts);
    auto b = cross_validate(corpus, majority_trainer(), opts);
    REQUIRE(a.folds.size() == 5);
    for (std::size_t f = 0; f < 5; ++f) {
        CHECK(a.folds[f].report.accuracy == b.folds[f].report.accuracy);
        CHECK(a.folds[f].report.weighted_f1 == b.folds[f].report.weighted_f1);
    }
    opts.parallel = true;
    auto c = cross_validate(corpus, majority_trainer(), opts);
    for (std::size_t f = 0; f < 5; ++f) CHECK(a.folds[f].report.accuracy == c.folds[f].report.accuracy);

    std::ostringstream os;
    write_predictions_csv(os, a);
    std::istringstream is(os.str());
    auto rows = read_predictions_csv(is);
    CHECK(rows.size() == clause_total(corpus));
    std::size_t hit = 0;
    for (auto const& r : rows) hit += r.gold == r.pred;
    CHECK(a.pooled.accuracy == static_cast<double>(hit) / rows.size());
    CHECK(a.pooled.accuracy < 1.0);

    double mean = 0.0;
    for (auto const& f : a.folds) mean += f.report.accuracy / 5.0;
    CHECK(std::abs(a.mean_accuracy - mean) < 1e-15);
}

TEST_CASE("a failing fold aborts with its index")
{
    auto corpus = make_cue_corpus(6, 8);
    FoldTrainer trainer = [](Corpus const&, Corpus const&, std::size_t fold) -> Predictor {
        if (fold == 1) throw data_error("boom");
        return cue_predictor();
    };
    try {
        cross_validate(corpus, trainer, {3, 1, 0.1, false});
        FAIL("expected failure");
    } catch (error const& e) {
        CHECK(std::string(e.what()).find("fold 1") != std::string::npos);
        CHECK(std::string(e.what()).find("boom") != std::string::npos);
    }
}

TEST_CASE("position buckets")
{
    for (std::size_t i = 0; i < 5; ++i) CHECK(position_bucket(i, 5) == i);
    CHECK(position_bucket(0, 1) == 0);
    for (std::size_t n = 1; n <= 40; ++n) {
        for (std::size_t i = 0; i < n; ++i) CHECK(position_bucket(i, n) == 5 * i / n);
        CHECK(position_bucket(n - 1, n) <= 4);
    }
}

TEST_CASE("position statistics")
{
    auto corpus = make_position_corpus(30, 4);
    auto s = position_stats(corpus);
    CHECK(s.prob[label_index(Label::goal)][0] == 1.0);
    CHECK(s.prob[label_index(Label::implication)][4] == 1.0);
    for (std::size_t l = 0; l < label_count; ++l) {
        if (s.count[l] == 0) continue;
        double sum = 0.0;
        for (double p : s.prob[l]) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    std::ostringstream os;
    write_position_csv(os, s);
    CHECK(os.str().rfind("label,bucket1,bucket2,bucket3,bucket4,bucket5,clauses\n", 0) == 0);
    std::istringstream is(os.str());
    auto back = read_position_csv(is);
    CHECK(back.prob == s.prob);
    CHECK(back.count == s.count);
}
