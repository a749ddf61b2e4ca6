#include "scidt/eval.hpp"
#include "scidt/error.hpp"
#include "scidt/manifest.hpp"

#include <future>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace scidt {

    namespace {

        std::vector<std::string> split_csv(std::string const& line)
        {
            std::vector<std::string> out;
            std::string cur;
            for (char c : line) {
                if (c == ',') {
                    out.push_back(cur);
                    cur.clear();
                } else if (c != '\r') {
                    cur.push_back(c);
                }
            }
            out.push_back(cur);
            return out;
        }

        double csv_real(std::string const& s, std::string const& source, std::size_t line)
        {
            char* end = nullptr;
            double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size()) {
                throw parse_error(source, line, "expected a number, found '" + s + "'");
            }
            return v;
        }

        std::size_t csv_size(std::string const& s, std::string const& source, std::size_t line)
        {
            double v = csv_real(s, source, line);
            if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
                throw parse_error(source, line, "expected a count, found '" + s + "'");
            }
            return static_cast<std::size_t>(v);
        }

        Label csv_label(std::string const& s, std::string const& source, std::size_t line)
        {
            auto l = parse_label(s);
            if (!l) throw parse_error(source, line, "unknown label '" + s + "'");
            return *l;
        }

    }

    std::size_t ConfusionMatrix::total() const
    {
        std::size_t n = 0;
        for (auto const& row : counts) {
            for (auto v : row) n += v;
        }
        return n;
    }

    std::size_t ConfusionMatrix::trace() const
    {
        std::size_t n = 0;
        for (std::size_t k = 0; k < label_count; ++k) n += counts[k][k];
        return n;
    }

    MetricsReport report_from_confusion(ConfusionMatrix const& cm)
    {
        MetricsReport r;
        r.confusion = cm;
        r.total = cm.total();
        if (r.total == 0) return r;
        r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
        for (std::size_t c = 0; c < label_count; ++c) {
            std::size_t tp = cm.counts[c][c];
            std::size_t support = 0;
            std::size_t predicted = 0;
            for (std::size_t k = 0; k < label_count; ++k) {
                support += cm.counts[c][k];
                predicted += cm.counts[k][c];
            }
            ClassMetrics& m = r.per_class[c];
            m.support = support;
            m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
            m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
            m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
            r.weighted_f1 += static_cast<double>(support) / static_cast<double>(r.total) * m.f1;
        }
        return r;
    }

    MetricsReport score(std::vector<LabeledSequence> const& gold, std::vector<LabeledSequence> const& pred)
    {
        if (gold.size() != pred.size()) {
            throw data_error("score: " + std::to_string(gold.size()) + " gold paragraphs vs "
                + std::to_string(pred.size()) + " predicted");
        }
        ConfusionMatrix cm;
        for (std::size_t p = 0; p < gold.size(); ++p) {
            if (gold[p].labels.size() != pred[p].labels.size()) {
                throw data_error("score: paragraph '" + gold[p].id + "' has " + std::to_string(gold[p].labels.size())
                    + " gold labels but " + std::to_string(pred[p].labels.size()) + " predictions");
            }
            for (std::size_t i = 0; i < gold[p].labels.size(); ++i) {
                cm.add(gold[p].labels[i], pred[p].labels[i]);
            }
        }
        return report_from_confusion(cm);
    }

    std::vector<LabeledSequence> gold_sequences(Corpus const& corpus)
    {
        std::vector<LabeledSequence> out;
        for (auto const& p : corpus) {
            LabeledSequence s {p.id, {}};
            for (std::size_t i = 0; i < p.clauses.size(); ++i) {
                if (!p.clauses[i].gold) {
                    throw data_error("paragraph '" + p.id + "' clause " + std::to_string(i + 1) + " is unlabeled");
                }
                s.labels.push_back(*p.clauses[i].gold);
            }
            out.push_back(std::move(s));
        }
        return out;
    }

    MetricsReport score(Corpus const& gold, Corpus const& pred)
    {
        auto g = gold_sequences(gold);
        auto p = gold_sequences(pred);
        for (std::size_t k = 0; k < std::min(g.size(), p.size()); ++k) {
            if (g[k].id != p[k].id) {
                throw data_error("score: paragraph " + std::to_string(k + 1) + " is '" + g[k].id
                    + "' in gold but '" + p[k].id + "' in predictions");
            }
        }
        return score(g, p);
    }

    void write_report_csv(std::ostream& os, MetricsReport const& r)
    {
        os << "label,precision,recall,f1,support\n";
        for (std::size_t c = 0; c < label_count; ++c) {
            auto const& m = r.per_class[c];
            os << label_name(label_from_index(c)) << "," << format_real(m.precision) << ","
               << format_real(m.recall) << "," << format_real(m.f1) << "," << m.support << "\n";
        }
        os << "accuracy,,," << format_real(r.accuracy) << "," << r.total << "\n";
        os << "weighted_f1,,," << format_real(r.weighted_f1) << "," << r.total << "\n";
    }

    MetricsReport read_report_csv(std::istream& is, std::string const& source)
    {
        MetricsReport r;
        std::string line;
        std::size_t lineno = 0;
        bool seen_acc = false;
        bool seen_f1 = false;
        while (std::getline(is, line)) {
            ++lineno;
            if (lineno == 1) {
                if (split_csv(line) != std::vector<std::string> {"label", "precision", "recall", "f1", "support"}) {
                    throw parse_error(source, lineno, "unexpected report header");
                }
                continue;
            }
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() != 5) throw parse_error(source, lineno, "expected 5 fields");
            if (f[0] == "accuracy") {
                r.accuracy = csv_real(f[3], source, lineno);
                r.total = csv_size(f[4], source, lineno);
                seen_acc = true;
            } else if (f[0] == "weighted_f1") {
                r.weighted_f1 = csv_real(f[3], source, lineno);
                seen_f1 = true;
            } else {
                Label l = csv_label(f[0], source, lineno);
                auto& m = r.per_class[label_index(l)];
                m.precision = csv_real(f[1], source, lineno);
                m.recall = csv_real(f[2], source, lineno);
                m.f1 = csv_real(f[3], source, lineno);
                m.support = csv_size(f[4], source, lineno);
            }
        }
        if (!seen_acc || !seen_f1) throw parse_error(source, lineno, "report lacks summary rows");
        return r;
    }

    void write_report_text(std::ostream& os, MetricsReport const& r)
    {
        auto flags = os.flags();
        auto prec = os.precision();
        os << std::fixed << std::setprecision(4);
        os << "clauses      " << r.total << "\n";
        os << "accuracy     " << r.accuracy << "\n";
        os << "weighted F1  " << r.weighted_f1 << "\n\n";
        os << std::left << std::setw(13) << "label" << std::right << std::setw(10) << "precision"
           << std::setw(10) << "recall" << std::setw(10) << "f1" << std::setw(9) << "support" << "\n";
        for (std::size_t c = 0; c < label_count; ++c) {
            auto const& m = r.per_class[c];
            os << std::left << std::setw(13) << label_name(label_from_index(c)) << std::right
               << std::setw(10) << m.precision << std::setw(10) << m.recall << std::setw(10) << m.f1
               << std::setw(9) << m.support << "\n";
        }
        os << "\nconfusion (rows gold, columns predicted)\n" << std::setw(13) << "";
        for (std::size_t c = 0; c < label_count; ++c) {
            os << std::setw(6) << label_name(label_from_index(c)).substr(0, 5);
        }
        os << "\n";
        for (std::size_t g = 0; g < label_count; ++g) {
            os << std::left << std::setw(13) << label_name(label_from_index(g)) << std::right;
            for (std::size_t c = 0; c < label_count; ++c) os << std::setw(6) << r.confusion.counts[g][c];
            os << "\n";
        }
        os.flags(flags);
        os.precision(prec);
    }

    CvResult cross_validate(Corpus const& corpus, FoldTrainer const& trainer, CvOptions const& opts)
    {
        CvResult cv;
        cv.split = make_folds(corpus, opts.k, opts.seed, opts.validation_fraction);
        auto gold = gold_sequences(corpus);

        auto run_fold = [&](std::size_t fold) {
            FoldResult fr;
            fr.fold = fold;
            auto test = cv.split.test_indices(corpus, fold);
            auto portion = cv.split.training_indices(corpus, fold);
            Corpus train = select(corpus, portion.train);
            // a one-paragraph training portion validates on itself
            Corpus val = portion.validation.empty() ? train : select(corpus, portion.validation);
            Predictor predict;
            try {
                predict = trainer(train, val, fold);
            } catch (std::exception const& e) {
                throw error("fold " + std::to_string(fold) + ": " + e.what());
            }
            for (auto i : test) {
                fr.gold.push_back(gold[i]);
                fr.pred.push_back({corpus[i].id, predict(corpus[i])});
            }
            fr.report = score(fr.gold, fr.pred);
            return fr;
        };

        if (opts.parallel) {
            std::vector<std::future<FoldResult>> jobs;
            for (std::size_t f = 0; f < opts.k; ++f) jobs.push_back(std::async(std::launch::async, run_fold, f));
            for (auto& j : jobs) cv.folds.push_back(j.get());
        } else {
            for (std::size_t f = 0; f < opts.k; ++f) cv.folds.push_back(run_fold(f));
        }

        std::vector<LabeledSequence> all_gold;
        std::vector<LabeledSequence> all_pred;
        for (auto const& fr : cv.folds) {
            all_gold.insert(all_gold.end(), fr.gold.begin(), fr.gold.end());
            all_pred.insert(all_pred.end(), fr.pred.begin(), fr.pred.end());
            cv.mean_accuracy += fr.report.accuracy / static_cast<double>(opts.k);
            cv.mean_weighted_f1 += fr.report.weighted_f1 / static_cast<double>(opts.k);
        }
        cv.pooled = score(all_gold, all_pred);
        return cv;
    }

    void write_predictions_csv(std::ostream& os, CvResult const& cv)
    {
        os << "fold,paragraph,clause,gold,pred\n";
        for (auto const& fr : cv.folds) {
            for (std::size_t p = 0; p < fr.gold.size(); ++p) {
                for (std::size_t i = 0; i < fr.gold[p].labels.size(); ++i) {
                    os << fr.fold << "," << fr.gold[p].id << "," << i << ","
                       << label_name(fr.gold[p].labels[i]) << "," << label_name(fr.pred[p].labels[i]) << "\n";
                }
            }
        }
    }

    std::vector<PredictionRow> read_predictions_csv(std::istream& is, std::string const& source)
    {
        std::vector<PredictionRow> rows;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (lineno == 1) {
                if (split_csv(line) != std::vector<std::string> {"fold", "paragraph", "clause", "gold", "pred"}) {
                    throw parse_error(source, lineno, "unexpected predictions header");
                }
                continue;
            }
            if (line.empty()) continue;
            auto f = split_csv(line);
            if (f.size() != 5) throw parse_error(source, lineno, "expected 5 fields");
            rows.push_back({csv_size(f[0], source, lineno), f[1], csv_size(f[2], source, lineno),
                csv_label(f[3], source, lineno), csv_label(f[4], source, lineno)});
        }
        return rows;
    }

    std::size_t position_bucket(std::size_t i, std::size_t n)
    {
        if (n == 0 || i >= n) throw data_error("position_bucket: clause " + std::to_string(i) + " of " + std::to_string(n));
        return position_buckets * i / n;
    }

    PositionStats position_stats(Corpus const& corpus)
    {
        PositionStats s;
        std::array<std::array<std::size_t, position_buckets>, label_count> counts {};
        for (auto const& p : corpus) {
            std::size_t n = p.clauses.size();
            for (std::size_t i = 0; i < n; ++i) {
                auto const& g = p.clauses[i].gold;
                if (!g) continue;
                ++counts[label_index(*g)][position_bucket(i, n)];
                ++s.count[label_index(*g)];
            }
        }
        for (std::size_t l = 0; l < label_count; ++l) {
            if (s.count[l] == 0) continue;
            for (std::size_t b = 0; b < position_buckets; ++b) {
                s.prob[l][b] = static_cast<double>(counts[l][b]) / static_cast<double>(s.count[l]);
            }
        }
        return s;
    }

    void write_position_csv(std::ostream& os, PositionStats const& s)
    {
        os << "label";
        for (std::size_t b = 0; b < position_buckets; ++b) os << ",bucket" << b + 1;
        os << ",clauses\n";
        for (std::size_t l = 0; l < label_count; ++l) {
            os << label_name(label_from_index(l));
            for (double v : s.prob[l]) os << "," << format_real(v);
            os << "," << s.count[l] << "\n";
        }
    }

    PositionStats read_position_csv(std::istream& is, std::string const& source)
    {
        PositionStats s;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto f = split_csv(line);
            if (lineno == 1) {
                if (f.size() != position_buckets + 2 || f[0] != "label") {
                    throw parse_error(source, lineno, "unexpected position header");
                }
                continue;
            }
            if (line.empty()) continue;
            if (f.size() != position_buckets + 2) throw parse_error(source, lineno, "wrong field count");
            Label l = csv_label(f[0], source, lineno);
            for (std::size_t b = 0; b < position_buckets; ++b) {
                s.prob[label_index(l)][b] = csv_real(f[b + 1], source, lineno);
            }
            s.count[label_index(l)] = csv_size(f[position_buckets + 1], source, lineno);
        }
        return s;
    }

}
