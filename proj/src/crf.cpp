#include "scidt/crf.hpp"
#include "scidt/error.hpp"
#include "scidt/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

namespace scidt {

    namespace {

        constexpr std::size_t L = label_count;

        std::string trim(std::string const& s)
        {
            auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return {};
            auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        double log_sum_exp(std::span<double const> v)
        {
            double mx = -std::numeric_limits<double>::infinity();
            for (double x : v) mx = std::max(mx, x);
            if (!std::isfinite(mx)) return mx;
            double s = 0.0;
            for (double x : v) s += std::exp(x - mx);
            return mx + std::log(s);
        }

        bool ends_with(std::string const& s, std::string_view suf)
        {
            return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
        }

        bool is_alpha_word(std::string const& s)
        {
            return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
                return (c >= 'a' && c <= 'z') || c == '-';
            });
        }

        struct DpTables {
            std::vector<std::array<double, L>> alpha;
            std::vector<std::array<double, L>> beta;
            double log_z = 0.0;
        };

        DpTables forward_backward(CrfPotentials const& pot)
        {
            std::size_t n = pot.length();
            if (n == 0) throw data_error("crf: empty sequence");
            DpTables t;
            t.alpha.resize(n);
            t.beta.resize(n);
            std::array<double, L> buf {};
            for (std::size_t y = 0; y < L; ++y) t.alpha[0][y] = pot.begin[y] + pot.emit(0, y);
            for (std::size_t i = 1; i < n; ++i) {
                for (std::size_t y = 0; y < L; ++y) {
                    for (std::size_t a = 0; a < L; ++a) buf[a] = t.alpha[i - 1][a] + pot.transition(a, y);
                    t.alpha[i][y] = pot.emit(i, y) + log_sum_exp(buf);
                }
            }
            for (std::size_t y = 0; y < L; ++y) t.beta[n - 1][y] = pot.end[y];
            for (std::size_t i = n - 1; i-- > 0;) {
                for (std::size_t a = 0; a < L; ++a) {
                    for (std::size_t b = 0; b < L; ++b) {
                        buf[b] = pot.transition(a, b) + pot.emit(i + 1, b) + t.beta[i + 1][b];
                    }
                    t.beta[i][a] = log_sum_exp(buf);
                }
            }
            for (std::size_t y = 0; y < L; ++y) buf[y] = t.alpha[n - 1][y] + pot.end[y];
            t.log_z = log_sum_exp(buf);
            if (!std::isfinite(t.log_z)) throw numeric_error("crf: non-finite log partition");
            return t;
        }

        std::vector<Label> gold_labels(Paragraph const& p)
        {
            std::vector<Label> out;
            for (auto const& c : p.clauses) {
                if (!c.gold) throw data_error("paragraph '" + p.id + "' has an unlabeled clause");
                out.push_back(*c.gold);
            }
            return out;
        }

    }

    Lexicon read_lexicon(std::istream& is, std::string const& source)
    {
        Lexicon lex;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto colon = t.find(':');
            if (colon == std::string::npos) {
                throw parse_error(source, lineno, "expected 'class: cue[, cue...]'");
            }
            std::string cls = trim(t.substr(0, colon));
            std::transform(cls.begin(), cls.end(), cls.begin(), [](unsigned char c) { return std::tolower(c); });
            if (cls.empty()) throw parse_error(source, lineno, "empty lexicon class name");

            auto it = std::find_if(lex.classes.begin(), lex.classes.end(),
                [&](auto const& e) { return e.first == cls; });
            if (it == lex.classes.end()) {
                lex.classes.emplace_back(cls, std::vector<std::vector<std::string>> {});
                it = lex.classes.end() - 1;
            }
            std::stringstream ss(t.substr(colon + 1));
            std::string cue;
            while (std::getline(ss, cue, ',')) {
                auto toks = tokenize(trim(cue));
                if (toks.empty()) continue;
                if (std::find(it->second.begin(), it->second.end(), toks) == it->second.end()) {
                    it->second.push_back(std::move(toks));
                }
            }
        }
        return lex;
    }

    Lexicon load_lexicon(std::string const& path)
    {
        std::ifstream ifs(path);
        if (!ifs) throw io_error("cannot open lexicon file '" + path + "'");
        return read_lexicon(ifs, path);
    }

    void write_lexicon(std::ostream& os, Lexicon const& lex)
    {
        for (auto const& [cls, cues] : lex.classes) {
            os << cls << ":";
            for (std::size_t k = 0; k < cues.size(); ++k) {
                os << (k ? ", " : " ");
                for (std::size_t j = 0; j < cues[k].size(); ++j) {
                    if (j) os << " ";
                    os << cues[k][j];
                }
            }
            os << "\n";
        }
    }

    Lexicon default_lexicon()
    {
        std::istringstream is(
            "goal: investigate, investigated, examine, determine, whether, to test, aim, sought\n"
            "fact: known, previously, has been shown, reported, established, is required\n"
            "result: data not shown, observed, showed, increased, decreased, detected, found\n"
            "hypothesis: hypothesize, hypothesized, may, might, possibly, propose, speculate\n"
            "method: using, analysis, performed, assay, measured, transfected, treated, incubated\n"
            "problem: unclear, unknown, however, remains, paradox, controversial, not understood\n"
            "implication: demonstrate, suggest, indicate, conclude, strongly suggest, consistent with\n");
        return read_lexicon(is, "<default lexicon>");
    }

    bool has_figure_reference(std::string const& text)
    {
        static std::regex const re(R"((^|[^A-Za-z])(fig|figs|figure|figures)\.?\s*(s?\d+))", std::regex::icase);
        return std::regex_search(text, re);
    }

    bool has_citation(std::string const& text)
    {
        static std::regex const bracket(R"(\[\s*\d+(\s*[,\-]\s*\d+)*\s*\])");
        static std::regex const etal(R"(\bet\s+al\b)", std::regex::icase);
        return std::regex_search(text, bracket) || std::regex_search(text, etal);
    }

    std::vector<std::string> extract_feature_names(Clause const& clause, std::size_t position,
        std::size_t n_clauses, Lexicon const& lexicon)
    {
        std::set<std::string> f;
        f.insert("bias");

        auto const& toks = clause.tokens;
        for (auto const& [cls, cues] : lexicon.classes) {
            bool hit = false;
            for (auto const& cue : cues) {
                if (cue.size() == 1) {
                    hit = std::any_of(toks.begin(), toks.end(),
                        [&](std::string const& t) { return t.rfind(cue[0], 0) == 0; });
                } else if (cue.size() <= toks.size()) {
                    hit = std::search(toks.begin(), toks.end(), cue.begin(), cue.end()) != toks.end();
                }
                if (hit) break;
            }
            if (hit) f.insert("lex:" + cls);
        }

        if (has_figure_reference(clause.raw_text)) f.insert("figref");
        if (has_citation(clause.raw_text)) f.insert("cite");

        if (n_clauses > 0) {
            f.insert("pos:" + std::to_string(5 * position / n_clauses));
        }

        // Stand-in for part-of-speech tags: verb and adverb shapes by suffix.
        for (auto const& t : toks) {
            if (!is_alpha_word(t) || t.size() < 4) continue;
            if (ends_with(t, "ly")) {
                f.insert("adv:" + t);
                f.insert("shape:ly");
            } else if (ends_with(t, "ed")) {
                f.insert("verb:" + t);
                f.insert("shape:ed");
            } else if (ends_with(t, "ing")) {
                f.insert("verb:" + t);
                f.insert("shape:ing");
            } else if (ends_with(t, "s") && !ends_with(t, "ss") && !ends_with(t, "us") && !ends_with(t, "is")) {
                f.insert("verb:" + t);
                f.insert("shape:s");
            }
        }
        return {f.begin(), f.end()};
    }

    std::optional<std::size_t> FeatureIndex::find(std::string const& name) const
    {
        auto it = ids_.find(name);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t FeatureIndex::add(std::string const& name)
    {
        auto [it, inserted] = ids_.emplace(name, names_.size());
        if (inserted) names_.push_back(name);
        return it->second;
    }

    FeatureVector to_feature_vector(std::vector<std::string> const& names, FeatureIndex& index, bool grow)
    {
        FeatureVector v;
        for (auto const& n : names) {
            if (grow) {
                v.emplace_back(index.add(n), 1.0);
            } else if (auto id = index.find(n)) {
                v.emplace_back(*id, 1.0);
            }
        }
        return v;
    }

    FeatureVector to_feature_vector(std::vector<std::string> const& names, FeatureIndex const& index)
    {
        FeatureVector v;
        for (auto const& n : names) {
            if (auto id = index.find(n)) v.emplace_back(*id, 1.0);
        }
        return v;
    }

    CrfModel::CrfModel(FeatureIndex idx, Lexicon lex, double l2_strength)
        : index(std::move(idx)), lexicon(std::move(lex)),
          emission({std::max<std::size_t>(index.size(), 1), L}),
          transition({L, L}), begin({L}), end({L}), l2(l2_strength)
    {
        if (index.size() == 0) {
            // keep a valid (unused) row so the weights file is never empty
            emission = Array({1, L});
        }
    }

    param_refs CrfModel::refs()
    {
        return {{"crf.emission", &emission}, {"crf.transition", &transition},
            {"crf.begin", &begin}, {"crf.end", &end}};
    }

    CrfModel CrfModel::zeros() const
    {
        CrfModel z;
        z.emission = zeros_like(emission);
        z.transition = zeros_like(transition);
        z.begin = zeros_like(begin);
        z.end = zeros_like(end);
        z.l2 = l2;
        return z;
    }

    FeatureSequence featurize(Paragraph const& p, CrfModel const& model)
    {
        FeatureSequence seq;
        for (std::size_t i = 0; i < p.clauses.size(); ++i) {
            seq.push_back(to_feature_vector(
                extract_feature_names(p.clauses[i], i, p.clauses.size(), model.lexicon), model.index));
        }
        return seq;
    }

    CrfPotentials potentials(CrfModel const& model, FeatureSequence const& feats)
    {
        CrfPotentials pot {Array({feats.size(), L}), model.transition, model.begin, model.end};
        for (std::size_t t = 0; t < feats.size(); ++t) {
            auto row = pot.emit.row(t);
            for (auto const& [f, v] : feats[t]) {
                if (f >= model.emission.dim(0)) {
                    throw dimension_error("crf: feature id " + std::to_string(f) + " outside model");
                }
                axpy(v, model.emission.row(f), row);
            }
        }
        return pot;
    }

    double sequence_score(CrfPotentials const& pot, std::vector<Label> const& labels)
    {
        if (labels.size() != pot.length()) {
            throw dimension_error("crf: " + std::to_string(labels.size()) + " labels for "
                + std::to_string(pot.length()) + " positions");
        }
        if (labels.empty()) return 0.0;
        double s = pot.begin[label_index(labels.front())];
        for (std::size_t t = 0; t < labels.size(); ++t) {
            s += pot.emit(t, label_index(labels[t]));
            if (t) s += pot.transition(label_index(labels[t - 1]), label_index(labels[t]));
        }
        return s + pot.end[label_index(labels.back())];
    }

    double sequence_score(CrfModel const& model, FeatureSequence const& feats, std::vector<Label> const& labels)
    {
        return sequence_score(potentials(model, feats), labels);
    }

    double log_partition(CrfPotentials const& pot)
    {
        return forward_backward(pot).log_z;
    }

    double log_partition(CrfModel const& model, FeatureSequence const& feats)
    {
        return log_partition(potentials(model, feats));
    }

    ViterbiResult viterbi(CrfPotentials const& pot)
    {
        std::size_t n = pot.length();
        if (n == 0) throw data_error("crf: empty sequence");
        std::vector<std::array<double, L>> delta(n);
        std::vector<std::array<std::uint8_t, L>> back(n);
        for (std::size_t y = 0; y < L; ++y) delta[0][y] = pot.begin[y] + pot.emit(0, y);
        for (std::size_t t = 1; t < n; ++t) {
            for (std::size_t y = 0; y < L; ++y) {
                std::size_t arg = 0;
                double best = delta[t - 1][0] + pot.transition(0, y);
                for (std::size_t a = 1; a < L; ++a) {
                    double v = delta[t - 1][a] + pot.transition(a, y);
                    if (v > best) {
                        best = v;
                        arg = a;
                    }
                }
                delta[t][y] = best + pot.emit(t, y);
                back[t][y] = static_cast<std::uint8_t>(arg);
            }
        }
        std::size_t last = 0;
        double best = delta[n - 1][0] + pot.end[0];
        for (std::size_t y = 1; y < L; ++y) {
            double v = delta[n - 1][y] + pot.end[y];
            if (v > best) {
                best = v;
                last = y;
            }
        }
        ViterbiResult r;
        r.score = best;
        r.labels.resize(n);
        std::size_t y = last;
        for (std::size_t t = n; t-- > 0;) {
            r.labels[t] = label_from_index(y);
            if (t) y = back[t][y];
        }
        return r;
    }

    ViterbiResult viterbi(CrfModel const& model, FeatureSequence const& feats)
    {
        return viterbi(potentials(model, feats));
    }

    CrfMarginals marginals(CrfPotentials const& pot)
    {
        DpTables t = forward_backward(pot);
        std::size_t n = pot.length();
        CrfMarginals m;
        m.log_z = t.log_z;
        m.node = Array({n, L});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t y = 0; y < L; ++y) {
                m.node(i, y) = std::exp(t.alpha[i][y] + t.beta[i][y] - t.log_z);
            }
        }
        if (n > 1) {
            m.edge = Array({n - 1, L, L});
            for (std::size_t i = 0; i + 1 < n; ++i) {
                for (std::size_t a = 0; a < L; ++a) {
                    for (std::size_t b = 0; b < L; ++b) {
                        m.edge(i, a, b) = std::exp(t.alpha[i][a] + pot.transition(a, b)
                            + pot.emit(i + 1, b) + t.beta[i + 1][b] - t.log_z);
                    }
                }
            }
        }
        return m;
    }

    double log_likelihood(CrfModel const& model, FeatureSequence const& feats,
        std::vector<Label> const& labels, double scale, CrfModel* grads)
    {
        CrfPotentials pot = potentials(model, feats);
        double score = sequence_score(pot, labels);
        if (!grads) return score - log_partition(pot);

        CrfMarginals m = marginals(pot);
        std::size_t n = labels.size();
        for (std::size_t t = 0; t < n; ++t) {
            std::size_t gold = label_index(labels[t]);
            for (auto const& [f, v] : feats[t]) {
                auto row = grads->emission.row(f);
                for (std::size_t y = 0; y < L; ++y) {
                    row[y] += scale * v * ((y == gold ? 1.0 : 0.0) - m.node(t, y));
                }
            }
            if (t) {
                std::size_t prev = label_index(labels[t - 1]);
                for (std::size_t a = 0; a < L; ++a) {
                    for (std::size_t b = 0; b < L; ++b) {
                        double emp = (a == prev && b == gold) ? 1.0 : 0.0;
                        grads->transition(a, b) += scale * (emp - m.edge(t - 1, a, b));
                    }
                }
            }
        }
        std::size_t first = label_index(labels.front());
        std::size_t last = label_index(labels.back());
        for (std::size_t y = 0; y < L; ++y) {
            grads->begin[y] += scale * ((y == first ? 1.0 : 0.0) - m.node(0, y));
            grads->end[y] += scale * ((y == last ? 1.0 : 0.0) - m.node(n - 1, y));
        }
        return score - m.log_z;
    }

    double l2_penalty(CrfModel& model, double scale, CrfModel* grads)
    {
        double s = 0.0;
        auto refs = model.refs();
        auto grefs = grads ? grads->refs() : param_refs {};
        for (std::size_t k = 0; k < refs.size(); ++k) {
            Array const& w = *refs[k].value;
            for (std::size_t i = 0; i < w.size(); ++i) {
                s += w[i] * w[i];
                if (grads) (*grefs[k].value)[i] += scale * 2.0 * model.l2 * w[i];
            }
        }
        return s;
    }

    double crf_objective(CrfModel& model, std::vector<FeatureSequence> const& feats,
        std::vector<std::vector<Label>> const& labels)
    {
        double ll = 0.0;
        for (std::size_t k = 0; k < feats.size(); ++k) {
            ll += log_likelihood(model, feats[k], labels[k], 0.0, nullptr);
        }
        return ll / static_cast<double>(feats.size()) - model.l2 * l2_penalty(model, 0.0, nullptr);
    }

    std::vector<Label> crf_predict(CrfModel const& model, Paragraph const& p)
    {
        if (p.clauses.empty()) return {};
        return viterbi(model, featurize(p, model)).labels;
    }

    CrfTrainResult train_crf(Corpus const& train, Corpus const& validation, Lexicon const& lexicon,
        CrfTrainConfig const& cfg, std::function<void(CrfEpochLog const&)> const& on_epoch)
    {
        if (train.empty()) throw data_error("crf: training corpus is empty");
        if (validation.empty()) throw data_error("crf: validation corpus is empty");
        if (cfg.max_epochs < 1 || cfg.batch_size < 1) throw config_error("crf: epochs and batch size must be positive");
        if (cfg.l2 < 0) throw config_error("crf: l2 strength must be nonnegative");

        FeatureIndex index;
        std::vector<FeatureSequence> feats;
        std::vector<std::vector<Label>> labels;
        for (auto const& p : train) {
            FeatureSequence seq;
            for (std::size_t i = 0; i < p.clauses.size(); ++i) {
                seq.push_back(to_feature_vector(
                    extract_feature_names(p.clauses[i], i, p.clauses.size(), lexicon), index, true));
            }
            feats.push_back(std::move(seq));
            labels.push_back(gold_labels(p));
        }

        CrfTrainResult result;
        CrfModel& model = result.model;
        model = CrfModel(index, lexicon, cfg.l2);
        CrfModel grads = model.zeros();
        CrfModel best = model;
        double best_acc = -1.0;
        std::size_t since_best = 0;

        std::vector<FeatureSequence> val_feats;
        std::vector<std::vector<Label>> val_labels;
        for (auto const& p : validation) {
            val_feats.push_back(featurize(p, model));
            val_labels.push_back(gold_labels(p));
        }

        std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dull);
        AdamState adam;
        std::vector<std::size_t> order(train.size());

        for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            shuffle_indices(order, rng);

            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                std::size_t end = std::min(order.size(), start + cfg.batch_size);
                double scale = 1.0 / static_cast<double>(end - start);
                for (auto const& p : grads.refs()) p.value->fill(0.0);
                // gradient of the negated objective, so both optimizers minimize
                for (std::size_t b = start; b < end; ++b) {
                    double ll = log_likelihood(model, feats[order[b]], labels[order[b]], -scale, &grads);
                    if (!std::isfinite(ll)) {
                        throw divergence_error("crf: non-finite log-likelihood at epoch " + std::to_string(epoch));
                    }
                }
                l2_penalty(model, 1.0, &grads);
                if (cfg.optimizer == CrfOptimizer::adam) {
                    grad_store gs;
                    for (auto const& p : grads.refs()) gs.add(p.name, p.value->shape()) = *p.value;
                    adam_step(model.refs(), gs, adam, cfg.adam);
                } else {
                    auto mr = model.refs();
                    auto gr = grads.refs();
                    for (std::size_t k = 0; k < mr.size(); ++k) {
                        axpy(-cfg.step, gr[k].value->data(), mr[k].value->data());
                    }
                }
            }

            double objective = crf_objective(model, feats, labels);
            if (!std::isfinite(objective)) {
                throw divergence_error("crf: non-finite objective at epoch " + std::to_string(epoch));
            }
            std::size_t correct = 0;
            std::size_t total = 0;
            for (std::size_t k = 0; k < val_feats.size(); ++k) {
                auto pred = viterbi(model, val_feats[k]).labels;
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    ++total;
                    if (pred[i] == val_labels[k][i]) ++correct;
                }
            }
            double acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
            if (acc > best_acc) {
                best_acc = acc;
                best = model;
                result.best_epoch = epoch;
                since_best = 0;
            } else {
                ++since_best;
            }
            CrfEpochLog row {epoch, objective, acc, best_acc};
            result.log.push_back(row);
            if (on_epoch) on_epoch(row);
            if (since_best >= cfg.patience) break;
        }
        model = std::move(best);
        return result;
    }

    void save_crf(std::string const& dir, CrfModel const& model)
    {
        std::filesystem::create_directories(dir);
        Manifest m;
        m.set("format", crf_format);
        m.set("version", std::to_string(crf_format_version));
        m.set("variant", "crf");
        std::string labels;
        for (auto l : all_labels) {
            if (!labels.empty()) labels += ",";
            labels += label_name(l);
        }
        m.set("labels", labels);
        m.set("tokenizer", tokenizer_version);
        m.set("feature_count", model.index.size());
        m.set("emission_rows", model.emission.dim(0));
        m.set("l2", format_real(model.l2));
        m.write(dir + "/manifest");

        std::ofstream fs(dir + "/features");
        if (!fs) throw io_error("cannot write '" + dir + "/features'");
        for (auto const& n : model.index.names()) fs << n << "\n";
        fs.close();

        std::ofstream ls(dir + "/lexicon");
        if (!ls) throw io_error("cannot write '" + dir + "/lexicon'");
        write_lexicon(ls, model.lexicon);
        ls.close();

        write_weights(dir + "/weights", {&model.emission, &model.transition, &model.begin, &model.end});
    }

    CrfModel load_crf(std::string const& dir)
    {
        Manifest m = Manifest::read(dir + "/manifest");
        if (m.get_or("format", "") != crf_format) {
            throw model_load_error("'" + dir + "' is not a CRF model (format=" + m.get_or("format", "?") + ")");
        }
        if (m.get_size("version") != static_cast<std::size_t>(crf_format_version)) {
            throw model_load_error("'" + dir + "' has CRF format version " + m.get("version"));
        }
        if (m.get("tokenizer") != tokenizer_version) {
            throw model_load_error("CRF model was built with tokenizer '" + m.get("tokenizer") + "'");
        }

        FeatureIndex index;
        std::ifstream fs(dir + "/features");
        if (!fs) throw io_error("cannot open '" + dir + "/features'");
        std::string line;
        while (std::getline(fs, line)) {
            if (!line.empty()) index.add(line);
        }
        if (index.size() != m.get_size("feature_count")) {
            throw model_load_error("feature file lists " + std::to_string(index.size())
                + " features, manifest declares " + m.get("feature_count"));
        }
        Lexicon lex = load_lexicon(dir + "/lexicon");
        CrfModel model(std::move(index), std::move(lex), m.get_real("l2"));
        if (model.emission.dim(0) != m.get_size("emission_rows")) {
            throw model_load_error("emission row count mismatch");
        }
        read_weights(dir + "/weights", {&model.emission, &model.transition, &model.begin, &model.end});
        return model;
    }

}
