#include "cli.hpp"

#include "scidt/crf.hpp"
#include "scidt/data.hpp"
#include "scidt/error.hpp"
#include "scidt/eval.hpp"
#include "scidt/manifest.hpp"
#include "scidt/tagger.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace scidt::cli {

    namespace {

        struct Options {
            std::string corpus;
            std::string emb;
            std::string model;
            std::string variant = "recurrent";
            std::uint64_t seed = 0;
            std::string out;

            // training overrides
            std::size_t epochs = 100;
            std::size_t patience = 5;
            double dropout = 0.5;
            double lstm_dropout = 0.0;
            std::size_t batch = 10;
            double lr = 0.0;   // 0: variant default
            std::size_t hidden = 50;
            std::size_t proj = 50;
            bool bidirectional = false;
            std::string unk = "zero";
            std::size_t hash_buckets = 64;
            std::string lexicon;
            double l2 = 1e-4;
            std::string optimizer = "adam";
            double validation = 0.1;

            std::string val_corpus;
            std::string gold;
            std::string pred;
            std::string probs;
            std::size_t k = 5;
            bool parallel = false;
        };

        bool is_crf(Options const& o) { return o.variant == "crf"; }

        void add_training_flags(CLI::App* sub, Options& o)
        {
            sub->add_option("--variant", o.variant, "none | simple | recurrent | crf")
                ->check(CLI::IsMember({"none", "simple", "recurrent", "crf"}));
            sub->add_option("--emb", o.emb, "word vectors (not needed for crf)");
            sub->add_option("--seed", o.seed);
            sub->add_option("--epochs", o.epochs)->check(CLI::PositiveNumber);
            sub->add_option("--patience", o.patience);
            sub->add_option("--dropout", o.dropout)->check(CLI::Range(0.0, 0.999));
            sub->add_option("--lstm-dropout", o.lstm_dropout)->check(CLI::Range(0.0, 0.999));
            sub->add_option("--batch", o.batch)->check(CLI::PositiveNumber);
            sub->add_option("--lr", o.lr, "step size; 0 picks 1e-3 (tagger) or 0.05 (crf)");
            sub->add_option("--hidden", o.hidden)->check(CLI::PositiveNumber);
            sub->add_option("--proj", o.proj)->check(CLI::PositiveNumber);
            sub->add_flag("--bidirectional", o.bidirectional);
            sub->add_option("--unk", o.unk, "unknown-word policy")->check(CLI::IsMember({"zero", "hash"}));
            sub->add_option("--hash-buckets", o.hash_buckets)->check(CLI::PositiveNumber);
            sub->add_option("--lexicon", o.lexicon, "crf cue lexicon (built-in when omitted)");
            sub->add_option("--l2", o.l2)->check(CLI::NonNegativeNumber);
            sub->add_option("--optimizer", o.optimizer, "crf optimizer")->check(CLI::IsMember({"adam", "gradient"}));
            sub->add_option("--validation", o.validation, "held-out share of the training paragraphs")
                ->check(CLI::Range(0.0, 0.9));
        }

        ModelConfig model_config(Options const& o, std::size_t dim)
        {
            ModelConfig cfg;
            cfg.variant = *parse_variant(o.variant);
            cfg.embedding_dim = dim;
            cfg.projection_dim = o.proj;
            cfg.hidden_dim = o.hidden;
            cfg.bidirectional = o.bidirectional;
            return cfg;
        }

        TrainConfig train_config(Options const& o)
        {
            TrainConfig cfg;
            cfg.max_epochs = o.epochs;
            cfg.patience = o.patience;
            cfg.dropout_p = o.dropout;
            cfg.lstm_dropout_p = o.lstm_dropout;
            cfg.batch_size = o.batch;
            cfg.seed = o.seed;
            if (o.lr > 0) cfg.adam.alpha = o.lr;
            return cfg;
        }

        CrfTrainConfig crf_config(Options const& o)
        {
            CrfTrainConfig cfg;
            cfg.l2 = o.l2;
            cfg.max_epochs = o.epochs;
            cfg.patience = o.patience;
            cfg.batch_size = o.batch;
            cfg.seed = o.seed;
            cfg.optimizer = o.optimizer == "gradient" ? CrfOptimizer::gradient : CrfOptimizer::adam;
            if (o.lr > 0) {
                cfg.adam.alpha = o.lr;
                cfg.step = o.lr;
            }
            return cfg;
        }

        Lexicon lexicon_for(Options const& o)
        {
            return o.lexicon.empty() ? default_lexicon() : load_lexicon(o.lexicon);
        }

        EmbeddingTable embeddings_for(Options const& o, std::size_t expected_dim = 0)
        {
            if (o.emb.empty()) throw config_error("--emb is required for variant '" + o.variant + "'");
            auto table = load_embeddings(o.emb, expected_dim);
            if (o.unk == "hash") table.set_unk_policy(UnkPolicy::hash_bucket, o.hash_buckets, o.seed);
            return table;
        }

        // Embeddings configured the way the model was trained.
        EmbeddingTable embeddings_for(Options const& o, TaggerModel const& m)
        {
            if (o.emb.empty()) throw config_error("--emb is required to run a tagger model");
            auto table = load_embeddings(o.emb, 0);
            if (table.dim() != m.params.config.embedding_dim) {
                throw model_load_error(o.model + ": model expects " + std::to_string(m.params.config.embedding_dim)
                    + "-dimensional embeddings but " + o.emb + " has " + std::to_string(table.dim()));
            }
            if (m.unk_policy == UnkPolicy::hash_bucket) table.set_unk_policy(UnkPolicy::hash_bucket, m.hash_buckets, m.unk_seed);
            return table;
        }

        // Seeded hold-out of a validation slice; a one-paragraph corpus validates on itself.
        std::pair<Corpus, Corpus> split_validation(Corpus const& corpus, double fraction, std::uint64_t seed)
        {
            if (corpus.size() < 2 || fraction <= 0.0) return {corpus, corpus};
            std::vector<std::size_t> idx(corpus.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
            shuffle_indices(idx, rng);
            auto nv = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
            nv = std::clamp<std::size_t>(nv, 1, idx.size() - 1);
            std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
            std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
            std::sort(val.begin(), val.end());
            std::sort(train.begin(), train.end());
            return {select(corpus, train), select(corpus, val)};
        }

        std::ofstream open_out(std::string const& path)
        {
            std::ofstream ofs(path);
            if (!ofs) throw io_error("cannot write '" + path + "'");
            ofs << std::setprecision(17);
            return ofs;
        }

        void ensure_dir(std::string const& dir)
        {
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec) throw io_error("cannot create directory '" + dir + "': " + ec.message());
        }

        // Only the selected subcommand's resolved values; reloadable with --config.
        void write_run_config(std::string const& path, CLI::App const& app)
        {
            auto ofs = open_out(path);
            auto subs = app.get_subcommands();
            std::string prefix = subs.empty() ? "" : subs.front()->get_name() + ".";
            std::istringstream all(app.config_to_str(true, false));
            for (std::string line; std::getline(all, line);) {
                // unset paths are left out so the file reloads through the same checks
                if (line.rfind(prefix, 0) == 0 && !line.ends_with("=\"\"")) ofs << line << "\n";
            }
        }

        // Where a file output's resolved config goes.
        std::string sidecar(std::string const& file) { return file + ".run.ini"; }

        bool is_crf_dir(std::string const& dir)
        {
            auto m = Manifest::read((fs::path(dir) / "manifest").string());
            return m.get_or("format", "") == crf_format;
        }

        // ---- train ----

        int cmd_train(Options const& o, CLI::App const& app, std::ostream& out)
        {
            ensure_dir(o.out);
            Corpus corpus = load_corpus(o.corpus);
            Corpus train;
            Corpus val;
            if (!o.val_corpus.empty()) {
                train = corpus;
                val = load_corpus(o.val_corpus);
            } else {
                std::tie(train, val) = split_validation(corpus, o.validation, o.seed);
            }
            write_run_config((fs::path(o.out) / "run.ini").string(), app);

            if (is_crf(o)) {
                auto log_path = (fs::path(o.out) / "train_log.csv").string();
                auto log = open_out(log_path);
                log << "epoch,objective,val_accuracy,best_so_far\n";
                auto res = train_crf(train, val, lexicon_for(o), crf_config(o), [&](CrfEpochLog const& e) {
                    log << e.epoch << "," << e.objective << "," << e.val_accuracy << "," << e.best_so_far << "\n";
                });
                save_crf(o.out, res.model);
                out << "crf: " << res.model.index.size() << " features, best epoch " << res.best_epoch << "\n";
                return exit_ok;
            }

            auto emb = embeddings_for(o);
            auto res = train_tagger(train, val, emb, model_config(o, emb.dim()), train_config(o));
            save_model(o.out, res.model);
            write_training_log((fs::path(o.out) / "train_log.csv").string(), res.log);
            out << o.variant << ": best epoch " << res.best_epoch << ", validation accuracy "
                << res.best_val_accuracy << "\n";
            return exit_ok;
        }

        // ---- tag ----

        void write_probs_header(std::ostream& os)
        {
            os << "paragraph\tclause\tpred";
            for (Label l : all_labels) os << "\t" << label_name(l);
            os << "\n";
        }

        void write_probs_row(std::ostream& os, std::string const& id, std::size_t clause, Label pred,
            std::span<double const> probs)
        {
            os << id << "\t" << clause << "\t" << label_name(pred);
            for (double p : probs) os << "\t" << p;
            os << "\n";
        }

        int cmd_tag(Options const& o, CLI::App const& app, std::ostream& out)
        {
            Corpus corpus = load_corpus(o.corpus);
            std::unique_ptr<std::ofstream> probs;
            if (!o.probs.empty()) {
                probs = std::make_unique<std::ofstream>(open_out(o.probs));
                write_probs_header(*probs);
            }

            if (is_crf_dir(o.model)) {
                CrfModel model = load_crf(o.model);
                for (auto& p : corpus) {
                    if (p.clauses.empty()) continue;
                    auto feats = featurize(p, model);
                    auto pot = potentials(model, feats);
                    auto best = viterbi(pot);
                    auto marg = marginals(pot);
                    for (std::size_t i = 0; i < p.clauses.size(); ++i) {
                        p.clauses[i].gold = best.labels[i];
                        if (probs) write_probs_row(*probs, p.id, i, best.labels[i], marg.node.row(i));
                    }
                }
            } else {
                TaggerModel model = load_model(o.model);
                auto emb = embeddings_for(o, model);
                for (auto& p : corpus) {
                    if (p.clauses.empty()) continue;
                    bool truncated = false;
                    auto ep = embed_for_model(p, emb, model, &truncated);
                    Array pr = forward(ep, model.params);
                    for (std::size_t i = 0; i < p.clauses.size(); ++i) {
                        // clauses past the model's capacity keep no label
                        if (i >= ep.clause_count) {
                            p.clauses[i].gold.reset();
                            continue;
                        }
                        auto row = pr.row(i);
                        auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
                        p.clauses[i].gold = label_from_index(best);
                        if (probs) write_probs_row(*probs, p.id, i, label_from_index(best), row);
                    }
                    if (truncated) out << "warning: paragraph '" << p.id << "' exceeds the model capacity and was truncated\n";
                }
            }

            if (o.out.empty()) {
                write_corpus(out, corpus);
            } else {
                save_corpus(o.out, corpus);
                write_run_config(sidecar(o.out), app);
            }
            return exit_ok;
        }

        // ---- eval ----

        void write_reports(std::string const& dir, std::string const& stem, MetricsReport const& r)
        {
            auto csv = open_out((fs::path(dir) / (stem + ".csv")).string());
            write_report_csv(csv, r);
            auto txt = open_out((fs::path(dir) / (stem + ".txt")).string());
            write_report_text(txt, r);
        }

        int cmd_eval(Options const& o, CLI::App const& app, std::ostream& out)
        {
            Corpus gold = load_corpus(o.gold);
            Corpus pred = load_corpus(o.pred);
            MetricsReport r = score(gold, pred);
            out << std::setprecision(6) << "accuracy " << r.accuracy << "\nweighted_f1 " << r.weighted_f1 << "\n";
            if (!o.out.empty()) {
                ensure_dir(o.out);
                write_reports(o.out, "report", r);
                write_run_config((fs::path(o.out) / "run.ini").string(), app);
            }
            return exit_ok;
        }

        // ---- cv ----

        FoldTrainer make_trainer(Options const& o, EmbeddingTable const* emb)
        {
            if (is_crf(o)) {
                Lexicon lex = lexicon_for(o);
                CrfTrainConfig cfg = crf_config(o);
                return [lex, cfg](Corpus const& train, Corpus const& val, std::size_t fold) -> Predictor {
                    CrfTrainConfig c = cfg;
                    c.seed = cfg.seed + fold;
                    auto model = std::make_shared<CrfModel>(train_crf(train, val, lex, c).model);
                    return [model](Paragraph const& p) { return crf_predict(*model, p); };
                };
            }
            ModelConfig mc = model_config(o, emb->dim());
            TrainConfig tc = train_config(o);
            return [mc, tc, emb](Corpus const& train, Corpus const& val, std::size_t fold) -> Predictor {
                TrainConfig c = tc;
                c.seed = tc.seed + fold;
                auto model = std::make_shared<TaggerModel>(train_tagger(train, val, *emb, mc, c).model);
                return [model, emb](Paragraph const& p) {
                    auto ep = embed_for_model(p, *emb, *model);
                    auto labels = predict(ep, model->params);
                    labels.resize(p.clauses.size(), Label::none);
                    return labels;
                };
            };
        }

        int cmd_cv(Options const& o, CLI::App const& app, std::ostream& out)
        {
            ensure_dir(o.out);
            Corpus corpus = load_corpus(o.corpus);
            std::optional<EmbeddingTable> emb;
            if (!is_crf(o)) emb = embeddings_for(o);
            write_run_config((fs::path(o.out) / "run.ini").string(), app);

            CvOptions cv_opts;
            cv_opts.k = o.k;
            cv_opts.seed = o.seed;
            cv_opts.validation_fraction = o.validation;
            cv_opts.parallel = o.parallel;
            CvResult cv = cross_validate(corpus, make_trainer(o, emb ? &*emb : nullptr), cv_opts);

            for (auto const& f : cv.folds) write_reports(o.out, "fold" + std::to_string(f.fold + 1), f.report);
            write_reports(o.out, "pooled", cv.pooled);
            auto preds = open_out((fs::path(o.out) / "predictions.csv").string());
            write_predictions_csv(preds, cv);

            auto summary = open_out((fs::path(o.out) / "summary.csv").string());
            summary << "fold,accuracy,weighted_f1\n";
            out << std::setprecision(6);
            for (auto const& f : cv.folds) {
                summary << f.fold + 1 << "," << f.report.accuracy << "," << f.report.weighted_f1 << "\n";
                out << "fold " << f.fold + 1 << ": accuracy " << f.report.accuracy << ", weighted_f1 "
                    << f.report.weighted_f1 << "\n";
            }
            summary << "mean," << cv.mean_accuracy << "," << cv.mean_weighted_f1 << "\n";
            summary << "pooled," << cv.pooled.accuracy << "," << cv.pooled.weighted_f1 << "\n";
            out << "mean: accuracy " << cv.mean_accuracy << ", weighted_f1 " << cv.mean_weighted_f1 << "\n";
            out << "pooled: accuracy " << cv.pooled.accuracy << ", weighted_f1 " << cv.pooled.weighted_f1 << "\n";
            return exit_ok;
        }

        // ---- attention ----

        std::string html_escape(std::string const& s)
        {
            std::string r;
            for (char c : s) {
                switch (c) {
                case '&': r += "&amp;"; break;
                case '<': r += "&lt;"; break;
                case '>': r += "&gt;"; break;
                case '"': r += "&quot;"; break;
                default: r += c;
                }
            }
            return r;
        }

        int cmd_attention(Options const& o, CLI::App const& app, std::ostream& out)
        {
            if (is_crf_dir(o.model)) throw config_error("a CRF model has no attention weights to export");
            TaggerModel model = load_model(o.model);
            if (model.params.config.variant == AttentionVariant::none) {
                throw config_error("model in '" + o.model + "' has no attention (variant none)");
            }
            auto emb = embeddings_for(o, model);
            Corpus corpus = load_corpus(o.corpus);
            ensure_dir(o.out);

            auto tsv = open_out((fs::path(o.out) / "attention.tsv").string());
            tsv << "paragraph\tclause\tword\ttoken\tweight\n";
            auto html = open_out((fs::path(o.out) / "attention.html").string());
            html << std::setprecision(4)
                 << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention</title>\n"
                 << "<style>body{font-family:sans-serif;line-height:2}"
                 << "span.w{padding:2px 3px;margin:1px;border-radius:3px}"
                 << "div.c{margin:2px 0}b.l{display:inline-block;width:8em;color:#555}</style>\n"
                 << "</head><body>\n";

            std::size_t clauses = 0;
            for (auto const& p : corpus) {
                if (p.clauses.empty()) continue;
                auto ep = embed_for_model(p, emb, model);
                ForwardCache cache;
                Array probs = forward(ep, model.params, {}, cache);
                Array const& att = cache.summarizer.attention;
                html << "<h3>" << html_escape(p.id) << "</h3>\n";
                for (std::size_t i = 0; i < ep.clause_count; ++i) {
                    auto row = probs.row(i);
                    auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
                    html << "<div class=\"c\"><b class=\"l\">" << label_name(label_from_index(best)) << "</b>";
                    for (std::size_t j = 0; j < ep.word_counts[i]; ++j) {
                        auto const& tok = p.clauses[i].tokens[j];
                        double w = att(i, j);
                        tsv << p.id << "\t" << i << "\t" << j << "\t" << tok << "\t" << w << "\n";
                        html << "<span class=\"w\" title=\"" << w << "\" style=\"background:rgba(200,30,30,"
                             << w << ")\">" << html_escape(tok) << "</span>";
                    }
                    html << "</div>\n";
                    ++clauses;
                }
            }
            html << "</body></html>\n";
            write_run_config((fs::path(o.out) / "run.ini").string(), app);
            out << clauses << " clauses exported\n";
            return exit_ok;
        }

        // ---- stats ----

        int cmd_stats(Options const& o, CLI::App const& app, std::ostream& out)
        {
            Corpus corpus = load_corpus(o.corpus);
            PositionStats s = position_stats(corpus);
            if (o.out.empty()) {
                write_position_csv(out, s);
            } else {
                auto ofs = open_out(o.out);
                write_position_csv(ofs, s);
                write_run_config(sidecar(o.out), app);
            }
            return exit_ok;
        }

    }

    int run(std::vector<std::string> const& args, std::ostream& out, std::ostream& err)
    {
        CLI::App app {"Clause-level discourse tagging of experiment paragraphs", "scidt"};
        app.option_defaults()->always_capture_default();
        app.set_config("--config", "", "INI/TOML file of option values (e.g. a previous run.ini)");
        app.require_subcommand(1);
        Options o;

        auto* train = app.add_subcommand("train", "train a tagger or CRF");
        train->add_option("--corpus", o.corpus, "labeled corpus")->required()->check(CLI::ExistingFile);
        train->add_option("--val-corpus", o.val_corpus, "separate validation corpus")->check(CLI::ExistingFile);
        train->add_option("--out", o.out, "model directory")->required();
        add_training_flags(train, o);

        auto* tag = app.add_subcommand("tag", "label a corpus with a trained model");
        tag->add_option("--model", o.model)->required()->check(CLI::ExistingDirectory);
        tag->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
        tag->add_option("--emb", o.emb, "word vectors (tagger models)");
        tag->add_option("--out", o.out, "labeled corpus (stdout when omitted)");
        tag->add_option("--probs", o.probs, "per-clause label probabilities (TSV)");

        auto* eval = app.add_subcommand("eval", "score predictions against gold labels");
        eval->add_option("--gold,--corpus", o.gold)->required()->check(CLI::ExistingFile);
        eval->add_option("--pred", o.pred)->required()->check(CLI::ExistingFile);
        eval->add_option("--out", o.out, "report directory");

        auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
        cv->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
        cv->add_option("--out", o.out, "report directory")->required();
        cv->add_option("--k", o.k)->check(CLI::Range(2, 1000));
        cv->add_flag("--parallel", o.parallel, "train folds concurrently");
        add_training_flags(cv, o);

        auto* attention = app.add_subcommand("attention", "export attention weights as TSV and HTML");
        attention->add_option("--model", o.model)->required()->check(CLI::ExistingDirectory);
        attention->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
        attention->add_option("--emb", o.emb)->required();
        attention->add_option("--out", o.out, "output directory")->required();

        auto* stats = app.add_subcommand("stats", "label probabilities over five position buckets");
        stats->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
        stats->add_option("--out", o.out, "CSV file (stdout when omitted)");

        try {
            std::vector<std::string> rev(args.rbegin(), args.rend());
            app.parse(rev);
        } catch (CLI::CallForHelp const&) {
            out << app.help();
            return exit_ok;
        } catch (CLI::CallForAllHelp const&) {
            out << app.help("", CLI::AppFormatMode::All);
            return exit_ok;
        } catch (CLI::ParseError const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        }

        try {
            if (*train) return cmd_train(o, app, out);
            if (*tag) return cmd_tag(o, app, out);
            if (*eval) return cmd_eval(o, app, out);
            if (*cv) return cmd_cv(o, app, out);
            if (*attention) return cmd_attention(o, app, out);
            if (*stats) return cmd_stats(o, app, out);
        } catch (model_load_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_runtime;
        } catch (config_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        } catch (parse_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        } catch (io_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        } catch (data_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        } catch (capacity_error const& e) {
            err << "error: " << e.what() << "\n";
            return exit_usage;
        } catch (std::exception const& e) {
            err << "error: " << e.what() << "\n";
            return exit_runtime;
        }
        return exit_usage;
    }

}
