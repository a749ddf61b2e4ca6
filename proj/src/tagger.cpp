#include "scidt/tagger.hpp"
#include "scidt/error.hpp"
#include "scidt/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace scidt {

    namespace {

        constexpr std::array<char const*, 4> gate_names {"i", "f", "o", "g"};

        void add_lstm_refs(param_refs& r, std::string const& prefix, lstm_params& p)
        {
            for (int k = 0; k < 4; ++k) {
                r.push_back({prefix + ".wx." + gate_names[k], &p.wx[k]});
                r.push_back({prefix + ".wh." + gate_names[k], &p.wh[k]});
                r.push_back({prefix + ".b." + gate_names[k], &p.b[k]});
            }
        }

        std::size_t argmax_row(std::span<double const> row)
        {
            std::size_t best = 0;
            for (std::size_t k = 1; k < row.size(); ++k) {
                if (row[k] > row[best]) best = k;
            }
            return best;
        }

        std::size_t output_width(ModelConfig const& c)
        {
            return c.bidirectional ? 2 * c.hidden_dim : c.hidden_dim;
        }

    }

    TaggerParams::TaggerParams(ModelConfig const& cfg)
        : config(cfg),
          summarizer(cfg.variant, cfg.embedding_dim, cfg.projection_dim),
          lstm(cfg.embedding_dim, cfg.hidden_dim),
          out_w({output_width(cfg), label_count}),
          out_b({label_count})
    {
        if (cfg.embedding_dim == 0 || cfg.hidden_dim == 0) {
            throw config_error("embedding and hidden dimensions must be positive");
        }
        if (cfg.bidirectional) {
            lstm_rev = lstm_params(cfg.embedding_dim, cfg.hidden_dim);
        }
    }

    param_refs TaggerParams::refs()
    {
        param_refs r = summarizer.refs();
        add_lstm_refs(r, "lstm", lstm);
        if (config.bidirectional) add_lstm_refs(r, "lstm_rev", lstm_rev);
        r.push_back({"out.w", &out_w});
        r.push_back({"out.b", &out_b});
        return r;
    }

    std::vector<std::pair<std::string, Array const*>> TaggerParams::const_refs() const
    {
        std::vector<std::pair<std::string, Array const*>> out;
        for (auto const& p : const_cast<TaggerParams&>(*this).refs()) {
            out.emplace_back(p.name, p.value);
        }
        return out;
    }

    void TaggerParams::init(std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        summarizer.init(rng);
        auto init_lstm = [&](lstm_params& p) {
            for (int k = 0; k < 4; ++k) {
                glorot_uniform(p.wx[k], rng);
                glorot_uniform(p.wh[k], rng);
                p.b[k].fill(0.0);
            }
        };
        init_lstm(lstm);
        if (config.bidirectional) init_lstm(lstm_rev);
        glorot_uniform(out_w, rng);
        out_b.fill(0.0);
    }

    TaggerParams TaggerParams::zeros() const
    {
        return TaggerParams(config);
    }

    std::size_t TaggerParams::parameter_count() const
    {
        std::size_t n = 0;
        for (auto const& [name, a] : const_refs()) n += a->size();
        return n;
    }

    grad_store to_grad_store(TaggerParams& grads)
    {
        grad_store g;
        for (auto const& p : grads.refs()) {
            g.add(p.name, p.value->shape()) = *p.value;
        }
        return g;
    }

    Array forward(EmbeddedParagraph const& ep, TaggerParams const& params,
        ForwardOptions const& opts, ForwardCache& cache)
    {
        ModelConfig const& cfg = params.config;
        if (ep.d.rank() != 3 || ep.dim() != cfg.embedding_dim) {
            throw config_error("embedding stage: paragraph vectors have width "
                + std::to_string(ep.d.rank() == 3 ? ep.dim() : 0) + ", model expects "
                + std::to_string(cfg.embedding_dim));
        }
        if (ep.clause_mask.size() != ep.max_clauses()) {
            throw config_error("embedding stage: clause mask length does not match paragraph block");
        }

        cache.d_summ = summarizer_forward(params.summarizer, ep.d, ep.word_mask, opts.dropout_p,
            opts.rng, cache.summarizer);

        std::size_t c = ep.max_clauses();
        std::size_t d = ep.dim();
        std::size_t h = cfg.hidden_dim;

        cache.real.clear();
        for (std::size_t i = 0; i < c; ++i) {
            if (ep.clause_mask[i]) cache.real.push_back(i);
        }

        cache.lstm_in = cache.d_summ;
        cache.lstm_dropout = Array();
        if (opts.lstm_dropout_p > 0.0) {
            if (!opts.rng) throw config_error("lstm dropout requested without a random source");
            cache.lstm_dropout = Array({c, d});
            double keep = 1.0 / (1.0 - opts.lstm_dropout_p);
            for (auto i : cache.real) {
                for (std::size_t k = 0; k < d; ++k) {
                    double m = uniform01(*opts.rng) < opts.lstm_dropout_p ? 0.0 : keep;
                    cache.lstm_dropout(i, k) = m;
                    cache.lstm_in(i, k) *= m;
                }
            }
        }

        std::vector<double> zero(h, 0.0);
        std::size_t n = cache.real.size();
        cache.fwd.clear();
        cache.fwd.reserve(n);
        for (std::size_t t = 0; t < n; ++t) {
            std::span<double const> hp = t ? std::span<double const>(cache.fwd[t - 1].h) : zero;
            std::span<double const> cp = t ? std::span<double const>(cache.fwd[t - 1].c) : zero;
            cache.fwd.push_back(lstm_cell_step(cache.lstm_in.row(cache.real[t]), hp, cp, params.lstm));
        }
        cache.bwd.clear();
        if (cfg.bidirectional) {
            cache.bwd.resize(n);
            for (std::size_t t = n; t-- > 0;) {
                std::span<double const> hp = t + 1 < n ? std::span<double const>(cache.bwd[t + 1].h) : zero;
                std::span<double const> cp = t + 1 < n ? std::span<double const>(cache.bwd[t + 1].c) : zero;
                cache.bwd[t] = lstm_cell_step(cache.lstm_in.row(cache.real[t]), hp, cp, params.lstm_rev);
            }
        }

        cache.probs = Array({c, label_count});
        std::vector<double> hcat(output_width(cfg));
        std::vector<double> logits(label_count);
        for (std::size_t t = 0; t < n; ++t) {
            std::copy(cache.fwd[t].h.begin(), cache.fwd[t].h.end(), hcat.begin());
            if (cfg.bidirectional) {
                std::copy(cache.bwd[t].h.begin(), cache.bwd[t].h.end(), hcat.begin() + static_cast<std::ptrdiff_t>(h));
            }
            vec_mat(hcat, params.out_w, logits);
            axpy(1.0, params.out_b.data(), logits);
            auto p = softmax_vec(logits);
            std::copy(p.begin(), p.end(), cache.probs.row(cache.real[t]).begin());
        }
        check_finite(cache.probs, "tagger output");
        return cache.probs;
    }

    Array forward(EmbeddedParagraph const& ep, TaggerParams const& params)
    {
        ForwardCache cache;
        return forward(ep, params, ForwardOptions {}, cache);
    }

    LossSum loss_sum(Array const& probs, std::vector<std::optional<Label>> const& gold,
        Mask const& clause_mask)
    {
        LossSum s;
        std::size_t real = 0;
        for (std::size_t i = 0; i < clause_mask.size(); ++i) {
            if (!clause_mask[i]) continue;
            if (real >= gold.size() || !gold[real]) {
                throw data_error("clause " + std::to_string(i) + " has no gold label");
            }
            s.total -= std::log(probs(i, label_index(*gold[real])));
            ++s.count;
            ++real;
        }
        return s;
    }

    double loss(Array const& probs, std::vector<std::optional<Label>> const& gold, Mask const& clause_mask)
    {
        LossSum s = loss_sum(probs, gold, clause_mask);
        if (s.count == 0) {
            throw data_error("loss over a paragraph with no clauses");
        }
        return s.total / static_cast<double>(s.count);
    }

    void backward(EmbeddedParagraph const& ep, TaggerParams const& params,
        ForwardCache const& cache, double scale, TaggerParams& grads)
    {
        ModelConfig const& cfg = params.config;
        std::size_t n = cache.real.size();
        std::size_t h = cfg.hidden_dim;
        if (ep.labels.size() < n) {
            throw data_error("paragraph has " + std::to_string(ep.labels.size()) + " labels for "
                + std::to_string(n) + " clauses");
        }

        // output layer
        std::vector<std::vector<double>> dh_f(n, std::vector<double>(h, 0.0));
        std::vector<std::vector<double>> dh_b(cfg.bidirectional ? n : 0, std::vector<double>(h, 0.0));
        std::vector<double> hcat(output_width(cfg));
        std::vector<double> dhcat(output_width(cfg));
        std::vector<double> g(label_count);
        for (std::size_t t = 0; t < n; ++t) {
            auto const& gold = ep.labels[t];
            if (!gold) {
                throw data_error("clause " + std::to_string(t) + " has no gold label");
            }
            auto p = cache.probs.row(cache.real[t]);
            for (std::size_t k = 0; k < label_count; ++k) {
                g[k] = scale * (p[k] - (k == label_index(*gold) ? 1.0 : 0.0));
            }
            std::copy(cache.fwd[t].h.begin(), cache.fwd[t].h.end(), hcat.begin());
            if (cfg.bidirectional) {
                std::copy(cache.bwd[t].h.begin(), cache.bwd[t].h.end(), hcat.begin() + static_cast<std::ptrdiff_t>(h));
            }
            outer_acc(hcat, g, grads.out_w);
            axpy(1.0, g, grads.out_b.data());
            std::fill(dhcat.begin(), dhcat.end(), 0.0);
            vec_mat_t_acc(g, params.out_w, dhcat);
            std::copy(dhcat.begin(), dhcat.begin() + static_cast<std::ptrdiff_t>(h), dh_f[t].begin());
            if (cfg.bidirectional) {
                std::copy(dhcat.begin() + static_cast<std::ptrdiff_t>(h), dhcat.end(), dh_b[t].begin());
            }
        }

        // clause LSTM, backpropagation through time
        Array d_in({ep.max_clauses(), ep.dim()});
        std::vector<double> zero(h, 0.0);
        std::vector<double> dh_next(h, 0.0);
        std::vector<double> dc_next(h, 0.0);
        std::vector<double> dh(h);
        for (std::size_t t = n; t-- > 0;) {
            for (std::size_t k = 0; k < h; ++k) dh[k] = dh_f[t][k] + dh_next[k];
            std::span<double const> hp = t ? std::span<double const>(cache.fwd[t - 1].h) : zero;
            std::span<double const> cp = t ? std::span<double const>(cache.fwd[t - 1].c) : zero;
            auto r = lstm_cell_backward(cache.fwd[t], cache.lstm_in.row(cache.real[t]), hp, cp,
                params.lstm, dh, dc_next, grads.lstm);
            axpy(1.0, r.dx, d_in.row(cache.real[t]));
            dh_next = std::move(r.dh_prev);
            dc_next = std::move(r.dc_prev);
        }
        if (cfg.bidirectional) {
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            std::fill(dc_next.begin(), dc_next.end(), 0.0);
            for (std::size_t t = 0; t < n; ++t) {
                for (std::size_t k = 0; k < h; ++k) dh[k] = dh_b[t][k] + dh_next[k];
                std::span<double const> hp = t + 1 < n ? std::span<double const>(cache.bwd[t + 1].h) : zero;
                std::span<double const> cp = t + 1 < n ? std::span<double const>(cache.bwd[t + 1].c) : zero;
                auto r = lstm_cell_backward(cache.bwd[t], cache.lstm_in.row(cache.real[t]), hp, cp,
                    params.lstm_rev, dh, dc_next, grads.lstm_rev);
                axpy(1.0, r.dx, d_in.row(cache.real[t]));
                dh_next = std::move(r.dh_prev);
                dc_next = std::move(r.dc_prev);
            }
        }
        if (!cache.lstm_dropout.empty()) {
            for (std::size_t k = 0; k < d_in.size(); ++k) d_in[k] *= cache.lstm_dropout[k];
        }

        summarizer_backward(params.summarizer, ep.d, ep.word_mask, cache.summarizer, d_in, grads.summarizer);
    }

    grad_store backward(EmbeddedParagraph const& ep, TaggerParams const& params, ForwardCache const& cache)
    {
        TaggerParams grads = params.zeros();
        std::size_t n = cache.real.size();
        if (n == 0) throw data_error("backward over a paragraph with no clauses");
        backward(ep, params, cache, 1.0 / static_cast<double>(n), grads);
        return to_grad_store(grads);
    }

    std::vector<Label> predict(EmbeddedParagraph const& ep, TaggerParams const& params)
    {
        Array probs = forward(ep, params);
        std::vector<Label> out;
        for (std::size_t i = 0; i < ep.max_clauses(); ++i) {
            if (ep.clause_mask[i]) out.push_back(label_from_index(argmax_row(probs.row(i))));
        }
        return out;
    }

    void validate(TrainConfig const& cfg)
    {
        if (cfg.max_epochs < 1) throw config_error("max_epochs must be at least 1");
        if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0) throw config_error("dropout must be in [0, 1)");
        if (cfg.lstm_dropout_p < 0.0 || cfg.lstm_dropout_p >= 1.0) {
            throw config_error("lstm dropout must be in [0, 1)");
        }
        if (cfg.batch_size < 1) throw config_error("batch size must be at least 1");
        if (cfg.adam.alpha <= 0.0) throw config_error("learning rate must be positive");
    }

    void write_training_log(std::string const& path, std::vector<EpochLog> const& log)
    {
        std::ofstream ofs(path);
        if (!ofs) throw io_error("cannot write '" + path + "'");
        ofs << "epoch,train_loss,val_accuracy,best_so_far\n";
        for (auto const& e : log) {
            ofs << e.epoch << "," << format_real(e.train_loss) << "," << format_real(e.val_accuracy)
                << "," << format_real(e.best_so_far) << "\n";
        }
    }

    std::vector<EpochLog> read_training_log(std::string const& path)
    {
        std::ifstream ifs(path);
        if (!ifs) throw io_error("cannot open '" + path + "'");
        std::vector<EpochLog> log;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(ifs, line)) {
            ++lineno;
            if (lineno == 1) {
                if (line != "epoch,train_loss,val_accuracy,best_so_far") {
                    throw parse_error(path, lineno, "unexpected training log header");
                }
                continue;
            }
            if (line.empty()) continue;
            std::istringstream is(line);
            EpochLog e;
            char c1 = 0, c2 = 0, c3 = 0;
            if (!(is >> e.epoch >> c1 >> e.train_loss >> c2 >> e.val_accuracy >> c3 >> e.best_so_far)
                    || c1 != ',' || c2 != ',' || c3 != ',') {
                throw parse_error(path, lineno, "malformed training log row");
            }
            log.push_back(e);
        }
        return log;
    }

    EmbeddedParagraph embed_for_model(Paragraph const& p, EmbeddingTable const& emb,
        TaggerModel const& model, bool* truncated)
    {
        // Pad only as far as the paragraph needs; padding never changes outputs.
        CorpusExtent own = corpus_extent(Corpus {p});
        EmbedOptions opts;
        opts.max_clauses = model.extent.max_clauses ? std::min(own.max_clauses, model.extent.max_clauses) : own.max_clauses;
        opts.max_words = model.extent.max_words ? std::min(own.max_words, model.extent.max_words) : own.max_words;
        opts.truncate = true;
        auto r = embed_paragraph(p, emb, opts);
        if (truncated) *truncated = r.truncated;
        return std::move(r.value);
    }

    double clause_accuracy(Corpus const& corpus, EmbeddingTable const& emb, TaggerParams const& params)
    {
        std::size_t correct = 0;
        std::size_t total = 0;
        for (auto const& p : corpus) {
            auto ep = embed_paragraph(p, emb);
            auto pred = predict(ep, params);
            for (std::size_t i = 0; i < pred.size(); ++i) {
                if (!ep.labels[i]) continue;
                ++total;
                if (pred[i] == *ep.labels[i]) ++correct;
            }
        }
        return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    }

    TrainResult train_tagger(Corpus const& train, Corpus const& validation, EmbeddingTable const& emb,
        ModelConfig const& model_cfg, TrainConfig const& cfg, EpochCallback const& on_epoch)
    {
        validate(cfg);
        if (train.empty()) throw data_error("training corpus is empty");
        if (validation.empty()) throw data_error("validation corpus is empty");
        if (model_cfg.embedding_dim != emb.dim()) {
            throw config_error("model embedding width " + std::to_string(model_cfg.embedding_dim)
                + " does not match embeddings (" + std::to_string(emb.dim()) + ")");
        }

        std::vector<EmbeddedParagraph> train_ep;
        for (auto const& p : train) {
            train_ep.push_back(embed_paragraph(p, emb));
            for (auto const& l : train_ep.back().labels) {
                if (!l) throw data_error("training paragraph '" + p.id + "' has an unlabeled clause");
            }
        }
        std::vector<EmbeddedParagraph> val_ep;
        for (auto const& p : validation) val_ep.push_back(embed_paragraph(p, emb));

        TrainResult result;
        TaggerModel& model = result.model;
        model.params = TaggerParams(model_cfg);
        model.params.init(cfg.seed);
        CorpusExtent e1 = corpus_extent(train);
        CorpusExtent e2 = corpus_extent(validation);
        model.extent = {std::max(e1.max_clauses, e2.max_clauses), std::max(e1.max_words, e2.max_words)};
        model.unk_policy = emb.unk_policy();
        model.hash_buckets = emb.hash_buckets();

        TaggerParams& params = model.params;
        TaggerParams best = params;
        double best_acc = -1.0;
        std::size_t since_best = 0;

        std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
        AdamState adam;
        TaggerParams grads = params.zeros();
        std::vector<std::size_t> order(train_ep.size());
        ForwardOptions fopts {cfg.dropout_p, cfg.lstm_dropout_p, &rng};
        ForwardCache cache;

        for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            shuffle_indices(order, rng);

            double epoch_loss = 0.0;
            std::size_t epoch_count = 0;
            std::size_t batch_no = 0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
                std::size_t end = std::min(order.size(), start + cfg.batch_size);
                std::size_t n_clauses = 0;
                for (std::size_t b = start; b < end; ++b) n_clauses += train_ep[order[b]].clause_count;
                double scale = 1.0 / static_cast<double>(n_clauses);

                for (auto const& p : grads.refs()) p.value->fill(0.0);
                double batch_loss = 0.0;
                for (std::size_t b = start; b < end; ++b) {
                    auto const& ep = train_ep[order[b]];
                    try {
                        forward(ep, params, fopts, cache);
                    } catch (numeric_error const& ex) {
                        throw divergence_error("epoch " + std::to_string(epoch) + ", batch "
                            + std::to_string(batch_no) + ": " + ex.what());
                    }
                    batch_loss += loss_sum(cache.probs, ep.labels, ep.clause_mask).total;
                    backward(ep, params, cache, scale, grads);
                }
                if (!std::isfinite(batch_loss)) {
                    throw divergence_error("non-finite training loss at epoch " + std::to_string(epoch)
                        + ", batch " + std::to_string(batch_no));
                }
                epoch_loss += batch_loss;
                epoch_count += n_clauses;
                adam_step(params.refs(), to_grad_store(grads), adam, cfg.adam);
            }

            std::size_t correct = 0;
            std::size_t total = 0;
            for (auto const& ep : val_ep) {
                auto pred = predict(ep, params);
                for (std::size_t i = 0; i < pred.size(); ++i) {
                    if (!ep.labels[i]) continue;
                    ++total;
                    if (pred[i] == *ep.labels[i]) ++correct;
                }
            }
            if (total == 0) throw data_error("validation corpus has no labeled clauses");
            double acc = static_cast<double>(correct) / static_cast<double>(total);

            if (acc > best_acc) {
                best_acc = acc;
                best = params;
                result.best_epoch = epoch;
                since_best = 0;
            } else {
                ++since_best;
            }
            EpochLog row {epoch, epoch_loss / static_cast<double>(epoch_count), acc, best_acc};
            result.log.push_back(row);
            if (on_epoch) on_epoch(row);
            if (since_best >= cfg.patience) break;
        }

        params = std::move(best);
        result.best_val_accuracy = best_acc;

        auto& notes = model.notes;
        notes.emplace_back("train.max_epochs", std::to_string(cfg.max_epochs));
        notes.emplace_back("train.patience", std::to_string(cfg.patience));
        notes.emplace_back("train.dropout_p", format_real(cfg.dropout_p));
        notes.emplace_back("train.lstm_dropout_p", format_real(cfg.lstm_dropout_p));
        notes.emplace_back("train.batch_size", std::to_string(cfg.batch_size));
        notes.emplace_back("train.seed", std::to_string(cfg.seed));
        notes.emplace_back("train.adam.alpha", format_real(cfg.adam.alpha));
        notes.emplace_back("train.adam.beta1", format_real(cfg.adam.beta1));
        notes.emplace_back("train.adam.beta2", format_real(cfg.adam.beta2));
        notes.emplace_back("train.adam.epsilon", format_real(cfg.adam.epsilon));
        notes.emplace_back("train.best_epoch", std::to_string(result.best_epoch));
        notes.emplace_back("train.best_val_accuracy", format_real(best_acc));
        return result;
    }

    void save_model(std::string const& dir, TaggerModel const& model)
    {
        std::filesystem::create_directories(dir);
        auto const& cfg = model.params.config;
        Manifest m;
        m.set("format", tagger_format);
        m.set("version", std::to_string(tagger_format_version));
        m.set("variant", std::string(variant_name(cfg.variant)));
        m.set("embedding_dim", cfg.embedding_dim);
        m.set("projection_dim", cfg.variant == AttentionVariant::none ? std::size_t {0} : cfg.projection_dim);
        m.set("hidden_dim", cfg.hidden_dim);
        m.set("bidirectional", cfg.bidirectional ? "1" : "0");
        std::string labels;
        for (auto l : all_labels) {
            if (!labels.empty()) labels += ",";
            labels += label_name(l);
        }
        m.set("labels", labels);
        m.set("max_clauses", model.extent.max_clauses);
        m.set("max_words", model.extent.max_words);
        m.set("tokenizer", tokenizer_version);
        m.set("unk_policy", std::string(unk_policy_name(model.unk_policy)));
        m.set("hash_buckets", model.hash_buckets);
        m.set("unk_seed", model.unk_seed);

        auto refs = model.params.const_refs();
        std::vector<Array const*> arrays;
        m.set("param_count", refs.size());
        for (std::size_t k = 0; k < refs.size(); ++k) {
            m.set("param." + std::to_string(k), refs[k].first + " " + shape_token(refs[k].second->shape()));
            arrays.push_back(refs[k].second);
        }
        for (auto const& [k, v] : model.notes) m.set(k, v);
        m.write(dir + "/manifest");
        write_weights(dir + "/weights", arrays);
    }

    TaggerModel load_model(std::string const& dir, LoadExpectations const& expect)
    {
        Manifest m = Manifest::read(dir + "/manifest");
        if (m.get_or("format", "") != tagger_format) {
            throw model_load_error("'" + dir + "' is not a tagger model (format="
                + m.get_or("format", "?") + ")");
        }
        if (m.get_size("version") != static_cast<std::size_t>(tagger_format_version)) {
            throw model_load_error("'" + dir + "' has model format version " + m.get("version")
                + ", this build reads version " + std::to_string(tagger_format_version));
        }
        if (m.get("tokenizer") != tokenizer_version) {
            throw model_load_error("model was built with tokenizer '" + m.get("tokenizer")
                + "', this build uses '" + tokenizer_version + "'");
        }
        std::string labels;
        for (auto l : all_labels) {
            if (!labels.empty()) labels += ",";
            labels += label_name(l);
        }
        if (m.get("labels") != labels) {
            throw model_load_error("model label set '" + m.get("labels") + "' differs from '" + labels + "'");
        }

        ModelConfig cfg;
        auto variant = parse_variant(m.get("variant"));
        if (!variant) throw model_load_error("unknown attention variant '" + m.get("variant") + "'");
        cfg.variant = *variant;
        cfg.embedding_dim = m.get_size("embedding_dim");
        cfg.projection_dim = m.get_size("projection_dim");
        cfg.hidden_dim = m.get_size("hidden_dim");
        cfg.bidirectional = m.get("bidirectional") == "1";

        if (expect.variant && *expect.variant != cfg.variant) {
            throw model_load_error("model in '" + dir + "' has attention variant '"
                + std::string(variant_name(cfg.variant)) + "', expected '"
                + std::string(variant_name(*expect.variant)) + "'");
        }
        if (expect.embedding_dim && *expect.embedding_dim != cfg.embedding_dim) {
            throw model_load_error("model in '" + dir + "' expects " + std::to_string(cfg.embedding_dim)
                + "-dimensional embeddings, got " + std::to_string(*expect.embedding_dim));
        }

        TaggerModel model;
        model.params = TaggerParams(cfg);
        model.extent.max_clauses = m.get_size("max_clauses");
        model.extent.max_words = m.get_size("max_words");
        auto unk = parse_unk_policy(m.get("unk_policy"));
        if (!unk) throw model_load_error("unknown unk policy '" + m.get("unk_policy") + "'");
        model.unk_policy = *unk;
        model.hash_buckets = m.get_size("hash_buckets");
        model.unk_seed = m.get_size("unk_seed");

        auto refs = model.params.refs();
        if (m.get_size("param_count") != refs.size()) {
            throw model_load_error("manifest declares " + m.get("param_count") + " parameter blocks, "
                "configuration implies " + std::to_string(refs.size()));
        }
        std::vector<Array*> arrays;
        for (std::size_t k = 0; k < refs.size(); ++k) {
            std::string expected = refs[k].name + " " + shape_token(refs[k].value->shape());
            std::string const& got = m.get("param." + std::to_string(k));
            if (got != expected) {
                throw model_load_error("parameter block " + std::to_string(k) + " is '" + got
                    + "', expected '" + expected + "'");
            }
            arrays.push_back(refs[k].value);
        }
        read_weights(dir + "/weights", arrays);
        for (auto const& [k, v] : m.entries()) {
            if (k.rfind("train.", 0) == 0) model.notes.emplace_back(k, v);
        }
        return model;
    }

}
