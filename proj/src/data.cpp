#include "scidt/data.hpp"
#include "scidt/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace scidt {

    namespace {

        constexpr std::array<std::string_view, label_count> label_names {
            "goal", "fact", "result", "hypothesis", "method", "problem", "implication", "none",
        };

        std::string lower(std::string_view s)
        {
            std::string r(s);
            for (char& c : r) {
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            return r;
        }

        bool is_space(char c)
        {
            return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        }

        std::vector<std::string_view> split_ws(std::string_view line)
        {
            std::vector<std::string_view> out;
            std::size_t i = 0;
            while (i < line.size()) {
                while (i < line.size() && is_space(line[i])) ++i;
                std::size_t j = i;
                while (j < line.size() && !is_space(line[j])) ++j;
                if (j > i) out.push_back(line.substr(i, j - i));
                i = j;
            }
            return out;
        }

        bool parse_size(std::string_view s, std::size_t& out)
        {
            auto r = std::from_chars(s.data(), s.data() + s.size(), out);
            return r.ec == std::errc() && r.ptr == s.data() + s.size();
        }

        bool parse_real(std::string_view s, double& out)
        {
            // strtod accepts forms from_chars<double> (libstdc++ 11) also accepts; keep one path.
            std::string tmp(s);
            char* end = nullptr;
            out = std::strtod(tmp.c_str(), &end);
            return end == tmp.c_str() + tmp.size() && !tmp.empty();
        }

        std::uint64_t fnv1a(std::string_view s)
        {
            std::uint64_t h = 1469598103934665603ull;
            for (unsigned char c : s) {
                h ^= c;
                h *= 1099511628211ull;
            }
            return h;
        }

        void strip_cr(std::string& line)
        {
            if (!line.empty() && line.back() == '\r') line.pop_back();
        }

    }

    Label label_from_index(std::size_t i)
    {
        if (i >= label_count) {
            throw error("label index out of range: " + std::to_string(i));
        }
        return static_cast<Label>(i);
    }

    std::string_view label_name(Label l)
    {
        return label_names[label_index(l)];
    }

    std::optional<Label> parse_label(std::string_view s)
    {
        std::string l = lower(s);
        for (std::size_t i = 0; i < label_count; ++i) {
            if (l == label_names[i]) return static_cast<Label>(i);
        }
        return std::nullopt;
    }

    std::vector<std::string> tokenize(std::string_view text)
    {
        std::vector<std::string> tokens;
        std::string cur;
        auto flush = [&] {
            if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        };
        for (char ch : text) {
            auto c = static_cast<unsigned char>(ch);
            if (is_space(ch)) {
                flush();
            } else if (c < 0x80 && std::ispunct(c)) {
                flush();
                tokens.emplace_back(1, ch);
            } else {
                cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
            }
        }
        flush();
        return tokens;
    }

    Clause make_clause(std::string text, std::optional<Label> gold)
    {
        Clause c;
        c.tokens = tokenize(text);
        c.gold = gold;
        c.raw_text = std::move(text);
        return c;
    }

    Corpus read_corpus(std::istream& is, std::string const& source)
    {
        Corpus corpus;
        std::set<std::string> ids;
        std::optional<Paragraph> cur;
        std::size_t cur_line = 0;
        std::size_t lineno = 0;

        auto finish = [&] {
            if (!cur) return;
            if (cur->clauses.empty()) {
                throw parse_error(source, cur_line, "paragraph '" + cur->id + "' has no clauses");
            }
            if (!ids.insert(cur->id).second) {
                throw parse_error(source, cur_line, "duplicate paragraph id '" + cur->id + "'");
            }
            corpus.push_back(std::move(*cur));
            cur.reset();
        };

        std::string line;
        while (std::getline(is, line)) {
            ++lineno;
            strip_cr(line);
            if (std::all_of(line.begin(), line.end(), is_space)) {
                finish();
                continue;
            }
            if (line.rfind("#id:", 0) == 0) {
                finish();
                std::string id = line.substr(4);
                auto b = id.find_first_not_of(" \t");
                auto e = id.find_last_not_of(" \t");
                id = b == std::string::npos ? std::string() : id.substr(b, e - b + 1);
                if (id.empty()) {
                    throw parse_error(source, lineno, "empty paragraph id");
                }
                cur = Paragraph {id, {}};
                cur_line = lineno;
                continue;
            }
            if (line[0] == '#') {
                continue;
            }
            if (!cur) {
                cur = Paragraph {"p" + std::to_string(corpus.size() + 1), {}};
                cur_line = lineno;
            }
            std::optional<Label> gold;
            std::string text;
            auto tab = line.find('\t');
            if (tab == std::string::npos) {
                text = line;
            } else {
                std::string_view name = std::string_view(line).substr(0, tab);
                text = line.substr(tab + 1);
                if (!name.empty()) {
                    gold = parse_label(name);
                    if (!gold) {
                        throw parse_error(source, lineno, "unknown label '" + std::string(name) + "'");
                    }
                }
            }
            Clause c = make_clause(std::move(text), gold);
            if (c.tokens.empty()) {
                throw parse_error(source, lineno, "clause has no tokens");
            }
            cur->clauses.push_back(std::move(c));
        }
        finish();
        return corpus;
    }

    Corpus load_corpus(std::string const& path)
    {
        std::ifstream ifs(path);
        if (!ifs) {
            throw io_error("cannot open corpus file '" + path + "'");
        }
        return read_corpus(ifs, path);
    }

    void write_corpus(std::ostream& os, Corpus const& corpus)
    {
        for (std::size_t p = 0; p < corpus.size(); ++p) {
            if (p) os << "\n";
            os << "#id: " << corpus[p].id << "\n";
            for (auto const& c : corpus[p].clauses) {
                if (c.gold) os << label_name(*c.gold);
                os << "\t" << c.raw_text << "\n";
            }
        }
    }

    void save_corpus(std::string const& path, Corpus const& corpus)
    {
        std::ofstream ofs(path);
        if (!ofs) {
            throw io_error("cannot write corpus file '" + path + "'");
        }
        write_corpus(ofs, corpus);
    }

    std::size_t clause_total(Corpus const& corpus)
    {
        std::size_t n = 0;
        for (auto const& p : corpus) n += p.clauses.size();
        return n;
    }

    std::string_view unk_policy_name(UnkPolicy p)
    {
        return p == UnkPolicy::zero ? "zero" : "hash";
    }

    std::optional<UnkPolicy> parse_unk_policy(std::string_view s)
    {
        if (s == "zero") return UnkPolicy::zero;
        if (s == "hash") return UnkPolicy::hash_bucket;
        return std::nullopt;
    }

    EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> const& tokens, Array vectors)
        : dim_(dim), vectors_(std::move(vectors))
    {
        if (vectors_.rank() != 2 || vectors_.dim(1) != dim || vectors_.dim(0) != tokens.size()) {
            throw dimension_error("embedding table: " + std::to_string(tokens.size()) + " tokens, dim "
                + std::to_string(dim) + ", vectors " + vectors_.shape_string());
        }
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            index_.emplace(tokens[i], i);
        }
    }

    std::optional<std::size_t> EmbeddingTable::find(std::string const& token) const
    {
        auto it = index_.find(token);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    void EmbeddingTable::set_unk_policy(UnkPolicy p, std::size_t buckets, std::uint64_t seed)
    {
        unk_policy_ = p;
        if (p == UnkPolicy::hash_bucket) {
            if (buckets == 0) {
                throw config_error("hash unk policy needs at least one bucket");
            }
            buckets_ = Array({buckets, dim_});
            std::mt19937_64 rng(seed);
            fill_normal(buckets_, 0.1, rng);
        } else {
            buckets_ = Array();
        }
    }

    void EmbeddingTable::lookup(std::string const& token, std::span<double> out) const
    {
        assert(out.size() == dim_);
        if (auto row = find(token)) {
            auto v = vectors_.row(*row);
            std::copy(v.begin(), v.end(), out.begin());
        } else if (unk_policy_ == UnkPolicy::hash_bucket) {
            auto v = buckets_.row(fnv1a(token) % buckets_.dim(0));
            std::copy(v.begin(), v.end(), out.begin());
        } else {
            std::fill(out.begin(), out.end(), 0.0);
        }
    }

    EmbeddingTable read_embeddings(std::istream& is, std::size_t expected_dim, std::string const& source)
    {
        std::vector<std::string> tokens;
        std::vector<double> values;
        std::set<std::string> seen;
        std::size_t dim = 0;
        std::size_t lineno = 0;
        std::string line;

        while (std::getline(is, line)) {
            ++lineno;
            strip_cr(line);
            auto fields = split_ws(line);
            if (fields.empty()) continue;
            if (lineno == 1 && fields.size() == 2) {
                std::size_t count = 0;
                std::size_t hdim = 0;
                if (parse_size(fields[0], count) && parse_size(fields[1], hdim)) {
                    dim = hdim;
                    if (expected_dim && dim != expected_dim) {
                        throw config_error(source + ": embedding dimension " + std::to_string(dim)
                            + " does not match expected " + std::to_string(expected_dim));
                    }
                    continue;
                }
            }
            if (dim == 0) {
                dim = fields.size() - 1;
                if (dim == 0) {
                    throw parse_error(source, lineno, "embedding row has no values");
                }
                if (expected_dim && dim != expected_dim) {
                    throw config_error(source + ": embedding dimension " + std::to_string(dim)
                        + " does not match expected " + std::to_string(expected_dim));
                }
            }
            if (fields.size() - 1 != dim) {
                throw parse_error(source, lineno, "expected " + std::to_string(dim) + " values, found "
                    + std::to_string(fields.size() - 1));
            }
            std::string token(fields[0]);
            if (!seen.insert(token).second) continue;
            tokens.push_back(std::move(token));
            for (std::size_t k = 1; k < fields.size(); ++k) {
                double v = 0.0;
                if (!parse_real(fields[k], v) || !std::isfinite(v)) {
                    throw parse_error(source, lineno, "bad real '" + std::string(fields[k]) + "'");
                }
                values.push_back(v);
            }
        }
        if (dim == 0) {
            dim = expected_dim;
        }
        if (dim == 0) {
            throw parse_error(source, lineno, "empty embedding file");
        }
        std::size_t n = tokens.size();
        return EmbeddingTable(dim, tokens, Array({n, dim}, std::move(values)));
    }

    EmbeddingTable load_embeddings(std::string const& path, std::size_t expected_dim)
    {
        std::ifstream ifs(path);
        if (!ifs) {
            throw io_error("cannot open embeddings file '" + path + "'");
        }
        return read_embeddings(ifs, expected_dim, path);
    }

    std::size_t peek_embedding_dim(std::string const& path)
    {
        std::ifstream ifs(path);
        if (!ifs) {
            throw io_error("cannot open embeddings file '" + path + "'");
        }
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(ifs, line)) {
            ++lineno;
            strip_cr(line);
            auto fields = split_ws(line);
            if (fields.empty()) continue;
            std::size_t a = 0;
            std::size_t b = 0;
            if (lineno == 1 && fields.size() == 2 && parse_size(fields[0], a) && parse_size(fields[1], b)) {
                return b;
            }
            return fields.size() - 1;
        }
        throw parse_error(path, lineno, "empty embedding file");
    }

    void write_embeddings(std::ostream& os, std::vector<std::string> const& tokens, Array const& vectors)
    {
        os << tokens.size() << " " << vectors.dim(1) << "\n";
        auto old = os.precision(17);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            os << tokens[i];
            for (double v : vectors.row(i)) os << " " << v;
            os << "\n";
        }
        os.precision(old);
    }

    EmbedResult embed_paragraph(Paragraph const& p, EmbeddingTable const& emb, EmbedOptions const& opts)
    {
        std::size_t n = p.clauses.size();
        std::size_t longest = 0;
        for (auto const& c : p.clauses) longest = std::max(longest, c.tokens.size());

        std::size_t max_c = opts.max_clauses ? opts.max_clauses : n;
        std::size_t max_w = opts.max_words ? opts.max_words : longest;
        bool overflow = n > max_c || longest > max_w;
        if (overflow && !opts.truncate) {
            throw capacity_error("paragraph '" + p.id + "' has " + std::to_string(n) + " clauses / "
                + std::to_string(longest) + " words, capacity is " + std::to_string(max_c) + " / "
                + std::to_string(max_w));
        }
        if (max_c == 0 || max_w == 0) {
            throw capacity_error("paragraph '" + p.id + "' embeds to an empty block");
        }

        EmbedResult r;
        r.truncated = overflow;
        EmbeddedParagraph& ep = r.value;
        ep.d = Array({max_c, max_w, emb.dim()});
        ep.word_mask = Mask({max_c, max_w});
        ep.clause_mask = Mask({max_c});
        ep.clause_count = std::min(n, max_c);
        for (std::size_t i = 0; i < ep.clause_count; ++i) {
            auto const& c = p.clauses[i];
            if (c.tokens.empty()) {
                throw data_error("paragraph '" + p.id + "' clause " + std::to_string(i) + " has no tokens");
            }
            std::size_t w = std::min(c.tokens.size(), max_w);
            ep.clause_mask.set(i, true);
            ep.labels.push_back(c.gold);
            ep.word_counts.push_back(w);
            for (std::size_t j = 0; j < w; ++j) {
                ep.word_mask.set(i, j, true);
                emb.lookup(c.tokens[j], ep.d.row(i, j));
            }
        }
        return r;
    }

    EmbeddedParagraph embed_paragraph(Paragraph const& p, EmbeddingTable const& emb)
    {
        return embed_paragraph(p, emb, EmbedOptions {}).value;
    }

    CorpusExtent corpus_extent(Corpus const& corpus)
    {
        CorpusExtent e;
        for (auto const& p : corpus) {
            e.max_clauses = std::max(e.max_clauses, p.clauses.size());
            for (auto const& c : p.clauses) e.max_words = std::max(e.max_words, c.tokens.size());
        }
        return e;
    }

    std::vector<std::size_t> FoldSplit::test_indices(Corpus const& corpus, std::size_t fold) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto it = assignments.find(corpus[i].id);
            if (it == assignments.end()) {
                throw data_error("paragraph '" + corpus[i].id + "' has no fold assignment");
            }
            if (it->second == fold) out.push_back(i);
        }
        return out;
    }

    FoldSplit::training_portion FoldSplit::training_indices(Corpus const& corpus, std::size_t fold) const
    {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto it = assignments.find(corpus[i].id);
            if (it == assignments.end()) {
                throw data_error("paragraph '" + corpus[i].id + "' has no fold assignment");
            }
            if (it->second != fold) rest.push_back(i);
        }
        std::size_t n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(rest.size())));
        if (n_val == 0 && rest.size() >= 2 && validation_fraction > 0) n_val = 1;
        if (n_val >= rest.size()) n_val = rest.size() > 1 ? rest.size() - 1 : 0;

        std::vector<std::size_t> order(rest.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(seed * 1000003ull + fold + 1);
        shuffle_indices(order, rng);

        training_portion tp;
        std::vector<std::uint8_t> is_val(rest.size(), 0);
        for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = 1;
        for (std::size_t i = 0; i < rest.size(); ++i) {
            (is_val[i] ? tp.validation : tp.train).push_back(rest[i]);
        }
        return tp;
    }

    FoldSplit make_folds(Corpus const& corpus, std::size_t k, std::uint64_t seed, double validation_fraction)
    {
        if (k < 2) {
            throw config_error("fold count must be at least 2, got " + std::to_string(k));
        }
        if (corpus.size() < k) {
            throw config_error("cannot split " + std::to_string(corpus.size()) + " paragraphs into "
                + std::to_string(k) + " folds");
        }
        if (validation_fraction < 0 || validation_fraction >= 1) {
            throw config_error("validation fraction must be in [0, 1)");
        }
        std::vector<std::size_t> order(corpus.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::mt19937_64 rng(seed);
        shuffle_indices(order, rng);

        FoldSplit split;
        split.k = k;
        split.seed = seed;
        split.validation_fraction = validation_fraction;
        for (std::size_t r = 0; r < order.size(); ++r) {
            auto const& id = corpus[order[r]].id;
            if (!split.assignments.emplace(id, r % k).second) {
                throw data_error("duplicate paragraph id '" + id + "'");
            }
        }
        return split;
    }

    Corpus select(Corpus const& corpus, std::vector<std::size_t> const& indices)
    {
        Corpus out;
        out.reserve(indices.size());
        for (auto i : indices) out.push_back(corpus.at(i));
        return out;
    }

}
