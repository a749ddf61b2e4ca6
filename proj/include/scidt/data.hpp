#ifndef SCIDT_DATA_HPP
#define SCIDT_DATA_HPP

#include "scidt/numkernel.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scidt {

    enum class Label : std::uint8_t {
        goal = 0,
        fact,
        result,
        hypothesis,
        method,
        problem,
        implication,
        none,
    };

    inline constexpr std::size_t label_count = 8;

    inline constexpr std::array<Label, label_count> all_labels {
        Label::goal, Label::fact, Label::result, Label::hypothesis,
        Label::method, Label::problem, Label::implication, Label::none,
    };

    inline std::size_t label_index(Label l) { return static_cast<std::size_t>(l); }
    Label label_from_index(std::size_t i);

    // Canonical lowercase name.
    std::string_view label_name(Label l);
    // Case-insensitive; nullopt for unknown names.
    std::optional<Label> parse_label(std::string_view s);

    inline constexpr char const* tokenizer_version = "lower-punct-1";

    // Lowercases ASCII and splits on whitespace; every ASCII punctuation
    // character becomes its own token. Bytes >= 0x80 are word characters.
    std::vector<std::string> tokenize(std::string_view text);

    struct Clause {
        std::vector<std::string> tokens;
        std::optional<Label> gold;
        std::string raw_text;
    };

    Clause make_clause(std::string text, std::optional<Label> gold = std::nullopt);

    struct Paragraph {
        std::string id;
        std::vector<Clause> clauses;
    };

    using Corpus = std::vector<Paragraph>;

    /*
     * Corpus text format (UTF-8):
     *
     *   #id: <paragraph id>
     *   <label>\t<clause text>
     *   \t<clause text>              (unlabeled clause)
     *
     * Paragraphs are separated by blank lines. A clause line without a tab is
     * read as unlabeled. Other lines starting with '#' are comments. Paragraphs
     * without an id line get "p<ordinal>".
     */
    Corpus read_corpus(std::istream& is, std::string const& source = "<stream>");
    Corpus load_corpus(std::string const& path);
    void write_corpus(std::ostream& os, Corpus const& corpus);
    void save_corpus(std::string const& path, Corpus const& corpus);

    std::size_t clause_total(Corpus const& corpus);

    enum class UnkPolicy {
        zero,          // zero vector, position stays unmasked
        hash_bucket,   // deterministic pseudo-random vector per hash bucket
    };

    std::string_view unk_policy_name(UnkPolicy p);
    std::optional<UnkPolicy> parse_unk_policy(std::string_view s);

    class EmbeddingTable {
    public:
        EmbeddingTable() = default;
        EmbeddingTable(std::size_t dim, std::vector<std::string> const& tokens, Array vectors);

        std::size_t dim() const { return dim_; }
        std::size_t size() const { return index_.size(); }
        bool contains(std::string const& token) const { return index_.count(token) != 0; }
        std::optional<std::size_t> find(std::string const& token) const;
        std::span<double const> vector(std::size_t row) const { return vectors_.row(row); }
        Array const& vectors() const { return vectors_; }

        UnkPolicy unk_policy() const { return unk_policy_; }
        void set_unk_policy(UnkPolicy p, std::size_t buckets = 64, std::uint64_t seed = 0);
        std::size_t hash_buckets() const { return buckets_.empty() ? 0 : buckets_.dim(0); }

        // Writes the vector for token (known or not) into out.
        void lookup(std::string const& token, std::span<double> out) const;

    private:
        std::size_t dim_ = 0;
        std::unordered_map<std::string, std::size_t> index_;
        Array vectors_;
        UnkPolicy unk_policy_ = UnkPolicy::zero;
        Array buckets_;
    };

    // Text word-vector format: optional "count dim" header, then "token v1 ... vd".
    // Duplicate tokens keep their first occurrence.
    EmbeddingTable read_embeddings(std::istream& is, std::size_t expected_dim,
        std::string const& source = "<stream>");
    EmbeddingTable load_embeddings(std::string const& path, std::size_t expected_dim);
    // Reads only the dimension of an embedding file.
    std::size_t peek_embedding_dim(std::string const& path);
    void write_embeddings(std::ostream& os, std::vector<std::string> const& tokens, Array const& vectors);

    struct EmbeddedParagraph {
        Array d;                  // clauses x words x dim
        Mask word_mask;           // clauses x words
        Mask clause_mask;         // clauses
        std::vector<std::optional<Label>> labels;  // one per real clause
        std::size_t clause_count = 0;               // before padding
        std::vector<std::size_t> word_counts;       // per real clause, before padding

        std::size_t max_clauses() const { return d.dim(0); }
        std::size_t max_words() const { return d.dim(1); }
        std::size_t dim() const { return d.dim(2); }
    };

    struct EmbedOptions {
        std::size_t max_clauses = 0;   // 0: fit the paragraph exactly
        std::size_t max_words = 0;     // 0: fit the longest clause exactly
        bool truncate = false;
    };

    struct EmbedResult {
        EmbeddedParagraph value;
        bool truncated = false;
    };

    // Throws capacity_error on overflow unless truncation is enabled.
    EmbedResult embed_paragraph(Paragraph const& p, EmbeddingTable const& emb, EmbedOptions const& opts);
    EmbeddedParagraph embed_paragraph(Paragraph const& p, EmbeddingTable const& emb);

    struct CorpusExtent {
        std::size_t max_clauses = 0;
        std::size_t max_words = 0;
    };

    CorpusExtent corpus_extent(Corpus const& corpus);

    struct FoldSplit {
        std::size_t k = 0;
        std::map<std::string, std::size_t> assignments;
        double validation_fraction = 0.1;
        std::uint64_t seed = 0;

        // Paragraph indices (into the corpus the split was made from).
        std::vector<std::size_t> test_indices(Corpus const& corpus, std::size_t fold) const;

        struct training_portion {
            std::vector<std::size_t> train;
            std::vector<std::size_t> validation;
        };

        // Remaining folds, with validation_fraction of them held out (at least
        // one paragraph when the portion has two or more).
        training_portion training_indices(Corpus const& corpus, std::size_t fold) const;
    };

    FoldSplit make_folds(Corpus const& corpus, std::size_t k, std::uint64_t seed,
        double validation_fraction = 0.1);

    Corpus select(Corpus const& corpus, std::vector<std::size_t> const& indices);

}

#endif
