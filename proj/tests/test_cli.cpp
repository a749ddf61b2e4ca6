#include "doctest.h"

#include "cli.hpp"
#include "synthetic.hpp"
#include "scidt/eval.hpp"
#include "scidt/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace scidt;
using namespace scidt::testing;
namespace fs = std::filesystem;

namespace {

    struct Result {
        int code;
        std::string out;
        std::string err;
    };

    Result run(std::vector<std::string> const& args)
    {
        std::ostringstream out, err;
        int code = cli::run(args, out, err);
        return {code, out.str(), err.str()};
    }

    std::string slurp(std::string const& path)
    {
        std::ifstream ifs(path, std::ios::binary);
        return {std::istreambuf_iterator<char>(ifs), std::istreambuf_iterator<char>()};
    }

    // Synthetic corpora and vectors written once for the whole file.
    struct Workspace {
        std::string dir = temp_dir("cli");
        std::string corpus = dir + "/cue.txt";
        std::string position = dir + "/position.txt";
        std::string vectors = dir + "/vectors.txt";
        std::string narrow = dir + "/narrow.txt";

        Workspace()
        {
            auto cue = make_cue_corpus(10, 21);
            auto pos = make_position_corpus(20, 22);
            save_corpus(corpus, cue);
            save_corpus(position, pos);
            auto rows = embedding_rows({&cue, &pos}, 12, 23);
            std::ofstream v(vectors);
            write_embeddings(v, rows.tokens, rows.vectors);
            auto small = embedding_rows({&cue}, 5, 24);
            std::ofstream n(narrow);
            write_embeddings(n, small.tokens, small.vectors);
        }

        std::vector<std::string> fast_train(std::string const& variant, std::string const& out) const
        {
            return {"train", "--variant", variant, "--corpus", corpus, "--emb", vectors, "--out", out,
                "--epochs", "150", "--patience", "150", "--lr", "0.02", "--dropout", "0", "--batch", "2",
                "--proj", "8", "--hidden", "12", "--validation", "0", "--seed", "3"};
        }

        std::string const& recurrent_model()
        {
            if (recurrent.empty()) {
                recurrent = dir + "/rec";
                REQUIRE(run(fast_train("recurrent", recurrent)).code == 0);
            }
            return recurrent;
        }

        std::string recurrent;
    };

    Workspace& ws()
    {
        static Workspace w;
        return w;
    }

}

TEST_CASE("train writes a model directory, log and resolved config")
{
    auto& w = ws();
    auto const& dir = w.recurrent_model();
    CHECK(Manifest::read(dir + "/manifest").get("variant") == "recurrent");
    CHECK(fs::exists(dir + "/weights"));
    CHECK(slurp(dir + "/train_log.csv").rfind("epoch,train_loss,val_accuracy,best_so_far\n", 0) == 0);
    auto ini = slurp(dir + "/run.ini");
    CHECK(ini.find("train.variant=\"recurrent\"") != std::string::npos);
    CHECK(ini.find("train.seed=3") != std::string::npos);
    CHECK(ini.find("train.dropout=0") != std::string::npos);
}

TEST_CASE("a saved run config reproduces the model bit for bit")
{
    auto& w = ws();
    auto const& dir = w.recurrent_model();
    auto again = w.dir + "/rec-again";
    REQUIRE(run({"--config", dir + "/run.ini", "train", "--out", again}).code == 0);
    CHECK(slurp(dir + "/weights") == slurp(again + "/weights"));
    CHECK(slurp(dir + "/train_log.csv") == slurp(again + "/train_log.csv"));
}

TEST_CASE("crf variant routes to the CRF trainer")
{
    auto& w = ws();
    auto dir = w.dir + "/crf";
    auto r = run({"train", "--variant", "crf", "--corpus", w.corpus, "--out", dir, "--epochs", "20"});
    CHECK(r.code == 0);
    CHECK(Manifest::read(dir + "/manifest").get("format") == "scidt-crf");
    auto tagged = w.dir + "/crf-tagged.txt";
    CHECK(run({"tag", "--model", dir, "--corpus", w.corpus, "--out", tagged}).code == 0);
    CHECK(load_corpus(tagged).size() == load_corpus(w.corpus).size());
}

TEST_CASE("usage errors exit with 2")
{
    auto& w = ws();
    auto missing = w.dir + "/no-such-vectors.txt";
    auto r = run({"train", "--corpus", w.corpus, "--emb", missing, "--out", w.dir + "/x"});
    CHECK(r.code == 2);
    CHECK(r.err.find(missing) != std::string::npos);
    CHECK(run({"train", "--corpus", w.corpus}).code == 2);
    CHECK(run({"train", "--corpus", w.corpus, "--emb", w.vectors, "--out", w.dir + "/x", "--variant", "lstm"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("tagging the training corpus of an overfit model reproduces gold labels")
{
    auto& w = ws();
    auto out = w.dir + "/tagged.txt";
    auto probs = w.dir + "/probs.tsv";
    auto r = run({"tag", "--model", w.recurrent_model(), "--corpus", w.corpus, "--emb", w.vectors,
        "--out", out, "--probs", probs});
    REQUIRE(r.code == 0);
    auto gold = load_corpus(w.corpus);
    auto tagged = load_corpus(out);   // re-parses
    REQUIRE(tagged.size() == gold.size());
    for (std::size_t p = 0; p < gold.size(); ++p) {
        CHECK(tagged[p].id == gold[p].id);
        for (std::size_t i = 0; i < gold[p].clauses.size(); ++i) {
            CHECK(tagged[p].clauses[i].gold == gold[p].clauses[i].gold);
            CHECK(tagged[p].clauses[i].raw_text == gold[p].clauses[i].raw_text);
        }
    }

    std::istringstream tsv(slurp(probs));
    std::string line;
    std::getline(tsv, line);
    CHECK(line.rfind("paragraph\tclause\tpred\tgoal", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(tsv, line)) {
        std::istringstream fields(line);
        std::string id, clause, pred;
        fields >> id >> clause >> pred;
        double sum = 0.0, v = 0.0;
        while (fields >> v) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-9);
        ++rows;
    }
    CHECK(rows == clause_total(gold));
}

TEST_CASE("an empty input file gives empty output")
{
    auto& w = ws();
    auto empty = w.dir + "/empty.txt";
    std::ofstream(empty).close();
    auto out = w.dir + "/empty-out.txt";
    auto r = run({"tag", "--model", w.recurrent_model(), "--corpus", empty, "--emb", w.vectors, "--out", out});
    CHECK(r.code == 0);
    CHECK(fs::exists(out));
    CHECK(fs::file_size(out) == 0);
}

TEST_CASE("model mismatch exits with 3")
{
    auto& w = ws();
    auto r = run({"tag", "--model", w.recurrent_model(), "--corpus", w.corpus, "--emb", w.narrow});
    CHECK(r.code == 3);
    CHECK(!r.err.empty());
}

TEST_CASE("eval prints accuracy and writes reports")
{
    auto& w = ws();
    auto dir = w.dir + "/eval";
    auto r = run({"eval", "--gold", w.corpus, "--pred", w.corpus, "--out", dir});
    CHECK(r.code == 0);
    CHECK(r.out.find("accuracy 1\n") != std::string::npos);
    std::ifstream csv(dir + "/report.csv");
    CHECK(read_report_csv(csv).accuracy == 1.0);

    auto unlabeled = w.dir + "/unlabeled.txt";
    std::ofstream(unlabeled) << "#id: u\n\tno label here\n";
    CHECK(run({"eval", "--gold", unlabeled, "--pred", unlabeled}).code == 2);
}

TEST_CASE("cv with a fixed seed is reproducible")
{
    auto& w = ws();
    auto cv = [&](std::string const& variant, std::string const& out) {
        return run({"cv", "--variant", variant, "--corpus", w.corpus, "--emb", w.vectors, "--out", out,
            "--k", "5", "--seed", "7", "--epochs", "5", "--proj", "6", "--hidden", "6"});
    };
    REQUIRE(cv("simple", w.dir + "/cv1").code == 0);
    REQUIRE(cv("simple", w.dir + "/cv2").code == 0);
    for (auto const* f : {"pooled.csv", "fold1.csv", "fold5.csv", "predictions.csv", "summary.csv"}) {
        CHECK(slurp(w.dir + "/cv1/" + f) == slurp(w.dir + "/cv2/" + f));
    }
    CHECK(cv("none", w.dir + "/cv-none").code == 0);

    std::ifstream preds(w.dir + "/cv1/predictions.csv");
    auto rows = read_predictions_csv(preds);
    std::size_t hit = 0;
    for (auto const& r : rows) hit += r.gold == r.pred;
    std::ifstream pooled(w.dir + "/cv1/pooled.csv");
    CHECK(read_report_csv(pooled).accuracy == static_cast<double>(hit) / rows.size());
}

TEST_CASE("attention export")
{
    auto& w = ws();
    auto dir = w.dir + "/att";
    auto probe = w.dir + "/probe.txt";
    std::ofstream(probe) << "#id: one\ngoal\tinvestigating\nmethod\tw1 using w2\n";
    REQUIRE(run({"attention", "--model", w.recurrent_model(), "--corpus", probe, "--emb", w.vectors, "--out", dir}).code == 0);
    CHECK(fs::exists(dir + "/attention.html"));
    CHECK(slurp(dir + "/attention.html").find("investigating") != std::string::npos);

    std::istringstream tsv(slurp(dir + "/attention.tsv"));
    std::string line;
    std::getline(tsv, line);
    CHECK(line == "paragraph\tclause\tword\ttoken\tweight");
    std::map<std::string, double> sums;
    std::map<std::string, int> words;
    while (std::getline(tsv, line)) {
        std::istringstream fields(line);
        std::string id, clause, word, token;
        double weight = 0.0;
        fields >> id >> clause >> word >> token >> weight;
        sums[id + "/" + clause] += weight;
        ++words[id + "/" + clause];
    }
    CHECK(sums.size() == 2);
    for (auto const& [k, s] : sums) CHECK(std::abs(s - 1.0) < 1e-6);
    CHECK(words["one/0"] == 1);
    CHECK(sums["one/0"] == 1.0);
}

TEST_CASE("attention export needs an attention model")
{
    auto& w = ws();
    auto none = w.dir + "/none-model";
    REQUIRE(run({"train", "--variant", "none", "--corpus", w.corpus, "--emb", w.vectors, "--out", none,
        "--epochs", "2", "--proj", "4", "--hidden", "4"}).code == 0);
    auto r = run({"attention", "--model", none, "--corpus", w.corpus, "--emb", w.vectors, "--out", w.dir + "/att-none"});
    CHECK(r.code == 2);
    CHECK(r.err.find("attention") != std::string::npos);
}

TEST_CASE("stats")
{
    auto& w = ws();
    auto out = w.dir + "/stats.csv";
    REQUIRE(run({"stats", "--corpus", w.position, "--out", out}).code == 0);
    std::ifstream ifs(out);
    auto s = read_position_csv(ifs);
    CHECK(slurp(out).rfind("label,bucket1,bucket2,bucket3,bucket4,bucket5,clauses\n", 0) == 0);
    CHECK(s.prob[label_index(Label::implication)][4] > 0.9);
    CHECK(s.prob[label_index(Label::goal)][0] > 0.9);
    for (std::size_t l = 0; l < label_count; ++l) {
        if (!s.count[l]) continue;
        double sum = 0.0;
        for (double p : s.prob[l]) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    CHECK(fs::exists(out + ".run.ini"));
    auto r = run({"stats", "--corpus", w.position});
    CHECK(r.out.find("implication,") != std::string::npos);
}
