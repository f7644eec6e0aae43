#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "insight/error.hpp"
#include "insight/text_metrics.hpp"
#include "support/oracles.hpp"

using namespace insight;

namespace {

std::vector<std::string> random_tokens(std::mt19937& rng, std::size_t max_len) {
    static const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
    std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
    std::uniform_int_distribution<std::size_t> tok_dist(0, vocab.size() - 1);
    std::vector<std::string> tokens(len_dist(rng));
    for (auto& token : tokens) token = vocab[tok_dist(rng)];
    return tokens;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& token : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

std::vector<std::string> random_corpus(std::mt19937& rng, std::size_t min_sentences) {
    std::uniform_int_distribution<std::size_t> count_dist(min_sentences, min_sentences + 4);
    std::vector<std::string> corpus(count_dist(rng));
    for (auto& sentence : corpus) {
        auto tokens = random_tokens(rng, 8);
        if (tokens.empty()) tokens.push_back("a");
        sentence = join(tokens);
    }
    return corpus;
}

} // namespace

TEST_CASE("tokenize splits on non-alphanumeric runs and lowercases") {
    CHECK(metrics::tokenize("Tumor, invasion!") == metrics::TokenSequence{"tumor", "invasion"});
    CHECK(metrics::tokenize("").empty());
    CHECK(metrics::tokenize("pT1 pN1") == metrics::TokenSequence{"pt1", "pn1"});
    CHECK(metrics::tokenize("  --  ").empty());
    CHECK(metrics::tokenize("a,,b..c") == metrics::TokenSequence{"a", "b", "c"});
}

TEST_CASE("rouge1 matches the worked examples") {
    CHECK(metrics::rouge1("a b c", "a b c") == doctest::Approx(1.0));
    CHECK(metrics::rouge1("a b", "c d") == 0.0);
    CHECK(metrics::rouge1("tumor invasion present", "tumor invasion absent") ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(metrics::rouge1("", "a") == 0.0);
    CHECK(metrics::rouge1("a", "") == 0.0);
}

TEST_CASE("rouge1 is symmetric, bounded, and 1 on identity") {
    std::mt19937 rng(7);
    for (int i = 0; i < 200; ++i) {
        const auto a = join(random_tokens(rng, 12));
        const auto b = join(random_tokens(rng, 12));
        const double ab = metrics::rouge1(a, b);
        const double ba = metrics::rouge1(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-15));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (!a.empty()) CHECK(metrics::rouge1(a, a) == doctest::Approx(1.0));
    }
}

TEST_CASE("rouge1 agrees exactly with the brute-force oracle") {
    std::mt19937 rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_tokens(rng, 12);
        const auto b = random_tokens(rng, 12);
        CHECK(metrics::rouge1(join(a), join(b)) == testing::oracle_rouge1(a, b));
    }
}

TEST_CASE("avg_tfidf_cosine worked examples") {
    CHECK(metrics::avg_tfidf_cosine({"a b", "a b"}) == doctest::Approx(1.0));
    CHECK(metrics::avg_tfidf_cosine({"a", "b"}) == doctest::Approx(0.0));
    const std::vector<std::string> corpus = {"a b", "a c", "d e"};
    CHECK(metrics::avg_tfidf_cosine(corpus) ==
          doctest::Approx(testing::oracle_tfidf_cosine(corpus)).epsilon(1e-12));
    CHECK_THROWS_WITH_AS(metrics::avg_tfidf_cosine({"a"}),
                         doctest::Contains("insufficient corpus"), Error);
}

TEST_CASE("avg_tfidf_cosine is invariant under sentence reordering") {
    std::mt19937 rng(13);
    for (int i = 0; i < 25; ++i) {
        auto corpus = random_corpus(rng, 3);
        const double before = metrics::avg_tfidf_cosine(corpus);
        std::shuffle(corpus.begin(), corpus.end(), rng);
        CHECK(metrics::avg_tfidf_cosine(corpus) == doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("self_bleu worked examples") {
    CHECK(metrics::self_bleu({"a b c d", "a b c d"}) == doctest::Approx(1.0));
    // Token-disjoint sentences: only the smoothing floor contributes.
    CHECK(metrics::self_bleu({"a b c d", "e f g h"}) < 0.1);
    CHECK(metrics::self_bleu({"a b c", "d e f"}) < 0.1);
    CHECK_THROWS_WITH_AS(metrics::self_bleu({"a b"}), doctest::Contains("insufficient corpus"),
                         Error);
}

TEST_CASE("self_bleu of k identical sentences is 1") {
    for (std::size_t k = 2; k <= 6; ++k) {
        const std::vector<std::string> corpus(k, "nuclear atypia with frequent mitoses");
        CHECK(metrics::self_bleu(corpus) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("self_bleu agrees with the brute-force oracle") {
    std::mt19937 rng(17);
    for (int i = 0; i < 50; ++i) {
        const auto corpus = random_corpus(rng, 2);
        CHECK(metrics::self_bleu(corpus) ==
              doctest::Approx(testing::oracle_self_bleu(corpus)).epsilon(1e-9));
    }
}

TEST_CASE("distinct2 worked examples") {
    CHECK(metrics::distinct2({"a b c", "a b d"}) == doctest::Approx(0.75));
    CHECK(metrics::distinct2({"a b"}) == doctest::Approx(1.0));
    CHECK_THROWS_WITH_AS(metrics::distinct2({"a", "b", "c"}),
                         doctest::Contains("insufficient tokens"), Error);
}

TEST_CASE("distinct2 is 1 iff no bigram repeats; duplication halves it") {
    std::mt19937 rng(19);
    for (int i = 0; i < 50; ++i) {
        // distinct sentences over disjoint token ranges -> all bigrams unique
        std::vector<std::string> corpus;
        int counter = 0;
        const std::size_t sentences = 2 + static_cast<std::size_t>(rng() % 4);
        for (std::size_t s = 0; s < sentences; ++s) {
            std::string sentence;
            const std::size_t len = 2 + rng() % 5;
            for (std::size_t t = 0; t < len; ++t) {
                if (!sentence.empty()) sentence.push_back(' ');
                sentence += "tok" + std::to_string(counter++);
            }
            corpus.push_back(sentence);
        }
        CHECK(metrics::distinct2(corpus) == doctest::Approx(1.0));

        auto doubled = corpus;
        doubled.insert(doubled.end(), corpus.begin(), corpus.end());
        CHECK(metrics::distinct2(doubled) == doctest::Approx(0.5));
    }
}

TEST_CASE("redundancy_report bundles the three metrics") {
    const auto report = metrics::redundancy_report({"a b c", "a b c"});
    CHECK(report.tfidf_cosine == doctest::Approx(1.0));
    CHECK(report.self_bleu == doctest::Approx(1.0));
    CHECK(report.distinct2 == doctest::Approx(0.5));
    CHECK(report.sentence_count == 2);

    const auto disjoint = metrics::redundancy_report({"a b", "c d"});
    CHECK(disjoint.tfidf_cosine == doctest::Approx(0.0));

    const std::vector<std::string> mixed = {"a b c", "a c d", "e f"};
    const auto combined = metrics::redundancy_report(mixed);
    CHECK(combined.tfidf_cosine == doctest::Approx(metrics::avg_tfidf_cosine(mixed)));
    CHECK(combined.self_bleu == doctest::Approx(metrics::self_bleu(mixed)));
    CHECK(combined.distinct2 == doctest::Approx(metrics::distinct2(mixed)));
}
