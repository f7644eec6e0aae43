#include "insight/text_metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "insight/error.hpp"

namespace insight::metrics {

namespace {

constexpr double kBleuEpsilon = 0.1; // numerator floor for zero-count orders
constexpr int kBleuMaxOrder = 4;

std::unordered_map<std::string, int> unigram_counts(const TokenSequence& tokens) {
    std::unordered_map<std::string, int> counts;
    for (const auto& t : tokens) ++counts[t];
    return counts;
}

// N-grams are keyed by joining tokens with a separator that tokenize() can
// never emit.
std::string ngram_key(const TokenSequence& tokens, std::size_t start, int order) {
    std::string key = tokens[start];
    for (int k = 1; k < order; ++k) {
        key.push_back('\x1f');
        key += tokens[start + static_cast<std::size_t>(k)];
    }
    return key;
}

std::unordered_map<std::string, int> ngram_counts(const TokenSequence& tokens, int order) {
    std::unordered_map<std::string, int> counts;
    if (static_cast<int>(tokens.size()) < order) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= tokens.size(); ++i) {
        ++counts[ngram_key(tokens, i, order)];
    }
    return counts;
}

// Highest and second-highest per-sentence count of one n-gram, so the
// reference maximum excluding any single sentence is available in O(1).
struct Top2 {
    int best = 0;
    int best_owner = -1;
    int second = 0;

    void update(int owner, int count) {
        if (count > best) {
            second = best;
            best = count;
            best_owner = owner;
        } else if (count > second) {
            second = count;
        }
    }

    int max_excluding(int owner) const { return owner == best_owner ? second : best; }
};

void require_corpus(const std::vector<std::string>& sentences) {
    if (sentences.size() < 2) throw Error("insufficient corpus: need at least 2 sentences");
}

} // namespace

TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    std::string current;
    for (char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

double rouge1(std::string_view a, std::string_view b) {
    const TokenSequence ta = tokenize(a);
    const TokenSequence tb = tokenize(b);
    if (ta.empty() || tb.empty()) return 0.0;

    const auto ca = unigram_counts(ta);
    const auto cb = unigram_counts(tb);
    long overlap = 0;
    for (const auto& [token, count] : ca) {
        const auto it = cb.find(token);
        if (it != cb.end()) overlap += std::min(count, it->second);
    }
    if (overlap == 0) return 0.0;

    const double precision = static_cast<double>(overlap) / static_cast<double>(tb.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(ta.size());
    return 2.0 * precision * recall / (precision + recall);
}

double avg_tfidf_cosine(const std::vector<std::string>& sentences) {
    require_corpus(sentences);
    const std::size_t n = sentences.size();

    std::vector<std::unordered_map<std::string, int>> tf(n);
    std::unordered_map<std::string, int> df;
    for (std::size_t i = 0; i < n; ++i) {
        tf[i] = unigram_counts(tokenize(sentences[i]));
        for (const auto& [token, count] : tf[i]) ++df[token];
    }

    std::vector<std::map<std::string, double>> vectors(n);
    std::vector<double> norms(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& [token, count] : tf[i]) {
            const double idf =
                std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(df[token]))) + 1.0;
            const double weight = static_cast<double>(count) * idf;
            vectors[i][token] = weight;
            norms[i] += weight * weight;
        }
        norms[i] = std::sqrt(norms[i]);
    }

    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (norms[i] == 0.0 || norms[j] == 0.0) continue; // cosine defined as 0
            const auto& small = vectors[i].size() <= vectors[j].size() ? vectors[i] : vectors[j];
            const auto& large = vectors[i].size() <= vectors[j].size() ? vectors[j] : vectors[i];
            double dot = 0.0;
            for (const auto& [token, weight] : small) {
                const auto it = large.find(token);
                if (it != large.end()) dot += weight * it->second;
            }
            sum += dot / (norms[i] * norms[j]);
        }
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double self_bleu(const std::vector<std::string>& sentences) {
    require_corpus(sentences);
    const std::size_t n = sentences.size();

    std::vector<TokenSequence> tokens(n);
    for (std::size_t i = 0; i < n; ++i) tokens[i] = tokenize(sentences[i]);

    // Per order, the top-2 per-sentence counts of every n-gram in the corpus.
    std::array<std::unordered_map<std::string, Top2>, kBleuMaxOrder> reference_tops;
    for (std::size_t i = 0; i < n; ++i) {
        for (int order = 1; order <= kBleuMaxOrder; ++order) {
            for (const auto& [gram, count] : ngram_counts(tokens[i], order)) {
                reference_tops[static_cast<std::size_t>(order - 1)][gram].update(
                    static_cast<int>(i), count);
            }
        }
    }

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto length = static_cast<int>(tokens[i].size());
        if (length == 0) continue; // empty hypothesis scores 0

        const int orders = std::min(kBleuMaxOrder, length);
        double log_sum = 0.0;
        for (int order = 1; order <= orders; ++order) {
            const auto& tops = reference_tops[static_cast<std::size_t>(order - 1)];
            long matched = 0;
            long total_ngrams = 0;
            for (const auto& [gram, count] : ngram_counts(tokens[i], order)) {
                total_ngrams += count;
                const auto it = tops.find(gram);
                const int ref_max = it == tops.end() ? 0 : it->second.max_excluding(static_cast<int>(i));
                matched += std::min(count, ref_max);
            }
            const double precision =
                matched > 0 ? static_cast<double>(matched) / static_cast<double>(total_ngrams)
                            : kBleuEpsilon / static_cast<double>(total_ngrams);
            log_sum += std::log(precision) / orders;
        }

        // Closest reference length; ties resolved toward the shorter reference.
        int closest = -1;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto ref_len = static_cast<int>(tokens[j].size());
            if (closest < 0 || std::abs(ref_len - length) < std::abs(closest - length) ||
                (std::abs(ref_len - length) == std::abs(closest - length) && ref_len < closest)) {
                closest = ref_len;
            }
        }
        const double brevity =
            length >= closest ? 1.0
                              : std::exp(1.0 - static_cast<double>(closest) / static_cast<double>(length));
        total += brevity * std::exp(log_sum);
    }
    return total / static_cast<double>(n);
}

double distinct2(const std::vector<std::string>& sentences) {
    std::unordered_set<std::string> unique;
    long total = 0;
    for (const auto& sentence : sentences) {
        const TokenSequence toks = tokenize(sentence);
        for (std::size_t i = 0; i + 2 <= toks.size(); ++i) {
            unique.insert(ngram_key(toks, i, 2));
            ++total;
        }
    }
    if (total == 0) throw Error("insufficient tokens: corpus contains no bigrams");
    return static_cast<double>(unique.size()) / static_cast<double>(total);
}

RedundancyReport redundancy_report(const std::vector<std::string>& sentences) {
    RedundancyReport report;
    report.tfidf_cosine = avg_tfidf_cosine(sentences);
    report.self_bleu = self_bleu(sentences);
    report.distinct2 = distinct2(sentences);
    report.sentence_count = sentences.size();
    return report;
}

} // namespace insight::metrics
