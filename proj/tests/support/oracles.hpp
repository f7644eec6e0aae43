#pragma once

// Brute-force reference implementations, kept deliberately naive and
// independent of src/text_metrics.cpp so they can serve as oracles.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "insight/text_metrics.hpp"

namespace insight::testing {

inline double oracle_rouge1(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0.0;
    std::set<std::string> vocab(a.begin(), a.end());
    long overlap = 0;
    for (const auto& token : vocab) {
        long count_a = 0;
        long count_b = 0;
        for (const auto& t : a) count_a += t == token ? 1 : 0;
        for (const auto& t : b) count_b += t == token ? 1 : 0;
        overlap += std::min(count_a, count_b);
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(b.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(a.size());
    return 2.0 * precision * recall / (precision + recall);
}

inline double oracle_tfidf_cosine(const std::vector<std::string>& sentences) {
    const std::size_t n = sentences.size();
    std::vector<std::vector<std::string>> tokens(n);
    std::set<std::string> vocab;
    for (std::size_t i = 0; i < n; ++i) {
        tokens[i] = metrics::tokenize(sentences[i]);
        vocab.insert(tokens[i].begin(), tokens[i].end());
    }
    const std::vector<std::string> terms(vocab.begin(), vocab.end());

    // dense tf-idf vectors over the full vocabulary
    std::vector<std::vector<double>> vectors(n, std::vector<double>(terms.size(), 0.0));
    for (std::size_t t = 0; t < terms.size(); ++t) {
        long df = 0;
        for (std::size_t i = 0; i < n; ++i) {
            bool present = false;
            for (const auto& token : tokens[i]) present = present || token == terms[t];
            df += present ? 1 : 0;
        }
        const double idf =
            std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(df))) + 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            long tf = 0;
            for (const auto& token : tokens[i]) tf += token == terms[t] ? 1 : 0;
            vectors[i][t] = static_cast<double>(tf) * idf;
        }
    }

    double sum = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            double norm_i = 0.0;
            double norm_j = 0.0;
            for (std::size_t t = 0; t < terms.size(); ++t) {
                dot += vectors[i][t] * vectors[j][t];
                norm_i += vectors[i][t] * vectors[i][t];
                norm_j += vectors[j][t] * vectors[j][t];
            }
            ++pairs;
            if (norm_i > 0.0 && norm_j > 0.0) sum += dot / (std::sqrt(norm_i) * std::sqrt(norm_j));
        }
    }
    return sum / static_cast<double>(pairs);
}

inline std::map<std::vector<std::string>, int> oracle_ngrams(const std::vector<std::string>& tokens,
                                                             int order) {
    std::map<std::vector<std::string>, int> counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= tokens.size(); ++i) {
        counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                        tokens.begin() + static_cast<long>(i) + order)]++;
    }
    return counts;
}

inline double oracle_self_bleu(const std::vector<std::string>& sentences) {
    const std::size_t n = sentences.size();
    std::vector<std::vector<std::string>> tokens(n);
    for (std::size_t i = 0; i < n; ++i) tokens[i] = metrics::tokenize(sentences[i]);

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto length = static_cast<int>(tokens[i].size());
        if (length == 0) continue;
        const int orders = std::min(4, length);

        double log_sum = 0.0;
        for (int order = 1; order <= orders; ++order) {
            const auto hyp_counts = oracle_ngrams(tokens[i], order);
            long matched = 0;
            long total_ngrams = 0;
            for (const auto& [gram, count] : hyp_counts) {
                total_ngrams += count;
                int best_ref = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const auto ref_counts = oracle_ngrams(tokens[j], order);
                    const auto it = ref_counts.find(gram);
                    if (it != ref_counts.end()) best_ref = std::max(best_ref, it->second);
                }
                matched += std::min<long>(count, best_ref);
            }
            const double precision =
                matched > 0 ? static_cast<double>(matched) / static_cast<double>(total_ngrams)
                            : 0.1 / static_cast<double>(total_ngrams);
            log_sum += std::log(precision) / orders;
        }

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

} // namespace insight::testing
