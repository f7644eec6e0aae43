#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace insight::metrics {

// Lowercased tokens, split on maximal runs of non-alphanumeric characters.
using TokenSequence = std::vector<std::string>;

TokenSequence tokenize(std::string_view text);

// Unigram-overlap F-measure with clipped counts. Symmetric; 0 when either
// side is empty or nothing overlaps.
double rouge1(std::string_view a, std::string_view b);

// Mean pairwise cosine of TF-IDF vectors over the corpus.
// tf = raw count, idf = ln((1+N)/(1+df)) + 1. Needs >= 2 sentences.
double avg_tfidf_cosine(const std::vector<std::string>& sentences);

// Mean BLEU of each sentence against the rest of the corpus. Uniform weights
// over orders 1..min(4, hypothesis length); clipped modified precision with
// epsilon smoothing (0.1) on zero-count orders; brevity penalty against the
// closest reference length. Needs >= 2 sentences.
double self_bleu(const std::vector<std::string>& sentences);

// Unique within-sentence bigrams / total within-sentence bigrams.
double distinct2(const std::vector<std::string>& sentences);

struct RedundancyReport {
    double tfidf_cosine = 0.0;
    double self_bleu = 0.0;
    double distinct2 = 0.0;
    std::size_t sentence_count = 0;
};

RedundancyReport redundancy_report(const std::vector<std::string>& sentences);

} // namespace insight::metrics
