#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tap/core.hpp"

namespace tap::retrieval {

/// A corpus entry: an embedding plus its reference captions. Captions are
/// stored raw; compare them through tokenize().
struct CaptionedSegment {
  std::string id;
  std::vector<double> embedding;
  std::vector<std::string> captions;
};

void validate_captioned_segment(const CaptionedSegment& s);

/// Lowercases and splits on whitespace.
std::vector<std::string> tokenize(const std::string& caption);

struct ScoredNeighbor {
  std::size_t index = 0;      // into the corpus
  double similarity = 0.0;    // cosine
};

/// Cosine-similarity nearest neighbors, descending, ties by lexicographic
/// id; returns min(k, corpus size) entries.
std::vector<ScoredNeighbor> knn_retrieve(
    std::span<const double> query,
    std::span<const CaptionedSegment> corpus, std::size_t k);

/// Mean of unigram F1 and bigram F1 over token multisets; the bigram term is
/// 0 when either sentence has fewer than two tokens.
double lexical_similarity(std::span<const std::string> s1,
                          std::span<const std::string> s2);

struct ConsensusResult {
  std::size_t index = 0;  // winning candidate position
  double score = 0.0;     // mean similarity to the other candidates
};

/// Scores each candidate by its mean lexical similarity to all others (a
/// single candidate scores 1) and returns the argmax, earliest on ties.
ConsensusResult consensus_rerank(
    std::span<const std::vector<std::string>> candidates);

/// Corpus JSON: [{"id": ..., "embedding": [...], "captions": ["...", ...]}].
std::vector<CaptionedSegment> read_caption_corpus(
    const std::filesystem::path& path);
void write_caption_corpus(std::span<const CaptionedSegment> corpus,
                          const std::filesystem::path& path);

}  // namespace tap::retrieval
