#include "tap/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>

namespace tap::retrieval {

namespace {

using nlohmann::json;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

using Counts = std::map<std::string, int>;

double multiset_f1(const Counts& a, int total_a, const Counts& b, int total_b) {
  int overlap = 0;
  for (const auto& [token, count] : a) {
    const auto it = b.find(token);
    if (it != b.end()) overlap += std::min(count, it->second);
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / total_a;
  const double r = static_cast<double>(overlap) / total_b;
  return 2.0 * p * r / (p + r);
}

Counts unigram_counts(std::span<const std::string> tokens) {
  Counts c;
  for (const auto& t : tokens) ++c[t];
  return c;
}

Counts bigram_counts(std::span<const std::string> tokens) {
  Counts c;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    ++c[tokens[i] + "\x1f" + tokens[i + 1]];
  }
  return c;
}

}  // namespace

void validate_captioned_segment(const CaptionedSegment& s) {
  if (s.id.empty()) throw ValidationError("captioned segment id is empty");
  if (s.embedding.empty()) {
    throw ValidationError("segment " + s.id + " has an empty embedding");
  }
  double sq = 0.0;
  for (double v : s.embedding) {
    if (!std::isfinite(v)) {
      throw ValidationError("segment " + s.id + " embedding is not finite");
    }
    sq += v * v;
  }
  if (sq == 0.0) {
    throw ValidationError("segment " + s.id + " embedding has zero norm");
  }
  if (s.captions.empty()) {
    throw ValidationError("segment " + s.id + " has no captions");
  }
  for (const auto& c : s.captions) {
    if (tokenize(c).empty()) {
      throw ValidationError("segment " + s.id + " has an empty caption");
    }
  }
}

std::vector<std::string> tokenize(const std::string& caption) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : caption) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<ScoredNeighbor> knn_retrieve(
    std::span<const double> query,
    std::span<const CaptionedSegment> corpus, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (corpus.empty()) throw ValidationError("retrieval corpus is empty");
  const double qn = norm(query);
  if (qn == 0.0) throw ValidationError("query embedding has zero norm");

  std::vector<ScoredNeighbor> ranked;
  ranked.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& seg = corpus[i];
    if (seg.embedding.size() != query.size()) {
      throw ValidationError("embedding dimension mismatch for segment " +
                            seg.id);
    }
    const double sim = dot(query, seg.embedding) / (qn * norm(seg.embedding));
    ranked.push_back({i, sim});
  }
  std::sort(ranked.begin(), ranked.end(),
            [&corpus](const ScoredNeighbor& a, const ScoredNeighbor& b) {
              if (a.similarity != b.similarity) return a.similarity > b.similarity;
              return corpus[a.index].id < corpus[b.index].id;
            });
  ranked.resize(std::min(k, ranked.size()));
  return ranked;
}

double lexical_similarity(std::span<const std::string> s1,
                          std::span<const std::string> s2) {
  if (s1.empty() || s2.empty()) {
    throw ValidationError("lexical similarity requires non-empty sentences");
  }
  const double uni =
      multiset_f1(unigram_counts(s1), static_cast<int>(s1.size()),
                  unigram_counts(s2), static_cast<int>(s2.size()));
  double bi = 0.0;
  if (s1.size() >= 2 && s2.size() >= 2) {
    bi = multiset_f1(bigram_counts(s1), static_cast<int>(s1.size()) - 1,
                     bigram_counts(s2), static_cast<int>(s2.size()) - 1);
  }
  return 0.5 * (uni + bi);
}

ConsensusResult consensus_rerank(
    std::span<const std::vector<std::string>> candidates) {
  if (candidates.empty()) {
    throw ValidationError("consensus reranking requires candidates");
  }
  if (candidates.size() == 1) return {0, 1.0};

  ConsensusResult best{0, -1.0};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      if (j == i) continue;
      sum += lexical_similarity(candidates[i], candidates[j]);
    }
    const double score = sum / static_cast<double>(candidates.size() - 1);
    if (score > best.score) best = {i, score};
  }
  return best;
}

std::vector<CaptionedSegment> read_caption_corpus(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw SchemaError(path.string() + ": corpus must be a JSON array");
  }
  std::vector<CaptionedSegment> corpus;
  for (const json& entry : doc) {
    if (!entry.is_object() || !entry.contains("id") ||
        !entry.contains("embedding") || !entry.contains("captions")) {
      throw SchemaError(path.string() +
                        ": entries need id, embedding and captions");
    }
    for (const auto& [key, value] : entry.items()) {
      if (key != "id" && key != "embedding" && key != "captions") {
        throw SchemaError(path.string() + ": unexpected key \"" + key + "\"");
      }
    }
    CaptionedSegment seg;
    seg.id = entry["id"].get<std::string>();
    for (const json& v : entry["embedding"]) {
      if (!v.is_number()) {
        throw SchemaError(path.string() + ": embeddings must be numeric");
      }
      seg.embedding.push_back(v.get<double>());
    }
    for (const json& c : entry["captions"]) {
      if (!c.is_string()) {
        throw SchemaError(path.string() + ": captions must be strings");
      }
      seg.captions.push_back(c.get<std::string>());
    }
    validate_captioned_segment(seg);
    corpus.push_back(std::move(seg));
  }
  return corpus;
}

void write_caption_corpus(std::span<const CaptionedSegment> corpus,
                          const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& seg : corpus) {
    validate_captioned_segment(seg);
    doc.push_back({{"id", seg.id},
                   {"embedding", seg.embedding},
                   {"captions", seg.captions}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump() << "\n";
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace tap::retrieval
