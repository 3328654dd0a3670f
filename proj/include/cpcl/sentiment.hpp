#pragma once

#include "cpcl/core.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cpcl {

enum class Polarity { negative = 0, neutral = 1, positive = 2 };

Polarity parse_polarity(std::string_view s);
std::string to_string(Polarity p);

struct SentimentTriple {
  std::string attribute;
  std::string sentiment_word;
  Polarity polarity = Polarity::neutral;

  /// Text that gets embedded for matching: "attribute sentiment_word".
  std::string text() const { return attribute + " " + sentiment_word; }
};

/// Maps text to a fixed-size vector. Implementations must be deterministic.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vec embed(std::string_view text) const = 0;
};

/// Signed feature hashing of code-point 1..3-grams (whitespace removed), L2-normalized.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(Eigen::Index dim = 64, int max_ngram = 3)
      : dim_(dim), max_ngram_(max_ngram) {}
  Eigen::Index dim() const override { return dim_; }
  Vec embed(std::string_view text) const override;

 private:
  Eigen::Index dim_;
  int max_ngram_;
};

/// Immutable triple store with one embedding row per triple, in file order.
struct SkgStore {
  std::vector<SentimentTriple> triples;
  Mat embeddings;  // n x e_s

  std::size_t size() const { return triples.size(); }
};

/// TSV `attribute<TAB>sentiment_word<TAB>polarity`. Blank lines are skipped.
SkgStore load_skg(const std::filesystem::path& path, const Embedder& embedder);
SkgStore make_skg(std::vector<SentimentTriple> triples, const Embedder& embedder);

struct TripleMatch {
  std::size_t index = 0;  // position in the store
  double similarity = 0.0;
};

double cosine_similarity(const Vec& a, const Vec& b);

/// Top-k triples by cosine similarity to an already embedded comment, keeping only
/// similarity >= threshold. Ties are broken by store order.
std::vector<TripleMatch> match_embedding(const Vec& comment_embedding, const SkgStore& store,
                                         std::size_t k = 3, double threshold = 0.35);

/// Joins the tokens, embeds them and matches against the store.
std::vector<TripleMatch> match_triples(const std::vector<std::string>& comment_tokens,
                                       const SkgStore& store, const Embedder& embedder,
                                       std::size_t k = 3, double threshold = 0.35);

struct SentimentHeadParams {
  double alpha_kg = 0.5;  // kept in [0, 1]
  Mat w1;                 // e_s x hidden
  Vec b1;
  Mat w2;  // hidden x 3
  Vec b2;

  static SentimentHeadParams zeros(Eigen::Index embed_dim, Eigen::Index hidden = 32);
};

struct SentimentCache {
  Vec comment;
  Vec knowledge;  // similarity-weighted mean of matched triple embeddings (or zeros)
  Vec enhanced;
  Vec hidden;
  Vec probs;
};

/// Mean of matched triple embeddings weighted by similarity; zeros when nothing matched.
Vec knowledge_vector(const std::vector<TripleMatch>& matches, const SkgStore& store,
                     Eigen::Index dim);

/// (1 - alpha) * comment + alpha * knowledge -> ReLU MLP -> softmax over
/// {negative, neutral, positive}.
Vec integrate_and_score(const Vec& comment_embedding, const Vec& knowledge,
                        const SentimentHeadParams& p, SentimentCache* cache = nullptr);

/// Same as above with the knowledge vector built from `matches`.
Vec integrate_and_score(const Vec& comment_embedding, const std::vector<TripleMatch>& matches,
                        const SkgStore& store, const SentimentHeadParams& p,
                        SentimentCache* cache = nullptr);

struct SentimentHeadGrad {
  double alpha_kg = 0.0;
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

SentimentHeadGrad integrate_and_score_backward(const SentimentCache& cache,
                                               const SentimentHeadParams& p,
                                               const Vec& grad_probs);

}  // namespace cpcl
