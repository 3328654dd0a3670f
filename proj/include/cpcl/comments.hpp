#pragma once

#include "cpcl/core.hpp"
#include "cpcl/ingest.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpcl {

struct CleaningSummary {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped_dup = 0;
  std::size_t dropped_emoji = 0;
  std::size_t dropped_meaningless = 0;
  std::size_t dropped_level = 0;
};

/// NFKC normalization with surrounding whitespace trimmed.
std::string normalize_comment(std::string_view text);
/// True when every code point is an emoji or symbol (whitespace and joiners ignored).
bool is_emoji_only(std::string_view text);
/// True when the text contains at least one letter or CJK ideograph.
bool has_meaningful_char(std::string_view text);

/// Order-preserving cleaning: normalize, drop duplicates (first kept), drop emoji/symbol-only
/// comments, drop comments without any letter or CJK character, keep first-level comments.
std::vector<CommentRecord> clean_comments(const std::vector<CommentRecord>& raw,
                                          CleaningSummary* summary = nullptr);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<std::string> segment(std::string_view text) const = 0;
};

/// One token per code point; ASCII letter/digit runs stay whole; whitespace is dropped.
class CharSegmenter final : public Segmenter {
 public:
  std::vector<std::string> segment(std::string_view text) const override;
};

/// Character-mode segmentation of a non-empty string.
std::vector<std::string> segment(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocabulary();

  int index_of(const std::string& token) const;
  const std::string& token_at(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// UTF-8 text, one token per line; line number is the index.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  void add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Tokens with frequency >= min_freq ranked by (frequency desc, token asc), capped so the
/// vocabulary including PAD and UNK has at most max_size entries.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq,
                       std::size_t max_size);

/// Concatenates the tokens of up to `max_comments` comments (PAD between comments), then
/// truncates or pads to exactly `length` indices.
std::vector<int> encode_comment_batch(const std::vector<CommentRecord>& comments,
                                      const Vocabulary& vocab, std::size_t length = 128,
                                      std::size_t max_comments = 64,
                                      const Segmenter& segmenter = CharSegmenter{});

struct TextCnnParams {
  Mat embedding;              // |V| x e
  std::vector<int> widths;    // filter widths
  std::vector<Mat> filters;   // per width: n_filters x (width * e)
  std::vector<Vec> biases;    // per width: n_filters
  Mat head_w;                 // (n_widths * n_filters) x 2
  Vec head_b;                 // 2

  Eigen::Index embed_dim() const { return embedding.cols(); }
  Eigen::Index features() const { return head_w.rows(); }

  static TextCnnParams zeros(Eigen::Index vocab, Eigen::Index embed_dim,
                             const std::vector<int>& widths, Eigen::Index n_filters);
};

struct TextCnnCache {
  std::vector<int> indices;
  Vec features;                                   // pooled features after ReLU
  std::vector<std::vector<Eigen::Index>> argmax;  // per width, per filter: winning position
  Vec probs;
};

/// Returns (P(non-PCL), P(PCL)).
Vec textcnn_score(const std::vector<int>& indices, const TextCnnParams& p,
                  TextCnnCache* cache = nullptr);

struct TextCnnGrad {
  Mat embedding;
  std::vector<Mat> filters;
  std::vector<Vec> biases;
  Mat head_w;
  Vec head_b;
};

/// Parameter gradient given dL/dprobs.
TextCnnGrad textcnn_backward(const TextCnnCache& cache, const TextCnnParams& p,
                             const Vec& grad_probs);

}  // namespace cpcl
