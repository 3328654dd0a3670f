#include "cpcl/comments.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_set>

namespace cpcl {

namespace {

template <typename F>
void for_each_code_point(std::string_view text, F&& fn) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto len = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < len) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, len, c);
    fn(c, text.substr(static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)));
  }
}

bool is_filler(UChar32 c) {
  // Whitespace, joiners and variation selectors carry no content of their own.
  return u_isUWhiteSpace(c) || c == 0x200D || c == 0x200C || (c >= 0xFE00 && c <= 0xFE0F) ||
         (c >= 0xE0020 && c <= 0xE007F);
}

bool is_emoji_or_symbol(UChar32 c) {
  const auto type = static_cast<UCharCategory>(u_charType(c));
  if (type == U_OTHER_SYMBOL || type == U_MODIFIER_SYMBOL) return true;
  if (u_hasBinaryProperty(c, UCHAR_EMOJI_PRESENTATION)) return true;
  if (u_hasBinaryProperty(c, UCHAR_EMOJI_MODIFIER)) return true;
  return u_hasBinaryProperty(c, UCHAR_REGIONAL_INDICATOR);
}

bool is_ascii_alnum(UChar32 c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

}  // namespace

std::string normalize_comment(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFKC normalizer unavailable");
  const auto src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfkc->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("NFKC normalization failed");
  std::string out;
  normalized.toUTF8String(out);

  // Trim Unicode whitespace on both ends.
  std::size_t begin = out.size(), end = 0;
  for_each_code_point(out, [&, pos = std::size_t{0}](UChar32 c, std::string_view bytes) mutable {
    if (!u_isUWhiteSpace(c)) {
      begin = std::min(begin, pos);
      end = pos + bytes.size();
    }
    pos += bytes.size();
  });
  return begin >= end ? std::string() : out.substr(begin, end - begin);
}

bool is_emoji_only(std::string_view text) {
  bool any_symbol = false;
  bool other = false;
  for_each_code_point(text, [&](UChar32 c, std::string_view) {
    if (is_filler(c)) return;
    if (is_emoji_or_symbol(c)) {
      any_symbol = true;
    } else {
      other = true;
    }
  });
  return any_symbol && !other;
}

bool has_meaningful_char(std::string_view text) {
  bool found = false;
  for_each_code_point(text, [&](UChar32 c, std::string_view) {
    if (u_isalpha(c) || u_hasBinaryProperty(c, UCHAR_IDEOGRAPHIC)) found = true;
  });
  return found;
}

std::vector<CommentRecord> clean_comments(const std::vector<CommentRecord>& raw,
                                          CleaningSummary* summary) {
  CleaningSummary sum;
  sum.input = raw.size();
  std::unordered_set<std::string> seen;
  std::vector<CommentRecord> out;
  for (const auto& rec : raw) {
    CommentRecord c{normalize_comment(rec.text), rec.level};
    if (!seen.insert(c.text).second) {
      ++sum.dropped_dup;
      continue;
    }
    if (is_emoji_only(c.text)) {
      ++sum.dropped_emoji;
      continue;
    }
    if (!has_meaningful_char(c.text)) {
      ++sum.dropped_meaningless;
      continue;
    }
    if (c.level != 1) {
      ++sum.dropped_level;
      continue;
    }
    out.push_back(std::move(c));
  }
  sum.kept = out.size();
  if (summary) *summary = sum;
  return out;
}

std::vector<std::string> CharSegmenter::segment(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string run;
  for_each_code_point(text, [&](UChar32 c, std::string_view bytes) {
    if (is_ascii_alnum(c)) {
      run.append(bytes);
      return;
    }
    if (!run.empty()) tokens.push_back(std::exchange(run, {}));
    if (!u_isUWhiteSpace(c)) tokens.emplace_back(bytes);
  });
  if (!run.empty()) tokens.push_back(std::move(run));
  return tokens;
}

std::vector<std::string> segment(std::string_view text) {
  require(!text.empty(), "segment: empty string");
  return CharSegmenter{}.segment(text);
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::index_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw ParseError("vocabulary must start with <pad> and <unk>", 1);
  }
  Vocabulary v;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) throw ParseError("empty vocabulary token", i + 1);
    const auto before = v.size();
    v.add(lines[i]);
    if (v.size() == before) throw ParseError("duplicate vocabulary token", i + 1);
  }
  return v;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq,
                       std::size_t max_size) {
  require(max_size >= 2, "build_vocab: max_size must be >= 2");
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : corpus) {
    for (const auto& t : doc) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : freq) {
    if (n >= min_freq && tok != Vocabulary::kPadToken && tok != Vocabulary::kUnkToken) {
      ranked.emplace_back(tok, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (v.size() >= max_size) break;
    v.add(tok);
  }
  return v;
}

std::vector<int> encode_comment_batch(const std::vector<CommentRecord>& comments,
                                      const Vocabulary& vocab, std::size_t length,
                                      std::size_t max_comments, const Segmenter& segmenter) {
  require(length >= 1, "encode_comment_batch: length must be positive");
  std::vector<int> out;
  out.reserve(length);
  const std::size_t n = std::min(comments.size(), max_comments);
  for (std::size_t i = 0; i < n && out.size() < length; ++i) {
    if (i > 0) out.push_back(Vocabulary::kPad);
    for (const auto& tok : segmenter.segment(comments[i].text)) {
      if (out.size() >= length) break;
      out.push_back(vocab.index_of(tok));
    }
  }
  out.resize(length, Vocabulary::kPad);
  return out;
}

TextCnnParams TextCnnParams::zeros(Eigen::Index vocab, Eigen::Index embed_dim,
                                   const std::vector<int>& widths, Eigen::Index n_filters) {
  TextCnnParams p;
  p.embedding = Mat::Zero(vocab, embed_dim);
  p.widths = widths;
  for (int w : widths) {
    p.filters.push_back(Mat::Zero(n_filters, w * embed_dim));
    p.biases.push_back(Vec::Zero(n_filters));
  }
  p.head_w = Mat::Zero(static_cast<Eigen::Index>(widths.size()) * n_filters, 2);
  p.head_b = Vec::Zero(2);
  return p;
}

Vec textcnn_score(const std::vector<int>& indices, const TextCnnParams& p, TextCnnCache* cache) {
  const auto len = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index e = p.embed_dim();
  require(!p.widths.empty(), "textcnn: no filter widths");
  require(*std::min_element(p.widths.begin(), p.widths.end()) <= len,
          "textcnn: sequence shorter than every filter width");
  Mat emb(len, e);
  for (Eigen::Index t = 0; t < len; ++t) {
    const int idx = indices[static_cast<std::size_t>(t)];
    require(idx >= 0 && idx < p.embedding.rows(),
            "textcnn: index " + std::to_string(idx) + " out of vocabulary range");
    emb.row(t) = p.embedding.row(idx);
  }

  Vec features(p.features());
  std::vector<std::vector<Eigen::Index>> argmax(p.widths.size());
  Eigen::Index off = 0;
  for (std::size_t wi = 0; wi < p.widths.size(); ++wi) {
    const Eigen::Index w = p.widths[wi];
    const Mat& f = p.filters[wi];
    const Eigen::Index nf = f.rows();
    argmax[wi].assign(static_cast<std::size_t>(nf), -1);
    if (w > len) {
      // Too wide for this sequence: contributes zeros, like an all-ReLU-dead filter.
      features.segment(off, nf).setZero();
      off += nf;
      continue;
    }
    // Row-major emb rows are contiguous, so a window of w tokens is one flat vector.
    Mat scores(len - w + 1, nf);
    for (Eigen::Index t = 0; t + w <= len; ++t) {
      const Eigen::Map<const Vec> window(emb.row(t).data(), w * e);
      scores.row(t) = (f * window + p.biases[wi]).transpose();
    }
    for (Eigen::Index k = 0; k < nf; ++k) {
      Eigen::Index best = 0;
      const double mx = scores.col(k).maxCoeff(&best);
      features[off + k] = std::max(mx, 0.0);
      argmax[wi][static_cast<std::size_t>(k)] = mx > 0.0 ? best : -1;
    }
    off += nf;
  }
  const Vec logits = p.head_w.transpose() * features + p.head_b;
  const Vec probs = softmax(logits);
  if (cache) {
    cache->indices = indices;
    cache->features = features;
    cache->argmax = std::move(argmax);
    cache->probs = probs;
  }
  return probs;
}

TextCnnGrad textcnn_backward(const TextCnnCache& cache, const TextCnnParams& p,
                             const Vec& grad_probs) {
  const Eigen::Index e = p.embed_dim();
  TextCnnGrad g;
  const Vec dlogits = softmax_backward(cache.probs, grad_probs);
  g.head_w = cache.features * dlogits.transpose();
  g.head_b = dlogits;
  const Vec dfeat = p.head_w * dlogits;
  g.embedding = Mat::Zero(p.embedding.rows(), e);
  Eigen::Index off = 0;
  for (std::size_t wi = 0; wi < p.widths.size(); ++wi) {
    const Eigen::Index w = p.widths[wi];
    const Mat& f = p.filters[wi];
    g.filters.push_back(Mat::Zero(f.rows(), f.cols()));
    g.biases.push_back(Vec::Zero(f.rows()));
    for (Eigen::Index k = 0; k < f.rows(); ++k) {
      const Eigen::Index t = cache.argmax[wi][static_cast<std::size_t>(k)];
      if (t < 0) continue;
      const double d = dfeat[off + k];
      g.biases[wi][k] += d;
      for (Eigen::Index r = 0; r < w; ++r) {
        const int idx = cache.indices[static_cast<std::size_t>(t + r)];
        g.filters[wi].row(k).segment(r * e, e) += d * p.embedding.row(idx);
        g.embedding.row(idx) += d * f.row(k).segment(r * e, e);
      }
    }
    off += f.rows();
  }
  return g;
}

}  // namespace cpcl
