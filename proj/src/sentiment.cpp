#include "cpcl/sentiment.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>

namespace cpcl {

namespace {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

Polarity parse_polarity(std::string_view s) {
  if (s == "negative") return Polarity::negative;
  if (s == "neutral") return Polarity::neutral;
  if (s == "positive") return Polarity::positive;
  throw InvalidArgument("unknown polarity '" + std::string(s) + "'");
}

std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
    case Polarity::positive: return "positive";
  }
  return "unknown";
}

Vec HashingEmbedder::embed(std::string_view text) const {
  // Collect code points (as byte slices), skipping whitespace.
  std::vector<std::string_view> cps;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto len = static_cast<int32_t>(text.size());
  for (int32_t i = 0; i < len;) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, len, c);
    if (!u_isUWhiteSpace(c)) cps.push_back(text.substr(start, i - start));
  }
  Vec v = Vec::Zero(dim_);
  std::string gram;
  for (int n = 1; n <= max_ngram_; ++n) {
    for (std::size_t i = 0; i + n <= cps.size(); ++i) {
      gram.assign(1, static_cast<char>('0' + n));
      for (int k = 0; k < n; ++k) gram.append(cps[i + k]);
      const std::uint64_t h = fnv1a(gram);
      const double sign = (h >> 63) ? -1.0 : 1.0;
      v[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_))] += sign;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

SkgStore make_skg(std::vector<SentimentTriple> triples, const Embedder& embedder) {
  SkgStore store;
  store.embeddings.resize(static_cast<Eigen::Index>(triples.size()), embedder.dim());
  for (std::size_t i = 0; i < triples.size(); ++i) {
    store.embeddings.row(static_cast<Eigen::Index>(i)) = embedder.embed(triples[i].text()).transpose();
  }
  store.triples = std::move(triples);
  return store;
}

SkgStore load_skg(const std::filesystem::path& path, const Embedder& embedder) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open SKG file " + path.string());
  std::vector<SentimentTriple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3) {
      throw ParseError("SKG row must have 3 tab-separated columns, got " +
                           std::to_string(cols.size()),
                       lineno);
    }
    if (cols[0].empty() || cols[1].empty()) throw ParseError("empty SKG attribute or word", lineno);
    SentimentTriple t{cols[0], cols[1], Polarity::neutral};
    try {
      t.polarity = parse_polarity(cols[2]);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lineno);
    }
    triples.push_back(std::move(t));
  }
  return make_skg(std::move(triples), embedder);
}

double cosine_similarity(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<TripleMatch> match_embedding(const Vec& comment_embedding, const SkgStore& store,
                                         std::size_t k, double threshold) {
  if (store.size() == 0) return {};
  require(comment_embedding.size() == store.embeddings.cols(), "match_triples: dim mismatch");
  std::vector<TripleMatch> all;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double sim =
        cosine_similarity(comment_embedding, store.embeddings.row(static_cast<Eigen::Index>(i)).transpose());
    if (sim >= threshold) all.push_back({i, sim});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const TripleMatch& a, const TripleMatch& b) { return a.similarity > b.similarity; });
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<TripleMatch> match_triples(const std::vector<std::string>& comment_tokens,
                                       const SkgStore& store, const Embedder& embedder,
                                       std::size_t k, double threshold) {
  const std::string joined =
      std::accumulate(comment_tokens.begin(), comment_tokens.end(), std::string());
  return match_embedding(embedder.embed(joined), store, k, threshold);
}

SentimentHeadParams SentimentHeadParams::zeros(Eigen::Index embed_dim, Eigen::Index hidden) {
  SentimentHeadParams p;
  p.w1 = Mat::Zero(embed_dim, hidden);
  p.b1 = Vec::Zero(hidden);
  p.w2 = Mat::Zero(hidden, 3);
  p.b2 = Vec::Zero(3);
  return p;
}

Vec knowledge_vector(const std::vector<TripleMatch>& matches, const SkgStore& store,
                     Eigen::Index dim) {
  Vec acc = Vec::Zero(dim);
  double weight = 0.0;
  for (const auto& m : matches) {
    acc += m.similarity * store.embeddings.row(static_cast<Eigen::Index>(m.index)).transpose();
    weight += m.similarity;
  }
  if (weight <= 1e-12) return Vec::Zero(dim);
  return acc / weight;
}

Vec integrate_and_score(const Vec& comment_embedding, const Vec& knowledge,
                        const SentimentHeadParams& p, SentimentCache* cache) {
  require(comment_embedding.size() == p.w1.rows() && knowledge.size() == p.w1.rows(),
          "sentiment head: embedding dim mismatch");
  const Vec enhanced = (1.0 - p.alpha_kg) * comment_embedding + p.alpha_kg * knowledge;
  const Vec hidden = (p.w1.transpose() * enhanced + p.b1).cwiseMax(0.0);
  const Vec probs = softmax(p.w2.transpose() * hidden + p.b2);
  if (cache) {
    cache->comment = comment_embedding;
    cache->knowledge = knowledge;
    cache->enhanced = enhanced;
    cache->hidden = hidden;
    cache->probs = probs;
  }
  return probs;
}

Vec integrate_and_score(const Vec& comment_embedding, const std::vector<TripleMatch>& matches,
                        const SkgStore& store, const SentimentHeadParams& p,
                        SentimentCache* cache) {
  return integrate_and_score(comment_embedding,
                             knowledge_vector(matches, store, comment_embedding.size()), p, cache);
}

SentimentHeadGrad integrate_and_score_backward(const SentimentCache& cache,
                                               const SentimentHeadParams& p,
                                               const Vec& grad_probs) {
  SentimentHeadGrad g;
  const Vec dlogits = softmax_backward(cache.probs, grad_probs);
  g.w2 = cache.hidden * dlogits.transpose();
  g.b2 = dlogits;
  Vec dhidden = p.w2 * dlogits;
  dhidden = (cache.hidden.array() > 0.0).select(dhidden, 0.0);
  g.w1 = cache.enhanced * dhidden.transpose();
  g.b1 = dhidden;
  const Vec denh = p.w1 * dhidden;
  g.alpha_kg = denh.dot(cache.knowledge - cache.comment);
  return g;
}

}  // namespace cpcl
