#include "cpcl/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

namespace cpcl {

namespace {

// Topical characters; the shared pool appears in both classes.
constexpr std::array<const char*, 12> kPclChars{"帮", "助", "可", "怜", "弱", "者",
                                                "关", "爱", "照", "顾", "善", "心"};
constexpr std::array<const char*, 12> kOtherChars{"比", "赛", "精", "彩", "技", "术",
                                                  "球", "队", "进", "攻", "速", "度"};
constexpr std::array<const char*, 12> kSharedChars{"今", "天", "视", "频", "这", "个",
                                                   "我", "们", "大", "家", "看", "到"};

struct Phrase {
  const char* attribute;
  const char* word;
  Polarity polarity;
};

constexpr std::array<Phrase, 12> kPhrases{{
    {"处境", "悲惨", Polarity::negative}, {"生活", "困苦", Polarity::negative},
    {"家庭", "贫穷", Polarity::negative}, {"身体", "残疾", Polarity::negative},
    {"表现", "出色", Polarity::positive}, {"配合", "默契", Polarity::positive},
    {"画面", "清晰", Polarity::positive}, {"节奏", "流畅", Polarity::positive},
    {"天气", "一般", Polarity::neutral},  {"时间", "正常", Polarity::neutral},
    {"地点", "普通", Polarity::neutral},  {"内容", "平常", Polarity::neutral},
}};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  double normal() {
    // Box-Muller on our own uniforms keeps streams identical across standard libraries.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 gen_;
};

Mat feature_block(Draw& rng, int rows, int dim, double shift, double noise) {
  Mat m(rows, dim);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < dim; ++j) {
      // Only the first half of the dimensions carries the class shift.
      const double mean = j < dim / 2 ? shift : 0.0;
      m(i, j) = static_cast<float>(mean + noise * rng.normal());
    }
  }
  return m;
}

std::string topical_comment(Draw& rng, int label, bool informative, int len) {
  const auto& cls = label == 1 ? kPclChars : kOtherChars;
  std::string s;
  for (int i = 0; i < len; ++i) {
    if (informative && rng.uniform() < 0.5) {
      s += cls[rng.index(cls.size())];
    } else {
      s += kSharedChars[rng.index(kSharedChars.size())];
    }
  }
  return s;
}

std::string phrase_comment(Draw& rng, int label, bool informative) {
  std::size_t base = 8;  // neutral phrases
  if (informative) base = label == 1 ? 0 : 4;
  const Phrase& p = kPhrases[base + rng.index(4)];
  return std::string(p.attribute) + p.word;
}

}  // namespace

void SyntheticConfig::validate() const {
  require(n_samples >= 2, "synthetic: need at least two samples");
  require(positive_fraction > 0.0 && positive_fraction < 1.0,
          "synthetic: positive_fraction must be in (0, 1)");
  require(dim >= 2 && video_tokens >= 1 && text_tokens >= 1, "synthetic: bad shape");
  require(audio_samples >= 400, "synthetic: audio shorter than one frame");
  require(comment_only_fraction >= 0.0 && sentiment_only_fraction >= 0.0 &&
              comment_only_fraction + sentiment_only_fraction <= 1.0,
          "synthetic: evidence fractions must be non-negative and sum to at most 1");
  require(topical_tokens >= 1 && sentiment_phrases >= 1, "synthetic: empty comments");
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg, const MfccConfig& mfcc,
                                   std::uint64_t seed) {
  cfg.validate();
  mfcc.validate();
  Draw rng(seed);
  SyntheticCorpus corpus;
  for (const auto& p : kPhrases) corpus.skg.push_back({p.attribute, p.word, p.polarity});

  const int n_pos = static_cast<int>(std::lround(cfg.positive_fraction * cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i) {
    // Interleave so any prefix keeps roughly the target balance.
    const int label = (i * n_pos) / cfg.n_samples != ((i + 1) * n_pos) / cfg.n_samples ? 1 : 0;
    const double shift = label == 1 ? cfg.feature_shift : -cfg.feature_shift;
    const double r = rng.uniform();
    const bool comment_info = r >= cfg.sentiment_only_fraction;
    const bool sentiment_info =
        r < cfg.sentiment_only_fraction ||
        r >= cfg.sentiment_only_fraction + cfg.comment_only_fraction;

    VideoSample s;
    s.id = "syn" + std::to_string(i);
    s.label = label;
    s.video_feat = {Modality::video, static_cast<std::size_t>(cfg.dim),
                    feature_block(rng, cfg.video_tokens, cfg.dim, shift, cfg.feature_noise)};
    Mat face = feature_block(rng, cfg.video_tokens, cfg.dim, shift, cfg.feature_noise);
    for (int f = 0; f < cfg.video_tokens; ++f) {
      if (rng.uniform() < 0.25) face.row(f).setZero();  // no face in this frame
    }
    s.face_feat = {Modality::face, static_cast<std::size_t>(cfg.dim), face};
    s.text_feat = {Modality::text, static_cast<std::size_t>(cfg.dim),
                   feature_block(rng, cfg.text_tokens, cfg.dim, shift, cfg.feature_noise)};

    // Class-independent tone in noise, quantized exactly as a 16-bit WAV would be.
    PcmAudio pcm;
    pcm.sample_rate = mfcc.sample_rate;
    const double freq = 200.0 + 600.0 * rng.uniform();
    const double amp = 0.2 + 0.3 * rng.uniform();
    for (int t = 0; t < cfg.audio_samples; ++t) {
      const double x = amp * std::sin(2.0 * std::numbers::pi * freq * t / mfcc.sample_rate) +
                       0.05 * rng.normal();
      pcm.samples.push_back(std::clamp(std::round(x * 32768.0), -32768.0, 32767.0) / 32768.0);
    }
    const Mat coeffs = compute_mfcc(pcm.samples, mfcc);
    Mat coeffs32 = coeffs.cast<float>().cast<double>();
    s.audio_feat = {Modality::audio, static_cast<std::size_t>(mfcc.n_mfcc), coeffs32};
    s.audio_is_mfcc = true;

    int written = 0;
    while (written < cfg.topical_tokens) {
      const int len = std::min(6 + static_cast<int>(rng.index(5)), cfg.topical_tokens - written);
      s.comments.push_back({topical_comment(rng, label, comment_info, len), 1});
      written += len;
    }
    for (int k = 0; k < cfg.sentiment_phrases; ++k) {
      s.comments.push_back({phrase_comment(rng, label, sentiment_info), 1});
    }
    // Noise the cleaner must remove: a reply, an emoji-only comment, a duplicate.
    s.comments.push_back({topical_comment(rng, 1 - label, true, 8), 2});
    s.comments.push_back({"😂👍", 1});
    s.comments.push_back(s.comments.front());

    corpus.samples.push_back(std::move(s));
    corpus.audio.push_back(std::move(pcm));
  }
  return corpus;
}

std::filesystem::path write_synthetic_corpus(const SyntheticCorpus& corpus,
                                             const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  require(corpus.samples.size() == corpus.audio.size(), "synthetic corpus: audio count mismatch");
  fs::create_directories(dir / "samples");
  {
    std::ofstream skg(dir / "skg.tsv", std::ios::binary);
    for (const auto& t : corpus.skg) {
      skg << t.attribute << '\t' << t.sentiment_word << '\t' << to_string(t.polarity) << '\n';
    }
    if (!skg) throw std::runtime_error("cannot write " + (dir / "skg.tsv").string());
  }
  const fs::path manifest = dir / "manifest.jsonl";
  std::ofstream out(manifest, std::ios::binary);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const VideoSample& s = corpus.samples[i];
    const fs::path rel = fs::path("samples") / s.id;
    write_feature_file(s.video_feat, dir / (rel.string() + ".video.cpcl"));
    write_feature_file(s.face_feat, dir / (rel.string() + ".face.cpcl"));
    write_feature_file(s.text_feat, dir / (rel.string() + ".text.cpcl"));
    write_wav(corpus.audio[i], dir / (rel.string() + ".wav"));
    write_comments_file(s.comments, dir / (rel.string() + ".comments.jsonl"));
    nlohmann::json line{{"id", s.id},
                        {"label", s.label},
                        {"video_feat", rel.string() + ".video.cpcl"},
                        {"face_feat", rel.string() + ".face.cpcl"},
                        {"audio_feat_or_wav", rel.string() + ".wav"},
                        {"text_feat", rel.string() + ".text.cpcl"},
                        {"comments_file", rel.string() + ".comments.jsonl"}};
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + manifest.string());
  return manifest;
}

}  // namespace cpcl
