#pragma once

#include "cpcl/audio.hpp"
#include "cpcl/ingest.hpp"
#include "cpcl/sentiment.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cpcl {

/// Two-class toy corpus. Label 1 (PCL) makes up `positive_fraction` of the samples.
/// Each sample carries class evidence in its comments, its sentiment phrases, or both;
/// the feature streams carry only a weak mean shift.
struct SyntheticConfig {
  int n_samples = 200;
  double positive_fraction = 0.4;
  int dim = 8;
  int video_tokens = 6;
  int text_tokens = 5;
  int audio_samples = 1600;  // 0.1 s at 16 kHz
  double feature_shift = 0.05;
  double feature_noise = 1.0;
  /// Fractions of samples whose class evidence is only in comments / only in sentiment
  /// phrases. The remainder has both.
  double comment_only_fraction = 0.35;
  double sentiment_only_fraction = 0.35;
  /// Tokens of topical comments placed before the sentiment phrases.
  int topical_tokens = 48;
  int sentiment_phrases = 6;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<VideoSample> samples;   // audio_feat holds MFCC frames
  std::vector<PcmAudio> audio;        // raw waveform per sample
  std::vector<SentimentTriple> skg;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg, const MfccConfig& mfcc,
                                   std::uint64_t seed);

/// Writes manifest.jsonl, skg.tsv and per-sample feature, WAV and comment files under `dir`.
/// Returns the manifest path.
std::filesystem::path write_synthetic_corpus(const SyntheticCorpus& corpus,
                                             const std::filesystem::path& dir);

}  // namespace cpcl
