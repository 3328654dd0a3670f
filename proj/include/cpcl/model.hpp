#pragma once

#include "cpcl/alignment.hpp"
#include "cpcl/audio.hpp"
#include "cpcl/classifier.hpp"
#include "cpcl/comments.hpp"
#include "cpcl/core.hpp"
#include "cpcl/fusion.hpp"
#include "cpcl/ingest.hpp"
#include "cpcl/sentiment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cpcl {

struct ModelConfig {
  int d = 768;
  int d_model = 128;
  int d_gate = 64;
  int d_state = 16;

  // Comment branch.
  int vocab_size = 2;
  int embed_dim = 64;
  std::vector<int> conv_widths{2, 3, 4};
  int n_filters = 32;
  int seq_len = 128;
  int max_comments = 64;

  // Sentiment branch.
  int sentiment_dim = 64;
  int sentiment_hidden = 32;
  double alpha_kg = 0.5;
  int skg_top_k = 3;
  double skg_threshold = 0.35;

  // Audio arrives as raw MFCC frames and is lifted to d by a trainable projection.
  bool audio_lift = false;
  int n_mfcc = 40;

  OtConfig ot;
  MmdConfig mmd;

  int mask_comment = 1;
  int mask_sentiment = 1;

  void validate() const;
};

/// Every trainable tensor of the pipeline.
struct ModelParams {
  AudioLift lift;  // empty unless ModelConfig::audio_lift
  FusionParams fusion;
  TextCnnParams textcnn;
  SentimentHeadParams sentiment;
  HeadParams head;

  /// Correctly shaped parameters with every entry zero (LN gain included).
  static ModelParams zeros(const ModelConfig& cfg);
  /// Seeded initialization; identical seeds give bitwise-identical parameters.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
};

/// Mutable flat view of one named parameter tensor.
struct ParamView {
  std::string name;
  std::string owner;
  double* data = nullptr;
  std::size_t size = 0;
};

/// Named views in a fixed order; the same order for any two ModelParams of one config.
std::vector<ParamView> param_views(ModelParams& p);
std::size_t param_count(const ModelParams& p);
void add_into(ModelParams& acc, const ModelParams& g, double scale = 1.0);

/// Binary snapshot: per tensor, u32 name length, name, u64 count, count binary64 values.
void save_params(const ModelParams& p, const std::filesystem::path& path);
void load_params(ModelParams& p, const std::filesystem::path& path);

/// A sample reduced to the inputs the network consumes.
struct PreparedSample {
  std::string id;
  int label = 0;
  Mat video, face, audio, text;
  std::vector<int> comment_indices;
  Vec comment_embedding;
  Vec knowledge;
};

struct BranchResources {
  const Vocabulary* vocab = nullptr;
  const SkgStore* skg = nullptr;
  const Embedder* embedder = nullptr;
};

/// Cleans comments, encodes them, embeds them for the sentiment branch and matches triples.
PreparedSample prepare_sample(const VideoSample& sample, const BranchResources& res,
                              const ModelConfig& cfg);

struct ForwardOutput {
  Vec probs;
  Vec comment_probs;
  Vec sentiment_probs;
  double focal = 0.0;
  double mmd = 0.0;
  double loss = 0.0;
  Vec gates;
};

/// Full forward pass. When `grads` is non-null, the gradient of the sample loss is added to it.
/// Transport plans are recomputed here and treated as constants for differentiation.
ForwardOutput forward_backward(const PreparedSample& s, const ModelParams& p,
                               const ModelConfig& cfg, const FocalConfig& focal, double lambda,
                               ModelParams* grads);

/// Probabilities only; no loss terms are evaluated.
Vec predict(const PreparedSample& s, const ModelParams& p, const ModelConfig& cfg);

}  // namespace cpcl
