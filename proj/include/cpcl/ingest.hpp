#pragma once

#include "cpcl/core.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cpcl {

enum class Modality : std::uint8_t { video = 0, face = 1, audio = 2, text = 3 };

std::string to_string(Modality m);

/// Token sequence of one modality for one video; row i is token i.
struct FeatureSequence {
  Modality modality = Modality::text;
  std::size_t dim = 0;
  Mat tokens;

  std::size_t size() const { return static_cast<std::size_t>(tokens.rows()); }

  /// Throws InvalidArgument if the sequence breaks its invariants.
  void validate() const;
};

/// Error raised by the binary feature-file codec. Each failure mode has its own kind.
class FeatureFileError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, unsupported_version, bad_modality, truncated, non_finite, io };

  FeatureFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint8_t kFeatureFileVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

std::vector<std::uint8_t> encode_features(const FeatureSequence& seq);
FeatureSequence decode_features(std::span<const std::uint8_t> bytes);

FeatureSequence read_feature_file(const std::filesystem::path& path);
void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path);

struct FaceDetection {
  std::size_t frame = 0;
  RowVec embedding;
};

/// One row per frame; frames without a detection get the all-zero vector.
FeatureSequence assemble_face_track(std::size_t frames, std::size_t dim,
                                    const std::vector<FaceDetection>& detections);

struct CommentRecord {
  std::string text;
  int level = 1;

  bool operator==(const CommentRecord&) const = default;
};

/// Reads a JSON Lines comment file ({"text": ..., "level": ...} per line). No filtering.
std::vector<CommentRecord> read_comments_file(const std::filesystem::path& path);
void write_comments_file(const std::vector<CommentRecord>& comments,
                         const std::filesystem::path& path);

/// Manifest line before any referenced file is opened.
struct SampleDescriptor {
  std::string id;
  int label = 0;
  std::filesystem::path video_feat;
  std::filesystem::path face_feat;
  std::filesystem::path audio_feat_or_wav;
  std::filesystem::path text_feat;
  std::filesystem::path comments_file;
  std::size_t line = 0;

  bool audio_is_wav() const;
};

/// Parses a JSON Lines manifest. Relative paths are resolved against the manifest's directory.
std::vector<SampleDescriptor> load_manifest(const std::filesystem::path& path);

struct MfccConfig;

/// Fully loaded sample. When the audio source is a WAV file `audio_feat` holds raw MFCC
/// frames (dim = n_mfcc) and `audio_is_mfcc` is set; the model lifts it to `dim`.
struct VideoSample {
  std::string id;
  int label = 0;
  FeatureSequence video_feat;
  FeatureSequence face_feat;
  FeatureSequence audio_feat;
  FeatureSequence text_feat;
  bool audio_is_mfcc = false;
  std::vector<CommentRecord> comments;

  void validate() const;
};

/// Opens every file referenced by `desc`. Comments are filtered to first-level only.
VideoSample resolve_sample(const SampleDescriptor& desc, const MfccConfig& mfcc);

}  // namespace cpcl
