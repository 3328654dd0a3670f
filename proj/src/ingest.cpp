#include "cpcl/ingest.hpp"

#include "cpcl/audio.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace cpcl {

namespace {

constexpr std::uint8_t kMagic[4] = {0x43, 0x50, 0x43, 0x4C};  // "CPCL"

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

std::filesystem::path resolve_relative(const std::filesystem::path& base,
                                       const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::string to_string(Modality m) {
  switch (m) {
    case Modality::video: return "video";
    case Modality::face: return "face";
    case Modality::audio: return "audio";
    case Modality::text: return "text";
  }
  return "unknown";
}

void FeatureSequence::validate() const {
  require(dim > 0, "feature sequence dim must be positive");
  require(static_cast<std::size_t>(tokens.cols()) == dim || tokens.rows() == 0,
          "token width does not match dim");
  if (modality != Modality::face) {
    require(tokens.rows() >= 1, to_string(modality) + " sequence must have at least one token");
  }
  if (!tokens.allFinite()) throw InvalidArgument("feature sequence contains non-finite values");
}

std::vector<std::uint8_t> encode_features(const FeatureSequence& seq) {
  seq.validate();
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (seq.dim > kMax || seq.size() > kMax) {
    throw InvalidArgument("feature sequence too large for the file format");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFeatureHeaderBytes + 4 * seq.size() * seq.dim);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kFeatureFileVersion);
  out.push_back(static_cast<std::uint8_t>(seq.modality));
  out.push_back(0);
  out.push_back(0);
  put_u32(out, static_cast<std::uint32_t>(seq.size()));
  put_u32(out, static_cast<std::uint32_t>(seq.dim));
  for (Eigen::Index i = 0; i < seq.tokens.rows(); ++i) {
    for (Eigen::Index j = 0; j < seq.tokens.cols(); ++j) {
      const auto f = static_cast<float>(seq.tokens(i, j));
      if (!std::isfinite(f)) throw InvalidArgument("value overflows binary32");
      put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  return out;
}

FeatureSequence decode_features(std::span<const std::uint8_t> bytes) {
  using Kind = FeatureFileError::Kind;
  if (bytes.size() < kFeatureHeaderBytes) {
    if (bytes.size() >= 4 && !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
      throw FeatureFileError(Kind::bad_magic, "bad magic");
    }
    throw FeatureFileError(Kind::truncated, "truncated header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FeatureFileError(Kind::bad_magic, "bad magic");
  }
  if (bytes[4] != kFeatureFileVersion) {
    throw FeatureFileError(Kind::unsupported_version,
                           "unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 3) {
    throw FeatureFileError(Kind::bad_modality, "unknown modality code " + std::to_string(bytes[5]));
  }
  FeatureSequence seq;
  seq.modality = static_cast<Modality>(bytes[5]);
  const std::uint64_t n = get_u32(bytes, 8);
  const std::uint64_t d = get_u32(bytes, 12);
  if (d == 0) throw FeatureFileError(Kind::truncated, "zero dim in header");
  const std::uint64_t payload = 4 * n * d;
  if (bytes.size() - kFeatureHeaderBytes != payload) {
    throw FeatureFileError(Kind::truncated, "payload has " +
                                                std::to_string(bytes.size() - kFeatureHeaderBytes) +
                                                " bytes, header implies " + std::to_string(payload));
  }
  seq.dim = d;
  seq.tokens.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::size_t off = kFeatureHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j, off += 4) {
      const float f = std::bit_cast<float>(get_u32(bytes, off));
      if (!std::isfinite(f)) {
        throw FeatureFileError(Kind::non_finite, "non-finite value at row " + std::to_string(i) +
                                                     ", col " + std::to_string(j));
      }
      seq.tokens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f;
    }
  }
  if (seq.modality != Modality::face && n == 0) {
    throw FeatureFileError(Kind::truncated, to_string(seq.modality) + " file has no rows");
  }
  return seq;
}

FeatureSequence read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FeatureFileError(FeatureFileError::Kind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_features(bytes);
}

void write_feature_file(const FeatureSequence& seq, const std::filesystem::path& path) {
  const auto bytes = encode_features(seq);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FeatureFileError(FeatureFileError::Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FeatureFileError(FeatureFileError::Kind::io, "write failed: " + path.string());
}

FeatureSequence assemble_face_track(std::size_t frames, std::size_t dim,
                                    const std::vector<FaceDetection>& detections) {
  require(dim > 0, "face dim must be positive");
  FeatureSequence seq;
  seq.modality = Modality::face;
  seq.dim = dim;
  seq.tokens = Mat::Zero(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(dim));
  std::vector<bool> seen(frames, false);
  for (const auto& det : detections) {
    require(det.frame < frames, "face detection frame " + std::to_string(det.frame) +
                                    " out of range (" + std::to_string(frames) + " frames)");
    require(!seen[det.frame], "duplicate face detection for frame " + std::to_string(det.frame));
    require(static_cast<std::size_t>(det.embedding.size()) == dim, "face embedding dim mismatch");
    seen[det.frame] = true;
    seq.tokens.row(static_cast<Eigen::Index>(det.frame)) = det.embedding;
  }
  return seq;
}

std::vector<CommentRecord> read_comments_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open comments file " + path.string());
  std::vector<CommentRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CommentRecord rec;
      rec.text = j.at("text").get<std::string>();
      rec.level = j.value("level", 1);
      if (rec.level < 1) throw ParseError("comment level must be positive", lineno);
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed comment: ") + e.what(), lineno);
    }
  }
  return out;
}

void write_comments_file(const std::vector<CommentRecord>& comments,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& c : comments) {
    out << nlohmann::json{{"text", c.text}, {"level", c.level}}.dump() << '\n';
  }
}

bool SampleDescriptor::audio_is_wav() const {
  auto ext = audio_feat_or_wav.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".wav";
}

std::vector<SampleDescriptor> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<SampleDescriptor> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SampleDescriptor d;
    d.line = lineno;
    try {
      const auto j = nlohmann::json::parse(line);
      d.id = j.at("id").get<std::string>();
      const auto& label = j.at("label");
      if (!label.is_number_integer()) throw ParseError("label must be 0 or 1", lineno);
      d.label = label.get<int>();
      d.video_feat = resolve_relative(base, j.at("video_feat").get<std::string>());
      d.face_feat = resolve_relative(base, j.at("face_feat").get<std::string>());
      d.audio_feat_or_wav = resolve_relative(base, j.at("audio_feat_or_wav").get<std::string>());
      d.text_feat = resolve_relative(base, j.at("text_feat").get<std::string>());
      d.comments_file = resolve_relative(base, j.at("comments_file").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed manifest line: ") + e.what(), lineno);
    }
    if (d.label != 0 && d.label != 1) throw ParseError("label must be 0 or 1", lineno);
    out.push_back(std::move(d));
  }
  return out;
}

void VideoSample::validate() const {
  require(label == 0 || label == 1, "label must be 0 or 1");
  video_feat.validate();
  face_feat.validate();
  audio_feat.validate();
  text_feat.validate();
  require(face_feat.size() == video_feat.size(),
          "face track length must equal video frame count for sample " + id);
  require(video_feat.dim == text_feat.dim && face_feat.dim == text_feat.dim,
          "video/face/text dims differ for sample " + id);
  if (!audio_is_mfcc) require(audio_feat.dim == text_feat.dim, "audio dim differs for sample " + id);
}

VideoSample resolve_sample(const SampleDescriptor& desc, const MfccConfig& mfcc) {
  for (const auto* p : {&desc.video_feat, &desc.face_feat, &desc.audio_feat_or_wav,
                        &desc.text_feat, &desc.comments_file}) {
    if (!std::filesystem::exists(*p)) {
      throw std::runtime_error("sample " + desc.id + " (manifest line " +
                               std::to_string(desc.line) + "): missing file " + p->string());
    }
  }
  VideoSample s;
  s.id = desc.id;
  s.label = desc.label;
  s.video_feat = read_feature_file(desc.video_feat);
  s.face_feat = read_feature_file(desc.face_feat);
  s.text_feat = read_feature_file(desc.text_feat);
  if (desc.audio_is_wav()) {
    const auto wav = read_wav(desc.audio_feat_or_wav);
    MfccConfig cfg = mfcc;
    cfg.sample_rate = wav.sample_rate;
    if (cfg.fmax <= 0.0 || cfg.fmax > wav.sample_rate / 2.0) cfg.fmax = wav.sample_rate / 2.0;
    s.audio_feat.modality = Modality::audio;
    s.audio_feat.tokens = compute_mfcc(wav.samples, cfg);
    s.audio_feat.dim = static_cast<std::size_t>(cfg.n_mfcc);
    s.audio_is_mfcc = true;
  } else {
    s.audio_feat = read_feature_file(desc.audio_feat_or_wav);
  }
  for (auto& c : read_comments_file(desc.comments_file)) {
    if (c.level == 1) s.comments.push_back(std::move(c));
  }
  s.validate();
  return s;
}

}  // namespace cpcl
