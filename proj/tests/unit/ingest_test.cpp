#include "cpcl/audio.hpp"
#include "cpcl/ingest.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>

namespace cpcl {
namespace {

using test::TempDir;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Builds a file byte by byte, independently of the encoder.
std::vector<std::uint8_t> handmade_file(const char* magic, std::uint8_t version,
                                        std::uint8_t modality, std::uint32_t n, std::uint32_t d,
                                        const std::vector<float>& values) {
  std::vector<std::uint8_t> b(magic, magic + 4);
  b.push_back(version);
  b.push_back(modality);
  b.push_back(0);
  b.push_back(0);
  for (std::uint32_t v : {n, d}) {
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  return b;
}

FeatureFileError::Kind decode_error_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_features(bytes);
  } catch (const FeatureFileError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded unexpectedly";
  return FeatureFileError::Kind::io;
}

TEST(FeatureFile, DecodesHandmadeFile) {
  const auto bytes = handmade_file("CPCL", 1, 0, 2, 3, {1, 2, 3, 4, 5, 6});
  const FeatureSequence s = decode_features(bytes);
  EXPECT_EQ(s.modality, Modality::video);
  EXPECT_EQ(s.dim, 3u);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.tokens(0, 0), 1.0);
  EXPECT_EQ(s.tokens(1, 2), 6.0);
}

TEST(FeatureFile, ZeroTokenEncodesToHeaderPlusFourZeroBytes) {
  FeatureSequence s{Modality::text, 1, Mat::Zero(1, 1)};
  const auto bytes = encode_features(s);
  ASSERT_EQ(bytes.size(), 20u);
  EXPECT_EQ(bytes, handmade_file("CPCL", 1, 3, 1, 1, {0.0f}));
  for (std::size_t i = 16; i < 20; ++i) EXPECT_EQ(bytes[i], 0u);
}

TEST(FeatureFile, HeaderLayout) {
  FeatureSequence s{Modality::audio, 2, Mat::Ones(3, 2)};
  const auto bytes = encode_features(s);
  EXPECT_EQ(bytes[0], 0x43);
  EXPECT_EQ(bytes[1], 0x50);
  EXPECT_EQ(bytes[2], 0x43);
  EXPECT_EQ(bytes[3], 0x4C);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 2);
  EXPECT_EQ(bytes[6], 0);
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 2);
  EXPECT_EQ(bytes.size(), kFeatureHeaderBytes + 3 * 2 * 4);
}

TEST(FeatureFile, DistinctErrorKinds) {
  using K = FeatureFileError::Kind;
  EXPECT_EQ(decode_error_kind(handmade_file("XXXX", 1, 0, 1, 1, {1})), K::bad_magic);
  EXPECT_EQ(decode_error_kind(handmade_file("CPCL", 2, 0, 1, 1, {1})), K::unsupported_version);
  EXPECT_EQ(decode_error_kind(handmade_file("CPCL", 1, 9, 1, 1, {1})), K::bad_modality);
  EXPECT_EQ(decode_error_kind(handmade_file("CPCL", 1, 0, 2, 2, {1, 2, 3})), K::truncated);
  EXPECT_EQ(decode_error_kind({0x43, 0x50}), K::truncated);
  EXPECT_EQ(decode_error_kind(handmade_file("CPCL", 1, 0, 1, 2,
                                            {1, std::numeric_limits<float>::quiet_NaN()})),
            K::non_finite);
  EXPECT_EQ(decode_error_kind(handmade_file("CPCL", 1, 0, 1, 1,
                                            {std::numeric_limits<float>::infinity()})),
            K::non_finite);
}

TEST(FeatureFile, ZeroDimIsInvalid) {
  FeatureSequence s{Modality::video, 0, Mat(1, 0)};
  EXPECT_THROW(encode_features(s), InvalidArgument);
}

TEST(FeatureFile, EmptyOnlyAllowedForFace) {
  FeatureSequence face{Modality::face, 4, Mat(0, 4)};
  EXPECT_NO_THROW(face.validate());
  const FeatureSequence back = decode_features(encode_features(face));
  EXPECT_EQ(back.size(), 0u);
  FeatureSequence video{Modality::video, 4, Mat(0, 4)};
  EXPECT_THROW(video.validate(), InvalidArgument);
}

TEST(FeatureFile, MissingFileIsIoError) {
  try {
    read_feature_file("/nonexistent/dir/x.cpcl");
    FAIL();
  } catch (const FeatureFileError& e) {
    EXPECT_EQ(e.kind(), FeatureFileError::Kind::io);
  }
}

TEST(FeatureFile, RoundTripProperty) {
  std::mt19937_64 rng(42);
  TempDir dir;
  for (int trial = 0; trial < 100; ++trial) {
    const auto modality = static_cast<Modality>(rng() % 4);
    const auto d = 1 + static_cast<Eigen::Index>(rng() % 12);
    auto n = static_cast<Eigen::Index>(rng() % 9);
    if (n == 0 && modality != Modality::face) n = 1;
    FeatureSequence s{modality, static_cast<std::size_t>(d), test::random_mat(rng, n, d, 100.0)};
    const auto path = dir / ("f" + std::to_string(trial) + ".cpcl");
    write_feature_file(s, path);
    const FeatureSequence r = read_feature_file(path);
    ASSERT_EQ(r.modality, s.modality);
    ASSERT_EQ(r.dim, s.dim);
    ASSERT_EQ(r.tokens.rows(), n);
    for (Eigen::Index i = 0; i < s.tokens.size(); ++i) {
      EXPECT_EQ(r.tokens.data()[i], static_cast<double>(static_cast<float>(s.tokens.data()[i])));
    }
    // Re-writing what was read reproduces the file byte for byte.
    const auto again = dir / "again.cpcl";
    write_feature_file(r, again);
    EXPECT_EQ(read_bytes(path), read_bytes(again));
  }
}

TEST(FeatureFile, ExportedEncoderWidthValidates) {
  // Files produced by the Python encoder exporter: d = 768, one row per sampled frame.
  TempDir dir;
  std::mt19937_64 rng(3);
  std::vector<float> values;
  for (int i = 0; i < 10 * 768; ++i) values.push_back(static_cast<float>(rng() % 1000) / 997.0f);
  write_bytes(dir / "video.cpcl", handmade_file("CPCL", 1, 0, 10, 768, values));
  std::vector<float> face(10 * 768, 0.0f);
  std::copy(values.begin(), values.begin() + 768, face.begin() + 768);
  write_bytes(dir / "face.cpcl", handmade_file("CPCL", 1, 1, 10, 768, face));

  const FeatureSequence v = read_feature_file(dir / "video.cpcl");
  EXPECT_EQ(v.dim, 768u);
  EXPECT_EQ(v.size(), 10u);
  EXPECT_NO_THROW(v.validate());
  for (std::size_t i = 0; i < values.size(); ++i) {
    ASSERT_EQ(v.tokens.data()[i], static_cast<double>(values[i]));
  }
  const FeatureSequence f = read_feature_file(dir / "face.cpcl");
  EXPECT_EQ(f.size(), v.size());
  EXPECT_EQ(f.tokens.row(0).norm(), 0.0);
  EXPECT_GT(f.tokens.row(1).norm(), 0.0);
}

TEST(FaceTrack, UndetectedFramesAreZero) {
  RowVec v(3);
  v << 1, 2, 3;
  const FeatureSequence s = assemble_face_track(3, 3, {{1, v}});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.modality, Modality::face);
  EXPECT_EQ(s.tokens.row(0).norm(), 0.0);
  EXPECT_EQ(s.tokens.row(1), v);
  EXPECT_EQ(s.tokens.row(2).norm(), 0.0);
}

TEST(FaceTrack, NoDetectionsGivesZeroRows) {
  const FeatureSequence s = assemble_face_track(2, 4, {});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.tokens.norm(), 0.0);
}

TEST(FaceTrack, AllDetected) {
  RowVec a = RowVec::Constant(2, 1.5), b = RowVec::Constant(2, -2.0);
  const FeatureSequence s = assemble_face_track(2, 2, {{0, a}, {1, b}});
  EXPECT_EQ(s.tokens.row(0), a);
  EXPECT_EQ(s.tokens.row(1), b);
}

TEST(FaceTrack, Errors) {
  RowVec v = RowVec::Ones(2);
  EXPECT_THROW(assemble_face_track(2, 2, {{0, v}, {0, v}}), InvalidArgument);
  EXPECT_THROW(assemble_face_track(2, 2, {{2, v}}), InvalidArgument);
  EXPECT_THROW(assemble_face_track(2, 3, {{0, v}}), InvalidArgument);
}

TEST(FaceTrack, RowCountProperty) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<FaceDetection> det;
    std::vector<bool> hit(n, false);
    for (std::size_t f = 0; f < n; ++f) {
      if (rng() % 2) {
        det.push_back({f, test::random_mat(rng, 1, 3)});
        hit[f] = true;
      }
    }
    const FeatureSequence s = assemble_face_track(n, 3, det);
    ASSERT_EQ(s.size(), n);
    for (std::size_t f = 0; f < n; ++f) {
      if (!hit[f]) EXPECT_EQ(s.tokens.row(static_cast<Eigen::Index>(f)).norm(), 0.0);
    }
  }
}

class ManifestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    FeatureSequence v{Modality::video, 2, Mat::Ones(2, 2)};
    FeatureSequence f{Modality::face, 2, Mat::Zero(2, 2)};
    FeatureSequence a{Modality::audio, 2, Mat::Ones(3, 2)};
    FeatureSequence t{Modality::text, 2, Mat::Ones(4, 2)};
    write_feature_file(v, dir / "v.cpcl");
    write_feature_file(f, dir / "f.cpcl");
    write_feature_file(a, dir / "a.cpcl");
    write_feature_file(t, dir / "t.cpcl");
    write_comments_file({{"第一", 1}, {"回复", 2}, {"第二", 1}}, dir / "c.jsonl");
  }

  std::string line(const std::string& id, int label, const std::string& audio = "a.cpcl") {
    return R"({"id":")" + id + R"(","label":)" + std::to_string(label) +
           R"(,"video_feat":"v.cpcl","face_feat":"f.cpcl","audio_feat_or_wav":")" + audio +
           R"(","text_feat":"t.cpcl","comments_file":"c.jsonl"})";
  }

  void write_manifest(const std::vector<std::string>& lines) {
    std::ofstream out(dir / "m.jsonl");
    for (const auto& l : lines) out << l << '\n';
  }

  TempDir dir;
};

TEST_F(ManifestTest, SingleLine) {
  write_manifest({line("x", 1)});
  const auto m = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].label, 1);
  EXPECT_EQ(m[0].id, "x");
  EXPECT_EQ(m[0].video_feat, dir / "v.cpcl");
}

TEST_F(ManifestTest, BadLabelReportsLine) {
  write_manifest({line("x", 0), line("y", 2)});
  try {
    load_manifest(dir / "m.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST_F(ManifestTest, MalformedJsonReportsLine) {
  write_manifest({line("x", 0), "{not json"});
  EXPECT_THROW(load_manifest(dir / "m.jsonl"), ParseError);
}

TEST_F(ManifestTest, ManyLinesKeepOrder) {
  std::vector<std::string> lines;
  for (int i = 0; i < 831; ++i) lines.push_back(line("s" + std::to_string(i), i % 2));
  write_manifest(lines);
  const auto m = load_manifest(dir / "m.jsonl");
  ASSERT_EQ(m.size(), 831u);
  for (int i = 0; i < 831; ++i) {
    EXPECT_EQ(m[static_cast<std::size_t>(i)].id, "s" + std::to_string(i));
    EXPECT_EQ(m[static_cast<std::size_t>(i)].line, static_cast<std::size_t>(i + 1));
  }
}

TEST_F(ManifestTest, ResolveFiltersToFirstLevelComments) {
  write_manifest({line("x", 1)});
  const VideoSample s = resolve_sample(load_manifest(dir / "m.jsonl")[0], MfccConfig{});
  ASSERT_EQ(s.comments.size(), 2u);
  EXPECT_EQ(s.comments[0].text, "第一");
  EXPECT_EQ(s.comments[1].text, "第二");
  EXPECT_EQ(s.video_feat.size(), 2u);
  EXPECT_FALSE(s.audio_is_mfcc);
}

TEST_F(ManifestTest, ResolveMissingFileFails) {
  write_manifest({line("x", 1, "missing.cpcl")});
  const auto m = load_manifest(dir / "m.jsonl");
  EXPECT_ANY_THROW(resolve_sample(m[0], MfccConfig{}));
}

TEST_F(ManifestTest, ResolveWavComputesMfcc) {
  PcmAudio pcm;
  for (int i = 0; i < 720; ++i) pcm.samples.push_back(0.25 * std::sin(0.05 * i));
  write_wav(pcm, dir / "a.wav");
  write_manifest({line("x", 1, "a.wav")});
  const auto m = load_manifest(dir / "m.jsonl");
  EXPECT_TRUE(m[0].audio_is_wav());
  const VideoSample s = resolve_sample(m[0], MfccConfig{});
  EXPECT_TRUE(s.audio_is_mfcc);
  EXPECT_EQ(s.audio_feat.size(), 3u);
  EXPECT_EQ(s.audio_feat.dim, 40u);
}

TEST(VideoSample, FaceCountMustMatchVideo) {
  VideoSample s;
  s.video_feat = {Modality::video, 2, Mat::Ones(3, 2)};
  s.face_feat = {Modality::face, 2, Mat::Zero(2, 2)};
  s.audio_feat = {Modality::audio, 2, Mat::Ones(1, 2)};
  s.text_feat = {Modality::text, 2, Mat::Ones(1, 2)};
  EXPECT_THROW(s.validate(), InvalidArgument);
  s.face_feat.tokens = Mat::Zero(3, 2);
  EXPECT_NO_THROW(s.validate());
  s.text_feat = {Modality::text, 3, Mat::Ones(1, 3)};
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Comments, FileRoundTrip) {
  TempDir dir;
  const std::vector<CommentRecord> c{{"好人", 1}, {"\"quoted\"\n", 2}, {"😀", 1}};
  write_comments_file(c, dir / "c.jsonl");
  EXPECT_EQ(read_comments_file(dir / "c.jsonl"), c);
}

}  // namespace
}  // namespace cpcl
