#pragma once

#include "cpcl/core.hpp"
#include "cpcl/ingest.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace cpcl {

struct MfccConfig {
  int sample_rate = 16000;
  int frame_len = 400;  // 25 ms at 16 kHz
  int hop = 160;        // 10 ms at 16 kHz
  int n_fft = 512;
  int n_mels = 40;
  int n_mfcc = 40;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 selects sample_rate / 2
  double log_floor = 1e-10;

  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  void validate() const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// n_mels + 2 band edges in Hz, equally spaced on the HTK mel scale. Filter k spans
/// [edges[k], edges[k + 2]] and peaks at edges[k + 1].
std::vector<double> mel_band_edges(const MfccConfig& cfg);

/// Triangular filterbank, n_mels x (n_fft / 2 + 1).
Mat mel_filterbank(const MfccConfig& cfg);

inline std::size_t mfcc_frame_count(std::size_t signal_len, const MfccConfig& cfg) {
  return signal_len < static_cast<std::size_t>(cfg.frame_len)
             ? 0
             : (signal_len - cfg.frame_len) / cfg.hop + 1;
}

/// Log mel energies per frame (m x n_mels), i.e. the MFCC pipeline stopped before the DCT.
Mat log_mel_energies(std::span<const double> signal, const MfccConfig& cfg);

/// Hann window -> |FFT| -> mel bank -> log(max(., floor)) -> orthonormal DCT-II.
/// Returns m x n_mfcc.
Mat compute_mfcc(std::span<const double> signal, const MfccConfig& cfg);

struct PcmAudio {
  int sample_rate = 16000;
  std::vector<double> samples;  // mono, in [-1, 1]
};

/// Reads 16-bit PCM WAV. Multi-channel audio is averaged to mono.
PcmAudio read_wav(const std::filesystem::path& path);
/// Writes mono 16-bit PCM WAV; samples are clipped to [-1, 1].
void write_wav(const PcmAudio& audio, const std::filesystem::path& path);

/// Trainable projection from n_mfcc coefficients to the shared embedding dim.
struct AudioLift {
  Mat proj;  // n_mfcc x d
  Vec bias;  // d

  static AudioLift identity(int n_mfcc, int d);
};

FeatureSequence lift_audio(const Mat& mfcc, const AudioLift& lift);

struct AudioLiftGrad {
  Mat proj;
  Vec bias;
};

/// Parameter gradient of lift_audio given dL/d(tokens).
AudioLiftGrad lift_audio_backward(const Mat& mfcc, const Mat& grad_tokens);

}  // namespace cpcl
