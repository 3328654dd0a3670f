#include "cpcl/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

namespace cpcl {

namespace {

// FFTW planning is not thread-safe; execution with new-array functions is.
std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(fftw_plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }

  /// Magnitudes of bins 0..n/2.
  void magnitude(std::vector<double>& mag) {
    fftw_execute(plan_);
    mag.resize(static_cast<std::size_t>(n_ / 2 + 1));
    for (int k = 0; k <= n_ / 2; ++k) mag[k] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void MfccConfig::validate() const {
  require(sample_rate > 0, "sample_rate must be positive");
  require(frame_len >= 1 && frame_len <= n_fft, "frame_len must be in [1, n_fft]");
  require(hop >= 1, "hop must be >= 1");
  require(n_mels >= 1 && n_mfcc >= 1 && n_mfcc <= n_mels, "need 1 <= n_mfcc <= n_mels");
  require(fmin >= 0.0 && fmin < effective_fmax(), "fmin must be below fmax");
  require(effective_fmax() <= sample_rate / 2.0, "fmax must not exceed Nyquist");
  require(log_floor > 0.0, "log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_band_edges(const MfccConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * i / (cfg.n_mels + 1));
  }
  return edges;
}

Mat mel_filterbank(const MfccConfig& cfg) {
  const auto edges = mel_band_edges(cfg);
  const int bins = cfg.n_fft / 2 + 1;
  Mat fb = Mat::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      if (f > left && f < center) {
        fb(m, k) = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        fb(m, k) = (right - f) / (right - center);
      }
    }
  }
  return fb;
}

Mat log_mel_energies(std::span<const double> signal, const MfccConfig& cfg) {
  cfg.validate();
  require(signal.size() >= static_cast<std::size_t>(cfg.frame_len),
          "signal shorter than one frame (" + std::to_string(signal.size()) + " < " +
              std::to_string(cfg.frame_len) + ")");
  for (double s : signal) {
    if (std::isnan(s)) throw InvalidArgument("NaN in audio signal");
  }
  const std::size_t frames = mfcc_frame_count(signal.size(), cfg);
  const Mat fb = mel_filterbank(cfg);

  std::vector<double> window(static_cast<std::size_t>(cfg.frame_len));
  for (int i = 0; i < cfg.frame_len; ++i) {
    // periodic Hann
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.frame_len);
  }

  RealFft fft(cfg.n_fft);
  std::vector<double> mag;
  Mat out(static_cast<Eigen::Index>(frames), cfg.n_mels);
  for (std::size_t t = 0; t < frames; ++t) {
    double* in = fft.input();
    std::fill(in, in + cfg.n_fft, 0.0);
    const std::size_t start = t * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.frame_len; ++i) in[i] = signal[start + i] * window[i];
    fft.magnitude(mag);
    const Eigen::Map<const Vec> spectrum(mag.data(), static_cast<Eigen::Index>(mag.size()));
    const Vec energy = fb * spectrum;
    for (int m = 0; m < cfg.n_mels; ++m) {
      out(static_cast<Eigen::Index>(t), m) = std::log(std::max(energy[m], cfg.log_floor));
    }
  }
  return out;
}

Mat compute_mfcc(std::span<const double> signal, const MfccConfig& cfg) {
  const Mat logmel = log_mel_energies(signal, cfg);
  const int n = cfg.n_mels;
  Mat dct(n, cfg.n_mfcc);  // orthonormal DCT-II basis, one column per coefficient
  for (int k = 0; k < cfg.n_mfcc; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) {
      dct(i, k) = scale * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  Mat out = logmel * dct;
  if (!out.allFinite()) throw NumericError("non-finite MFCC output");
  return out;
}

PcmAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV " + path.string());
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("not a RIFF file");
  read_u32(in);
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("not a WAVE file");

  int channels = 0, bits = 0;
  PcmAudio audio;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    const std::uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = read_u16(in);
      channels = read_u16(in);
      audio.sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.ignore(size - 16);
      if (format != 1 || bits != 16) throw std::runtime_error("only 16-bit PCM WAV is supported");
      if (channels < 1) throw std::runtime_error("WAV has no channels");
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("WAV data chunk before fmt chunk");
      const std::size_t frames = size / (2u * static_cast<std::uint32_t>(channels));
      audio.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(read_u16(in)) / 32768.0;
        }
        audio.samples[i] = acc / channels;
      }
      if (!in) throw std::runtime_error("truncated WAV data");
      return audio;
    } else {
      in.ignore(size + (size & 1u));
    }
  }
  throw std::runtime_error("WAV has no data chunk");
}

void write_wav(const PcmAudio& audio, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);
  write_u16(out, 1);
  write_u32(out, static_cast<std::uint32_t>(audio.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(audio.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double s : audio.samples) {
    // Same scale as read_wav so a round trip is within half a quantization step.
    const long q = std::clamp(std::lround(std::clamp(s, -1.0, 1.0) * 32768.0), -32768L, 32767L);
    write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
}

AudioLift AudioLift::identity(int n_mfcc, int d) {
  AudioLift lift;
  lift.proj = Mat::Identity(n_mfcc, d);
  lift.bias = Vec::Zero(d);
  return lift;
}

FeatureSequence lift_audio(const Mat& mfcc, const AudioLift& lift) {
  require(mfcc.cols() == lift.proj.rows(), "lift: mfcc width " + std::to_string(mfcc.cols()) +
                                               " != proj rows " + std::to_string(lift.proj.rows()));
  require(lift.bias.size() == lift.proj.cols(), "lift: bias size mismatch");
  FeatureSequence out;
  out.modality = Modality::audio;
  out.dim = static_cast<std::size_t>(lift.proj.cols());
  out.tokens = mfcc * lift.proj;
  out.tokens.rowwise() += lift.bias.transpose();
  return out;
}

AudioLiftGrad lift_audio_backward(const Mat& mfcc, const Mat& grad_tokens) {
  require(mfcc.rows() == grad_tokens.rows(), "lift backward: row mismatch");
  return {mfcc.transpose() * grad_tokens, grad_tokens.colwise().sum().transpose()};
}

}  // namespace cpcl
