#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm::audio {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

struct MelConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  std::size_t n_fft = 512;  // frames are zero-padded from window length
  double floor = 1e-10;     // energy floor inside the log

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  bool operator==(const MelConfig&) const = default;
};

struct MelSpectrogram {
  std::size_t frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;  // frames x n_mels, row-major
  MelConfig cfg;

  double at(std::size_t t, std::size_t m) const {
    return values[t * n_mels + m];
  }
};

// Convex combination (1 - gamma) * clean + gamma * noise with the noise
// cropped at a seeded random offset; output clamped to [-1, 1].
Waveform mix_noise(const Waveform& clean, const Waveform& noise,
                   double gamma_mix, std::mt19937_64& rng);

// clean + g * noise with g chosen so the clean-to-noise power ratio is
// exactly snr_db. Output is NOT clamped so the requested SNR holds exactly.
Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise,
                            double snr_db);

double power(const std::vector<double>& samples);

// Log-mel spectrogram: Hann window, magnitude FFT, triangular filterbank,
// log with floor. Frame count = floor((len - window) / hop) + 1.
MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});
// Serial reference; the default entry point parallelizes over frames and
// must match it bit-exactly.
MelSpectrogram mel_spectrogram_serial(const Waveform& w,
                                      const MelConfig& cfg = {});

// Center frequencies (Hz) of the triangular filters.
std::vector<double> mel_filter_centers(const MelConfig& cfg);

// In-place iterative radix-2 FFT over interleaved complex values.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

// Seeded noise generators standing in for recorded noise corpora.
enum class NoiseKind { White, Pink, Machinery };
Waveform make_noise(NoiseKind kind, std::size_t n, int sample_rate,
                    std::uint64_t seed);

}  // namespace ttm::audio
