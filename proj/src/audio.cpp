#include "ttm/audio.hpp"

#include <algorithm>
#include <cmath>

namespace ttm::audio {

std::size_t MelConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0));
}

std::size_t MelConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
}

double power(const std::vector<double>& samples) {
  double p = 0.0;
  for (double s : samples) p += s * s;
  return samples.empty() ? 0.0 : p / static_cast<double>(samples.size());
}

Waveform mix_noise(const Waveform& clean, const Waveform& noise,
                   double gamma_mix, std::mt19937_64& rng) {
  if (clean.sample_rate != noise.sample_rate)
    throw ConfigError("mix_noise: sample rates differ (" +
                      std::to_string(clean.sample_rate) + " vs " +
                      std::to_string(noise.sample_rate) + ")");
  if (!(gamma_mix >= 0.0 && gamma_mix <= 1.0))
    throw ContractError("mix_noise: gamma_mix must be in [0,1], got " +
                        std::to_string(gamma_mix));
  if (noise.samples.size() < clean.samples.size())
    throw ContractError("mix_noise: noise shorter than clean signal");
  std::uniform_int_distribution<std::size_t> off(
      0, noise.samples.size() - clean.samples.size());
  const std::size_t o = off(rng);
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const double v =
        (1.0 - gamma_mix) * clean.samples[i] + gamma_mix * noise.samples[o + i];
    out.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

Waveform scale_noise_to_snr(const Waveform& clean, const Waveform& noise,
                            double snr_db) {
  if (clean.sample_rate != noise.sample_rate)
    throw ConfigError("scale_noise_to_snr: sample rates differ");
  if (noise.samples.size() < clean.samples.size())
    throw ContractError("scale_noise_to_snr: noise shorter than clean signal");
  std::vector<double> n(noise.samples.begin(),
                        noise.samples.begin() + clean.samples.size());
  const double pc = power(clean.samples);
  const double pn = power(n);
  if (pc <= 0.0)
    throw ContractError("scale_noise_to_snr: clean signal has zero power");
  if (pn <= 0.0)
    throw ContractError("scale_noise_to_snr: noise has zero power");
  const double g = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  Waveform out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    out.samples[i] = clean.samples[i] + g * n[i];
  return out;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ContractError("fft_radix2: length must be a power of two");
  // Bit reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

namespace {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

struct Filterbank {
  // weights[band * n_bins + bin]
  std::vector<double> weights;
  std::size_t n_bins;
  std::vector<double> centers_hz;
};

Filterbank build_filterbank(const MelConfig& cfg) {
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> pts(cfg.n_mels + 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    pts[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(cfg.n_mels + 1));
  Filterbank fb;
  fb.n_bins = n_bins;
  fb.weights.assign(cfg.n_mels * n_bins, 0.0);
  fb.centers_hz.assign(pts.begin() + 1, pts.end() - 1);
  const double bin_hz = static_cast<double>(cfg.sample_rate) /
                        static_cast<double>(cfg.n_fft);
  for (std::size_t b = 0; b < cfg.n_mels; ++b) {
    const double lo = pts[b], c = pts[b + 1], hi = pts[b + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < c)
        w = (f - lo) / (c - lo);
      else if (f >= c && f < hi)
        w = (hi - f) / (hi - c);
      fb.weights[b * n_bins + k] = w;
    }
  }
  return fb;
}

void mel_frame(const Waveform& w, const MelConfig& cfg, const Filterbank& fb,
               const std::vector<double>& window, std::size_t t, double* out) {
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  std::vector<double> re(cfg.n_fft, 0.0), im(cfg.n_fft, 0.0);
  for (std::size_t i = 0; i < win; ++i)
    re[i] = w.samples[t * hop + i] * window[i];
  fft_radix2(re, im);
  std::vector<double> mag(fb.n_bins);
  for (std::size_t k = 0; k < fb.n_bins; ++k)
    mag[k] = std::sqrt(re[k] * re[k] + im[k] * im[k]);
  for (std::size_t b = 0; b < cfg.n_mels; ++b) {
    double e = 0.0;
    const double* wrow = fb.weights.data() + b * fb.n_bins;
    for (std::size_t k = 0; k < fb.n_bins; ++k) e += wrow[k] * mag[k];
    out[b] = std::log(std::max(e, cfg.floor));
  }
}

MelSpectrogram mel_common(const Waveform& w, const MelConfig& cfg,
                          bool parallel) {
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (w.samples.size() < win)
    throw DataError("mel_spectrogram: waveform shorter than one window (" +
                    std::to_string(w.samples.size()) + " < " +
                    std::to_string(win) + " samples)");
  if (cfg.n_fft < win)
    throw ConfigError("mel_spectrogram: n_fft smaller than window");
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("mel_spectrogram: sample rate mismatch");
  const std::size_t frames = (w.samples.size() - win) / hop + 1;
  const Filterbank fb = build_filterbank(cfg);
  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(win));

  MelSpectrogram out;
  out.frames = frames;
  out.n_mels = cfg.n_mels;
  out.cfg = cfg;
  out.values.resize(frames * cfg.n_mels);
  if (parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long t = 0; t < static_cast<long long>(frames); ++t)
      mel_frame(w, cfg, fb, window, static_cast<std::size_t>(t),
                out.values.data() + t * cfg.n_mels);
  } else {
    for (std::size_t t = 0; t < frames; ++t)
      mel_frame(w, cfg, fb, window, t, out.values.data() + t * cfg.n_mels);
  }
  return out;
}

}  // namespace

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  return mel_common(w, cfg, true);
}

MelSpectrogram mel_spectrogram_serial(const Waveform& w, const MelConfig& cfg) {
  return mel_common(w, cfg, false);
}

std::vector<double> mel_filter_centers(const MelConfig& cfg) {
  return build_filterbank(cfg).centers_hz;
}

Waveform make_noise(NoiseKind kind, std::size_t n, int sample_rate,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  switch (kind) {
    case NoiseKind::White:
      for (auto& s : w.samples) s = 0.25 * d(rng);
      break;
    case NoiseKind::Pink: {
      // Kellet-style pinking filter over white noise.
      double b0 = 0, b1 = 0, b2 = 0;
      for (auto& s : w.samples) {
        const double x = d(rng);
        b0 = 0.99765 * b0 + x * 0.0990460;
        b1 = 0.96300 * b1 + x * 0.2965164;
        b2 = 0.57000 * b2 + x * 1.0526913;
        s = 0.08 * (b0 + b1 + b2 + x * 0.1848);
      }
      break;
    }
    case NoiseKind::Machinery: {
      // Interfering tonal hum plus broadband hiss.
      std::uniform_real_distribution<double> fu(45.0, 75.0);
      const double f1 = fu(rng);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        w.samples[i] = 0.22 * std::sin(2 * M_PI * f1 * t) +
                       0.14 * std::sin(2 * M_PI * 3 * f1 * t) +
                       0.08 * d(rng);
      }
      break;
    }
  }
  for (auto& s : w.samples) s = std::clamp(s, -1.0, 1.0);
  return w;
}

}  // namespace ttm::audio
