#include "ttm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ttm::scenario {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_str(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Alternating on/off spans with ~`duty` time in the on state.
std::vector<bool> speaking_spans(std::mt19937_64& rng, std::size_t frames,
                                 double duty) {
  std::uniform_int_distribution<int> on_len(12, 30);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<bool> s(frames, false);
  std::size_t t = 0;
  bool on = u(rng) < duty;
  while (t < frames) {
    int len = on_len(rng);
    if (!on) len = static_cast<int>(len * (1.0 - duty) / std::max(duty, 1e-6));
    len = std::max(len, 4);
    for (int i = 0; i < len && t < frames; ++i, ++t) s[t] = on;
    on = !on;
  }
  return s;
}

// Piecewise-linear waypoint path with per-frame jitter, radians.
std::vector<double> waypoint_path(std::mt19937_64& rng, std::size_t frames,
                                  double lo, double hi, double jitter) {
  std::uniform_real_distribution<double> val(lo, hi);
  std::uniform_int_distribution<int> seg(15, 30);
  std::normal_distribution<double> jit(0.0, jitter);
  std::vector<double> path(frames);
  double cur = val(rng);
  std::size_t t = 0;
  while (t < frames) {
    const double nxt = val(rng);
    const int len = seg(rng);
    for (int i = 0; i < len && t < frames; ++i, ++t)
      path[t] = cur + (nxt - cur) * (static_cast<double>(i) / len) + jit(rng);
    cur = nxt;
  }
  return path;
}

std::vector<double> speech_envelope(std::mt19937_64& rng,
                                    const std::vector<bool>& active,
                                    std::size_t fps) {
  std::uniform_real_distribution<double> fenv(2.0, 4.0);
  std::uniform_real_distribution<double> ph(0.0, 2 * M_PI);
  const double f = fenv(rng), p = ph(rng);
  std::vector<double> env(active.size(), 0.0);
  for (std::size_t t = 0; t < active.size(); ++t)
    if (active[t])
      env[t] = 0.3 + 0.7 * std::abs(std::sin(2 * M_PI * f * t / fps + p));
  return env;
}

void draw_lip(std::uint8_t* px, std::size_t img, double aperture,
              std::mt19937_64& rng) {
  std::normal_distribution<double> pix_noise(0.0, 0.02);
  const double cx = img / 2.0, cy = img / 2.0;
  const double ax = img * 0.32;                    // horizontal semi-axis
  const double ay = 2.0 + aperture * img * 0.22;   // opens with the envelope
  for (std::size_t y = 0; y < img; ++y) {
    for (std::size_t x = 0; x < img; ++x) {
      const double dx = (x - cx) / ax, dy = (y - cy) / ay;
      double v = (dx * dx + dy * dy <= 1.0) ? 0.15 : 0.8;
      v = std::clamp(v + pix_noise(rng), 0.0, 1.0);
      px[y * img + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
}

Sequence make_sequence(const ScenarioConfig& cfg,
                       const std::vector<double>& embed,  // n_f x 3
                       std::uint64_t seq_seed) {
  std::mt19937_64 rng(seq_seed);
  const std::size_t T = cfg.frames;

  // Speaking spans; person 0 is the labeled candidate.
  std::vector<std::vector<bool>> speaking(cfg.persons);
  for (auto& s : speaking) s = speaking_spans(rng, T, cfg.speak_duty);
  if (cfg.always_speaking) speaking[0].assign(T, true);

  // Head orientation of the candidate.
  const double deg = M_PI / 180.0;
  std::vector<double> yaw = waypoint_path(rng, T, -70 * deg, 70 * deg, 1 * deg);
  std::vector<double> pitch =
      waypoint_path(rng, T, -15 * deg, 15 * deg, 0.5 * deg);
  std::vector<double> roll =
      waypoint_path(rng, T, -10 * deg, 10 * deg, 0.5 * deg);
  if (cfg.fixed_yaw) yaw.assign(T, *cfg.fixed_yaw);

  // Voice tracks. The candidate's fundamental sits in a low band, scene
  // interferers in a higher one; per-frame speech envelopes drive both the
  // audio and the candidate's lip aperture.
  std::uniform_real_distribution<double> f0_target(100.0, 140.0);
  std::uniform_real_distribution<double> f0_other(180.0, 260.0);
  std::uniform_real_distribution<double> ph(0.0, 2 * M_PI);
  std::vector<VoiceTrack> voices(cfg.persons);
  for (std::size_t p = 0; p < cfg.persons; ++p) {
    voices[p].f0 = p == 0 ? f0_target(rng) : f0_other(rng) + 25.0 * (p - 1);
    voices[p].phase = ph(rng);
    voices[p].envelope = speech_envelope(rng, speaking[p], cfg.fps);
  }

  // Mouth activity: speech plus silent distractor motion (chewing,
  // yawning) during non-speaking spans.
  std::vector<double> mouth = voices[0].envelope;
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t t = 0;
    while (t < T) {
      if (!speaking[0][t]) {
        std::size_t end = t;
        while (end < T && !speaking[0][end]) ++end;
        if (u(rng) < cfg.distractor_rate) {
          std::vector<bool> span(T, false);
          for (std::size_t i = t; i < end; ++i) span[i] = true;
          auto denv = speech_envelope(rng, span, cfg.fps);
          for (std::size_t i = t; i < end; ++i) mouth[i] = denv[i];
        }
        t = end;
      } else {
        ++t;
      }
    }
  }

  Sequence seq;
  seq.label.resize(T);
  seq.present.assign(T, 1);
  for (std::size_t t = 0; t < T; ++t)
    seq.label[t] =
        (speaking[0][t] && std::abs(yaw[t]) <= cfg.theta_face) ? 1 : 0;

  // Head features: fixed orthonormal embedding of the true angles plus
  // Gaussian noise, float32 in the dataset.
  std::normal_distribution<double> fnoise(0.0, cfg.head_feature_noise);
  seq.head.resize(T * cfg.n_f);
  for (std::size_t t = 0; t < T; ++t) {
    const double ang[3] = {yaw[t], pitch[t], roll[t]};
    for (std::size_t i = 0; i < cfg.n_f; ++i) {
      double v = 0.0;
      for (int j = 0; j < 3; ++j) v += embed[i * 3 + j] * ang[j];
      seq.head[t * cfg.n_f + i] = static_cast<float>(v + fnoise(rng));
    }
  }

  seq.lip.resize(T * cfg.img * cfg.img);
  for (std::size_t t = 0; t < T; ++t)
    draw_lip(seq.lip.data() + t * cfg.img * cfg.img, cfg.img, mouth[t], rng);

  const std::size_t n_samples = T * cfg.sample_rate / cfg.fps;
  std::vector<double> wave =
      synth_voices(voices, n_samples, cfg.sample_rate, cfg.fps);
  if (cfg.noise) {
    audio::Waveform clean{wave, cfg.sample_rate};
    audio::Waveform noise = audio::make_noise(cfg.noise->kind, n_samples,
                                              cfg.sample_rate, splitmix64(seq_seed));
    const bool silent = audio::power(wave) <= 0.0;
    if (!silent)
      wave = audio::scale_noise_to_snr(clean, noise, cfg.noise->snr_db).samples;
  }
  seq.wave.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    seq.wave[i] = static_cast<float>(std::clamp(wave[i], -1.0, 1.0));
  return seq;
}

}  // namespace

std::vector<double> synth_voices(const std::vector<VoiceTrack>& voices,
                                 std::size_t n_samples, int sample_rate,
                                 std::size_t fps) {
  std::vector<double> wave(n_samples, 0.0);
  constexpr int kHarmonics = 4;
  for (const auto& v : voices) {
    const std::size_t T = v.envelope.size();
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double tsec = static_cast<double>(i) / sample_rate;
      // Linear interpolation of the frame envelope at sample resolution.
      const double ft = tsec * fps;
      const std::size_t t0 = std::min(static_cast<std::size_t>(ft), T - 1);
      const std::size_t t1 = std::min(t0 + 1, T - 1);
      const double frac = ft - static_cast<double>(t0);
      const double env = v.envelope[t0] * (1.0 - frac) + v.envelope[t1] * frac;
      if (env <= 0.0) continue;
      double s = 0.0;
      double amp = 1.0;
      for (int h = 1; h <= kHarmonics; ++h, amp *= 0.5)
        s += amp * std::sin(2 * M_PI * h * v.f0 * tsec + v.phase);
      wave[i] += 0.18 * env * s;
    }
  }
  for (auto& s : wave) s = std::clamp(s, -1.0, 1.0);
  return wave;
}

Dataset generate(const ScenarioConfig& cfg, const std::string& split) {
  if (cfg.persons < 1 || cfg.persons > 3)
    throw ConfigError("scenario: persons must be 1..3");
  if (cfg.frames == 0 || cfg.fps == 0 || cfg.n_sequences == 0)
    throw ConfigError("scenario: frames, fps and n_sequences must be positive");
  if (cfg.distractor_rate < 0 || cfg.distractor_rate > 1 ||
      cfg.speak_duty < 0 || cfg.speak_duty > 1 || cfg.missing.rate < 0 ||
      cfg.missing.rate > 1)
    throw ConfigError("scenario: rates must lie in [0,1]");

  // Dataset-level head-feature embedding: 3 orthonormal columns in R^n_f.
  std::mt19937_64 erng(splitmix64(cfg.seed ^ 0xE5B1D6A3ULL));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> embed(cfg.n_f * 3);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v(cfg.n_f);
    for (auto& x : v) x = nd(erng);
    for (int p = 0; p < c; ++p) {
      double d = 0.0;
      for (std::size_t i = 0; i < cfg.n_f; ++i) d += v[i] * embed[i * 3 + p];
      for (std::size_t i = 0; i < cfg.n_f; ++i) v[i] -= d * embed[i * 3 + p];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (std::size_t i = 0; i < cfg.n_f; ++i) embed[i * 3 + c] = v[i] / n;
  }

  Dataset ds;
  ds.frames = cfg.frames;
  ds.n_f = cfg.n_f;
  ds.img = cfg.img;
  ds.fps = cfg.fps;
  ds.sample_rate = cfg.sample_rate;
  ds.split = split;
  ds.sequences.resize(cfg.n_sequences);
  const std::uint64_t base = splitmix64(cfg.seed ^ hash_str(split));
  for (std::size_t i = 0; i < cfg.n_sequences; ++i)
    ds.sequences[i] = make_sequence(cfg, embed, splitmix64(base + i + 1));
  if (cfg.missing.kind != MissingKind::None)
    corrupt_presence(ds, cfg.missing, splitmix64(base ^ 0xA11CEULL));
  return ds;
}

void corrupt_presence(Dataset& ds, const MissingModel& model,
                      std::uint64_t seed) {
  if (model.kind == MissingKind::None) return;
  if (model.rate < 0.0 || model.rate > 1.0)
    throw ConfigError("corrupt_presence: rate must lie in [0,1]");
  for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
    std::mt19937_64 rng(splitmix64(seed + s + 1));
    auto& seq = ds.sequences[s];
    const std::size_t T = seq.present.size();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (model.kind == MissingKind::Iid) {
      for (std::size_t t = 0; t < T; ++t)
        seq.present[t] = u(rng) < model.rate ? 0 : 1;
    } else {
      seq.present.assign(T, 1);
      // Expected missing fraction ~= rate via bursts of mean length.
      const double enter = model.rate /
                           (static_cast<double>(model.burst_len) *
                            std::max(1.0 - model.rate, 1e-9));
      std::size_t t = 0;
      while (t < T) {
        if (u(rng) < enter) {
          std::uniform_int_distribution<std::size_t> blen(
              model.burst_len / 2 + 1, model.burst_len * 3 / 2 + 1);
          const std::size_t len = blen(rng);
          for (std::size_t i = 0; i < len && t < T; ++i, ++t)
            seq.present[t] = 0;
        } else {
          ++t;
        }
      }
    }
    // Masked frames lose their head features entirely.
    for (std::size_t t = 0; t < T; ++t)
      if (!seq.present[t])
        std::fill(seq.head.begin() + t * ds.n_f,
                  seq.head.begin() + (t + 1) * ds.n_f, 0.0f);
  }
}

// ---------------- dataset file format ----------------

namespace {
constexpr char kMagic[8] = {'T', 'T', 'M', 'D', 'A', 'T', 'A', '1'};

void put_u64(std::vector<std::uint8_t>& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32(std::vector<std::uint8_t>& b, const std::vector<float>& v) {
  put_u64(b, v.size());
  const std::size_t off = b.size();
  b.resize(off + v.size() * 4);
  std::memcpy(b.data() + off, v.data(), v.size() * 4);
}

void put_bits(std::vector<std::uint8_t>& b, const std::vector<std::uint8_t>& v) {
  put_u64(b, v.size());
  std::vector<std::uint8_t> packed((v.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  b.insert(b.end(), packed.begin(), packed.end());
}
}  // namespace

std::vector<std::uint8_t> serialize(const Dataset& ds) {
  std::vector<std::uint8_t> b;
  b.insert(b.end(), kMagic, kMagic + 8);
  put_u64(b, ds.sequences.size());
  put_u64(b, ds.frames);
  put_u64(b, ds.n_f);
  put_u64(b, ds.img);
  put_u64(b, ds.fps);
  put_u64(b, static_cast<std::uint64_t>(ds.sample_rate));
  put_u64(b, ds.split.size());
  b.insert(b.end(), ds.split.begin(), ds.split.end());
  for (const auto& s : ds.sequences) {
    put_f32(b, s.head);
    put_u64(b, s.lip.size());
    b.insert(b.end(), s.lip.begin(), s.lip.end());
    put_f32(b, s.wave);
    put_bits(b, s.present);
    put_bits(b, s.label);
  }
  return b;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  auto bytes = serialize(ds);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(is)), {});
  if (b.size() < 8 + 7 * 8 || std::memcmp(b.data(), kMagic, 8) != 0)
    throw IoError("bad dataset header: " + path);
  std::size_t off = 8;
  auto u64 = [&]() {
    const std::uint64_t v = get_u64(b.data() + off);
    off += 8;
    return v;
  };
  Dataset ds;
  const std::uint64_t nseq = u64();
  ds.frames = u64();
  ds.n_f = u64();
  ds.img = u64();
  ds.fps = u64();
  ds.sample_rate = static_cast<int>(u64());
  const std::uint64_t slen = u64();
  ds.split.assign(b.begin() + off, b.begin() + off + slen);
  off += slen;
  ds.sequences.resize(nseq);
  auto get_f32 = [&](std::vector<float>& v) {
    const std::uint64_t n = u64();
    v.resize(n);
    std::memcpy(v.data(), b.data() + off, n * 4);
    off += n * 4;
  };
  auto get_bits = [&](std::vector<std::uint8_t>& v) {
    const std::uint64_t n = u64();
    v.resize(n);
    for (std::uint64_t i = 0; i < n; ++i)
      v[i] = (b[off + i / 8] >> (i % 8)) & 1u;
    off += (n + 7) / 8;
  };
  for (auto& s : ds.sequences) {
    get_f32(s.head);
    const std::uint64_t nl = u64();
    s.lip.assign(b.begin() + off, b.begin() + off + nl);
    off += nl;
    get_f32(s.wave);
    get_bits(s.present);
    get_bits(s.label);
    if (off > b.size()) throw IoError("truncated dataset: " + path);
  }
  return ds;
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ttm::scenario
