#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttm/audio.hpp"

namespace ttm::scenario {

enum class MissingKind { None, Iid, Burst };

struct MissingModel {
  MissingKind kind = MissingKind::None;
  double rate = 1.0 / 3.0;       // expected fraction of missing frames
  std::size_t burst_len = 8;     // mean burst length for Burst
};

struct NoiseBake {
  audio::NoiseKind kind = audio::NoiseKind::White;
  double snr_db = 0.0;
};

// Seeded synthetic egocentric scenario. One sequence follows one candidate
// person (the one whose talking-to-me state is labeled); other persons in
// the scene contribute speech to the shared audio track only.
struct ScenarioConfig {
  std::uint64_t seed = 1;        // mandatory; all randomness derives from it
  std::size_t n_sequences = 200;
  std::size_t persons = 2;       // 1..3
  std::size_t frames = 90;
  std::size_t fps = 30;
  int sample_rate = 16000;
  std::size_t n_f = 32;          // head feature dimension
  std::size_t img = 64;          // lip crop side, single channel
  double theta_face = 0.5235987755982988;  // 30 degrees
  double speak_duty = 0.6;       // per-person fraction of time speaking
  double distractor_rate = 0.3;  // silent mouth-motion spans (chewing etc.)
  double head_feature_noise = 0.05;
  MissingModel missing;          // applied by generate() when kind != None
  std::optional<NoiseBake> noise;  // optional baked-in background noise

  // Test hooks for degenerate scenes.
  bool always_speaking = false;
  std::optional<double> fixed_yaw;
};

struct Sequence {
  std::vector<float> head;       // frames x n_f
  std::vector<std::uint8_t> lip; // frames x img x img, grayscale
  std::vector<float> wave;       // audio samples
  std::vector<std::uint8_t> present;  // frames, 1 = head crop present
  std::vector<std::uint8_t> label;    // frames, 1 = talking to me
};

struct Dataset {
  std::size_t frames = 0, n_f = 0, img = 0, fps = 30;
  int sample_rate = 16000;
  std::string split;
  std::vector<Sequence> sequences;
};

// Pure function of (cfg, split): per-sequence seeds are derived, so
// parallel generation reproduces serial output exactly.
Dataset generate(const ScenarioConfig& cfg, const std::string& split);

// Draws a presence mask per the model and zeroes head features of masked
// frames. The audio and lip tracks are untouched (visual-only absence).
void corrupt_presence(Dataset& ds, const MissingModel& model,
                      std::uint64_t seed);

// Versioned binary dataset file with length-prefixed per-sequence sections
// (head float32, lip uint8, wave float32, mask bits, label bits).
std::vector<std::uint8_t> serialize(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);

// Exposed for the audio-ambiguity property: identical person states give
// identical waveforms regardless of which person carries the labels.
struct VoiceTrack {
  double f0 = 120.0;
  double phase = 0.0;
  std::vector<double> envelope;  // one value per video frame, in [0,1]
};
std::vector<double> synth_voices(const std::vector<VoiceTrack>& voices,
                                 std::size_t n_samples, int sample_rate,
                                 std::size_t fps);

}  // namespace ttm::scenario
