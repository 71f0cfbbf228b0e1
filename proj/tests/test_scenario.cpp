#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <numeric>

#include "ttm/scenario.hpp"

using namespace ttm;
using namespace ttm::scenario;

namespace {

ScenarioConfig small_cfg(std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.n_sequences = 8;
  cfg.frames = 60;
  cfg.img = 32;
  return cfg;
}

}  // namespace

TEST_CASE("generation is a pure function of seed and split") {
  auto cfg = small_cfg(42);
  auto a = serialize(generate(cfg, "train"));
  auto b = serialize(generate(cfg, "train"));
  CHECK(fnv1a64(a) == fnv1a64(b));
  CHECK(a == b);

  auto other_split = serialize(generate(cfg, "val"));
  CHECK(fnv1a64(other_split) != fnv1a64(a));
  auto other_seed = serialize(generate(small_cfg(43), "train"));
  CHECK(fnv1a64(other_seed) != fnv1a64(a));
}

TEST_CASE("shapes and value ranges") {
  auto cfg = small_cfg();
  auto ds = generate(cfg, "train");
  REQUIRE(ds.sequences.size() == cfg.n_sequences);
  CHECK(ds.frames == cfg.frames);
  CHECK(ds.split == "train");
  const std::size_t n_samples = cfg.frames * cfg.sample_rate / cfg.fps;
  for (const auto& s : ds.sequences) {
    CHECK(s.head.size() == cfg.frames * cfg.n_f);
    CHECK(s.lip.size() == cfg.frames * cfg.img * cfg.img);
    CHECK(s.wave.size() == n_samples);
    CHECK(s.present.size() == cfg.frames);
    CHECK(s.label.size() == cfg.frames);
    for (float w : s.wave) {
      CHECK(w <= 1.0f);
      CHECK(w >= -1.0f);
    }
    for (auto v : s.label) CHECK(v <= 1);
    for (auto v : s.present) CHECK(v == 1);  // no missing model configured
  }
}

TEST_CASE("label rule: speaking while facing") {
  auto cfg = small_cfg();
  cfg.always_speaking = true;
  cfg.fixed_yaw = 0.0;
  auto facing = generate(cfg, "train");
  for (const auto& s : facing.sequences)
    for (auto v : s.label) CHECK(v == 1);

  cfg.fixed_yaw = 60.0 * M_PI / 180.0;  // beyond the 30 degree cone
  auto averted = generate(cfg, "train");
  for (const auto& s : averted.sequences)
    for (auto v : s.label) CHECK(v == 0);
}

TEST_CASE("default scenes are not label-degenerate") {
  auto cfg = small_cfg(3);
  cfg.n_sequences = 24;
  auto ds = generate(cfg, "train");
  double pos = 0.0, total = 0.0;
  for (const auto& s : ds.sequences) {
    pos += std::accumulate(s.label.begin(), s.label.end(), 0.0);
    total += static_cast<double>(s.label.size());
  }
  const double frac = pos / total;
  CHECK(frac > 0.05);
  CHECK(frac < 0.8);
}

TEST_CASE("iid presence corruption hits the requested rate and zeroes heads") {
  auto cfg = small_cfg(5);
  cfg.n_sequences = 16;
  cfg.frames = 120;
  auto ds = generate(cfg, "train");
  MissingModel model{MissingKind::Iid, 1.0 / 3.0, 8};
  corrupt_presence(ds, model, 99);

  std::size_t miss = 0, total = 0;
  for (const auto& s : ds.sequences) {
    for (std::size_t t = 0; t < s.present.size(); ++t) {
      total += 1;
      if (!s.present[t]) {
        miss += 1;
        for (std::size_t i = 0; i < ds.n_f; ++i)
          CHECK(s.head[t * ds.n_f + i] == 0.0f);
      }
    }
  }
  // 1920 Bernoulli(1/3) draws; 5 sigma is about 0.054.
  const double rate = static_cast<double>(miss) / static_cast<double>(total);
  CHECK(std::abs(rate - 1.0 / 3.0) < 0.055);

  auto ds2 = generate(cfg, "train");
  corrupt_presence(ds2, model, 99);
  CHECK(serialize(ds) == serialize(ds2));
}

TEST_CASE("burst corruption produces contiguous gaps near the rate") {
  auto cfg = small_cfg(6);
  cfg.n_sequences = 32;
  cfg.frames = 150;
  auto ds = generate(cfg, "train");
  corrupt_presence(ds, {MissingKind::Burst, 1.0 / 3.0, 8}, 7);

  std::size_t miss = 0, total = 0, runs = 0;
  for (const auto& s : ds.sequences) {
    bool in_run = false;
    for (bool p : std::vector<bool>(s.present.begin(), s.present.end())) {
      total += 1;
      if (!p) {
        miss += 1;
        if (!in_run) ++runs;
        in_run = true;
      } else {
        in_run = false;
      }
    }
  }
  const double rate = static_cast<double>(miss) / static_cast<double>(total);
  CHECK(rate > 0.15);
  CHECK(rate < 0.55);
  // Bursty, not iid: mean run length well above 1.
  CHECK(static_cast<double>(miss) / static_cast<double>(runs) > 3.0);
}

TEST_CASE("generate applies its own missing model") {
  auto cfg = small_cfg(8);
  cfg.missing = {MissingKind::Iid, 0.5, 8};
  auto ds = generate(cfg, "train");
  std::size_t miss = 0;
  for (const auto& s : ds.sequences)
    for (auto p : s.present) miss += (p == 0);
  CHECK(miss > 0);
}

TEST_CASE("audio mixture is symmetric in person order") {
  // The scene waveform cannot reveal which person carries the labels.
  std::vector<VoiceTrack> voices(2);
  voices[0] = {110.0, 0.3, std::vector<double>(30, 0.8)};
  voices[1] = {220.0, 1.1, std::vector<double>(30, 0.5)};
  auto fwd = synth_voices(voices, 16000, 16000, 30);
  std::swap(voices[0], voices[1]);
  auto rev = synth_voices(voices, 16000, 16000, 30);
  CHECK(fwd == rev);
}

TEST_CASE("dataset file round trip is byte exact") {
  auto ds = generate(small_cfg(11), "test");
  const std::string path = "scenario_roundtrip.ttm";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  CHECK(serialize(back) == serialize(ds));
  CHECK(back.split == "test");
  CHECK(back.sequences.size() == ds.sequences.size());
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_dataset("does_not_exist.ttm"), IoError);
}

TEST_CASE("config validation") {
  auto cfg = small_cfg();
  cfg.persons = 0;
  CHECK_THROWS_AS(generate(cfg, "train"), ConfigError);
  cfg = small_cfg();
  cfg.persons = 4;
  CHECK_THROWS_AS(generate(cfg, "train"), ConfigError);
  cfg = small_cfg();
  cfg.n_sequences = 0;
  CHECK_THROWS_AS(generate(cfg, "train"), ConfigError);
  cfg = small_cfg();
  cfg.speak_duty = 1.5;
  CHECK_THROWS_AS(generate(cfg, "train"), ConfigError);
}
