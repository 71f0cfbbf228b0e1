#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ttm/metrics.hpp"
#include "ttm/model.hpp"
#include "ttm/scenario.hpp"

namespace ttm::train {

struct TrainConfig {
  AdamConfig adam;            // lr defaults to 1e-3
  std::size_t epochs = 40;
  double clip = 1.0;
  double noise_prob = 0.5;    // chance a training sequence gets mixed noise
  double gamma_mix = 0.5;
  audio::NoiseKind noise_kind = audio::NoiseKind::White;
  std::size_t patience = 5;   // early stopping on validation mAP
  std::uint64_t seed = 1;
  double vmma_k = 0.0;                  // adaptive threshold sensitivity
  std::optional<double> beta_override;  // fixed-threshold ablations
};

// Sequences converted once into model-ready constants.
struct PreparedSequence {
  model::SequenceInput input;        // mel_mixed left empty
  std::vector<double> wave;          // retained for noise mixing
  int sample_rate = 16000;
  std::size_t id = 0;
};

struct PreparedDataset {
  std::vector<PreparedSequence> seqs;
  std::size_t frames = 0;
};

PreparedDataset prepare(const scenario::Dataset& ds,
                        const model::ModelConfig& cfg);

// Per-channel mean/std over present frames of the training split; written
// into the model's norm.mu / norm.sigma entries.
void fit_norm_stats(model::TtmModel& m, const PreparedDataset& train);

// Freezes the coarse-prompt threshold from training-split missing ratios.
void fit_beta(model::TtmModel& m, const PreparedDataset& train,
              const TrainConfig& cfg);

struct EpochRecord {
  double focal = 0.0;
  double mse = 0.0;
  double total = 0.0;
  double acc = 0.0;
};

EpochRecord train_epoch(model::TtmModel& m, const PreparedDataset& train,
                        const TrainConfig& cfg, std::mt19937_64& rng);

struct PredRow {
  std::size_t sequence = 0;
  std::size_t frame = 0;
  double score = 0.0;
  int label = 0;  // thresholded at 0.5
  int truth = 0;
};

struct EvalResult {
  std::optional<double> map;  // absent when the split has no positives
  double acc = 0.0;
  std::vector<PredRow> rows;
};

struct EvalOptions {
  std::optional<double> snr_db;  // evaluate under scaled noise
  audio::NoiseKind noise_kind = audio::NoiseKind::White;
  std::uint64_t noise_seed = 9000;
};

EvalResult evaluate(model::TtmModel& m, const PreparedDataset& data,
                    const EvalOptions& opts = {});

struct FitResult {
  double best_map = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> train_history;
  std::vector<double> val_map_history;
};

// Norm stats, threshold fit, epochs with early stopping, best-checkpoint
// restore. Deterministic given cfg.seed.
FitResult fit(model::TtmModel& m, const PreparedDataset& train,
              const PreparedDataset& val, const TrainConfig& cfg);

void save_model(model::TtmModel& m, const std::string& path);
void load_model(model::TtmModel& m, const std::string& path);

}  // namespace ttm::train
