#pragma once

#include <string>
#include <vector>

#include "ttm/config.hpp"
#include "ttm/trainer.hpp"

namespace ttm::evalkit {

// Datasets generated once and shared by every row of a study.
struct SplitData {
  train::PreparedDataset train_set, val_set, test_set;
};
SplitData make_splits(const config::RunConfig& cfg);

// One toggle row of the component ablation grid, aggregated over seeds.
struct AblationRow {
  bool vstr = false, psa = false, vmma = false;
  std::vector<double> maps, accs;  // one entry per seed
  bool failed = false;
  std::string error;

  double mean_map() const;
  double mean_acc() const;
};

// Trains and evaluates all 8 toggle combinations with shared data and
// seeds. Per-row failures are recorded and the run continues.
std::vector<AblationRow> run_ablation(const config::RunConfig& cfg,
                                      const SplitData& data);
std::string ablation_csv(const std::vector<AblationRow>& rows);

// Prompt threshold study: fine prompts, the adaptive threshold, and fixed
// thresholds 0.2 / 0.5 / 0.7.
struct ThresholdRow {
  std::string policy;
  std::vector<double> maps, accs;
  bool failed = false;
  std::string error;

  double mean_map() const;
  double mean_acc() const;
};
std::vector<ThresholdRow> threshold_study(const config::RunConfig& cfg,
                                          const SplitData& data);
std::string threshold_csv(const std::vector<ThresholdRow>& rows);

// PSA-trained vs plain model across the SNR grid.
struct SnrPoint {
  double snr_db = 0.0;
  std::string variant;  // "psa" or "plain"
  std::uint64_t seed = 0;
  double map = 0.0;
  double acc = 0.0;
};
std::vector<SnrPoint> snr_sweep(const config::RunConfig& cfg,
                                const SplitData& data);
std::string snr_csv(const std::vector<SnrPoint>& points);

// Run summary with the config hash, seeds and build identity.
std::string run_summary_json(const config::RunConfig& cfg);
std::string git_describe();

void write_text(const std::string& path, const std::string& text);
std::string predictions_csv(const std::vector<train::PredRow>& rows);

}  // namespace ttm::evalkit
