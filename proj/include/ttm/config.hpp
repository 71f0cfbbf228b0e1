#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttm/model.hpp"
#include "ttm/scenario.hpp"
#include "ttm/trainer.hpp"

namespace ttm::config {

// Everything a run needs, loadable from one JSON file. Precedence is
// flags > file > defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  model::ModelConfig model;
  train::TrainConfig train;
  scenario::ScenarioConfig scen;
  std::size_t n_train = 200;
  std::size_t n_val = 40;
  std::size_t n_test = 40;
  std::vector<double> snr_grid{-10, -5, 0, 5, 10};
  std::vector<std::uint64_t> seeds{1, 2, 3};  // per-experiment model seeds
  std::string out_root;  // empty: $TTM_OUT_ROOT or ./runs

  // Propagates the top-level seed into sub-configs and cross-checks
  // model/scenario agreement (lip side, feature width).
  void finalize();
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& cfg);  // canonical JSON
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace ttm::config
