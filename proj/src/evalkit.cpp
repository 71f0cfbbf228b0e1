#include "ttm/evalkit.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ttm::evalkit {

namespace {

double vec_mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

// Train one model on the shared splits and return test metrics.
train::EvalResult train_and_eval(const SplitData& data,
                                 const model::ModelConfig& mcfg,
                                 const train::TrainConfig& tcfg,
                                 std::uint64_t seed) {
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(seed);
  train::TrainConfig tc = tcfg;
  tc.seed = seed;
  train::fit(m, data.train_set, data.val_set, tc);
  return train::evaluate(m, data.test_set);
}

}  // namespace

SplitData make_splits(const config::RunConfig& cfg) {
  SplitData d;
  auto scen = cfg.scen;
  scen.n_sequences = cfg.n_train;
  d.train_set = train::prepare(scenario::generate(scen, "train"), cfg.model);
  scen.n_sequences = cfg.n_val;
  d.val_set = train::prepare(scenario::generate(scen, "val"), cfg.model);
  scen.n_sequences = cfg.n_test;
  d.test_set = train::prepare(scenario::generate(scen, "test"), cfg.model);
  return d;
}

double AblationRow::mean_map() const { return vec_mean(maps); }
double AblationRow::mean_acc() const { return vec_mean(accs); }
double ThresholdRow::mean_map() const { return vec_mean(maps); }
double ThresholdRow::mean_acc() const { return vec_mean(accs); }

std::vector<AblationRow> run_ablation(const config::RunConfig& cfg,
                                      const SplitData& data) {
  std::vector<AblationRow> rows;
  for (int mask = 0; mask < 8; ++mask) {
    AblationRow row;
    row.vstr = mask & 4;
    row.psa = mask & 2;
    row.vmma = mask & 1;
    try {
      auto mcfg = cfg.model;
      mcfg.use_vstr = row.vstr;
      mcfg.use_psa = row.psa;
      mcfg.use_vmma = row.vmma;
      for (std::uint64_t seed : cfg.seeds) {
        auto ev = train_and_eval(data, mcfg, cfg.train, seed);
        row.maps.push_back(ev.map.value_or(0.0));
        row.accs.push_back(ev.acc);
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "vstr,psa,vmma,acc,map,acc_per_seed,map_per_seed,status\n";
  for (const auto& r : rows) {
    os << (r.vstr ? 1 : 0) << ',' << (r.psa ? 1 : 0) << ',' << (r.vmma ? 1 : 0)
       << ',';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean_acc(), r.mean_map());
    os << buf << ",\"";
    for (std::size_t i = 0; i < r.accs.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.6f", i ? ";" : "", r.accs[i]);
      os << buf;
    }
    os << "\",\"";
    for (std::size_t i = 0; i < r.maps.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.6f", i ? ";" : "", r.maps[i]);
      os << buf;
    }
    os << "\"," << (r.failed ? "error: " + r.error : "ok") << '\n';
  }
  return os.str();
}

std::vector<ThresholdRow> threshold_study(const config::RunConfig& cfg,
                                          const SplitData& data) {
  struct Policy {
    std::string name;
    vmma::PromptMode mode;
    std::optional<double> beta;
  };
  const std::vector<Policy> policies{
      {"fine", vmma::PromptMode::Fine, {}},
      {"coarse-adaptive", vmma::PromptMode::Coarse, {}},
      {"coarse-0.2", vmma::PromptMode::Coarse, 0.2},
      {"coarse-0.5", vmma::PromptMode::Coarse, 0.5},
      {"coarse-0.7", vmma::PromptMode::Coarse, 0.7},
  };

  std::vector<ThresholdRow> rows;
  for (const auto& p : policies) {
    ThresholdRow row;
    row.policy = p.name;
    try {
      auto mcfg = cfg.model;
      mcfg.use_vmma = true;
      mcfg.prompt_mode = p.mode;
      auto tcfg = cfg.train;
      tcfg.beta_override = p.beta;
      for (std::uint64_t seed : cfg.seeds) {
        auto ev = train_and_eval(data, mcfg, tcfg, seed);
        row.maps.push_back(ev.map.value_or(0.0));
        row.accs.push_back(ev.acc);
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string threshold_csv(const std::vector<ThresholdRow>& rows) {
  std::ostringstream os;
  os << "policy,acc,map,status\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean_acc(), r.mean_map());
    os << r.policy << ',' << buf << ','
       << (r.failed ? "error: " + r.error : "ok") << '\n';
  }
  return os.str();
}

std::vector<SnrPoint> snr_sweep(const config::RunConfig& cfg,
                                const SplitData& data) {
  if (cfg.snr_grid.empty()) throw ConfigError("snr_sweep: empty SNR grid");
  std::vector<SnrPoint> points;
  for (const bool with_psa : {true, false}) {
    auto mcfg = cfg.model;
    mcfg.use_psa = with_psa;
    for (std::uint64_t seed : cfg.seeds) {
      model::TtmModel m;
      m.cfg = mcfg;
      m.init(seed);
      train::TrainConfig tc = cfg.train;
      tc.seed = seed;
      train::fit(m, data.train_set, data.val_set, tc);
      for (double snr : cfg.snr_grid) {
        train::EvalOptions opts;
        opts.snr_db = snr;
        opts.noise_kind = cfg.train.noise_kind;
        auto ev = train::evaluate(m, data.test_set, opts);
        points.push_back({snr, with_psa ? "psa" : "plain", seed,
                          ev.map.value_or(0.0), ev.acc});
      }
    }
  }
  return points;
}

std::string snr_csv(const std::vector<SnrPoint>& points) {
  std::ostringstream os;
  os << "snr_db,variant,seed,map,acc\n";
  for (const auto& p : points) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%g,%s,%llu,%.6f,%.6f", p.snr_db,
                  p.variant.c_str(),
                  static_cast<unsigned long long>(p.seed), p.map, p.acc);
    os << buf << '\n';
  }
  return os.str();
}

std::string git_describe() {
  std::array<char, 128> buf{};
  std::string out;
  FILE* p = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!p) return "unknown";
  while (fgets(buf.data(), buf.size(), p)) out += buf.data();
  pclose(p);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    out.pop_back();
  return out.empty() ? "unknown" : out;
}

std::string run_summary_json(const config::RunConfig& cfg) {
  nlohmann::json j;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config::config_hash(cfg)));
  j["config_hash"] = hash;
  j["seeds"] = cfg.seeds;
  j["build"] = git_describe();
  return j.dump(2);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

std::string predictions_csv(const std::vector<train::PredRow>& rows) {
  std::ostringstream os;
  os << "sequence_id,frame,score,label,truth\n";
  for (const auto& r : rows) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.9f,%d,%d", r.sequence, r.frame,
                  r.score, r.label, r.truth);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace ttm::evalkit
