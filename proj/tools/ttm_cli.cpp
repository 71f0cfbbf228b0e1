// Command-line front end: dataset generation, training, evaluation,
// ablation/threshold studies, SNR sweeps, and numeric self-checks.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ttm/config.hpp"
#include "ttm/evalkit.hpp"
#include "ttm/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace ttm;

namespace {

config::RunConfig load_config(const std::string& path,
                              std::optional<std::uint64_t> seed_flag) {
  config::RunConfig cfg;
  if (!path.empty()) cfg = config::load_run_config(path);
  if (seed_flag) cfg.seed = *seed_flag;  // flags beat the file
  cfg.finalize();
  return cfg;
}

std::string out_root(const config::RunConfig& cfg) {
  if (!cfg.out_root.empty()) return cfg.out_root;
  if (const char* env = std::getenv("TTM_OUT_ROOT")) return env;
  return "runs";
}

// runs/<timestamp>-<confighash>/ with the effective config echoed inside.
fs::path make_run_dir(const config::RunConfig& cfg, const std::string& name) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&tt));
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(config::config_hash(cfg)));
  const std::string base = std::string(stamp) + "-" + hash;
  fs::path dir = fs::path(out_root(cfg)) / base;
  for (int k = 1; fs::exists(dir); ++k)
    dir = fs::path(out_root(cfg)) / (base + "-" + std::to_string(k));
  fs::create_directories(dir);
  evalkit::write_text((dir / "config.json").string(),
                      config::dump_run_config(cfg));
  evalkit::write_text((dir / "summary.json").string(),
                      evalkit::run_summary_json(cfg));
  std::cout << "command=" << name << "\n";
  std::cout << "run_dir=" << dir.string() << "\n";
  return dir;
}

int cmd_generate(const config::RunConfig& cfg, const std::string& split) {
  auto dir = make_run_dir(cfg, "generate");
  std::vector<std::pair<std::string, std::size_t>> splits;
  if (split == "all")
    splits = {{"train", cfg.n_train}, {"val", cfg.n_val}, {"test", cfg.n_test}};
  else if (split == "train")
    splits = {{"train", cfg.n_train}};
  else if (split == "val")
    splits = {{"val", cfg.n_val}};
  else if (split == "test")
    splits = {{"test", cfg.n_test}};
  else
    throw ConfigError("generate: unknown split " + split);

  for (const auto& [name, n] : splits) {
    auto scen = cfg.scen;
    scen.n_sequences = n;
    auto ds = scenario::generate(scen, name);
    const auto path = dir / (name + ".ttm");
    scenario::save_dataset(ds, path.string());
    const auto bytes = scenario::serialize(ds);
    std::printf("split=%s file=%s sequences=%zu checksum=%016llx\n",
                name.c_str(), path.string().c_str(), ds.sequences.size(),
                static_cast<unsigned long long>(scenario::fnv1a64(bytes)));
  }
  return 0;
}

int cmd_train(const config::RunConfig& cfg, const std::string& data_dir) {
  auto dir = make_run_dir(cfg, "train");
  auto train_ds = scenario::load_dataset(
      (fs::path(data_dir) / "train.ttm").string());
  auto val_ds = scenario::load_dataset((fs::path(data_dir) / "val.ttm").string());
  auto train_prep = train::prepare(train_ds, cfg.model);
  auto val_prep = train::prepare(val_ds, cfg.model);

  model::TtmModel m;
  m.cfg = cfg.model;
  m.init(cfg.seed);
  auto res = train::fit(m, train_prep, val_prep, cfg.train);
  for (std::size_t e = 0; e < res.epochs_run; ++e)
    std::printf("epoch=%zu focal=%.6f mse=%.6f total=%.6f acc=%.4f val_map=%.6f\n",
                e, res.train_history[e].focal, res.train_history[e].mse,
                res.train_history[e].total, res.train_history[e].acc,
                res.val_map_history[e]);
  const auto ckpt = dir / "model.ckpt";
  train::save_model(m, ckpt.string());
  std::printf("best_epoch=%zu best_val_map=%.6f checkpoint=%s\n",
              res.best_epoch, res.best_map, ckpt.string().c_str());
  return 0;
}

int cmd_eval(const config::RunConfig& cfg, const std::string& ckpt,
             const std::string& data_file, std::optional<double> snr) {
  auto dir = make_run_dir(cfg, "eval");
  auto ds = scenario::load_dataset(data_file);
  auto prep = train::prepare(ds, cfg.model);
  model::TtmModel m;
  m.cfg = cfg.model;
  m.init(cfg.seed);
  train::load_model(m, ckpt);

  train::EvalOptions opts;
  opts.snr_db = snr;
  opts.noise_kind = cfg.train.noise_kind;
  auto ev = train::evaluate(m, prep, opts);
  evalkit::write_text((dir / "predictions.csv").string(),
                      evalkit::predictions_csv(ev.rows));
  std::printf("map=%.6f acc=%.6f predictions=%s\n", ev.map.value_or(0.0),
              ev.acc, (dir / "predictions.csv").string().c_str());
  return 0;
}

int cmd_ablate(const config::RunConfig& cfg) {
  auto dir = make_run_dir(cfg, "ablate");
  auto data = evalkit::make_splits(cfg);
  auto rows = evalkit::run_ablation(cfg, data);
  evalkit::write_text((dir / "ablation.csv").string(),
                      evalkit::ablation_csv(rows));
  auto thr = evalkit::threshold_study(cfg, data);
  evalkit::write_text((dir / "thresholds.csv").string(),
                      evalkit::threshold_csv(thr));
  std::printf("ablation=%s thresholds=%s\n",
              (dir / "ablation.csv").string().c_str(),
              (dir / "thresholds.csv").string().c_str());
  for (const auto& r : rows)
    std::printf("row vstr=%d psa=%d vmma=%d acc=%.4f map=%.4f status=%s\n",
                r.vstr, r.psa, r.vmma, r.mean_acc(), r.mean_map(),
                r.failed ? r.error.c_str() : "ok");
  return 0;
}

int cmd_snr_sweep(const config::RunConfig& cfg) {
  auto dir = make_run_dir(cfg, "snr-sweep");
  auto data = evalkit::make_splits(cfg);
  auto pts = evalkit::snr_sweep(cfg, data);
  evalkit::write_text((dir / "snr_sweep.csv").string(), evalkit::snr_csv(pts));
  for (const auto& p : pts)
    std::printf("snr_db=%g variant=%s seed=%llu map=%.4f acc=%.4f\n", p.snr_db,
                p.variant.c_str(), static_cast<unsigned long long>(p.seed),
                p.map, p.acc);
  return 0;
}

int cmd_gradcheck(const config::RunConfig& cfg) {
  auto mcfg = model::ModelConfig::tiny();
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(cfg.seed);

  std::mt19937_64 rng(cfg.seed + 1);
  std::normal_distribution<double> nd(0.0, 1.0);
  model::SequenceInput in;
  in.frames = 4;
  std::vector<double> head(in.frames * mcfg.n_f);
  for (auto& h : head) h = nd(rng);
  in.head = Tensor::from_data({in.frames, mcfg.n_f}, std::move(head));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < in.frames; ++t) {
    std::vector<double> px(mcfg.img * mcfg.img);
    for (auto& p : px) p = u(rng);
    in.lip.push_back(model::patchify(px, mcfg.img, mcfg.patch));
  }
  audio::Waveform w;
  w.samples.resize(2133);
  for (auto& s : w.samples) s = 0.2 * nd(rng);
  in.mel_clean = audio::mel_spectrogram(w, mcfg.mel);
  auto noisy = w;
  for (auto& s : noisy.samples) s = 0.5 * s + 0.1 * nd(rng);
  in.mel_mixed = audio::mel_spectrogram(noisy, mcfg.mel);
  in.mask = {true, false, true, true};
  in.labels = {1, 0, 0, 1};

  const double err = gradcheck_max_error(
      m.params, [&] { return model::forward(m, in).total; }, 1e-5);
  std::printf("max_rel_err=%.3e threshold=1e-5 status=%s\n", err,
              err < 1e-5 ? "pass" : "fail");
  return err < 1e-5 ? 0 : 2;
}

int cmd_pose(const std::string& input, const std::string& output) {
  std::istream* is = &std::cin;
  std::ifstream f;
  if (!input.empty()) {
    f.open(input);
    if (!f) throw IoError("cannot open: " + input);
    is = &f;
  }
  std::ostringstream csv;
  csv << "a1x,a1y,a1z,a2x,a2y,a2z,r00,r01,r02,r10,r11,r12,r20,r21,r22,"
         "yaw,pitch,roll\n";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(*is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    pose::Rotation6D r;
    if (!(ls >> r.a1[0] >> r.a1[1] >> r.a1[2] >> r.a2[0] >> r.a2[1] >> r.a2[2]))
      throw DataError("pose: line " + std::to_string(lineno) +
                      " does not hold six floats");
    auto R = pose::gram_schmidt_6d(r);
    auto e = pose::euler_from_rotation(R);
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
                  "%.9g,%.9g,%.9g\n",
                  r.a1[0], r.a1[1], r.a1[2], r.a2[0], r.a2[1], r.a2[2], R.m[0][0],
                  R.m[0][1], R.m[0][2], R.m[1][0], R.m[1][1], R.m[1][2],
                  R.m[2][0], R.m[2][1], R.m[2][2], e.yaw, e.pitch, e.roll);
    csv << buf;
  }
  if (output.empty())
    std::cout << csv.str();
  else
    evalkit::write_text(output, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talking-to-me pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed_flag, "override the config seed");

  auto* gen = app.add_subcommand("generate", "write dataset split files");
  std::string split = "all";
  gen->add_option("--split", split, "train|val|test|all");

  auto* tr = app.add_subcommand("train", "train a model on generated data");
  std::string data_dir;
  tr->add_option("--data-dir", data_dir, "directory with train.ttm/val.ttm")
      ->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt, data_file;
  std::optional<double> snr;
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--data", data_file, "dataset file")->required();
  ev->add_option("--snr", snr, "evaluate under this SNR (dB)");

  auto* ab = app.add_subcommand("ablate", "component and threshold studies");
  auto* sw = app.add_subcommand("snr-sweep", "PSA vs plain across SNRs");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference self check");

  auto* po = app.add_subcommand("pose", "6D vectors to rotation CSV");
  std::string pose_in, pose_out;
  po->add_option("--input", pose_in, "text file, six floats per line");
  po->add_option("--output", pose_out, "CSV destination (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  try {
    const auto cfg = load_config(config_path, seed_flag);
    if (gen->parsed()) return cmd_generate(cfg, split);
    if (tr->parsed()) return cmd_train(cfg, data_dir);
    if (ev->parsed()) return cmd_eval(cfg, ckpt, data_file, snr);
    if (ab->parsed()) return cmd_ablate(cfg);
    if (sw->parsed()) return cmd_snr_sweep(cfg);
    if (gc->parsed()) return cmd_gradcheck(cfg);
    if (po->parsed()) return cmd_pose(pose_in, pose_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
