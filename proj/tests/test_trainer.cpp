#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "ttm/trainer.hpp"

using namespace ttm;
using namespace ttm::train;

namespace {

model::ModelConfig small_model() {
  model::ModelConfig cfg;
  cfg.img = 32;
  cfg.patch = 16;
  cfg.d_lip = 16;
  cfg.d_m = 8;
  cfg.audio_channels = 8;
  cfg.d_audio = 8;
  cfg.pose_hidden = 8;
  cfg.cross_layers = 1;
  return cfg;
}

scenario::ScenarioConfig small_scenario(std::uint64_t seed) {
  scenario::ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.n_sequences = 4;
  cfg.frames = 30;
  cfg.img = 32;
  return cfg;
}

}  // namespace

TEST_CASE("prepare shapes and mel caching") {
  auto ds = scenario::generate(small_scenario(1), "train");
  auto prep = prepare(ds, small_model());
  REQUIRE(prep.seqs.size() == 4);
  for (const auto& s : prep.seqs) {
    CHECK(s.input.frames == 30);
    CHECK(s.input.head.rows() == 30);
    CHECK(s.input.head.cols() == 32);
    CHECK(s.input.lip.size() == 30);
    CHECK(s.input.lip[0].rows() == 4);    // (32/16)^2 patches
    CHECK(s.input.lip[0].cols() == 256);
    CHECK(s.input.mel_clean.frames == 98);  // one second of audio
    CHECK(!s.input.mel_mixed.has_value());
    for (double v : s.input.lip[0].value()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  auto wrong = small_model();
  wrong.img = 64;
  CHECK_THROWS_AS(prepare(ds, wrong), ConfigError);
}

TEST_CASE("norm stats give unit moments on present frames") {
  auto ds = scenario::generate(small_scenario(2), "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(1);
  fit_norm_stats(m, prep);

  const auto& mu = m.params.at("norm.mu").value();
  const auto& sd = m.params.at("norm.sigma").value();
  // Re-normalize the data with the fitted stats: moments become 0/1.
  for (std::size_t i = 0; i < mcfg.n_f; i += 7) {
    double s1 = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (const auto& seq : prep.seqs)
      for (std::size_t t = 0; t < seq.input.frames; ++t) {
        const double z = (seq.input.head.at(t, i) - mu[i]) / sd[i];
        s1 += z;
        s2 += z * z;
        ++n;
      }
    CHECK(std::abs(s1 / n) < 1e-6);
    CHECK(std::abs(s2 / n - 1.0) < 1e-6);
  }
}

TEST_CASE("beta fit freezes the adaptive threshold") {
  auto scfg = small_scenario(3);
  scfg.missing = {scenario::MissingKind::Iid, 0.4, 8};
  auto ds = scenario::generate(scfg, "train");
  auto prep = prepare(ds, small_model());
  model::TtmModel m;
  m.cfg = small_model();
  m.init(1);

  TrainConfig tc;
  tc.vmma_k = 0.0;
  fit_beta(m, prep, tc);
  double mean = 0.0;
  for (const auto& s : prep.seqs) mean += vmma::missing_ratio(s.input.mask);
  mean /= static_cast<double>(prep.seqs.size());
  CHECK(m.beta_t == doctest::Approx(mean).epsilon(1e-12));
  CHECK(m.params.at("vmma.beta").value()[0] == m.beta_t);

  tc.beta_override = 0.7;
  fit_beta(m, prep, tc);
  CHECK(m.beta_t == 0.7);
}

TEST_CASE("lr=0 leaves parameters and losses unchanged") {
  auto ds = scenario::generate(small_scenario(4), "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(2);
  fit_norm_stats(m, prep);
  m.params.ensure_grads();

  TrainConfig tc;
  tc.adam.lr = 0.0;
  tc.noise_prob = 0.0;  // keep the forward pass deterministic
  auto before = m.params.at("fuse.cls.w").value();
  std::mt19937_64 rng1(7), rng2(7);  // same visit order, exact comparison
  auto e1 = train_epoch(m, prep, tc, rng1);
  auto e2 = train_epoch(m, prep, tc, rng2);
  CHECK(m.params.at("fuse.cls.w").value() == before);
  CHECK(e1.focal == e2.focal);
  CHECK(e1.total == e2.total);
}

TEST_CASE("seeded training is deterministic") {
  auto ds = scenario::generate(small_scenario(5), "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);

  TrainConfig tc;
  tc.adam.lr = 1e-3;
  std::vector<double> trace1, trace2;
  for (auto* trace : {&trace1, &trace2}) {
    model::TtmModel m;
    m.cfg = mcfg;
    m.init(3);
    fit_norm_stats(m, prep);
    m.params.ensure_grads();
    std::mt19937_64 rng(11);
    for (int e = 0; e < 2; ++e)
      trace->push_back(train_epoch(m, prep, tc, rng).total);
  }
  CHECK(trace1 == trace2);
}

TEST_CASE("a few steps reduce the loss") {
  auto scfg = small_scenario(6);
  scfg.n_sequences = 2;
  auto ds = scenario::generate(scfg, "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(4);
  fit_norm_stats(m, prep);
  m.params.ensure_grads();

  TrainConfig tc;
  tc.adam.lr = 3e-3;
  tc.noise_prob = 0.0;
  std::mt19937_64 rng(13);
  const double first = train_epoch(m, prep, tc, rng).focal;
  double last = first;
  for (int e = 0; e < 8; ++e) last = train_epoch(m, prep, tc, rng).focal;
  CHECK(last < first);
}

TEST_CASE("non-finite forward aborts with the offending tensor named") {
  auto ds = scenario::generate(small_scenario(7), "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(5);
  fit_norm_stats(m, prep);
  m.params.ensure_grads();
  m.params.at("fuse.cls.b").value()[0] =
      std::numeric_limits<double>::quiet_NaN();

  TrainConfig tc;
  std::mt19937_64 rng(17);
  CHECK_THROWS_WITH_AS(train_epoch(m, prep, tc, rng),
                       doctest::Contains("non-finite"), NumericError);
}

TEST_CASE("checkpoint round trip reproduces evaluation exactly") {
  auto ds = scenario::generate(small_scenario(8), "train");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(6);
  fit_norm_stats(m, prep);
  TrainConfig tc;
  fit_beta(m, prep, tc);
  m.params.ensure_grads();
  std::mt19937_64 rng(19);
  train_epoch(m, prep, tc, rng);

  auto ev = evaluate(m, prep);
  const std::string path = "trainer_ckpt.ttm";
  save_model(m, path);

  model::TtmModel m2;
  m2.cfg = mcfg;
  m2.init(99);  // different random init, fully overwritten by load
  load_model(m2, path);
  auto ev2 = evaluate(m2, prep);
  std::remove(path.c_str());

  REQUIRE(ev.map.has_value());
  REQUIRE(ev2.map.has_value());
  CHECK(*ev2.map == *ev.map);
  CHECK(ev2.acc == ev.acc);
  CHECK(ev2.rows.size() == ev.rows.size());
  for (std::size_t i = 0; i < ev.rows.size(); ++i)
    CHECK(ev2.rows[i].score == ev.rows[i].score);
}

TEST_CASE("evaluation under a requested SNR is deterministic") {
  auto ds = scenario::generate(small_scenario(9), "val");
  auto mcfg = small_model();
  auto prep = prepare(ds, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(7);
  fit_norm_stats(m, prep);

  EvalOptions opts;
  opts.snr_db = -5.0;
  auto a = evaluate(m, prep, opts);
  auto b = evaluate(m, prep, opts);
  CHECK(a.acc == b.acc);
  REQUIRE(a.map.has_value());
  CHECK(*a.map == *b.map);

  opts.snr_db = 10.0;
  auto c = evaluate(m, prep, opts);
  // Different noise level, different scores.
  bool any_diff = false;
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    any_diff = any_diff || a.rows[i].score != c.rows[i].score;
  CHECK(any_diff);
}

TEST_CASE("fit runs early stopping and restores the best epoch") {
  auto ds = scenario::generate(small_scenario(10), "train");
  auto vs = scenario::generate(small_scenario(10), "val");
  auto mcfg = small_model();
  auto train_prep = prepare(ds, mcfg);
  auto val_prep = prepare(vs, mcfg);
  model::TtmModel m;
  m.cfg = mcfg;
  m.init(8);

  TrainConfig tc;
  tc.epochs = 3;
  tc.patience = 2;
  tc.adam.lr = 1e-3;
  auto res = fit(m, train_prep, val_prep, tc);
  CHECK(res.epochs_run >= 1);
  CHECK(res.epochs_run <= 3);
  CHECK(res.train_history.size() == res.epochs_run);
  CHECK(res.val_map_history.size() == res.epochs_run);
  // The restored parameters reproduce the best recorded validation mAP.
  auto ev = evaluate(m, val_prep);
  REQUIRE(ev.map.has_value());
  CHECK(*ev.map == doctest::Approx(res.best_map).epsilon(1e-12));
}
