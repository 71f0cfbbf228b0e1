#include "ttm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ttm::train {

PreparedDataset prepare(const scenario::Dataset& ds,
                        const model::ModelConfig& cfg) {
  if (ds.img != cfg.img)
    throw ConfigError("prepare: dataset lip side " + std::to_string(ds.img) +
                      " does not match model " + std::to_string(cfg.img));
  if (ds.n_f != cfg.n_f)
    throw ConfigError("prepare: head feature width mismatch");
  PreparedDataset out;
  out.frames = ds.frames;
  out.seqs.resize(ds.sequences.size());
  const std::size_t T = ds.frames;
  for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
    const auto& src = ds.sequences[s];
    auto& dst = out.seqs[s];
    dst.id = s;
    dst.sample_rate = ds.sample_rate;
    dst.input.frames = T;

    std::vector<double> head(T * ds.n_f);
    for (std::size_t i = 0; i < head.size(); ++i) head[i] = src.head[i];
    dst.input.head = Tensor::from_data({T, ds.n_f}, std::move(head));

    dst.input.lip.reserve(T);
    std::vector<double> px(ds.img * ds.img);
    for (std::size_t t = 0; t < T; ++t) {
      const auto* p = src.lip.data() + t * px.size();
      for (std::size_t i = 0; i < px.size(); ++i) px[i] = p[i] / 255.0;
      dst.input.lip.push_back(model::patchify(px, ds.img, cfg.patch));
    }

    dst.wave.resize(src.wave.size());
    for (std::size_t i = 0; i < dst.wave.size(); ++i)
      dst.wave[i] = src.wave[i];
    dst.input.mel_clean =
        audio::mel_spectrogram({dst.wave, ds.sample_rate}, cfg.mel);

    dst.input.mask.resize(T);
    dst.input.labels.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      dst.input.mask[t] = src.present[t] != 0;
      dst.input.labels[t] = src.label[t];
    }
  }
  return out;
}

void fit_norm_stats(model::TtmModel& m, const PreparedDataset& train) {
  const std::size_t D = m.cfg.n_f;
  std::vector<double> mu(D, 0.0), var(D, 0.0);
  std::size_t n = 0;
  for (const auto& s : train.seqs)
    for (std::size_t t = 0; t < s.input.frames; ++t) {
      if (!s.input.mask[t]) continue;  // zeroed frames would bias the stats
      ++n;
      for (std::size_t i = 0; i < D; ++i)
        mu[i] += s.input.head.at(t, i);
    }
  if (n == 0) throw DataError("fit_norm_stats: no present frames in split");
  for (auto& v : mu) v /= static_cast<double>(n);
  for (const auto& s : train.seqs)
    for (std::size_t t = 0; t < s.input.frames; ++t) {
      if (!s.input.mask[t]) continue;
      for (std::size_t i = 0; i < D; ++i) {
        const double d = s.input.head.at(t, i) - mu[i];
        var[i] += d * d;
      }
    }
  auto& pmu = m.params.at("norm.mu").value();
  auto& psd = m.params.at("norm.sigma").value();
  for (std::size_t i = 0; i < D; ++i) {
    pmu[i] = mu[i];
    psd[i] = std::max(std::sqrt(var[i] / static_cast<double>(n)), 1e-6);
  }
}

void fit_beta(model::TtmModel& m, const PreparedDataset& train,
              const TrainConfig& cfg) {
  if (cfg.beta_override) {
    m.beta_t = *cfg.beta_override;
  } else {
    std::vector<double> history;
    history.reserve(train.seqs.size());
    for (const auto& s : train.seqs)
      history.push_back(vmma::missing_ratio(s.input.mask));
    m.beta_t = vmma::adaptive_threshold(history, cfg.vmma_k);
  }
  m.params.at("vmma.beta").value()[0] = m.beta_t;
}

namespace {

void check_finite(const model::ForwardOut& out) {
  for (const Tensor* t : {&out.scores, &out.focal, &out.mse, &out.total}) {
    if (!t->defined()) continue;
    if (!all_finite(*t)) {
      const std::string tag = t->tag().empty() ? "loss" : t->tag();
      throw NumericError("train_epoch: non-finite values in " + tag);
    }
  }
}

}  // namespace

EpochRecord train_epoch(model::TtmModel& m, const PreparedDataset& train,
                        const TrainConfig& cfg, std::mt19937_64& rng) {
  if (train.seqs.empty()) throw DataError("train_epoch: empty dataset");
  std::vector<std::size_t> order(train.seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::uint64_t> nseed;

  EpochRecord rec;
  std::size_t hits = 0, frames = 0;
  for (std::size_t idx : order) {
    const auto& seq = train.seqs[idx];
    model::SequenceInput in = seq.input;  // shallow tensor copies
    if (m.cfg.use_psa && coin(rng) < cfg.noise_prob) {
      audio::Waveform clean{seq.wave, seq.sample_rate};
      audio::Waveform noise = audio::make_noise(cfg.noise_kind,
                                                seq.wave.size(),
                                                seq.sample_rate, nseed(rng));
      auto mixed = audio::mix_noise(clean, noise, cfg.gamma_mix, rng);
      in.mel_mixed = audio::mel_spectrogram(mixed, m.cfg.mel);
    }

    auto out = model::forward(m, in);
    check_finite(out);
    backward(out.total);
    m.params.clip_grad_norm(cfg.clip);
    m.params.adam_step(cfg.adam);

    rec.focal += out.focal.item();
    rec.total += out.total.item();
    if (out.mse.defined()) rec.mse += out.mse.item();
    for (std::size_t t = 0; t < in.frames; ++t) {
      ++frames;
      hits += (out.scores.at(t) >= 0.5 ? 1 : 0) == in.labels[t];
    }
  }
  const double n = static_cast<double>(train.seqs.size());
  rec.focal /= n;
  rec.mse /= n;
  rec.total /= n;
  rec.acc = static_cast<double>(hits) / static_cast<double>(frames);
  return rec;
}

EvalResult evaluate(model::TtmModel& m, const PreparedDataset& data,
                    const EvalOptions& opts) {
  if (data.seqs.empty()) throw DataError("evaluate: empty dataset");
  std::vector<std::vector<PredRow>> per_seq(data.seqs.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t s = 0; s < data.seqs.size(); ++s) {
    NoGradGuard guard;
    const auto& seq = data.seqs[s];
    model::SequenceInput in = seq.input;
    if (opts.snr_db) {
      audio::Waveform clean{seq.wave, seq.sample_rate};
      audio::Waveform noise = audio::make_noise(
          opts.noise_kind, seq.wave.size(), seq.sample_rate,
          opts.noise_seed + s);
      in.mel_clean = audio::mel_spectrogram(
          audio::scale_noise_to_snr(clean, noise, *opts.snr_db), m.cfg.mel);
    }
    auto out = model::forward(m, in);
    auto& rows = per_seq[s];
    rows.resize(in.frames);
    for (std::size_t t = 0; t < in.frames; ++t) {
      rows[t] = {seq.id, t, out.scores.at(t),
                 out.scores.at(t) >= 0.5 ? 1 : 0, in.labels[t]};
    }
  }

  EvalResult res;
  std::vector<metrics::ScoredLabel> pooled;
  for (auto& rows : per_seq)
    for (auto& r : rows) {
      pooled.push_back({r.score, r.truth});
      res.rows.push_back(r);
    }
  res.map = metrics::average_precision(pooled);
  res.acc = metrics::top1_accuracy(pooled);
  return res;
}

FitResult fit(model::TtmModel& m, const PreparedDataset& train,
              const PreparedDataset& val, const TrainConfig& cfg) {
  fit_norm_stats(m, train);
  fit_beta(m, train, cfg);
  m.params.ensure_grads();
  std::mt19937_64 rng(cfg.seed);

  FitResult res;
  std::map<std::string, std::vector<double>> best;
  std::size_t since_best = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    res.train_history.push_back(train_epoch(m, train, cfg, rng));
    const auto ev = evaluate(m, val);
    const double vm = ev.map.value_or(0.0);
    res.val_map_history.push_back(vm);
    res.epochs_run = e + 1;
    if (res.val_map_history.size() == 1 || vm > res.best_map) {
      res.best_map = vm;
      res.best_epoch = e;
      since_best = 0;
      best.clear();
      for (const auto& [name, t] : m.params.all()) best[name] = t.value();
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  for (auto& [name, v] : best) m.params.at(name).value() = v;
  return res;
}

void save_model(model::TtmModel& m, const std::string& path) {
  m.params.at("vmma.beta").value()[0] = m.beta_t;
  m.params.save(path);
}

void load_model(model::TtmModel& m, const std::string& path) {
  m.params.load(path);
  m.beta_t = m.params.at("vmma.beta").value()[0];
  for (const char* frozen : {"norm.mu", "norm.sigma", "vmma.beta"})
    m.params.at(frozen).set_requires_grad(false);
}

}  // namespace ttm::train
