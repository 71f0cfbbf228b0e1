#include "ttm/model.hpp"

#include <cmath>

namespace ttm::model {

void ModelConfig::validate() const {
  if (img == 0 || patch == 0 || img % patch != 0)
    throw ConfigError("model: img " + std::to_string(img) +
                      " not divisible by patch " + std::to_string(patch));
  if (d_lip == 0 || lip_heads == 0 || d_lip % lip_heads != 0)
    throw ConfigError("model: d_lip " + std::to_string(d_lip) +
                      " not divisible by " + std::to_string(lip_heads) +
                      " heads");
  if (d_m == 0 || heads == 0 || d_m % heads != 0 || (2 * d_m) % heads != 0)
    throw ConfigError("model: d_m " + std::to_string(d_m) +
                      " not divisible by " + std::to_string(heads) + " heads");
  if (d_m % 2 != 0) throw ConfigError("model: d_m must be even (prompt halves)");
  if (patches_per_frame() + 1 > n_max + 1)
    throw ConfigError("model: patch count exceeds positional capacity");
  if (n_f == 0 || pose_hidden == 0 || d_audio == 0 || audio_channels == 0 ||
      cross_layers == 0)
    throw ConfigError("model: zero-sized dimension");
  if (conv_k == 0 || conv_s == 0)
    throw ConfigError("model: conv kernel and stride must be positive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.n_f = 4;
  c.pose_hidden = 4;
  c.img = 8;
  c.patch = 4;
  c.d_lip = 8;
  c.lip_heads = 2;
  c.n_max = 4;
  c.mel.n_mels = 16;
  c.conv_k = 3;
  c.conv_s = 1;
  c.audio_channels = 4;
  c.d_audio = 4;
  c.d_m = 8;
  c.heads = 2;
  c.cross_layers = 1;
  return c;
}

namespace {

void init_attn(ParameterSet& ps, std::mt19937_64& rng,
               const std::string& prefix, std::size_t dq, std::size_t dkv,
               std::size_t d) {
  const double sq = 1.0 / std::sqrt(static_cast<double>(dq));
  const double sk = 1.0 / std::sqrt(static_cast<double>(dkv));
  ps.add(prefix + ".wq", Tensor::randn({dq, d}, rng, sq, true));
  ps.add(prefix + ".bq", Tensor::zeros({d}, true));
  ps.add(prefix + ".wk", Tensor::randn({dkv, d}, rng, sk, true));
  ps.add(prefix + ".bk", Tensor::zeros({d}, true));
  ps.add(prefix + ".wv", Tensor::randn({dkv, d}, rng, sk, true));
  ps.add(prefix + ".bv", Tensor::zeros({d}, true));
  ps.add(prefix + ".wo", Tensor::randn({d, d}, rng, 1.0 / std::sqrt(double(d)),
                                       true));
  ps.add(prefix + ".bo", Tensor::zeros({d}, true));
}

void init_block(ParameterSet& ps, std::mt19937_64& rng,
                const std::string& prefix, std::size_t d) {
  init_attn(ps, rng, prefix + ".attn", d, d, d);
  ps.add(prefix + ".ln1.g", Tensor::full({d}, 1.0, true));
  ps.add(prefix + ".ln1.b", Tensor::zeros({d}, true));
  ps.add(prefix + ".ln2.g", Tensor::full({d}, 1.0, true));
  ps.add(prefix + ".ln2.b", Tensor::zeros({d}, true));
  const std::size_t h = 4 * d;
  ps.add(prefix + ".ffn.w1",
         Tensor::randn({d, h}, rng, 1.0 / std::sqrt(double(d)), true));
  ps.add(prefix + ".ffn.b1", Tensor::zeros({h}, true));
  ps.add(prefix + ".ffn.w2",
         Tensor::randn({h, d}, rng, 1.0 / std::sqrt(double(h)), true));
  ps.add(prefix + ".ffn.b2", Tensor::zeros({d}, true));
}

}  // namespace

void TtmModel::init(std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  params = ParameterSet();

  // Head branch.
  const auto nf = cfg.n_f, ph = cfg.pose_hidden;
  params.add("pose.w1",
             Tensor::randn({nf, ph}, rng, 1.0 / std::sqrt(double(nf)), true));
  params.add("pose.b1", Tensor::zeros({ph}, true));
  params.add("pose.w2",
             Tensor::randn({ph, ph}, rng, 1.0 / std::sqrt(double(ph)), true));
  params.add("pose.b2", Tensor::zeros({ph}, true));
  params.add("pose.w6", Tensor::randn({ph, 6}, rng, 0.01, true));
  // Bias starts at a valid rotation so Gram-Schmidt never sees a
  // degenerate pair early in training.
  params.add("pose.b6",
             Tensor::from_data({6}, {1, 0, 0, 0, 1, 0}, true));
  params.add("pose.wout", Tensor::randn({9, 3}, rng, 0.3, true));
  params.add("pose.bout", Tensor::zeros({3}, true));

  // Lip branch.
  const std::size_t pp = cfg.patch * cfg.patch;
  params.add("lip.embed.w",
             Tensor::randn({pp, cfg.d_lip}, rng, 1.0 / std::sqrt(double(pp)),
                           true));
  params.add("lip.embed.b", Tensor::zeros({cfg.d_lip}, true));
  params.add("lip.pos",
             Tensor::randn({cfg.n_max + 1, cfg.d_lip}, rng, 0.02, true));
  params.add("lip.cls", Tensor::randn({cfg.d_lip}, rng, 0.02, true));
  init_block(params, rng, "lip.enc", cfg.d_lip);

  // Audio encoder (shared between clean and mixed paths by construction).
  params.add("psa.conv1.w",
             Tensor::randn({cfg.conv_k * cfg.mel.n_mels, cfg.audio_channels},
                           rng, 1.0 / std::sqrt(double(cfg.conv_k * cfg.mel.n_mels)),
                           true));
  params.add("psa.conv1.b", Tensor::zeros({cfg.audio_channels}, true));
  params.add("psa.conv2.w",
             Tensor::randn({cfg.conv_k * cfg.audio_channels, cfg.audio_channels},
                           rng,
                           1.0 / std::sqrt(double(cfg.conv_k * cfg.audio_channels)),
                           true));
  params.add("psa.conv2.b", Tensor::zeros({cfg.audio_channels}, true));
  params.add("psa.out.w",
             Tensor::randn({cfg.audio_channels, cfg.d_audio}, rng,
                           1.0 / std::sqrt(double(cfg.audio_channels)), true));
  params.add("psa.out.b", Tensor::zeros({cfg.d_audio}, true));

  // Fusion.
  params.add("fuse.proj_h.w", Tensor::randn({3, cfg.d_m}, rng, 0.5, true));
  params.add("fuse.proj_h.b", Tensor::zeros({cfg.d_m}, true));
  params.add("fuse.proj_l.w",
             Tensor::randn({cfg.d_lip, cfg.d_m}, rng,
                           1.0 / std::sqrt(double(cfg.d_lip)), true));
  params.add("fuse.proj_l.b", Tensor::zeros({cfg.d_m}, true));
  params.add("fuse.proj_a.w",
             Tensor::randn({cfg.d_audio, cfg.d_m}, rng,
                           1.0 / std::sqrt(double(cfg.d_audio)), true));
  params.add("fuse.proj_a.b", Tensor::zeros({cfg.d_m}, true));
  for (std::size_t l = 0; l < cfg.cross_layers; ++l) {
    const std::string n = std::to_string(l);
    init_attn(params, rng, "fuse.hl." + n + ".attn", cfg.d_m, cfg.d_m, cfg.d_m);
    init_attn(params, rng, "fuse.la." + n + ".attn", cfg.d_m, cfg.d_m, cfg.d_m);
    init_attn(params, rng, "fuse.ah." + n + ".attn", cfg.d_m, cfg.d_m, cfg.d_m);
  }
  init_block(params, rng, "fuse.self", 2 * cfg.d_m);
  params.add("fuse.cls.w", Tensor::randn({2 * cfg.d_m, 1}, rng,
                                         1.0 / std::sqrt(double(2 * cfg.d_m)),
                                         true));
  params.add("fuse.cls.b", Tensor::zeros({1}, true));

  // Normalization stats travel with the checkpoint but never take
  // gradient (forward consumes their raw values).
  params.add("norm.mu", Tensor::zeros({nf})).set_requires_grad(false);
  params.add("norm.sigma", Tensor::full({nf}, 1.0)).set_requires_grad(false);
  params.add("vmma.beta", Tensor::from_data({1}, {beta_t}))
      .set_requires_grad(false);
}

Tensor normalize_head(const Tensor& raw, const std::vector<double>& mu,
                      const std::vector<double>& sigma) {
  if (raw.shape().size() != 2 || raw.cols() != mu.size() ||
      mu.size() != sigma.size())
    throw DimensionError("normalize_head: stats do not match feature width");
  for (double s : sigma)
    if (!(s > 0.0))
      throw ConfigError("normalize_head: sigma must be positive");
  std::vector<double> out(raw.size());
  const std::size_t T = raw.rows(), D = raw.cols();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < D; ++i)
      out[t * D + i] = (raw.at(t, i) - mu[i]) / sigma[i];
  return Tensor::from_data({T, D}, std::move(out));
}

Tensor patchify(const std::vector<double>& pixels, std::size_t img,
                std::size_t patch) {
  if (patch == 0 || img % patch != 0)
    throw ConfigError("patchify: side " + std::to_string(img) +
                      " not divisible by patch " + std::to_string(patch));
  if (pixels.size() != img * img)
    throw DimensionError("patchify: pixel count does not match side");
  const std::size_t g = img / patch, n = g * g, pp = patch * patch;
  std::vector<double> out(n * pp);
  for (std::size_t py = 0; py < g; ++py)
    for (std::size_t px = 0; px < g; ++px) {
      const std::size_t r = py * g + px;
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          out[r * pp + y * patch + x] =
              pixels[(py * patch + y) * img + px * patch + x];
    }
  return Tensor::from_data({n, pp}, std::move(out));
}

Tensor pose_branch(const Tensor& head_norm, ParameterSet& ps,
                   const ModelConfig& cfg) {
  if (head_norm.cols() != cfg.n_f)
    throw DimensionError("pose_branch: feature width " +
                         std::to_string(head_norm.cols()) + ", expected " +
                         std::to_string(cfg.n_f));
  Tensor x = gelu(linear(head_norm, ps.at("pose.w1"), ps.at("pose.b1")));
  x = gelu(linear(x, ps.at("pose.w2"), ps.at("pose.b2")));
  Tensor six = linear(x, ps.at("pose.w6"), ps.at("pose.b6"));
  std::vector<Tensor> thetas;
  thetas.reserve(six.rows());
  for (std::size_t t = 0; t < six.rows(); ++t) {
    Tensor nine = pose::gram_schmidt_6d_t(row(six, t));
    Tensor th = linear(reshape(nine, {1, 9}), ps.at("pose.wout"),
                       ps.at("pose.bout"));
    thetas.push_back(reshape(th, {3}));
  }
  return stack_rows(thetas);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& kv,
                            ParameterSet& ps, const std::string& prefix,
                            std::size_t heads) {
  Tensor Q = linear(q, ps.at(prefix + ".wq"), ps.at(prefix + ".bq"));
  Tensor K = linear(kv, ps.at(prefix + ".wk"), ps.at(prefix + ".bk"));
  Tensor V = linear(kv, ps.at(prefix + ".wv"), ps.at(prefix + ".bv"));
  const std::size_t d = Q.cols();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dk = d / heads;
  const double scale_f = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor out;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor Qh = slice_cols(Q, h * dk, (h + 1) * dk);
    Tensor Kh = slice_cols(K, h * dk, (h + 1) * dk);
    Tensor Vh = slice_cols(V, h * dk, (h + 1) * dk);
    Tensor A = softmax(scale(matmul(Qh, transpose(Kh)), scale_f), 1);
    Tensor Oh = matmul(A, Vh);
    out = h == 0 ? Oh : concat_cols(out, Oh);
  }
  return linear(out, ps.at(prefix + ".wo"), ps.at(prefix + ".bo"));
}

Tensor cross_attention(const Tensor& q, const Tensor& kv, ParameterSet& ps,
                       const std::string& prefix, std::size_t heads) {
  if (q.rows() != kv.rows())
    throw DimensionError("cross_attention: frame counts differ");
  return add(q, multi_head_attention(q, kv, ps, prefix, heads));
}

Tensor encoder_block(const Tensor& x, ParameterSet& ps,
                     const std::string& prefix, std::size_t heads,
                     double ln_eps) {
  Tensor n1 = layer_norm(x, ps.at(prefix + ".ln1.g"), ps.at(prefix + ".ln1.b"),
                         ln_eps);
  Tensor x1 = add(x, multi_head_attention(n1, n1, ps, prefix + ".attn", heads));
  Tensor n2 = layer_norm(x1, ps.at(prefix + ".ln2.g"),
                         ps.at(prefix + ".ln2.b"), ln_eps);
  Tensor f = linear(gelu(linear(n2, ps.at(prefix + ".ffn.w1"),
                                ps.at(prefix + ".ffn.b1"))),
                    ps.at(prefix + ".ffn.w2"), ps.at(prefix + ".ffn.b2"));
  return add(x1, f);
}

Tensor lip_encode_frame(const Tensor& patches, ParameterSet& ps,
                        const ModelConfig& cfg) {
  const std::size_t n = patches.rows();
  if (n + 1 > cfg.n_max + 1)
    throw ConfigError("lip_encode_frame: " + std::to_string(n + 1) +
                      " tokens exceed capacity " + std::to_string(cfg.n_max + 1));
  Tensor tok = linear(patches, ps.at("lip.embed.w"), ps.at("lip.embed.b"));
  Tensor pos = ps.at("lip.pos");
  tok = add(tok, slice_rows(pos, 1, n + 1));
  Tensor cls = add(reshape(ps.at("lip.cls"), {1, cfg.d_lip}),
                   slice_rows(pos, 0, 1));
  Tensor z = concat_rows(cls, tok);
  z = encoder_block(z, ps, "lip.enc", cfg.lip_heads, cfg.ln_eps);
  return row(z, 0);
}

Tensor lip_branch(const std::vector<Tensor>& frame_patches, ParameterSet& ps,
                  const ModelConfig& cfg) {
  std::vector<Tensor> feats;
  feats.reserve(frame_patches.size());
  for (const auto& p : frame_patches)
    feats.push_back(lip_encode_frame(p, ps, cfg));
  return stack_rows(feats);
}

Tensor psa_encode(const audio::MelSpectrogram& mel, ParameterSet& ps,
                  const ModelConfig& cfg, std::size_t t_out) {
  if (mel.n_mels != cfg.mel.n_mels)
    throw ConfigError("psa_encode: mel band count mismatch");
  if (mel.frames < cfg.conv_k)
    throw DataError("psa_encode: too few mel frames for the kernel");
  Tensor x = Tensor::from_data({mel.frames, mel.n_mels}, mel.values);
  x = gelu(conv1d(x, ps.at("psa.conv1.w"), ps.at("psa.conv1.b"), cfg.conv_k,
                  cfg.conv_s));
  if (x.rows() < cfg.conv_k)
    throw DataError("psa_encode: too few frames after first convolution");
  x = gelu(conv1d(x, ps.at("psa.conv2.w"), ps.at("psa.conv2.b"), cfg.conv_k,
                  cfg.conv_s));
  x = linear(x, ps.at("psa.out.w"), ps.at("psa.out.b"));
  return avg_pool_rows(x, t_out);
}

std::pair<Tensor, Tensor> psa_forward(const audio::MelSpectrogram& clean,
                                      const audio::MelSpectrogram& mixed,
                                      ParameterSet& ps, const ModelConfig& cfg,
                                      std::size_t t_out) {
  if (!(clean.cfg == mixed.cfg))
    throw ConfigError("psa_forward: framing configs differ");
  return {psa_encode(clean, ps, cfg, t_out),
          psa_encode(mixed, ps, cfg, t_out)};
}

Tensor consistency_loss(const Tensor& z_a, const Tensor& z_m) {
  if (z_a.shape() != z_m.shape())
    throw DimensionError("consistency_loss: shapes differ (" +
                         shape_str(z_a.shape()) + " vs " +
                         shape_str(z_m.shape()) + ")");
  Tensor d = sub(z_a, z_m);
  return sum(mul(d, d));
}

Tensor aggregate(const Tensor& z_hl, const Tensor& z_la, const Tensor& z_ah) {
  if (z_hl.shape() != z_la.shape() || z_la.shape() != z_ah.shape())
    throw DimensionError("aggregate: shapes differ");
  return add(add(z_hl, z_la), z_ah);
}

Tensor fuse_forward(const Tensor& z_h, const Tensor& z_l, const Tensor& z_a,
                    const Tensor& prompt, ParameterSet& ps,
                    const ModelConfig& cfg) {
  Tensor za = linear(z_a, ps.at("fuse.proj_a.w"), ps.at("fuse.proj_a.b"));
  Tensor fused;
  if (cfg.use_vstr) {
    Tensor zh = linear(z_h, ps.at("fuse.proj_h.w"), ps.at("fuse.proj_h.b"));
    Tensor zl = linear(z_l, ps.at("fuse.proj_l.w"), ps.at("fuse.proj_l.b"));
    Tensor hl = zh, la = zl, ah = za;
    for (std::size_t l = 0; l < cfg.cross_layers; ++l) {
      const std::string n = std::to_string(l);
      hl = cross_attention(hl, zl, ps, "fuse.hl." + n + ".attn", cfg.heads);
      la = cross_attention(la, za, ps, "fuse.la." + n + ".attn", cfg.heads);
      ah = cross_attention(ah, zh, ps, "fuse.ah." + n + ".attn", cfg.heads);
    }
    fused = aggregate(hl, la, ah);
  } else {
    fused = za;
  }
  if (prompt.rows() != fused.rows() || prompt.cols() != cfg.d_m)
    throw DimensionError("fuse_forward: prompt shape " +
                         shape_str(prompt.shape()) + " does not match");
  Tensor cat = concat_cols(fused, prompt);
  cat = encoder_block(cat, ps, "fuse.self", cfg.heads, cfg.ln_eps);
  Tensor logits = linear(cat, ps.at("fuse.cls.w"), ps.at("fuse.cls.b"));
  return sigmoid(reshape(logits, {logits.rows()}));
}

Tensor focal_loss(const Tensor& scores, const std::vector<int>& labels,
                  double alpha, double gamma) {
  const std::size_t T = scores.size();
  if (labels.size() != T)
    throw DimensionError("focal_loss: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(T) + " scores");
  std::vector<double> pos(T), negm(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (labels[t] != 0 && labels[t] != 1)
      throw DataError("focal_loss: label outside {0,1} at frame " +
                      std::to_string(t));
    pos[t] = labels[t];
    negm[t] = 1 - labels[t];
  }
  Tensor y = Tensor::from_data({T}, std::move(pos));
  Tensor ny = Tensor::from_data({T}, std::move(negm));
  Tensor p = clamp(scores, 1e-7, 1.0 - 1e-7);
  Tensor q = add_const(neg(p), 1.0);  // 1 - p
  Tensor lp = mul(y, mul(pow_const(q, gamma), vlog(p)));
  Tensor ln = mul(ny, mul(pow_const(p, gamma), vlog(q)));
  Tensor fl = add(scale(lp, alpha), scale(ln, 1.0 - alpha));
  return neg(mean(fl));
}

ForwardOut forward(TtmModel& m, const SequenceInput& in) {
  const auto& cfg = m.cfg;
  const std::size_t T = in.frames;
  if (in.labels.size() != T || in.mask.size() != T)
    throw DimensionError("forward: labels/mask length does not match frames");

  Tensor z_h, z_l;
  if (cfg.use_vstr) {
    Tensor hn = normalize_head(in.head, m.params.at("norm.mu").value(),
                               m.params.at("norm.sigma").value());
    z_h = pose_branch(hn, m.params, cfg);
    z_h.set_tag("pose.theta");
    z_l = lip_branch(in.lip, m.params, cfg);
    z_l.set_tag("lip.feature");
  }

  Tensor z_clean = psa_encode(in.mel_clean, m.params, cfg, T);
  Tensor z_audio = z_clean;
  Tensor mse;
  if (in.mel_mixed) {
    if (!(in.mel_clean.cfg == in.mel_mixed->cfg))
      throw ConfigError("forward: clean/mixed framing configs differ");
    Tensor z_mixed = psa_encode(*in.mel_mixed, m.params, cfg, T);
    mse = consistency_loss(z_clean, z_mixed);
    mse.set_tag("psa.mse");
    // fusion always consumes z_a; the mixed stream exists only to pull the
    // shared encoder toward noise-invariant features
  }
  z_audio.set_tag("psa.embedding");

  Tensor prompt;
  if (!cfg.use_vmma) {
    prompt = Tensor::zeros({T, cfg.d_m});
  } else if (cfg.prompt_mode == vmma::PromptMode::Fine) {
    auto p = vmma::fine_grained_prompt(in.mask, cfg.d_m);
    prompt = Tensor::from_data({T, cfg.d_m}, std::move(p.values));
  } else {
    auto p = vmma::coarse_grained_prompt(vmma::missing_ratio(in.mask),
                                         m.beta_t, cfg.d_m, T);
    prompt = Tensor::from_data({T, cfg.d_m}, std::move(p.values));
  }

  ForwardOut out;
  out.scores = fuse_forward(z_h, z_l, z_audio, prompt, m.params, cfg);
  out.scores.set_tag("fusion.scores");
  out.focal = focal_loss(out.scores, in.labels, cfg.focal_alpha,
                         cfg.focal_gamma);
  out.total = out.focal;
  if (mse.defined() && cfg.use_psa) {
    out.mse = mse;
    out.total = add(out.focal, scale(mse, cfg.lambda_psa));
  }
  return out;
}

}  // namespace ttm::model
