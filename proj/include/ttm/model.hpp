#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttm/audio.hpp"
#include "ttm/params.hpp"
#include "ttm/rotation.hpp"
#include "ttm/tensor.hpp"
#include "ttm/vmma.hpp"

namespace ttm::model {

// Desk-scale defaults; tiny() shrinks everything for finite-difference
// checks over every parameter.
struct ModelConfig {
  std::size_t n_f = 32;         // head feature width
  std::size_t pose_hidden = 16;

  std::size_t img = 64;         // lip crop side
  std::size_t patch = 16;
  std::size_t d_lip = 64;
  std::size_t lip_heads = 8;
  std::size_t n_max = 900;      // positional table capacity (tokens - 1)

  audio::MelConfig mel;
  std::size_t conv_k = 5;
  std::size_t conv_s = 2;
  std::size_t audio_channels = 24;
  std::size_t d_audio = 16;

  std::size_t d_m = 16;         // fusion stream width
  std::size_t heads = 8;        // cross and self attention
  std::size_t cross_layers = 2;
  double ln_eps = 1e-5;

  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double lambda_psa = 0.1;

  bool use_vstr = true;         // off = audio-only stream
  bool use_psa = true;          // off = no mixing, no consistency term
  bool use_vmma = true;         // off = all-zero prompt
  vmma::PromptMode prompt_mode = vmma::PromptMode::Coarse;

  std::size_t patches_per_frame() const {
    return (img / patch) * (img / patch);
  }
  void validate() const;
  static ModelConfig tiny();
};

struct TtmModel {
  ModelConfig cfg;
  ParameterSet params;
  double beta_t = 0.2;  // frozen coarse-prompt threshold

  void init(std::uint64_t seed);
};

// (x - mu) / sigma applied per column; emits a constant (non-grad) tensor.
Tensor normalize_head(const Tensor& raw, const std::vector<double>& mu,
                      const std::vector<double>& sigma);

// Raster split of a square single-channel image (values in [0,1]) into
// non-overlapping patch rows; lossless.
Tensor patchify(const std::vector<double>& pixels, std::size_t img,
                std::size_t patch);

// Head branch: normalized features -> 6D -> Gram-Schmidt -> angle
// regression. Returns T x 3 angles.
Tensor pose_branch(const Tensor& head_norm, ParameterSet& ps,
                   const ModelConfig& cfg);

// Lip branch over one frame's patches; returns the D-wide global feature.
Tensor lip_encode_frame(const Tensor& patches, ParameterSet& ps,
                        const ModelConfig& cfg);
Tensor lip_branch(const std::vector<Tensor>& frame_patches, ParameterSet& ps,
                  const ModelConfig& cfg);

// Shared-weight audio encoder; pools mel frames to t_out video frames.
Tensor psa_encode(const audio::MelSpectrogram& mel, ParameterSet& ps,
                  const ModelConfig& cfg, std::size_t t_out);
std::pair<Tensor, Tensor> psa_forward(const audio::MelSpectrogram& clean,
                                      const audio::MelSpectrogram& mixed,
                                      ParameterSet& ps,
                                      const ModelConfig& cfg,
                                      std::size_t t_out);
Tensor consistency_loss(const Tensor& z_a, const Tensor& z_m);

// Multi-head attention: query stream attends over the key/value stream;
// cross_attention adds the residual from the query stream.
Tensor multi_head_attention(const Tensor& q, const Tensor& kv,
                            ParameterSet& ps, const std::string& prefix,
                            std::size_t heads);
Tensor cross_attention(const Tensor& q, const Tensor& kv, ParameterSet& ps,
                       const std::string& prefix, std::size_t heads);

// Pre-norm encoder block: x + MHA(LN(x)), then x + FFN(LN(x)).
Tensor encoder_block(const Tensor& x, ParameterSet& ps,
                     const std::string& prefix, std::size_t heads,
                     double ln_eps);

Tensor aggregate(const Tensor& z_hl, const Tensor& z_la, const Tensor& z_ah);

// Cross-attention triple, aggregation, prompt concat, self-attention, and
// the per-frame classifier. Streams arrive at their native widths.
Tensor fuse_forward(const Tensor& z_h, const Tensor& z_l, const Tensor& z_a,
                    const Tensor& prompt, ParameterSet& ps,
                    const ModelConfig& cfg);

Tensor focal_loss(const Tensor& scores, const std::vector<int>& labels,
                  double alpha, double gamma);

// One prepared sequence, ready for forward().
struct SequenceInput {
  std::size_t frames = 0;
  Tensor head;               // T x n_f, raw features, constant
  std::vector<Tensor> lip;   // per frame: N x patch^2, constant
  audio::MelSpectrogram mel_clean;
  std::optional<audio::MelSpectrogram> mel_mixed;  // training augmentation
  vmma::PresenceMask mask;
  std::vector<int> labels;
};

struct ForwardOut {
  Tensor scores;  // T, in (0,1)
  Tensor focal;   // scalar
  Tensor mse;     // scalar; undefined unless a mixed mel was consumed
  Tensor total;   // focal + lambda_psa * mse
};

ForwardOut forward(TtmModel& m, const SequenceInput& in);

}  // namespace ttm::model
