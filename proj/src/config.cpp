#include "ttm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ttm::config {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " +
                        where);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

vmma::PromptMode parse_mode(const std::string& s) {
  if (s == "fine") return vmma::PromptMode::Fine;
  if (s == "coarse") return vmma::PromptMode::Coarse;
  throw ConfigError("config: prompt_mode must be fine or coarse, got " + s);
}

audio::NoiseKind parse_noise(const std::string& s) {
  if (s == "white") return audio::NoiseKind::White;
  if (s == "pink") return audio::NoiseKind::Pink;
  if (s == "machinery") return audio::NoiseKind::Machinery;
  throw ConfigError("config: noise_kind must be white, pink or machinery");
}

scenario::MissingKind parse_missing(const std::string& s) {
  if (s == "none") return scenario::MissingKind::None;
  if (s == "iid") return scenario::MissingKind::Iid;
  if (s == "burst") return scenario::MissingKind::Burst;
  throw ConfigError("config: missing_kind must be none, iid or burst");
}

void parse_model(const json& j, model::ModelConfig& m) {
  reject_unknown(j,
                 {"n_f", "pose_hidden", "img", "patch", "d_lip", "lip_heads",
                  "n_max", "conv_k", "conv_s", "audio_channels", "d_audio",
                  "d_m", "heads", "cross_layers", "focal_alpha", "focal_gamma",
                  "lambda_psa", "use_vstr", "use_psa", "use_vmma",
                  "prompt_mode"},
                 "model");
  get(j, "n_f", m.n_f);
  get(j, "pose_hidden", m.pose_hidden);
  get(j, "img", m.img);
  get(j, "patch", m.patch);
  get(j, "d_lip", m.d_lip);
  get(j, "lip_heads", m.lip_heads);
  get(j, "n_max", m.n_max);
  get(j, "conv_k", m.conv_k);
  get(j, "conv_s", m.conv_s);
  get(j, "audio_channels", m.audio_channels);
  get(j, "d_audio", m.d_audio);
  get(j, "d_m", m.d_m);
  get(j, "heads", m.heads);
  get(j, "cross_layers", m.cross_layers);
  get(j, "focal_alpha", m.focal_alpha);
  get(j, "focal_gamma", m.focal_gamma);
  get(j, "lambda_psa", m.lambda_psa);
  get(j, "use_vstr", m.use_vstr);
  get(j, "use_psa", m.use_psa);
  get(j, "use_vmma", m.use_vmma);
  if (j.contains("prompt_mode"))
    m.prompt_mode = parse_mode(j.at("prompt_mode").get<std::string>());
}

void parse_train(const json& j, train::TrainConfig& t) {
  reject_unknown(j,
                 {"lr", "epochs", "clip", "noise_prob", "gamma_mix",
                  "noise_kind", "patience", "vmma_k", "beta_override"},
                 "train");
  get(j, "lr", t.adam.lr);
  get(j, "epochs", t.epochs);
  get(j, "clip", t.clip);
  get(j, "noise_prob", t.noise_prob);
  get(j, "gamma_mix", t.gamma_mix);
  get(j, "patience", t.patience);
  get(j, "vmma_k", t.vmma_k);
  if (j.contains("noise_kind"))
    t.noise_kind = parse_noise(j.at("noise_kind").get<std::string>());
  if (j.contains("beta_override") && !j.at("beta_override").is_null())
    t.beta_override = j.at("beta_override").get<double>();
}

void parse_scenario(const json& j, scenario::ScenarioConfig& s) {
  reject_unknown(j,
                 {"persons", "frames", "fps", "sample_rate", "n_f", "img",
                  "theta_face", "speak_duty", "distractor_rate",
                  "head_feature_noise", "missing_kind", "missing_rate",
                  "burst_len"},
                 "scenario");
  get(j, "persons", s.persons);
  get(j, "frames", s.frames);
  get(j, "fps", s.fps);
  get(j, "sample_rate", s.sample_rate);
  get(j, "n_f", s.n_f);
  get(j, "img", s.img);
  get(j, "theta_face", s.theta_face);
  get(j, "speak_duty", s.speak_duty);
  get(j, "distractor_rate", s.distractor_rate);
  get(j, "head_feature_noise", s.head_feature_noise);
  if (j.contains("missing_kind"))
    s.missing.kind = parse_missing(j.at("missing_kind").get<std::string>());
  get(j, "missing_rate", s.missing.rate);
  get(j, "burst_len", s.missing.burst_len);
}

const char* mode_name(vmma::PromptMode m) {
  return m == vmma::PromptMode::Fine ? "fine" : "coarse";
}
const char* noise_name(audio::NoiseKind k) {
  switch (k) {
    case audio::NoiseKind::White: return "white";
    case audio::NoiseKind::Pink: return "pink";
    default: return "machinery";
  }
}
const char* missing_name(scenario::MissingKind k) {
  switch (k) {
    case scenario::MissingKind::None: return "none";
    case scenario::MissingKind::Iid: return "iid";
    default: return "burst";
  }
}

}  // namespace

void RunConfig::finalize() {
  scen.seed = seed;
  train.seed = seed;
  if (scen.img != model.img)
    throw ConfigError("config: scenario img " + std::to_string(scen.img) +
                      " does not match model img " + std::to_string(model.img));
  if (scen.n_f != model.n_f)
    throw ConfigError("config: scenario n_f does not match model n_f");
  if (seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  model.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"seed", "model", "train", "scenario", "n_train", "n_val",
                  "n_test", "snr_grid", "seeds", "out_root"},
                 "top level");
  RunConfig cfg;
  get(j, "seed", cfg.seed);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("scenario")) parse_scenario(j.at("scenario"), cfg.scen);
  get(j, "n_train", cfg.n_train);
  get(j, "n_val", cfg.n_val);
  get(j, "n_test", cfg.n_test);
  get(j, "snr_grid", cfg.snr_grid);
  get(j, "seeds", cfg.seeds);
  get(j, "out_root", cfg.out_root);
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["model"] = {{"n_f", cfg.model.n_f},
                {"pose_hidden", cfg.model.pose_hidden},
                {"img", cfg.model.img},
                {"patch", cfg.model.patch},
                {"d_lip", cfg.model.d_lip},
                {"lip_heads", cfg.model.lip_heads},
                {"n_max", cfg.model.n_max},
                {"conv_k", cfg.model.conv_k},
                {"conv_s", cfg.model.conv_s},
                {"audio_channels", cfg.model.audio_channels},
                {"d_audio", cfg.model.d_audio},
                {"d_m", cfg.model.d_m},
                {"heads", cfg.model.heads},
                {"cross_layers", cfg.model.cross_layers},
                {"focal_alpha", cfg.model.focal_alpha},
                {"focal_gamma", cfg.model.focal_gamma},
                {"lambda_psa", cfg.model.lambda_psa},
                {"use_vstr", cfg.model.use_vstr},
                {"use_psa", cfg.model.use_psa},
                {"use_vmma", cfg.model.use_vmma},
                {"prompt_mode", mode_name(cfg.model.prompt_mode)}};
  j["train"] = {{"lr", cfg.train.adam.lr},
                {"epochs", cfg.train.epochs},
                {"clip", cfg.train.clip},
                {"noise_prob", cfg.train.noise_prob},
                {"gamma_mix", cfg.train.gamma_mix},
                {"noise_kind", noise_name(cfg.train.noise_kind)},
                {"patience", cfg.train.patience},
                {"vmma_k", cfg.train.vmma_k}};
  if (cfg.train.beta_override)
    j["train"]["beta_override"] = *cfg.train.beta_override;
  else
    j["train"]["beta_override"] = nullptr;
  j["scenario"] = {{"persons", cfg.scen.persons},
                   {"frames", cfg.scen.frames},
                   {"fps", cfg.scen.fps},
                   {"sample_rate", cfg.scen.sample_rate},
                   {"n_f", cfg.scen.n_f},
                   {"img", cfg.scen.img},
                   {"theta_face", cfg.scen.theta_face},
                   {"speak_duty", cfg.scen.speak_duty},
                   {"distractor_rate", cfg.scen.distractor_rate},
                   {"head_feature_noise", cfg.scen.head_feature_noise},
                   {"missing_kind", missing_name(cfg.scen.missing.kind)},
                   {"missing_rate", cfg.scen.missing.rate},
                   {"burst_len", cfg.scen.missing.burst_len}};
  j["n_train"] = cfg.n_train;
  j["n_val"] = cfg.n_val;
  j["n_test"] = cfg.n_test;
  j["snr_grid"] = cfg.snr_grid;
  j["seeds"] = cfg.seeds;
  j["out_root"] = cfg.out_root;
  return j.dump(2);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = dump_run_config(cfg);
  return scenario::fnv1a64(std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace ttm::config
