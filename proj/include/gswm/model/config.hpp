#pragma once

#include <json.hpp>
#include <string>

namespace gswm {

using nlohmann::json;

// Every model and training hyperparameter, serialized with checkpoints.
// Defaults follow the reference configuration for 64x64 inputs; reduced-size
// CPU configurations override dimensions and widths through the same fields.
struct ModelConfig {
  // geometry and latent dimensions
  int64_t image_hw = 64;
  int64_t glimpse_hw = 16;
  int64_t grid_hw = 4;
  int64_t z_what_dim = 64;
  int64_t z_state_dim = 128;
  int64_t z_ctx_dim = 128;
  int64_t enc_dim = 128;     // width of every intermediate encoding
  int64_t rnn_hidden = 128;  // context RNN and object-state RNN hidden size
  int64_t mlp_hidden = 128;  // hidden width of the two-layer MLPs
  int64_t glimpse_dec_in = 128;
  double width_mult = 1.0;  // conv channel multiplier
  int64_t max_objects = 10;  // K objects kept per step

  // likelihood and attention
  double sigma_likelihood = 0.2;
  double aoe_size = 0.25;
  double cond_kernel_sigma = 0.1;

  // training tricks
  double rejection_iou = 0.8;
  double discovery_dropout = 0.5;
  double aux_pres_prob = 1e-10;
  int64_t aux_pres_off_step = -1;  // -1: never turned off
  double tau = 1.0;                // relaxed-Bernoulli temperature

  // discovery priors (fixed)
  double disc_pres_prior = 1e-10;
  double disc_depth_prior_mean = 0.0, disc_depth_prior_stdev = 1.0;
  double disc_xy_prior_mean = 0.0, disc_xy_prior_stdev = 1.0;
  double disc_hw_prior_mean = -1.5, disc_hw_prior_stdev = 0.3;
  double disc_what_prior_mean = 0.0, disc_what_prior_stdev = 1.0;
  double disc_state_prior_mean = 0.0, disc_state_prior_stdev = 1.0;

  // attribute update coefficients and proposal bounds
  double c_depth = 1.0, c_xy = 0.1, c_hw = 0.3, c_what = 0.2;
  double s_min = 0.0, s_max = 0.2;

  // curriculum: sequence length base+step..max, lengthened at each milestone
  int64_t curriculum_base = 2, curriculum_step = 2, curriculum_max = 20;
  int64_t milestone_start = 10000, milestone_step = 10000, milestone_end = 90000;

  // optimization
  double lr = 1e-4;
  int64_t batch = 16;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  int64_t train_steps = 100000;
  int64_t bg_freeze_steps = 0;  // background-only phase (maze: 500)
  int64_t val_every = 1000;
  int64_t ckpt_every = 5000;
  uint64_t seed = 0;

  // switches
  bool background = false;    // context/background modeling on or off
  bool ablate_state = false;  // attributes inferred directly from the RNN state
  bool ablate_aoe = false;    // full-background encoding instead of a glimpse
  bool ablate_sa = false;     // zero out the environment encoding entirely

  void validate() const {
    auto req = [](bool ok, const std::string& what) {
      if (!ok) throw std::invalid_argument("config: " + what);
    };
    req(image_hw == 16 || image_hw == 32 || image_hw == 64 || image_hw == 128,
        "image_hw must be a power of two in [16,128]");
    req(glimpse_hw == 16, "glimpse_hw must be 16");
    req(grid_hw >= 1 && (image_hw / 8) % grid_hw == 0 && (image_hw / 8) / grid_hw <= 2,
        "grid_hw incompatible with image_hw");
    req(z_what_dim > 0 && z_state_dim > 0 && z_ctx_dim > 0, "latent dims must be positive");
    req(glimpse_dec_in >= z_what_dim, "glimpse_dec_in must cover z_what_dim");
    req(z_ctx_dim % ((image_hw / 16) * (image_hw / 16)) == 0,
        "z_ctx_dim must be divisible by the decoder seed area");
    req(max_objects >= 1, "max_objects must be >= 1");
    req(sigma_likelihood > 0, "sigma_likelihood must be positive");
    req(aoe_size > 0 && aoe_size <= 1, "aoe_size in (0,1]");
    req(cond_kernel_sigma > 0, "cond_kernel_sigma must be positive");
    req(rejection_iou > 0 && rejection_iou <= 1, "rejection_iou in (0,1]");
    req(discovery_dropout >= 0 && discovery_dropout < 1, "discovery_dropout in [0,1)");
    req(aux_pres_prob > 0 && aux_pres_prob < 1, "aux_pres_prob in (0,1)");
    req(tau > 0, "tau must be positive");
    req(disc_hw_prior_stdev > 0 && disc_xy_prior_stdev > 0 && disc_depth_prior_stdev > 0 &&
            disc_what_prior_stdev > 0 && disc_state_prior_stdev > 0,
        "discovery prior stdevs must be positive");
    req(c_depth >= 0 && c_depth <= 1 && c_xy >= 0 && c_xy <= 1 && c_hw >= 0 && c_hw <= 1 &&
            c_what >= 0 && c_what <= 1,
        "update coefficients must be in [0,1]");
    req(s_min >= 0 && s_max >= s_min, "proposal bounds must satisfy 0 <= s_min <= s_max");
    req(curriculum_base >= 1 && curriculum_step >= 0 && curriculum_max >= curriculum_base,
        "bad curriculum lengths");
    req(lr > 0 && batch >= 1 && grad_clip > 0, "bad optimizer settings");
    req(width_mult > 0 && width_mult <= 1, "width_mult in (0,1]");
  }

  json to_json() const {
    json j;
#define GSWM_CFG(name) j[#name] = name
    GSWM_CFG(image_hw); GSWM_CFG(glimpse_hw); GSWM_CFG(grid_hw);
    GSWM_CFG(z_what_dim); GSWM_CFG(z_state_dim); GSWM_CFG(z_ctx_dim);
    GSWM_CFG(enc_dim); GSWM_CFG(rnn_hidden); GSWM_CFG(mlp_hidden);
    GSWM_CFG(glimpse_dec_in); GSWM_CFG(width_mult); GSWM_CFG(max_objects);
    GSWM_CFG(sigma_likelihood); GSWM_CFG(aoe_size); GSWM_CFG(cond_kernel_sigma);
    GSWM_CFG(rejection_iou); GSWM_CFG(discovery_dropout); GSWM_CFG(aux_pres_prob);
    GSWM_CFG(aux_pres_off_step); GSWM_CFG(tau);
    GSWM_CFG(disc_pres_prior);
    GSWM_CFG(disc_depth_prior_mean); GSWM_CFG(disc_depth_prior_stdev);
    GSWM_CFG(disc_xy_prior_mean); GSWM_CFG(disc_xy_prior_stdev);
    GSWM_CFG(disc_hw_prior_mean); GSWM_CFG(disc_hw_prior_stdev);
    GSWM_CFG(disc_what_prior_mean); GSWM_CFG(disc_what_prior_stdev);
    GSWM_CFG(disc_state_prior_mean); GSWM_CFG(disc_state_prior_stdev);
    GSWM_CFG(c_depth); GSWM_CFG(c_xy); GSWM_CFG(c_hw); GSWM_CFG(c_what);
    GSWM_CFG(s_min); GSWM_CFG(s_max);
    GSWM_CFG(curriculum_base); GSWM_CFG(curriculum_step); GSWM_CFG(curriculum_max);
    GSWM_CFG(milestone_start); GSWM_CFG(milestone_step); GSWM_CFG(milestone_end);
    GSWM_CFG(lr); GSWM_CFG(batch); GSWM_CFG(grad_clip);
    GSWM_CFG(adam_beta1); GSWM_CFG(adam_beta2); GSWM_CFG(adam_eps);
    GSWM_CFG(train_steps); GSWM_CFG(bg_freeze_steps); GSWM_CFG(val_every); GSWM_CFG(ckpt_every);
    GSWM_CFG(seed);
    GSWM_CFG(background); GSWM_CFG(ablate_state); GSWM_CFG(ablate_aoe); GSWM_CFG(ablate_sa);
#undef GSWM_CFG
    return j;
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig c;
#define GSWM_CFG(name) \
  if (j.contains(#name)) j.at(#name).get_to(c.name)
    GSWM_CFG(image_hw); GSWM_CFG(glimpse_hw); GSWM_CFG(grid_hw);
    GSWM_CFG(z_what_dim); GSWM_CFG(z_state_dim); GSWM_CFG(z_ctx_dim);
    GSWM_CFG(enc_dim); GSWM_CFG(rnn_hidden); GSWM_CFG(mlp_hidden);
    GSWM_CFG(glimpse_dec_in); GSWM_CFG(width_mult); GSWM_CFG(max_objects);
    GSWM_CFG(sigma_likelihood); GSWM_CFG(aoe_size); GSWM_CFG(cond_kernel_sigma);
    GSWM_CFG(rejection_iou); GSWM_CFG(discovery_dropout); GSWM_CFG(aux_pres_prob);
    GSWM_CFG(aux_pres_off_step); GSWM_CFG(tau);
    GSWM_CFG(disc_pres_prior);
    GSWM_CFG(disc_depth_prior_mean); GSWM_CFG(disc_depth_prior_stdev);
    GSWM_CFG(disc_xy_prior_mean); GSWM_CFG(disc_xy_prior_stdev);
    GSWM_CFG(disc_hw_prior_mean); GSWM_CFG(disc_hw_prior_stdev);
    GSWM_CFG(disc_what_prior_mean); GSWM_CFG(disc_what_prior_stdev);
    GSWM_CFG(disc_state_prior_mean); GSWM_CFG(disc_state_prior_stdev);
    GSWM_CFG(c_depth); GSWM_CFG(c_xy); GSWM_CFG(c_hw); GSWM_CFG(c_what);
    GSWM_CFG(s_min); GSWM_CFG(s_max);
    GSWM_CFG(curriculum_base); GSWM_CFG(curriculum_step); GSWM_CFG(curriculum_max);
    GSWM_CFG(milestone_start); GSWM_CFG(milestone_step); GSWM_CFG(milestone_end);
    GSWM_CFG(lr); GSWM_CFG(batch); GSWM_CFG(grad_clip);
    GSWM_CFG(adam_beta1); GSWM_CFG(adam_beta2); GSWM_CFG(adam_eps);
    GSWM_CFG(train_steps); GSWM_CFG(bg_freeze_steps); GSWM_CFG(val_every); GSWM_CFG(ckpt_every);
    GSWM_CFG(seed);
    GSWM_CFG(background); GSWM_CFG(ablate_state); GSWM_CFG(ablate_aoe); GSWM_CFG(ablate_sa);
#undef GSWM_CFG
    c.validate();
    return c;
  }

  // Apply a "key=value" override onto the JSON form; key must exist.
  static void apply_override(json& j, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override must be key=value: " + kv);
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (!j.contains(key)) throw std::invalid_argument("unknown config key: " + key);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // plain string
    if (j[key].type() != parsed.type() && !(j[key].is_number() && parsed.is_number()))
      throw std::invalid_argument("type mismatch for config key: " + key);
    j[key] = parsed;
  }
};

// Training sequence length under the milestone schedule: starts at the base
// length and grows by one step at every milestone already passed, capped at
// the schedule maximum.
inline int64_t curriculum_length(int64_t global_step, const ModelConfig& cfg) {
  int64_t len = cfg.curriculum_base;
  for (int64_t m = cfg.milestone_start; m <= cfg.milestone_end; m += cfg.milestone_step) {
    if (global_step >= m) len += cfg.curriculum_step;
    if (cfg.milestone_step <= 0) break;
  }
  return std::min(len, cfg.curriculum_max);
}

}  // namespace gswm
