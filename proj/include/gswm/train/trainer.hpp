#pragma once

#include <functional>

#include "gswm/data/io.hpp"
#include "gswm/model/swm.hpp"

namespace gswm {

struct TrainLogEntry {
  int64_t step = 0;
  int64_t seq_len = 0;
  double loss = 0, recon_ll = 0, kl_ctx = 0, kl_state = 0, kl_aux = 0, kl_disc = 0;
  double grad_norm = 0;
  bool has_val = false;
  double val_mse = 0, val_elbo = 0;

  json to_json() const {
    json j{{"step", step},       {"seq_len", seq_len},   {"loss", loss},
           {"recon_ll", recon_ll}, {"kl_ctx", kl_ctx},   {"kl_state", kl_state},
           {"kl_aux", kl_aux},     {"kl_disc", kl_disc}, {"grad_norm", grad_norm}};
    if (has_val) {
      j["val_mse"] = val_mse;
      j["val_elbo"] = val_elbo;
    }
    return j;
  }
};

// Training loop: curriculum-scheduled windows, discovery dropout, gradient
// clipping, periodic validation and atomic checkpoints.
template <class S>
class Trainer {
 public:
  Trainer(Gswm<S>& model, fs::path dataset_root, fs::path out_dir)
      : model_(model),
        root_(std::move(dataset_root)),
        out_dir_(std::move(out_dir)),
        opt_((S)model.cfg.lr),
        train_rng_(splitmix64(model.cfg.seed ^ 0x7261696eULL)),
        stream_(root_, "train", 1, model.cfg.batch,
                Rng(splitmix64(model.cfg.seed ^ 0x64617461ULL))) {
    opt_.beta1 = (S)model_.cfg.adam_beta1;
    opt_.beta2 = (S)model_.cfg.adam_beta2;
    opt_.eps = (S)model_.cfg.adam_eps;
    fs::create_directories(out_dir_);
    log_.open(out_dir_ / "train_log.jsonl", std::ios::app);
  }

  int64_t step() const { return step_; }
  Adam<S>& optimizer() { return opt_; }

  int64_t curriculum_len_capped(int64_t step) const {
    return std::min(curriculum_length(step, model_.cfg), stream_.manifest().episode_len);
  }

  // One optimization step; returns the log entry.
  TrainLogEntry train_one_step() {
    const ModelConfig& cfg = model_.cfg;
    int64_t len = curriculum_len_capped(step_);
    stream_.set_seq_len(len);
    Batch<S> batch = stream_.next();

    Var<S> frames = prepare_frames(batch.frames);  // [B,L,3,h,h]
    int64_t B = cfg.batch, H = cfg.image_hw;

    bool bg_only = step_ < cfg.bg_freeze_steps;
    bool aux_on = cfg.aux_pres_off_step < 0 || step_ < cfg.aux_pres_off_step;

    Carry<S> carry = model_.init_carry(B);
    std::vector<StepTrace<S>> traces;
    for (int64_t t = 0; t < len; ++t) {
      typename Gswm<S>::StepOptions opt;
      opt.bg_only = bg_only;
      opt.discovery =
          !bg_only && !Gswm<S>::apply_discovery_dropout(t, train_rng_, cfg.discovery_dropout, true);
      Var<S> x_t = reshape(slice(frames, 1, t, 1), {B, 3, H, H});
      auto [next, trace] = model_.infer_step(carry, x_t, train_rng_, opt);
      carry = std::move(next);
      traces.push_back(std::move(trace));
    }
    Var<S> loss = model_.elbo_loss(traces, aux_on);

    model_.params.zero_grad();
    backward(loss);
    S gnorm = Adam<S>::clip_global_norm(model_.params, (S)cfg.grad_clip);
    opt_.step(model_.params);

    TrainLogEntry e;
    e.step = step_;
    e.seq_len = len;
    e.loss = (double)loss.val().item();
    for (auto& t : traces) {
      e.recon_ll += mean_of(t.recon_ll);
      e.kl_ctx += mean_of(t.kl_ctx);
      e.kl_state += mean_of(t.kl_state);
      e.kl_aux += mean_of(t.kl_aux_pres);
      e.kl_disc += mean_of(t.kl_disc);
    }
    e.grad_norm = (double)gnorm;
    ++step_;
    return e;
  }

  // Train until cfg.train_steps (or `until` if nonnegative). On divergence the
  // last completed checkpoint stays on disk and the exception propagates.
  void run(int64_t until = -1, std::function<void(const TrainLogEntry&)> on_log = {}) {
    const ModelConfig& cfg = model_.cfg;
    int64_t target = until >= 0 ? until : cfg.train_steps;
    while (step_ < target) {
      TrainLogEntry e = train_one_step();
      if (cfg.val_every > 0 && e.step % cfg.val_every == 0) validate(e);
      log_ << e.to_json().dump() << "\n";
      log_.flush();
      if (on_log) on_log(e);
      if (cfg.ckpt_every > 0 && step_ % cfg.ckpt_every == 0)
        save_checkpoint(out_dir_ / ("ckpt_" + std::to_string(step_)));
    }
    save_checkpoint(out_dir_ / "ckpt_last");
  }

  void validate(TrainLogEntry& e) {
    if (!fs::exists(root_ / "val")) return;
    NoGradGuard ng;
    const ModelConfig& cfg = model_.cfg;
    int64_t len = curriculum_len_capped(step_);
    BatchStream<S> vs(root_, "val", len, cfg.batch, Rng(splitmix64(cfg.seed ^ 0x76616cULL)));
    Rng vrng(splitmix64(cfg.seed ^ 0x76616c32ULL));
    Batch<S> batch = vs.next();
    Var<S> frames = prepare_frames(batch.frames);
    int64_t B = cfg.batch, H = cfg.image_hw;
    Carry<S> carry = model_.init_carry(B);
    double mse = 0, elbo = 0;
    for (int64_t t = 0; t < len; ++t) {
      typename Gswm<S>::StepOptions opt;
      opt.bg_only = step_ < cfg.bg_freeze_steps;
      Var<S> x_t = reshape(slice(frames, 1, t, 1), {B, 3, H, H});
      auto [next, trace] = model_.infer_step(carry, x_t, vrng, opt);
      carry = std::move(next);
      for (int64_t i = 0; i < x_t.numel(); ++i) {
        double d = (double)x_t.val()[i] - (double)trace.mu[i];
        mse += d * d;
      }
      elbo += mean_of(trace.recon_ll) - mean_of(trace.kl_ctx) - mean_of(trace.kl_state) -
              mean_of(trace.kl_disc);
    }
    e.has_val = true;
    e.val_mse = mse / ((double)len * (double)B * 3 * H * H);
    e.val_elbo = elbo;
  }

  // Frames arrive at the stored resolution; average-pool down to the model
  // resolution when they differ.
  Var<S> prepare_frames(const Tensor<S>& frames_blchw) {
    int64_t B = frames_blchw.shape[0], L = frames_blchw.shape[1];
    int64_t Hin = frames_blchw.shape[3];
    int64_t Hout = model_.cfg.image_hw;
    Var<S> v = Var<S>::constant(frames_blchw);
    if (Hin == Hout) return v;
    if (Hin % Hout != 0) throw std::invalid_argument("trainer: bad downscale factor");
    NoGradGuard ng;
    Var<S> flat = reshape(v, {B * L, 3, Hin, Hin});
    Var<S> pooled = avg_pool2d(flat, Hin / Hout);
    return reshape(pooled, {B, L, 3, Hout, Hout});
  }

  void save_checkpoint(const fs::path& dir) {
    fs::path tmp = dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    {
      std::ofstream f(tmp / "config.json");
      f << model_.cfg.to_json().dump(1);
    }
    {
      std::ofstream f(tmp / "params.bin", std::ios::binary);
      model_.params.save(f);
    }
    {
      std::ofstream f(tmp / "optim.bin", std::ios::binary);
      opt_.save(f);
    }
    {
      json st{{"step", step_},
              {"train_rng", train_rng_.state()},
              {"data_rng", stream_.rng().state()}};
      std::ofstream f(tmp / "state.json");
      f << st.dump(1);
    }
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  }

  void load_checkpoint(const fs::path& dir) {
    {
      std::ifstream f(dir / "params.bin", std::ios::binary);
      if (!f) throw std::runtime_error("missing checkpoint params at " + dir.string());
      model_.params.load(f);
    }
    {
      std::ifstream f(dir / "optim.bin", std::ios::binary);
      if (f) opt_.load(f, model_.params);
    }
    std::ifstream f(dir / "state.json");
    if (f) {
      json st = json::parse(f);
      step_ = st.at("step").get<int64_t>();
      train_rng_.set_state(st.at("train_rng").get<std::string>());
      stream_.rng().set_state(st.at("data_rng").get<std::string>());
    }
  }

  static double mean_of(const Var<S>& per_batch) {
    double s = 0;
    for (int64_t i = 0; i < per_batch.numel(); ++i) s += (double)per_batch.val()[i];
    return s / (double)per_batch.numel();
  }

 private:
  Gswm<S>& model_;
  fs::path root_, out_dir_;
  Adam<S> opt_;
  Rng train_rng_;
  BatchStream<S> stream_;
  std::ofstream log_;
  int64_t step_ = 0;
};

// Load a checkpointed model (config + parameters) without a dataset.
template <class S>
std::unique_ptr<Gswm<S>> load_model(const fs::path& ckpt_dir) {
  std::ifstream cf(ckpt_dir / "config.json");
  if (!cf) throw std::runtime_error("missing config.json in " + ckpt_dir.string());
  ModelConfig cfg = ModelConfig::from_json(json::parse(cf));
  auto model = std::make_unique<Gswm<S>>(cfg, cfg.seed + 1);
  std::ifstream pf(ckpt_dir / "params.bin", std::ios::binary);
  if (!pf) throw std::runtime_error("missing params.bin in " + ckpt_dir.string());
  model->params.load(pf);
  return model;
}

}  // namespace gswm
