// Command-line front end: dataset generation, training, rollout rendering,
// evaluation, and plotting.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.
// GSWM_DETERMINISTIC=1 forces mean-latent (deterministic) rollouts.

#include <CLI11.hpp>
#include <chrono>
#include <iostream>

#include "gswm/data/gen.hpp"
#include "gswm/eval.hpp"
#include "gswm/train/trainer.hpp"
#include "gswm/viz/png.hpp"

using namespace gswm;
using Scalar = float;

namespace {

bool env_deterministic() {
  const char* v = std::getenv("GSWM_DETERMINISTIC");
  return v && std::string(v) == "1";
}

ModelConfig preset_config(const std::string& setting) {
  ModelConfig cfg;  // reference defaults (64x64)
  if (setting == "maze") {
    cfg.background = true;
    cfg.lr = 5e-5;
    cfg.bg_freeze_steps = 500;
  } else if (setting == "two_layer_dense") {
    cfg.max_objects = 20;
    cfg.grid_hw = 8;
  }
  return cfg;
}

ModelConfig resolve_config(const std::string& config_path, const std::string& preset,
                           const std::vector<std::string>& overrides, uint64_t seed_flag) {
  json j;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::invalid_argument("cannot open config file: " + config_path);
    json base = preset_config(preset).to_json();
    base.update(json::parse(f));
    j = base;
  } else {
    j = preset_config(preset).to_json();
  }
  for (auto& kv : overrides) ModelConfig::apply_override(j, kv);
  ModelConfig cfg = ModelConfig::from_json(j);
  if (seed_flag != (uint64_t)-1) cfg.seed = seed_flag;
  return cfg;
}

void write_config_snapshot(const fs::path& out_dir, const ModelConfig& cfg) {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "config.json");
  f << cfg.to_json().dump(1) << "\n";
}

// strip figure: one row of frames per sequence
void save_strip(const fs::path& path, const std::vector<std::vector<Tensor<Scalar>>>& rows,
                int64_t hw) {
  int64_t pad = 2;
  int64_t cols = 0;
  for (auto& r : rows) cols = std::max<int64_t>(cols, (int64_t)r.size());
  Canvas cv((hw + pad) * (int64_t)rows.size() + pad, (hw + pad) * cols + pad, 30);
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c)
      cv.paste(rows[r][c], pad + (int64_t)c * (hw + pad), pad + (int64_t)r * (hw + pad));
  cv.save(path.string());
}

int cmd_gen_data(const std::string& setting, const std::string& root, uint64_t seed, int64_t train,
                 int64_t val, int64_t test, int64_t steps, bool force) {
  fs::path r(root);
  if (fs::exists(r) && !fs::is_empty(r) && !force) {
    std::cerr << "refusing to write into non-empty " << root << " (use --force)\n";
    return 2;
  }
  DatasetSpec spec = DatasetSpec::defaults(setting);
  if (train >= 0) spec.train = train;
  if (val >= 0) spec.val = val;
  if (test >= 0) spec.test = test;
  if (steps > 0) spec.steps = steps;
  DatasetManifest m = generate_dataset(spec, r, seed, [](const std::string& split, int64_t i,
                                                         int64_t n) {
    std::cout << "\r" << split << " " << i << "/" << n << std::flush;
    if (i == n) std::cout << "\n";
  });
  std::cout << "dataset checksum " << m.checksum << "\n";
  return 0;
}

int cmd_train(const ModelConfig& cfg, const std::string& data, const std::string& out,
              const std::string& resume, int64_t until) {
  Gswm<Scalar> model(cfg, cfg.seed + 1);
  std::cout << "model parameters: " << model.params.numel() << "\n";
  Trainer<Scalar> trainer(model, data, out);
  write_config_snapshot(out, cfg);
  if (!resume.empty()) trainer.load_checkpoint(resume);
  auto t0 = std::chrono::steady_clock::now();
  trainer.run(until, [&](const TrainLogEntry& e) {
    if (e.step % 25 == 0 || e.has_val) {
      double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "step " << e.step << " len " << e.seq_len << " loss " << e.loss << " recon "
                << e.recon_ll << " kl " << e.kl_ctx + e.kl_state + e.kl_disc << " gnorm "
                << e.grad_norm << " (" << (int64_t)secs << "s)";
      if (e.has_val) std::cout << " val_mse " << e.val_mse;
      std::cout << "\n";
    }
  });
  return 0;
}

int cmd_rollout(const std::string& ckpt, const std::string& data, const std::string& out,
                const std::string& split, int64_t episode, int64_t n_cond, int64_t n_gen,
                int64_t n_samples, bool deterministic, uint64_t seed) {
  auto model = load_model<Scalar>(ckpt);
  if (env_deterministic()) deterministic = true;
  fs::create_directories(out);
  write_config_snapshot(out, model->cfg);

  Episode ep = read_episode(data, split, episode);
  if (n_gen < 0) n_gen = ep.length() - n_cond;
  Tensor<Scalar> frames = episodes_to_frames<Scalar>({ep}, 0, n_cond, model->cfg.image_hw);
  Rng rng(splitmix64(seed ^ 0x726f6cULL));
  auto res = model->rollout(frames, n_cond, n_gen, n_samples, rng, deterministic);

  // ground-truth row at model resolution, conditioning then future
  std::vector<Tensor<Scalar>> gt_row;
  int64_t total = std::min<int64_t>(ep.length(), n_cond + n_gen);
  Tensor<Scalar> all = episodes_to_frames<Scalar>({ep}, 0, total, model->cfg.image_hw);
  int64_t hw = model->cfg.image_hw;
  for (int64_t t = 0; t < total; ++t)
    gt_row.push_back(Tensor<Scalar>(
        Shape{3, hw, hw},
        std::vector<Scalar>(all.ptr() + t * 3 * hw * hw, all.ptr() + (t + 1) * 3 * hw * hw)));

  json traj;
  traj["n_cond"] = n_cond;
  traj["n_gen"] = n_gen;
  traj["episode"] = episode;
  traj["samples"] = json::array();
  std::vector<std::vector<Tensor<Scalar>>> combined = {gt_row};
  for (int64_t s = 0; s < n_samples; ++s) {
    std::vector<Tensor<Scalar>> row;
    for (int64_t t = 0; t < n_cond; ++t)
      row.push_back(res.recon_frames[(size_t)t].reshaped({3, hw, hw}));
    for (int64_t t = 0; t < n_gen; ++t)
      row.push_back(res.gen_frames[(size_t)s][(size_t)t].reshaped({3, hw, hw}));
    save_strip(fs::path(out) / ("sample_" + std::to_string(s) + ".png"), {gt_row, row}, hw);
    combined.push_back(row);

    json jt = json::array();
    for (auto& frame : res.gen_tracks[(size_t)s][0].frames) {
      json jf = json::array();
      for (auto& e : frame)
        jf.push_back({{"id", e.id},
                      {"center", {e.center[0], e.center[1]}},
                      {"bbox_hw", {e.bbox_hw[0], e.bbox_hw[1]}},
                      {"score", e.score}});
      jt.push_back(jf);
    }
    traj["samples"].push_back(jt);
  }
  save_strip(fs::path(out) / "figure.png", combined, hw);
  std::ofstream tf(fs::path(out) / "trajectories.json");
  tf << traj.dump(1) << "\n";
  std::cout << "wrote " << n_samples << " sample strips to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out,
             const std::string& metrics, int64_t episodes, int64_t n_cond, int64_t n_gen,
             int64_t n_samples, bool deterministic, const std::vector<uint64_t>& seeds) {
  auto model = load_model<Scalar>(ckpt);
  if (env_deterministic()) deterministic = true;
  fs::create_directories(out);
  write_config_snapshot(out, model->cfg);
  DatasetManifest manifest = read_manifest(data);

  json report;
  report["setting"] = manifest.setting;
  report["protocol"] = {{"n_cond", n_cond}, {"n_gen", n_gen}, {"episodes", episodes}};
  report["seeds"] = seeds;

  auto want = [&](const std::string& name) {
    return metrics == "all" || metrics.find(name) != std::string::npos;
  };

  if (want("position") || want("mota")) {
    std::vector<GenerationEval> runs;
    for (uint64_t s : seeds)
      runs.push_back(
          eval_generation(*model, data, "test", episodes, n_cond, n_gen, deterministic, s));
    std::vector<double> mean((size_t)n_gen, 0), stdev((size_t)n_gen, 0);
    double mota_mean = 0, sum10 = 0;
    for (auto& r : runs) {
      for (int64_t t = 0; t < n_gen; ++t) mean[(size_t)t] += r.pos_err_mean[(size_t)t];
      mota_mean += r.recon_mota;
      sum10 += r.pos_err_sum10_mean;
    }
    for (auto& v : mean) v /= (double)runs.size();
    mota_mean /= (double)runs.size();
    sum10 /= (double)runs.size();
    for (auto& r : runs)
      for (int64_t t = 0; t < n_gen; ++t) {
        double d = r.pos_err_mean[(size_t)t] - mean[(size_t)t];
        stdev[(size_t)t] += d * d;
      }
    for (auto& v : stdev) v = std::sqrt(v / (double)runs.size());
    report["position_error"] = {{"mean", mean}, {"std", stdev}, {"sum_first_10", sum10}};
    report["mota"] = mota_mean;
    report["runs"] = json::array();
    for (auto& r : runs) report["runs"].push_back(r.to_json());

    Series s;
    s.label = "position error";
    s.mean = mean;
    s.stdev = stdev;
    s.color = {200, 30, 30};
    plot_curves((fs::path(out) / "position_error.png").string(), {s});
  }
  if (want("occupancy")) {
    OccupancyEval oc = eval_occupancy(*model, data, "test", episodes, n_cond, n_gen, seeds[0]);
    report["occupancy"] = oc.to_json();
    Series s;
    s.label = "in-corridor agents";
    s.mean = oc.per_step_mean;
    s.color = {30, 30, 200};
    plot_curves((fs::path(out) / "occupancy.png").string(), {s});
  }
  if (want("modes")) {
    ModeCoverage mc = eval_mode_coverage(*model, data, "test", n_cond, n_samples, seeds[0]);
    report["mode_coverage"] = {{"left", mc.left}, {"right", mc.right}, {"invalid", mc.invalid}};
  }

  std::ofstream rf(fs::path(out) / "report.json");
  rf << report.dump(1) << "\n";
  std::cout << report.dump(1) << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& reports, const std::string& key,
             const std::string& out) {
  std::vector<Series> series;
  std::array<std::array<uint8_t, 3>, 5> palette = {
      {{200, 30, 30}, {30, 30, 200}, {30, 160, 30}, {200, 130, 0}, {130, 0, 160}}};
  for (size_t i = 0; i < reports.size(); ++i) {
    std::ifstream f(reports[i]);
    if (!f) throw std::invalid_argument("cannot open report: " + reports[i]);
    json j = json::parse(f);
    if (!j.contains(key)) throw std::invalid_argument("report lacks key: " + key);
    Series s;
    s.label = reports[i];
    if (j[key].is_object() && j[key].contains("mean")) {
      s.mean = j[key]["mean"].get<std::vector<double>>();
      if (j[key].contains("std")) s.stdev = j[key]["std"].get<std::vector<double>>();
    } else if (j[key].is_object() && j[key].contains("per_step_mean")) {
      s.mean = j[key]["per_step_mean"].get<std::vector<double>>();
    } else {
      s.mean = j[key].get<std::vector<double>>();
    }
    s.color = palette[i % palette.size()];
    series.push_back(std::move(s));
  }
  plot_curves(out, series);
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object-centric generative world model"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a dataset");
  std::string setting, root;
  uint64_t seed = 0;
  int64_t train_n = -1, val_n = -1, test_n = -1, steps_n = -1;
  bool force = false;
  gen->add_option("setting", setting,
                  "occlusion|interaction|two_layer|two_layer_dense|single_ball|maze")
      ->required();
  gen->add_option("root", root, "output dataset root")->required();
  gen->add_option("--seed", seed, "base seed");
  gen->add_option("--train", train_n, "training episodes");
  gen->add_option("--val", val_n, "validation episodes");
  gen->add_option("--test", test_n, "test episodes");
  gen->add_option("--steps", steps_n, "episode length");
  gen->add_flag("--force", force, "overwrite a non-empty root");

  auto* tr = app.add_subcommand("train", "train a model");
  std::string config_path, preset, data, out = "runs/run", resume;
  std::vector<std::string> overrides;
  uint64_t seed_flag = (uint64_t)-1;
  int64_t until = -1;
  tr->add_option("--config", config_path, "model config JSON");
  tr->add_option("--preset", preset, "preset name (dataset setting)");
  tr->add_option("--data", data, "dataset root")->required();
  tr->add_option("--out", out, "output directory");
  tr->add_option("--resume", resume, "checkpoint directory to resume from");
  tr->add_option("--seed", seed_flag, "seed override");
  tr->add_option("--steps", until, "stop after this many optimizer steps");
  tr->add_option("-O,--override", overrides, "config override key=value");

  auto* ro = app.add_subcommand("rollout", "render conditioned generations");
  std::string ckpt, ro_out = "rollout_out", split = "test";
  int64_t episode = 0, n_cond = 10, n_gen = -1, n_samples = 4;
  bool deterministic = false;
  ro->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ro->add_option("--data", data, "dataset root")->required();
  ro->add_option("--out", ro_out, "output directory");
  ro->add_option("--split", split, "dataset split");
  ro->add_option("--episode", episode, "episode index");
  ro->add_option("--n-cond", n_cond, "conditioning frames");
  ro->add_option("--n-gen", n_gen, "generated frames (-1: rest of episode)");
  ro->add_option("--samples", n_samples, "number of rollout samples");
  ro->add_flag("--deterministic", deterministic, "use mean latents");
  ro->add_option("--seed", seed, "rollout seed");

  auto* ev = app.add_subcommand("eval", "run metrics over the test split");
  std::string metrics = "all", ev_out = "eval_out";
  int64_t episodes = 50;
  std::vector<uint64_t> seeds = {0};
  ev->add_option("--ckpt", ckpt, "checkpoint directory")->required();
  ev->add_option("--data", data, "dataset root")->required();
  ev->add_option("--out", ev_out, "output directory");
  ev->add_option("--metrics", metrics, "position,mota,occupancy,modes or all");
  ev->add_option("--episodes", episodes, "test episodes to evaluate");
  ev->add_option("--n-cond", n_cond, "conditioning frames");
  ev->add_option("--n-gen", n_gen, "generation frames");
  ev->add_option("--samples", n_samples, "rollout samples for mode coverage");
  ev->add_flag("--deterministic", deterministic, "use mean latents");
  ev->add_option("--seeds", seeds, "evaluation seeds (mean/std bands)");

  auto* pl = app.add_subcommand("plot", "plot metric curves from reports");
  std::vector<std::string> report_files;
  std::string key = "position_error", plot_out = "plot.png";
  pl->add_option("reports", report_files, "report.json files")->required();
  pl->add_option("--key", key, "metric key to plot");
  pl->add_option("--out", plot_out, "output PNG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(setting, root, seed, train_n, val_n, test_n, steps_n, force);
    if (tr->parsed()) {
      ModelConfig cfg;
      try {
        cfg = resolve_config(config_path, preset, overrides, seed_flag);
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      return cmd_train(cfg, data, out, resume, until);
    }
    if (ro->parsed())
      return cmd_rollout(ckpt, data, ro_out, split, episode, n_cond, n_gen, n_samples,
                         deterministic, seed);
    if (ev->parsed()) {
      if (n_gen < 0) n_gen = 10;
      return cmd_eval(ckpt, data, ev_out, metrics, episodes, n_cond, n_gen, n_samples,
                      deterministic, seeds);
    }
    if (pl->parsed()) return cmd_plot(report_files, key, plot_out);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
