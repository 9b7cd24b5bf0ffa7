#include "mfcrf/config.hpp"
#include "mfcrf/data.hpp"
#include "mfcrf/metrics.hpp"
#include "mfcrf/model.hpp"
#include "mfcrf/report.hpp"
#include "mfcrf/tensor_io.hpp"
#include "mfcrf/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace mfcrf;

namespace {

RunConfig resolve_config(const std::string& config_path, const std::string& preset) {
  if (!config_path.empty()) return load_run_config(config_path);
  return preset_config(preset);
}

PreparedData load_prepared(const fs::path& data_dir, const RunConfig& cfg) {
  const auto windows = load_windows(data_dir, cfg.model.input_frames, cfg.model.output_frames,
                                    cfg.data.stride, cfg.data.image_size);
  return prepare_data(windows, cfg.data);
}

const WindowTensors& pick_split(const PreparedData& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw Error("--split must be train, val or test");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

int cmd_synth(const fs::path& out, std::uint64_t seed, int sequences, const AdvectionParams& base) {
  fs::create_directories(out);
  for (int s = 0; s < sequences; ++s) {
    auto p = base;
    p.seed = seed + static_cast<std::uint64_t>(s);
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04d", s);
    save_sequence(out, name, synthesize_advection(p));
  }
  std::cout << "wrote " << sequences << " sequences (" << base.T << " x " << base.H << " x "
            << base.W << ") to " << out << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out,
              const std::string& resume) {
  Trainer trainer(cfg, load_prepared(data, cfg));
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  fs::create_directories(out);
  write_json(out / "config.json", to_json(cfg));
  std::cout << "parameters " << count_parameters(*trainer.model()) << ", train windows "
            << trainer.data().train.size() << ", steps " << trainer.total_steps() << "\n";
  std::ofstream log(out / "train_log.csv", resume.empty() ? std::ios::trunc : std::ios::app);
  if (resume.empty()) log << "step,epoch,lr,loss,grad_norm\n";
  TrainHooks hooks;
  hooks.out_dir = out;
  hooks.on_step = [&](const StepRecord& r) {
    log << r.step << "," << r.epoch << "," << r.lr << "," << r.loss << "," << r.grad_norm << "\n";
    if (cfg.train.log_every > 0 && r.step % cfg.train.log_every == 0) {
      std::cout << "step " << r.step << " lr " << r.lr << " loss " << r.loss << "\n";
    }
  };
  hooks.on_epoch = [&](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " val CSI-M " << e.val_csi_m << " best " << e.best_csi_m
              << (e.improved ? " (saved best.ckpt)" : "") << "\n";
  };
  trainer.run(hooks);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale feature communication rectified-flow nowcasting"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic advection dataset");
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  int sequences = 4;
  AdvectionParams adv;
  adv.T = 40;
  synth->add_option("--out", synth_out, "Output dataset directory")->required();
  synth->add_option("--seed", synth_seed, "Seed of the first sequence");
  synth->add_option("--sequences", sequences, "Number of sequences")->check(CLI::PositiveNumber);
  synth->add_option("--frames", adv.T, "Frames per sequence");
  synth->add_option("--height", adv.H, "Frame height");
  synth->add_option("--width", adv.W, "Frame width");
  synth->add_option("--blobs", adv.n_blobs, "Blobs per sequence");
  synth->add_option("--vx", adv.vx, "Velocity along width, pixels per frame");
  synth->add_option("--vy", adv.vy, "Velocity along height, pixels per frame");
  synth->add_option("--diffusion", adv.diffusion, "Variance growth per frame / 2");
  synth->add_option("--decay", adv.decay, "Amplitude factor per frame");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string config_path, preset = "toy", data_dir, out_dir, resume;
  std::int64_t max_steps = -1;
  train->add_option("--config", config_path, "JSON config file (overrides --preset)");
  train->add_option("--preset", preset, "default | toy | paper");
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Run directory")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--max-steps", max_steps, "Override train.max_steps");

  // sample
  auto* sample = app.add_subcommand("sample", "Sample forecasts with EMA weights");
  std::string ckpt_path, split = "test", sample_out, expect_config;
  int steps = 5;
  std::uint64_t seed = 0;
  sample->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  sample->add_option("--data", data_dir, "Dataset directory")->required();
  sample->add_option("--steps", steps, "Euler steps")->check(CLI::PositiveNumber);
  sample->add_option("--seed", seed, "Noise seed");
  sample->add_option("--split", split, "train | val | test");
  sample->add_option("--out", sample_out, "Output tensor container (native units)")->required();
  sample->add_option("--config", expect_config, "Reject the checkpoint unless it matches");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string thresholds, eval_out;
  bool with_persistence = false;
  eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--thresholds", thresholds,
                   "sevir | meteonet | shanghai | cikm | synthetic | custom:a,b,...");
  eval->add_option("--split", split, "train | val | test");
  eval->add_option("--steps", steps, "Euler steps")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Noise seed");
  eval->add_option("--out", eval_out, "Report directory")->required();
  eval->add_flag("--persistence", with_persistence, "Also score the persistence baseline");

  // report
  auto* report = app.add_subcommand("report", "Render a metrics file as a report");
  std::string metrics_path, report_out;
  report->add_option("--metrics", metrics_path, "metrics.json")->required();
  report->add_option("--out", report_out, "Report directory")->required();

  // arch
  auto* arch = app.add_subcommand("arch", "Architecture summary, parameter and MAC counts");
  std::int64_t size = 128;
  arch->add_option("--config", config_path, "JSON config file (overrides --preset)");
  arch->add_option("--preset", preset, "default | toy | paper");
  arch->add_option("--size", size, "Input height and width");

  // config
  auto* config_cmd = app.add_subcommand("config", "Print a fully resolved config");
  config_cmd->add_option("--preset", preset, "default | toy | paper");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_out, synth_seed, sequences, adv);
    if (*train) {
      auto cfg = resolve_config(config_path, preset);
      if (max_steps >= 0) cfg.train.max_steps = max_steps;
      cfg.validate();
      return cmd_train(cfg, data_dir, out_dir, resume);
    }
    if (*sample || *eval) {
      const auto ckpt = load_checkpoint(ckpt_path);
      std::string expected;
      if (!expect_config.empty()) expected = fingerprint(to_json(load_run_config(expect_config)));
      auto model = model_from_checkpoint(ckpt, true, expected);
      const auto cfg = run_config_from_json(ckpt.config);
      const auto data = load_prepared(data_dir, cfg);
      const auto& windows = pick_split(data, split);
      if (windows.size() == 0) throw Error("split " + split + " is empty");
      const auto pred = sample_forecasts(model, windows.condition, steps, seed, cfg.train.batch);
      if (*sample) {
        save_tensor(sample_out, denormalize(pred, data.native_range));
        std::cout << "wrote " << pred.size(0) << " forecasts to " << sample_out << "\n";
        return 0;
      }
      const auto tset = threshold_preset(thresholds.empty() ? cfg.data.thresholds : thresholds);
      auto rep = evaluate_forecasts(pred, windows.target, data.native_range, tset);
      rep.dataset_id = data.dataset_id;
      write_report(rep, eval_out);
      std::cout << "CSI-M " << rep.csi_m << " HSS " << rep.hss << " MSE " << rep.mse << "\n";
      if (with_persistence) {
        auto base = evaluate_forecasts(
            persistence_forecast(windows.condition, cfg.model.output_frames), windows.target,
            data.native_range, tset);
        base.dataset_id = data.dataset_id;
        write_report(base, fs::path(eval_out) / "persistence");
        std::cout << "persistence CSI-M " << base.csi_m << " HSS " << base.hss << " MSE "
                  << base.mse << "\n";
      }
      return 0;
    }
    if (*report) {
      write_report(read_metrics(metrics_path), report_out);
      std::cout << "wrote report to " << report_out << "\n";
      return 0;
    }
    if (*arch) {
      const auto cfg = resolve_config(config_path, preset);
      auto summary = architecture_summary(cfg.model, size, size);
      summary["gmacs"] = estimate_gmacs(cfg.model, size, size);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    if (*config_cmd) {
      std::cout << to_json(preset_config(preset)).dump(2) << "\n";
      return 0;
    }
  } catch (const TrainingHalted& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
