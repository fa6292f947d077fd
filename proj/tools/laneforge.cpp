// laneforge command-line entry point. Subcommands cover the full pipeline:
// masked-autoencoder pretraining, fine-tuning segmentation, evaluation with
// optional clustering overlays, the mask-ratio ablation, complexity counting,
// reconstruction demos, and the PolyLoss grid search.

#include <CLI11.hpp>

#include "laneforge/run.hpp"

using laneforge::RunConfig;

namespace {

void add_common(CLI::App* cmd, RunConfig& c, std::string& config_path) {
  cmd->add_option("--config", config_path, "manifest/config file; flags override its values");
  cmd->add_option("--variant", c.variant, "UNet_ConvLSTM | SCNN_UNet_ConvLSTM | SCNN_UNet_Attention");
  cmd->add_option("--preset", c.preset, "resolution preset: desk (64x128) or full (128x256)");
  cmd->add_option("--scene-preset", c.scene_preset,
                  "synthetic scene preset (normal|occlude|shadow|bright|blur|curve|dirty|mix|challenge)");
  cmd->add_option("--data", c.data_index, "training index file (5 inputs + label per line)");
  cmd->add_option("--val-data", c.val_index, "validation index file");
  cmd->add_option("--train-count", c.train_count, "synthetic training sequence count");
  cmd->add_option("--val-count", c.val_count, "synthetic validation sequence count");
  cmd->add_option("--epochs", c.epochs, "training epochs");
  cmd->add_option("--batch", c.batch, "batch size");
  cmd->add_option("--optimizer", c.optimizer, "sgd | adam | radam");
  cmd->add_option("--lr", c.lr, "initial learning rate");
  cmd->add_option("--lr-decay", c.lr_decay, "per-epoch exponential decay factor");
  cmd->add_option("--loss", c.loss, "fine-tuning loss: ce | pl");
  cmd->add_option("--alpha", c.alpha, "PolyLoss alpha");
  cmd->add_option("--gamma", c.gamma, "PolyLoss gamma");
  cmd->add_option("--epsilon", c.epsilon, "PolyLoss epsilon");
  cmd->add_option("--omega1", c.omega1, "lane class weight (0 = inverse frequency)");
  cmd->add_option("--omega0", c.omega0, "background class weight (0 = inverse frequency)");
  cmd->add_option("--mask-ratio", c.mask_ratio, "masked patch ratio");
  cmd->add_option("--patch-size", c.patch_size, "mask patch size in pixels");
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self pre-training + PolyLoss fine-tuning lane detection pipeline"};
  app.require_subcommand(1);

  struct SubState {
    RunConfig cfg;
    std::string config_path;
    CLI::App* cmd = nullptr;
  };
  std::vector<std::string> names = {"pretrain",     "finetune",         "eval",       "ablate-mask",
                                    "count",        "demo-reconstruct", "grid-search"};
  std::map<std::string, SubState> subs;
  for (const auto& n : names) {
    auto& st = subs[n];
    st.cfg.subcommand = n;
    st.cmd = app.add_subcommand(n, n);
    add_common(st.cmd, st.cfg, st.config_path);
  }
  subs["finetune"].cmd->add_option("--pretrained", subs["finetune"].cfg.checkpoint,
                                   "pretrain checkpoint to transfer weights from");
  subs["finetune"].cmd->add_flag("--from-scratch", subs["finetune"].cfg.from_scratch,
                                 "skip weight transfer; random initialization");
  subs["grid-search"].cmd->add_option("--pretrained", subs["grid-search"].cfg.checkpoint,
                                      "pretrain checkpoint to transfer weights from");
  for (const char* n : {"eval", "demo-reconstruct"})
    subs[n].cmd->add_option("--checkpoint", subs[n].cfg.checkpoint, "checkpoint to load");
  subs["eval"].cmd->add_flag("--overlays", subs["eval"].cfg.overlays, "write overlay images");
  subs["eval"].cmd->add_flag("--post", subs["eval"].cfg.post,
                             "cluster predictions into instances and color overlays per lane");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (auto& [name, st] : subs) {
    if (!st.cmd->parsed()) continue;
    RunConfig cfg = st.cfg;
    if (!st.config_path.empty()) {
      // config file first, explicit flags override
      try {
        cfg = laneforge::load_manifest(st.config_path);
      } catch (const laneforge::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
      }
      cfg.subcommand = name;
      // Flags that were explicitly set override the file values.
      RunConfig flags = st.cfg;
      if (st.cmd->count("--variant")) cfg.variant = flags.variant;
      if (st.cmd->count("--preset")) cfg.preset = flags.preset;
      if (st.cmd->count("--scene-preset")) cfg.scene_preset = flags.scene_preset;
      if (st.cmd->count("--data")) cfg.data_index = flags.data_index;
      if (st.cmd->count("--val-data")) cfg.val_index = flags.val_index;
      if (st.cmd->count("--train-count")) cfg.train_count = flags.train_count;
      if (st.cmd->count("--val-count")) cfg.val_count = flags.val_count;
      if (st.cmd->count("--epochs")) cfg.epochs = flags.epochs;
      if (st.cmd->count("--batch")) cfg.batch = flags.batch;
      if (st.cmd->count("--optimizer")) cfg.optimizer = flags.optimizer;
      if (st.cmd->count("--lr")) cfg.lr = flags.lr;
      if (st.cmd->count("--lr-decay")) cfg.lr_decay = flags.lr_decay;
      if (st.cmd->count("--loss")) cfg.loss = flags.loss;
      if (st.cmd->count("--alpha")) cfg.alpha = flags.alpha;
      if (st.cmd->count("--gamma")) cfg.gamma = flags.gamma;
      if (st.cmd->count("--epsilon")) cfg.epsilon = flags.epsilon;
      if (st.cmd->count("--omega1")) cfg.omega1 = flags.omega1;
      if (st.cmd->count("--omega0")) cfg.omega0 = flags.omega0;
      if (st.cmd->count("--mask-ratio")) cfg.mask_ratio = flags.mask_ratio;
      if (st.cmd->count("--patch-size")) cfg.patch_size = flags.patch_size;
      if (st.cmd->count("--seed")) cfg.seed = flags.seed;
      if (st.cmd->count("--out")) cfg.out = flags.out;
      if (st.cmd->count("--pretrained") || st.cmd->count("--checkpoint")) cfg.checkpoint = flags.checkpoint;
      if (st.cmd->count("--from-scratch")) cfg.from_scratch = flags.from_scratch;
      if (st.cmd->count("--overlays")) cfg.overlays = flags.overlays;
      if (st.cmd->count("--post")) cfg.post = flags.post;
    }
    return laneforge::run(cfg);
  }
  return 2;
}
