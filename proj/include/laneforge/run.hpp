#pragma once

// Run orchestration: a resolved RunConfig drives every subcommand, and each
// run writes a manifest capturing the full configuration plus seeds so it can
// be re-launched bit-exactly. Manifests are line-oriented `key = value` text.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "laneforge/trainer.hpp"

namespace laneforge {

struct RunConfig {
  std::string subcommand;
  std::string variant = "SCNN_UNet_ConvLSTM";
  std::string preset = "desk";  // desk | full
  int height = 0, width = 0, base_channels = 0;  // 0 = take from preset
  int sequence_length = 5;

  std::string scene_preset = "mix";  // synthetic source ("challenge" = category suite)
  int train_count = 200;
  int val_count = 50;
  std::string data_index;  // tvtLANE-style index file; overrides synthetic train set
  std::string val_index;

  int epochs = 30;
  int batch = 8;
  std::string optimizer = "radam";
  double lr = 0.001;
  double lr_decay = 0.95;

  std::string loss = "pl";
  double alpha = 1.0, gamma = 1.0, epsilon = 1.0;
  double omega1 = 0.0, omega0 = 0.0;  // 0 = inverse-frequency from the train split

  double mask_ratio = 0.5;
  int patch_size = 16;

  std::uint64_t seed = 1;
  std::string out = "runs/out";
  std::string checkpoint;     // input checkpoint (finetune/eval/demo-reconstruct)
  bool from_scratch = false;  // finetune without a pretrained checkpoint
  bool overlays = false;
  bool post = false;  // cluster + curve-fit overlays during eval
  int threads = 1;

  void resolve() {
    if (preset != "desk" && preset != "full") throw ConfigError("preset must be 'desk' or 'full'");
    if (height == 0) height = preset == "desk" ? 64 : 128;
    if (width == 0) width = preset == "desk" ? 128 : 256;
    if (base_channels == 0) base_channels = preset == "desk" ? 8 : 64;
    if (epochs < 0 || batch < 1) throw ConfigError("epochs must be >= 0 and batch >= 1");
    if (mask_ratio < 0 || mask_ratio > 1) throw ConfigError("mask ratio must lie in [0,1]");
    if (threads < 1) threads = 1;
    if (const char* env = std::getenv("LANEFORGE_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) threads = std::min(threads, cap);
    }
    (void)optim_kind_from(optimizer);
    (void)loss_kind_from(loss);
  }

  ModelSpec model_spec(Phase phase) const {
    ModelSpec s;
    s.variant = variant_from(variant);
    s.input_height = height;
    s.input_width = width;
    s.sequence_length = sequence_length;
    s.base_channels = base_channels;
    s.convlstm_hidden = 8 * base_channels;
    s.head_channels = phase == Phase::pretrain ? 3 : 2;
    return s;
  }

  OptimState<float> optim_state() const {
    OptimState<float> st;
    st.kind = optim_kind_from(optimizer);
    st.lr0 = st.lr = (float)lr;
    st.decay = (float)lr_decay;
    return st;
  }
};

// ---------------------------------------------------------------------------
// Manifest I/O
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<std::string, std::string>> manifest_pairs(const RunConfig& c) {
  auto d = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"subcommand", c.subcommand},
      {"variant", c.variant},
      {"preset", c.preset},
      {"height", std::to_string(c.height)},
      {"width", std::to_string(c.width)},
      {"base_channels", std::to_string(c.base_channels)},
      {"sequence_length", std::to_string(c.sequence_length)},
      {"scene_preset", c.scene_preset},
      {"train_count", std::to_string(c.train_count)},
      {"val_count", std::to_string(c.val_count)},
      {"data_index", c.data_index},
      {"val_index", c.val_index},
      {"epochs", std::to_string(c.epochs)},
      {"batch", std::to_string(c.batch)},
      {"optimizer", c.optimizer},
      {"lr", d(c.lr)},
      {"lr_decay", d(c.lr_decay)},
      {"loss", c.loss},
      {"alpha", d(c.alpha)},
      {"gamma", d(c.gamma)},
      {"epsilon", d(c.epsilon)},
      {"omega1", d(c.omega1)},
      {"omega0", d(c.omega0)},
      {"mask_ratio", d(c.mask_ratio)},
      {"patch_size", std::to_string(c.patch_size)},
      {"seed", std::to_string(c.seed)},
      {"out", c.out},
      {"checkpoint", c.checkpoint},
      {"from_scratch", c.from_scratch ? "1" : "0"},
      {"overlays", c.overlays ? "1" : "0"},
      {"post", c.post ? "1" : "0"},
      {"threads", std::to_string(c.threads)},
  };
}

}  // namespace detail

inline void write_manifest(const RunConfig& c, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest '" + path + "'");
  for (const auto& [k, v] : detail::manifest_pairs(c)) os << k << " = " << v << "\n";
}

inline void apply_manifest_line(RunConfig& c, const std::string& key, const std::string& val) {
  auto to_i = [&](int& slot) { slot = std::stoi(val); };
  auto to_d = [&](double& slot) { slot = std::stod(val); };
  auto to_b = [&](bool& slot) { slot = val == "1" || val == "true"; };
  if (key == "subcommand") c.subcommand = val;
  else if (key == "variant") c.variant = val;
  else if (key == "preset") c.preset = val;
  else if (key == "height") to_i(c.height);
  else if (key == "width") to_i(c.width);
  else if (key == "base_channels") to_i(c.base_channels);
  else if (key == "sequence_length") to_i(c.sequence_length);
  else if (key == "scene_preset") c.scene_preset = val;
  else if (key == "train_count") to_i(c.train_count);
  else if (key == "val_count") to_i(c.val_count);
  else if (key == "data_index") c.data_index = val;
  else if (key == "val_index") c.val_index = val;
  else if (key == "epochs") to_i(c.epochs);
  else if (key == "batch") to_i(c.batch);
  else if (key == "optimizer") c.optimizer = val;
  else if (key == "lr") to_d(c.lr);
  else if (key == "lr_decay") to_d(c.lr_decay);
  else if (key == "loss") c.loss = val;
  else if (key == "alpha") to_d(c.alpha);
  else if (key == "gamma") to_d(c.gamma);
  else if (key == "epsilon") to_d(c.epsilon);
  else if (key == "omega1") to_d(c.omega1);
  else if (key == "omega0") to_d(c.omega0);
  else if (key == "mask_ratio") to_d(c.mask_ratio);
  else if (key == "patch_size") to_i(c.patch_size);
  else if (key == "seed") c.seed = std::stoull(val);
  else if (key == "out") c.out = val;
  else if (key == "checkpoint") c.checkpoint = val;
  else if (key == "from_scratch") to_b(c.from_scratch);
  else if (key == "overlays") to_b(c.overlays);
  else if (key == "post") to_b(c.post);
  else if (key == "threads") to_i(c.threads);
  else throw ConfigError("unknown manifest key '" + key + "'");
}

inline RunConfig load_manifest(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_manifest_line(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Sample> load_index_samples(const std::string& path) {
  auto idx = load_index(path);
  std::vector<Sample> out;
  out.reserve(idx.records.size());
  for (const auto& rec : idx.records) out.push_back(load_sample(rec));
  return out;
}

inline const std::vector<std::string>& challenge_categories() {
  static const std::vector<std::string> c = {"occlude", "shadow", "bright", "blur", "curve", "dirty"};
  return c;
}

inline std::vector<Sample> build_dataset(const RunConfig& c, bool validation) {
  const std::string& index = validation ? c.val_index : c.data_index;
  if (!index.empty()) return load_index_samples(index);
  int count = validation ? c.val_count : c.train_count;
  std::uint64_t seed = hash_combine(c.seed, validation ? 0x76616cULL : 0x747261696eULL);
  if (c.scene_preset == "challenge") {
    std::vector<Sample> all;
    int per = std::max(1, count / (int)challenge_categories().size());
    for (std::size_t k = 0; k < challenge_categories().size(); ++k) {
      auto part = make_synthetic_dataset(challenge_categories()[k], per, c.height, c.width,
                                         c.sequence_length, hash_combine(seed, k));
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  return make_synthetic_dataset(c.scene_preset, count, c.height, c.width, c.sequence_length, seed);
}

inline double dataset_lane_fraction(const std::vector<Sample>& data) {
  double s = 0;
  for (const auto& d : data) s += label_lane_fraction(d.label);
  return data.empty() ? 0.0 : s / (double)data.size();
}

inline LossConfig loss_config(const RunConfig& c, const std::vector<Sample>& train) {
  LossConfig cfg;
  cfg.alpha = c.alpha;
  cfg.gamma = c.gamma;
  cfg.epsilon = c.epsilon;
  if (c.omega1 > 0 && c.omega0 > 0) {
    cfg.omega1 = c.omega1;
    cfg.omega0 = c.omega0;
  } else {
    auto [w1, w0] = inverse_frequency_weights(std::min(0.5, std::max(1e-4, dataset_lane_fraction(train))));
    cfg.omega1 = w1;
    cfg.omega0 = w0;
  }
  cfg.validate();
  return cfg;
}

inline void clamp01(Image& img) {
  for (auto& v : img.pix) v = std::min(1.f, std::max(0.f, v));
}

template <class Real>
Image tensor_to_image(const Tensor<Real>& t) {
  Image img(t.dim(1), t.dim(2), t.dim(0));
  for (std::size_t i = 0; i < img.pix.size(); ++i) img.pix[i] = (float)t.data()[i];
  return img;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace detail {

inline void run_pretrain(RunConfig& c) {
  auto train = build_dataset(c, false);
  if (train.empty()) throw DataError("empty training set");
  auto ck = init_checkpoint<float>(c.model_spec(Phase::pretrain), Phase::pretrain, c.seed);
  Trainer<float> tr(ck, c.optim_state());
  std::ofstream curve(c.out + "/pretrain_loss.csv");
  curve << "epoch,loss\n";
  curve.precision(10);
  for (int e = 0; e < c.epochs; ++e) {
    double loss = tr.pretrain_epoch(train, c.mask_ratio, c.patch_size, c.batch, c.seed, e);
    curve << (e + 1) << ',' << loss << '\n';
    curve.flush();
    std::cout << "[pretrain] epoch " << (e + 1) << "/" << c.epochs << " loss " << loss << std::endl;
  }
  save_checkpoint(ck, c.out + "/pretrain.lfck");
}

inline void run_finetune(RunConfig& c) {
  auto train = build_dataset(c, false);
  auto val = build_dataset(c, true);
  if (train.empty()) throw DataError("empty training set");
  Checkpoint<float> ck;
  if (c.from_scratch || c.checkpoint.empty()) {
    if (!c.from_scratch) throw ConfigError("finetune needs --pretrained <ck> or --from-scratch");
    ck = init_checkpoint<float>(c.model_spec(Phase::finetune), Phase::finetune, c.seed);
  } else {
    auto pre = load_checkpoint<float>(c.checkpoint);
    ck = transfer_weights(pre, pre.spec, hash_combine(c.seed, 0x68656164ULL));
  }
  auto cfg = loss_config(c, train);
  auto kind = loss_kind_from(c.loss);
  Trainer<float> tr(ck, c.optim_state());
  std::ofstream curve(c.out + "/finetune_curve.csv");
  curve << "epoch,train_loss,val_accuracy,val_precision,val_recall,val_f1\n";
  curve.precision(10);
  for (int e = 0; e < c.epochs; ++e) {
    double loss = tr.finetune_epoch(train, kind, cfg, c.batch, c.seed, e);
    MetricsReport m;
    if (!val.empty()) m = evaluate(ck, val).overall;
    curve << (e + 1) << ',' << loss << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ','
          << m.f1 << '\n';
    curve.flush();
    std::cout << "[finetune/" << c.loss << "] epoch " << (e + 1) << "/" << c.epochs << " loss " << loss
              << " val_f1 " << m.f1 << std::endl;
  }
  save_checkpoint(ck, c.out + "/finetune.lfck");
}

inline void run_eval(RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("eval needs --checkpoint <finetune ck>");
  auto ck = load_checkpoint<float>(c.checkpoint);
  c.height = ck.spec.input_height;
  c.width = ck.spec.input_width;
  c.sequence_length = ck.spec.sequence_length;
  auto val = build_dataset(c, true);
  if (val.empty()) throw DataError("empty evaluation set");
  auto res = evaluate(ck, val);
  write_metrics_csv(res.rows, c.out + "/metrics.csv");
  write_metrics_json(res.rows, count_params_macs(ck.spec), c.out + "/metrics.json");
  for (const auto& row : res.rows)
    std::cout << "[eval] " << row.category << " acc " << row.metrics.accuracy << " precision "
              << row.metrics.precision << " recall " << row.metrics.recall << " f1 " << row.metrics.f1
              << std::endl;
  if (c.overlays) {
    Model<float> model(ck);
    int n = std::min<int>(8, (int)val.size());
    for (int i = 0; i < n; ++i) {
      auto mask = argmax_mask(model.forward(frames_to_tensors<float>(val[(std::size_t)i])));
      Image over;
      if (c.post) {
        auto inst = cluster_instances(mask);
        over = render_overlay(val[(std::size_t)i].frames.back(), mask, &inst);
      } else {
        over = render_overlay(val[(std::size_t)i].frames.back(), mask);
      }
      write_image(over, c.out + "/overlay_" + std::to_string(i) + ".ppm");
    }
  }
}

inline void run_count(RunConfig& c) {
  std::ofstream os(c.out + "/complexity.csv");
  os << "variant,phase,params,macs,params_m,macs_g\n";
  for (Phase phase : {Phase::pretrain, Phase::finetune}) {
    auto cx = count_params_macs(c.model_spec(phase));
    os << c.variant << ',' << phase_name(phase) << ',' << cx.params << ',' << cx.macs << ','
       << cx.params / 1e6 << ',' << cx.macs / 1e9 << '\n';
    std::cout << "[count] " << c.variant << " (" << phase_name(phase) << ") params "
              << cx.params / 1e6 << "M macs " << cx.macs / 1e9 << "G" << std::endl;
  }
}

inline void run_ablate_mask(RunConfig& c) {
  auto train = build_dataset(c, false);
  auto val = build_dataset(c, true);
  const std::vector<double> ratios = {0.25, 0.5, 0.75};
  std::vector<std::vector<double>> losses(ratios.size());
  std::vector<Checkpoint<float>> pres;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    auto ck = init_checkpoint<float>(c.model_spec(Phase::pretrain), Phase::pretrain, c.seed);
    Trainer<float> tr(ck, c.optim_state());
    for (int e = 0; e < c.epochs; ++e)
      losses[r].push_back(tr.pretrain_epoch(train, ratios[r], c.patch_size, c.batch, c.seed, e));
    pres.push_back(std::move(ck));
    std::cout << "[ablate] ratio " << ratios[r] << " final recon loss " << losses[r].back() << std::endl;
  }
  {
    std::ofstream os(c.out + "/ablate_loss_curves.csv");
    os << "epoch,loss_r25,loss_r50,loss_r75\n";
    os.precision(10);
    for (int e = 0; e < c.epochs; ++e)
      os << (e + 1) << ',' << losses[0][(std::size_t)e] << ',' << losses[1][(std::size_t)e] << ','
         << losses[2][(std::size_t)e] << '\n';
  }
  std::ofstream os(c.out + "/ablate_results.csv");
  os << "ratio,test_acc,precision,recall,f1\n";
  os.precision(10);
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    auto fine = transfer_weights(pres[r], pres[r].spec, hash_combine(c.seed, 0x68656164ULL));
    auto cfg = loss_config(c, train);
    Trainer<float> tr(fine, c.optim_state());
    for (int e = 0; e < c.epochs; ++e) tr.finetune_epoch(train, loss_kind_from(c.loss), cfg, c.batch, c.seed, e);
    auto m = val.empty() ? MetricsReport{} : evaluate(fine, val).overall;
    os << ratios[r] << ',' << m.accuracy << ',' << m.precision << ',' << m.recall << ',' << m.f1 << '\n';
  }
}

inline void run_demo_reconstruct(RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("demo-reconstruct needs --checkpoint <pretrain ck>");
  auto ck = load_checkpoint<float>(c.checkpoint);
  if (ck.phase != Phase::pretrain) throw ConfigError("demo-reconstruct expects a pretrain checkpoint");
  c.height = ck.spec.input_height;
  c.width = ck.spec.input_width;
  c.sequence_length = ck.spec.sequence_length;
  c.val_count = std::max(1, std::min(c.val_count, 4));
  auto data = build_dataset(c, true);
  Model<float> model(ck);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto frames = frames_to_tensors<float>(data[i]);
    auto ps = make_pretrain_sample(frames, c.mask_ratio, hash_combine(c.seed, i), c.patch_size);
    auto recon = model.forward(ps.masked_frames);
    auto tag = std::to_string(i);
    auto masked = tensor_to_image(ps.masked_frames.back());
    auto rec = tensor_to_image(recon);
    clamp01(rec);
    write_image(masked, c.out + "/demo_" + tag + "_masked.ppm");
    write_image(rec, c.out + "/demo_" + tag + "_reconstructed.ppm");
    write_image(data[i].frames.back(), c.out + "/demo_" + tag + "_original.ppm");
  }
}

inline void run_grid_search(RunConfig& c) {
  auto train = build_dataset(c, false);
  auto val = build_dataset(c, true);
  if (train.empty() || val.empty()) throw DataError("grid search needs train and validation data");
  bool transfer = !c.checkpoint.empty();
  Checkpoint<float> pre;
  if (transfer) pre = load_checkpoint<float>(c.checkpoint);
  std::ofstream os(c.out + "/grid_search.csv");
  os << "alpha,gamma,epsilon,val_f1,val_precision,val_accuracy\n";
  os.precision(10);
  for (double a : {1.0, 2.0}) {
    for (double g : {0.5, 1.0, 2.0}) {
      for (double e : {0.0, 1.0, 2.0}) {
        Checkpoint<float> ck = transfer
                                   ? transfer_weights(pre, pre.spec, hash_combine(c.seed, 0x68656164ULL))
                                   : init_checkpoint<float>(c.model_spec(Phase::finetune), Phase::finetune, c.seed);
        LossConfig cfg;
        cfg.alpha = a;
        cfg.gamma = g;
        cfg.epsilon = e;
        Trainer<float> tr(ck, c.optim_state());
        for (int ep = 0; ep < c.epochs; ++ep) tr.finetune_epoch(train, LossKind::pl, cfg, c.batch, c.seed, ep);
        auto m = evaluate(ck, val).overall;
        os << a << ',' << g << ',' << e << ',' << m.f1 << ',' << m.precision << ',' << m.accuracy << '\n';
        os.flush();
        std::cout << "[grid] alpha " << a << " gamma " << g << " epsilon " << e << " f1 " << m.f1
                  << std::endl;
      }
    }
  }
}

}  // namespace detail

/// Executes a subcommand; returns the process exit code.
/// 0 success, 2 configuration error, 3 data error, 4 numeric failure.
inline int run(RunConfig config) {
  try {
    config.resolve();
    if (config.out.empty()) throw ConfigError("output directory must not be empty");
    std::filesystem::create_directories(config.out);
    write_manifest(config, config.out + "/manifest.txt");
    if (config.subcommand == "pretrain")
      detail::run_pretrain(config);
    else if (config.subcommand == "finetune")
      detail::run_finetune(config);
    else if (config.subcommand == "eval")
      detail::run_eval(config);
    else if (config.subcommand == "count")
      detail::run_count(config);
    else if (config.subcommand == "ablate-mask")
      detail::run_ablate_mask(config);
    else if (config.subcommand == "demo-reconstruct")
      detail::run_demo_reconstruct(config);
    else if (config.subcommand == "grid-search")
      detail::run_grid_search(config);
    else
      throw ConfigError("unknown subcommand '" + config.subcommand + "'");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  }
}

}  // namespace laneforge
