// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 6 runs the desk-scale training benchmark and dominates
// the runtime; everything else is exact or fast.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "laneforge/gradcheck.hpp"
#include "laneforge/run.hpp"
#include "../oracles.hpp"

using namespace laneforge;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& note = "") {
  printf("[%s] C%02d %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(), note.empty() ? "" : " — ",
         note.c_str());
  fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor<double> randt(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::string fresh_dir(const std::string& leaf) {
  auto d = std::filesystem::temp_directory_path() / "laneforge_acceptance" / leaf;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

// ---------------------------------------------------------------------------
// C1: gradient suite
// ---------------------------------------------------------------------------

void criterion_1() {
  auto t0 = Clock::now();
  struct OpCase {
    std::string name;
    std::function<double(std::uint64_t)> max_err;  // per-seed max rel err
  };
  auto fd = [](const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& x) {
    return finite_difference_check<double>(f, x).max_rel_err;
  };
  std::vector<OpCase> cases;
  auto scalarize = [](Tensor<double> t) { return mean(mul(t, t)); };

  cases.push_back({"add/sub/mul", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{3, 5}, rng);
                     auto b = randt(Shape{3, 5}, rng);
                     return fd([&](const Tensor<double>& v) { return scalarize(add(mul(v, b), sub(v, mul(b, 0.3)))); }, a);
                   }});
  cases.push_back({"pow", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{12}, rng, 0.1, 0.95);
                     return fd([&](const Tensor<double>& v) { return scalarize(pow(v, 1.7)); }, a);
                   }});
  cases.push_back({"relu", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{16}, rng, -1, 1);
                     return fd([&](const Tensor<double>& v) { return scalarize(relu(v)); }, a);
                   }});
  cases.push_back({"sigmoid", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{16}, rng, -3, 3);
                     return fd([&](const Tensor<double>& v) { return scalarize(sigmoid(v)); }, a);
                   }});
  cases.push_back({"tanh", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{16}, rng, -3, 3);
                     return fd([&](const Tensor<double>& v) { return scalarize(tanh(v)); }, a);
                   }});
  cases.push_back({"log", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{16}, rng, 0.05, 1.0);
                     return fd([&](const Tensor<double>& v) { return scalarize(log(v)); }, a);
                   }});
  cases.push_back({"clamp", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{16}, rng, 0.1, 0.9);
                     return fd([&](const Tensor<double>& v) { return scalarize(clamp(v, 0.0, 1.0)); }, a);
                   }});
  cases.push_back({"conv2d", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{2, 4, 4}, rng);
                     auto k = randt(Shape{2, 2, 3, 3}, rng);
                     auto b = randt(Shape{2}, rng);
                     double e = fd([&](const Tensor<double>& v) { return scalarize(conv2d(v, k, b)); }, x);
                     e = std::max(e, fd([&](const Tensor<double>& v) { return scalarize(conv2d(x, v, b)); }, k));
                     return std::max(e, fd([&](const Tensor<double>& v) { return scalarize(conv2d(x, k, v)); }, b));
                   }});
  cases.push_back({"conv1d_depthwise", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{2, 9}, rng);
                     auto k = randt(Shape{2, 3}, rng);
                     double e = fd([&](const Tensor<double>& v) { return scalarize(conv1d_depthwise(v, k)); }, x);
                     return std::max(e, fd([&](const Tensor<double>& v) { return scalarize(conv1d_depthwise(x, v)); }, k));
                   }});
  cases.push_back({"maxpool2", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{2, 4, 4}, rng);
                     return fd([&](const Tensor<double>& v) { return scalarize(maxpool2(v)); }, x);
                   }});
  cases.push_back({"transposed_conv2", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{2, 3, 3}, rng);
                     auto k = randt(Shape{2, 2, 2, 2}, rng);
                     auto b = randt(Shape{2}, rng);
                     double e = fd([&](const Tensor<double>& v) { return scalarize(transposed_conv2(v, k, b)); }, x);
                     return std::max(e, fd([&](const Tensor<double>& v) { return scalarize(transposed_conv2(x, v, b)); }, k));
                   }});
  cases.push_back({"softmax_channels", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{3, 3, 3}, rng, -2, 2);
                     return fd([&](const Tensor<double>& v) { return scalarize(softmax_channels(v)); }, x);
                   }});
  cases.push_back({"concat/narrow", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{2, 3, 3}, rng);
                     auto b = randt(Shape{1, 3, 3}, rng);
                     return fd(
                         [&](const Tensor<double>& v) {
                           return scalarize(narrow_channels(concat_channels<double>({v, b}), 1, 2));
                         },
                         a);
                   }});
  cases.push_back({"slice/stack", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto a = randt(Shape{2, 3, 4}, rng);
                     return fd(
                         [&](const Tensor<double>& v) {
                           std::vector<Tensor<double>> rows;
                           for (int i = 0; i < 3; ++i) rows.push_back(slice_row(v, i));
                           std::vector<Tensor<double>> cols;
                           auto st = stack_rows(rows);
                           for (int j = 0; j < 4; ++j) cols.push_back(slice_col(st, j));
                           return scalarize(stack_cols(cols));
                         },
                         a);
                   }});
  cases.push_back({"global_avg_pool/scale_channels", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{3, 4, 4}, rng);
                     return fd(
                         [&](const Tensor<double>& v) {
                           return scalarize(scale_channels(v, sigmoid(global_avg_pool(v))));
                         },
                         x);
                   }});
  cases.push_back({"linear", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto w = randt(Shape{3, 4}, rng);
                     auto x = randt(Shape{4}, rng);
                     auto b = randt(Shape{3}, rng);
                     double e = fd([&](const Tensor<double>& v) { return scalarize(linear(v, x, b)); }, w);
                     return std::max(e, fd([&](const Tensor<double>& v) { return scalarize(linear(w, v, b)); }, x));
                   }});
  cases.push_back({"scale_map", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{3, 3, 3}, rng);
                     auto m = randt(Shape{3, 3}, rng);
                     return fd([&](const Tensor<double>& v) { return scalarize(scale_map(x, v)); }, m);
                   }});
  cases.push_back({"sum/mean", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto x = randt(Shape{8}, rng);
                     return fd([&](const Tensor<double>& v) { return add(sum(mul(v, v)), mean(mul(v, 2.0))); }, x);
                   }});
  cases.push_back({"weighted_ce(logits)", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto logits = randt(Shape{2, 3, 3}, rng, -2, 2);
                     Tensor<double> y(Shape{1, 3, 3});
                     for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
                     LossConfig cfg;
                     cfg.omega1 = 1.7;
                     cfg.omega0 = 0.3;
                     return fd(
                         [&](const Tensor<double>& v) {
                           return weighted_ce(narrow_channels(softmax_channels(v), 1, 1), y, cfg);
                         },
                         logits);
                   }});
  cases.push_back({"poly_loss(logits)", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto logits = randt(Shape{2, 3, 3}, rng, -2, 2);
                     Tensor<double> y(Shape{1, 3, 3});
                     for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
                     LossConfig cfg;
                     cfg.alpha = 1.2;
                     cfg.gamma = 0.9;
                     cfg.epsilon = 1.0;
                     return fd(
                         [&](const Tensor<double>& v) {
                           return poly_loss(narrow_channels(softmax_channels(v), 1, 1), y, cfg);
                         },
                         logits);
                   }});
  cases.push_back({"focal_loss", [&](std::uint64_t s) {
                     Rng rng(s);
                     auto h = randt(Shape{1, 3, 3}, rng, 0.05, 0.95);
                     Tensor<double> y(Shape{1, 3, 3});
                     for (long long i = 0; i < y.size(); ++i) y.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
                     return fd([&](const Tensor<double>& v) { return focal_loss(v, y, 1.1, 2.0); }, h);
                   }});

  double worst = 0;
  std::string worst_op;
  for (const auto& c : cases) {
    for (std::uint64_t s = 1; s <= 20; ++s) {
      double e = c.max_err(s * 7919);
      if (e > worst) {
        worst = e;
        worst_op = c.name;
      }
    }
  }
  std::ostringstream note;
  note << cases.size() << " ops x 20 seeds, worst rel err " << worst << " (" << worst_op << "), "
       << seconds_since(t0) << " s";
  report(1, "gradient suite: analytic vs central differences < 1e-4", worst < 1e-4, note.str());
}

// ---------------------------------------------------------------------------
// C2: exact loss reductions
// ---------------------------------------------------------------------------

void criterion_2() {
  double worst = 0;
  for (int s = 0; s < 100; ++s) {
    Rng rng((std::uint64_t)s + 11);
    Tensor<double> h(Shape{1, 6, 8});
    Tensor<double> y(Shape{1, 6, 8});
    for (long long i = 0; i < h.size(); ++i) {
      h.data()[i] = rng.uniform(0.02, 0.98);
      y.data()[i] = rng.uniform() < 0.35 ? 1.0 : 0.0;
    }
    LossConfig pl;
    pl.alpha = 1;
    pl.gamma = 0;
    pl.epsilon = 0;
    LossConfig ce;
    ce.omega1 = ce.omega0 = 1.0;
    worst = std::max(worst, std::abs(poly_loss(h, y, pl).item() - weighted_ce(h, y, ce).item()));
    worst = std::max(worst, std::abs(focal_loss(h, y, 1.0, 0.0).item() - weighted_ce(h, y, ce).item()));
  }
  std::ostringstream note;
  note << "100 batches, worst |diff| " << worst;
  report(2, "poly(1,0,0) == CE and focal(eps=0) == CE within 1e-12", worst < 1e-12, note.str());
}

// ---------------------------------------------------------------------------
// C3: Taylor verification
// ---------------------------------------------------------------------------

void criterion_3() {
  bool ok = true;
  std::ostringstream note;
  for (double q : {0.7, 0.9, 0.99}) {
    double err = std::abs(fl_taylor_truncated(q, 0.0, 12, {}) - (-std::log(q)));
    note << "Q=" << q << " err " << err << "; ";
    ok = ok && err < 1e-6;
  }
  double worst_id = 0;
  for (double q : {0.3, 0.7, 0.9, 0.99}) {
    for (double eps : {0.0, 1.0, 2.0}) {
      for (double gamma : {0.25, 1.0, 2.0}) {
        double lead = fl_taylor_truncated(q, eps, 1, {gamma});
        double exact_fl = -std::pow(1.0 - q, eps) * std::log(q);
        double tail = exact_fl - std::pow(1.0 - q, 1.0 + eps);
        worst_id = std::max(worst_id, std::abs(lead + tail - poly_loss_scalar(q, 1.0, gamma, eps)));
      }
    }
  }
  note << "identity worst " << worst_id;
  ok = ok && worst_id < 1e-12;
  report(3, "12-term truncation within 1e-6 of -ln Q; simplified-form identity within 1e-12", ok, note.str());
}

// ---------------------------------------------------------------------------
// C4: masking exactness
// ---------------------------------------------------------------------------

void criterion_4() {
  bool ok = true;
  std::ostringstream note;
  auto m = sample_mask(128, 256, 0.5, 1234);
  ok = ok && m.patch_count() == 128 && m.grid_rows == 8 && m.grid_cols == 16;
  ok = ok && m.masked.size() == 64;
  std::set<int> uniq(m.masked.begin(), m.masked.end());
  ok = ok && uniq.size() == 64;
  auto m2 = sample_mask(128, 256, 0.5, 1234);
  ok = ok && m.masked == m2.masked;
  note << "grid 8x16=128, masked " << m.masked.size() << ", deterministic "
       << (m.masked == m2.masked ? "yes" : "no");

  auto data = make_synthetic_dataset("normal", 2, 128, 256, 5, 555);
  for (const auto& s : data) {
    auto frames = frames_to_tensors<float>(s);
    auto ps = make_pretrain_sample(frames, 0.5, 777);
    ok = ok && ps.target.values() == frames.back().values();
    bool masked_inputs = false;
    for (long long i = 0; i < ps.target.size(); ++i)
      masked_inputs = masked_inputs || ps.masked_frames.back()[i] != ps.target[i];
    ok = ok && masked_inputs;
  }
  note << ", target untouched";
  report(4, "patch grid and 50% mask count exact; deterministic; target never masked", ok, note.str());
}

// ---------------------------------------------------------------------------
// C5: full-size shape contract and transfer
// ---------------------------------------------------------------------------

void criterion_5() {
  auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream note;
  auto spec = ModelSpec::full(Variant::unet_convlstm, Phase::pretrain);
  auto pre = init_checkpoint<float>(spec, Phase::pretrain, 42);
  Model<float> model(pre);
  Rng rng(7);
  std::vector<Tensor<float>> frames;
  for (int k = 0; k < 5; ++k) {
    Tensor<float> f(Shape{3, 128, 256});
    for (long long i = 0; i < f.size(); ++i) f.data()[i] = (float)rng.uniform(0, 1);
    frames.push_back(f);
  }
  auto enc = model.encoder_forward(frames[0]);
  ok = ok && enc.bottleneck.shape() == Shape{512, 8, 16};
  note << "bottleneck " << shape_str(enc.bottleneck.shape());
  auto out3 = model.forward(frames);
  ok = ok && out3.shape() == Shape{3, 128, 256} && out3.all_finite();
  note << ", pretrain out " << shape_str(out3.shape());

  auto fine = transfer_weights(pre, pre.spec, 4242);
  auto out2 = Model<float>(fine).forward(frames);
  ok = ok && out2.shape() == Shape{2, 128, 256} && out2.all_finite();
  note << ", finetune out " << shape_str(out2.shape());

  bool bitexact = true;
  for (const auto& name : fine.params.names()) {
    if (name.rfind("head.", 0) == 0) continue;
    bitexact = bitexact && fine.params.at(name).values() == pre.params.at(name).values();
  }
  ok = ok && bitexact;
  note << ", non-head transfer bit-exact " << (bitexact ? "yes" : "no") << ", " << seconds_since(t0) << " s";
  report(5, "full-size 512x8x16 bottleneck, head 3/2 outputs, bit-exact transfer", ok, note.str());
}

// ---------------------------------------------------------------------------
// C6: desk-scale pretraining benefit
// ---------------------------------------------------------------------------

struct FinetuneTrace {
  int epochs_to_threshold = -1;  // -1 = never within budget
  double final_precision = 0;
  double final_f1 = 0;
};

FinetuneTrace run_finetune_trace(Checkpoint<float>& ck, const std::vector<Sample>& train,
                                 const std::vector<Sample>& val, LossKind kind, const LossConfig& cfg,
                                 int budget, double threshold, std::uint64_t seed) {
  OptimState<float> st;
  st.kind = OptimKind::radam;
  st.lr0 = st.lr = 0.001f;
  st.decay = 0.95f;
  Trainer<float> tr(ck, st);
  FinetuneTrace trace;
  for (int e = 0; e < budget; ++e) {
    tr.finetune_epoch(train, kind, cfg, 8, seed, e);
    auto m = evaluate(ck, val).overall;
    trace.final_precision = m.precision;
    trace.final_f1 = m.f1;
    if (trace.epochs_to_threshold < 0 && m.f1 >= threshold) trace.epochs_to_threshold = e + 1;
    printf("    [%s] epoch %d f1 %.4f precision %.4f\n", loss_kind_name(kind), e + 1, m.f1, m.precision);
    fflush(stdout);
    if (trace.epochs_to_threshold > 0 && e + 1 >= trace.epochs_to_threshold + 1) break;  // one extra epoch
  }
  return trace;
}

void criterion_6() {
  auto t0 = Clock::now();
  const double threshold = 0.85;
  const int pre_epochs = 6;
  const int pl_budget = 10;
  const int ce_budget = 20;
  std::vector<double> pl_epochs, ce_epochs, pl_prec, ce_prec;

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    printf("  seed %llu\n", (unsigned long long)seed);
    auto train = make_synthetic_dataset("mix", 200, 64, 128, 5, hash_combine(seed, 0x6265ULL));
    auto val = make_synthetic_dataset("mix", 50, 64, 128, 5, hash_combine(seed, 0x7665ULL));
    double lane_frac = 0;
    for (const auto& s : train) lane_frac += label_lane_fraction(s.label);
    lane_frac /= (double)train.size();

    // phase 1: masked pretraining
    auto spec = ModelSpec::desk(Variant::unet_convlstm, Phase::pretrain);
    auto pre = init_checkpoint<float>(spec, Phase::pretrain, seed);
    {
      OptimState<float> st;
      st.kind = OptimKind::radam;
      st.lr0 = st.lr = 0.001f;
      st.decay = 0.95f;
      Trainer<float> tr(pre, st);
      for (int e = 0; e < pre_epochs; ++e) {
        double l = tr.pretrain_epoch(train, 0.5, 16, 8, seed, e);
        printf("    [pretrain] epoch %d loss %.5f\n", e + 1, l);
        fflush(stdout);
      }
    }

    // phase 2a: fine-tune with PolyLoss from the pretrained weights
    auto pl_ck = transfer_weights(pre, pre.spec, hash_combine(seed, 0x68ULL));
    LossConfig pl_cfg;
    pl_cfg.alpha = 1;
    pl_cfg.gamma = 1;
    pl_cfg.epsilon = 1;
    auto pl = run_finetune_trace(pl_ck, train, val, LossKind::pl, pl_cfg, pl_budget, threshold, seed);

    // phase 2b: weighted CE from scratch
    auto ce_ck = init_checkpoint<float>(ModelSpec::desk(Variant::unet_convlstm, Phase::finetune),
                                        Phase::finetune, hash_combine(seed, 0x73ULL));
    LossConfig ce_cfg;
    auto [w1, w0] = inverse_frequency_weights(lane_frac);
    ce_cfg.omega1 = w1;
    ce_cfg.omega0 = w0;
    auto ce = run_finetune_trace(ce_ck, train, val, LossKind::ce, ce_cfg, ce_budget, threshold, seed);

    pl_epochs.push_back(pl.epochs_to_threshold < 0 ? pl_budget + 1 : pl.epochs_to_threshold);
    ce_epochs.push_back(ce.epochs_to_threshold < 0 ? ce_budget + 1 : ce.epochs_to_threshold);
    pl_prec.push_back(pl.final_precision);
    ce_prec.push_back(ce.final_precision);
  }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  double med_pl = median(pl_epochs), med_ce = median(ce_epochs);
  double med_plp = median(pl_prec), med_cep = median(ce_prec);
  bool pl_reached = med_pl <= pl_budget;
  bool ok = pl_reached && med_pl <= med_ce / 2.0 && med_plp >= med_cep;
  std::ostringstream note;
  note << "median epochs to F1>=0.85: PL " << med_pl << " vs CE " << med_ce << " (cap " << ce_budget
       << "); median final precision PL " << med_plp << " vs CE " << med_cep << "; " << seconds_since(t0)
       << " s";
  report(6, "pretrained+PL reaches F1 0.85 in <= half the epochs of scratch CE, with precision >= CE", ok,
         note.str());
}

// ---------------------------------------------------------------------------
// C7: mask-ratio ablation harness
// ---------------------------------------------------------------------------

void criterion_7() {
  auto t0 = Clock::now();
  auto dir = fresh_dir("ablate");
  RunConfig c;
  c.subcommand = "ablate-mask";
  c.variant = "UNet_ConvLSTM";
  c.preset = "desk";
  c.height = 32;
  c.width = 64;
  c.base_channels = 4;
  c.sequence_length = 3;
  c.train_count = 24;
  c.val_count = 8;
  c.epochs = 4;
  c.batch = 8;
  c.seed = 5;
  c.out = dir;
  bool ok = run(c) == 0;

  int rows = 0;
  bool monotone = true;
  if (ok) {
    std::ifstream rs(dir + "/ablate_results.csv");
    std::string line;
    std::getline(rs, line);
    while (std::getline(rs, line))
      if (!line.empty()) ++rows;
    std::ifstream cs(dir + "/ablate_loss_curves.csv");
    std::getline(cs, line);
    while (std::getline(cs, line)) {
      if (line.empty()) continue;
      double e, l25, l50, l75;
      char comma;
      std::istringstream ls(line);
      ls >> e >> comma >> l25 >> comma >> l50 >> comma >> l75;
      monotone = monotone && l25 <= l50 && l50 <= l75;
    }
  }
  ok = ok && rows == 3 && monotone;
  std::ostringstream note;
  note << rows << " ratio rows, recon loss monotone in ratio at every epoch: " << (monotone ? "yes" : "no")
       << ", " << seconds_since(t0) << " s";
  report(7, "ablation emits 3 ratio rows and loss orders 25% <= 50% <= 75%", ok, note.str());
}

// ---------------------------------------------------------------------------
// C8: oracle equivalences
// ---------------------------------------------------------------------------

void criterion_8() {
  auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream note;

  // confusion/metrics vs loop oracle on 1000 random masks
  for (int s = 0; s < 1000 && ok; ++s) {
    Rng rng((std::uint64_t)s + 1);
    Image p(12, 16, 1), t(12, 16, 1);
    for (auto& v : p.pix) v = rng.uniform() < 0.3 ? 1.f : 0.f;
    for (auto& v : t.pix) v = rng.uniform() < 0.25 ? 1.f : 0.f;
    auto c = confusion(p, t);
    std::vector<int> pv, tv;
    for (float v : p.pix) pv.push_back(v >= 0.5f);
    for (float v : t.pix) tv.push_back(v >= 0.5f);
    auto ref = oracle::confusion(pv, tv);
    ok = ok && c.tp == ref.tp && c.fp == ref.fp && c.fn == ref.fn && c.tn == ref.tn;
    if (c.tp + c.fp > 0 && c.tp + c.fn > 0) {
      auto m = metrics(c);
      double prec = double(ref.tp) / double(ref.tp + ref.fp);
      double rec = double(ref.tp) / double(ref.tp + ref.fn);
      ok = ok && std::abs(m.precision - prec) < 1e-15 && std::abs(m.recall - rec) < 1e-15;
    }
  }
  note << "confusion 1000 masks ok=" << (ok ? "yes" : "no");

  // dbscan vs quadratic reference on 100 seeded sets (up to 500 points)
  bool db_ok = true;
  for (int s = 0; s < 100 && db_ok; ++s) {
    Rng rng((std::uint64_t)s + 31);
    int n = (int)rng.uniform_int(10, 500);
    std::vector<PixelPoint> pts;
    std::vector<std::pair<int, int>> raw;
    for (int i = 0; i < n; ++i) {
      int r = (int)rng.uniform_int(0, 120), cc = (int)rng.uniform_int(0, 250);
      pts.push_back({r, cc});
      raw.push_back({r, cc});
    }
    double eps = rng.uniform(1.5, 8.0);
    int min_pts = (int)rng.uniform_int(1, 10);
    db_ok = oracle::canon_labels(dbscan(pts, eps, min_pts)) == oracle::canon_labels(oracle::dbscan(raw, eps, min_pts));
  }
  ok = ok && db_ok;
  note << ", dbscan 100 sets ok=" << (db_ok ? "yes" : "no");

  // conv / pool / upsample vs naive loops
  double worst = 0;
  for (int s = 0; s < 50; ++s) {
    Rng rng((std::uint64_t)s + 61);
    auto x = randt(Shape{3, 6, 8}, rng);
    auto k = randt(Shape{2, 3, 3, 3}, rng);
    auto b = randt(Shape{2}, rng);
    auto y = conv2d(x, k, b);
    auto ref = oracle::conv2d(x.values(), 3, 6, 8, k.values(), 2, 3, 3, b.values());
    for (long long i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[(size_t)i]));
    auto mp = maxpool2(x);
    auto mref = oracle::maxpool2(x.values(), 3, 6, 8);
    for (long long i = 0; i < mp.size(); ++i) worst = std::max(worst, std::abs(mp[i] - mref[(size_t)i]));
    auto tk = randt(Shape{3, 2, 2, 2}, rng);
    auto tb = randt(Shape{2}, rng);
    auto tc = transposed_conv2(x, tk, tb);
    auto tref = oracle::tconv2(x.values(), 3, 6, 8, tk.values(), 2, tb.values());
    for (long long i = 0; i < tc.size(); ++i) worst = std::max(worst, std::abs(tc[i] - tref[(size_t)i]));
  }
  ok = ok && worst < 1e-6;
  note << ", conv/pool/upsample worst |diff| " << worst << ", " << seconds_since(t0) << " s";
  report(8, "confusion, dbscan, and spatial ops match independent oracles", ok, note.str());
}

// ---------------------------------------------------------------------------
// C9: complexity accounting vs the published table
// ---------------------------------------------------------------------------

void criterion_9() {
  struct Row {
    Variant v;
    double params_m, macs_g;  // published values
  };
  // documented deviations: the message-passing kernel length/placement and
  // the attention internals are open questions; where our faithful reading
  // lands outside 20% on MACs we report the deviation against that ambiguity
  std::vector<Row> rows = {{Variant::unet_convlstm, 51.1, 69.0},
                           {Variant::scnn_unet_convlstm, 51.3, 93.0},
                           {Variant::scnn_unet_attention, 13.7, 68.9}};
  bool ok = true;
  std::ostringstream note;
  for (const auto& r : rows) {
    auto cx = count_params_macs(ModelSpec::full(r.v, Phase::finetune));
    double pm = cx.params / 1e6, mg = cx.macs / 1e9;
    double pdev = (pm - r.params_m) / r.params_m, mdev = (mg - r.macs_g) / r.macs_g;
    bool p_ok = std::abs(pdev) <= 0.20;
    bool m_ok = std::abs(mdev) <= 0.20;
    bool documented = false;
    if (!m_ok && r.v != Variant::unet_convlstm) {
      // SCNN slice-kernel size/placement and the attention block internals
      // are not restated by the source; the depthwise bottleneck reading is
      // the recorded design decision and its cost sits below the table value
      documented = true;
    }
    ok = ok && p_ok && (m_ok || documented);
    note << variant_name(r.v) << ": params " << pm << "M (" << (pdev >= 0 ? "+" : "") << (int)(pdev * 100)
         << "%), macs " << mg << "G (" << (mdev >= 0 ? "+" : "") << (int)(mdev * 100) << "%"
         << (m_ok ? "" : documented ? ", documented ambiguity" : ", UNDOCUMENTED") << "); ";
  }
  report(9, "params/MACs within 20% of the table or documented against an open ambiguity", ok, note.str());
}

// ---------------------------------------------------------------------------
// C10: stride sampling table
// ---------------------------------------------------------------------------

void criterion_10() {
  struct T {
    int labeled, stride;
    std::array<int, 5> want;
  };
  std::vector<T> table = {
      {13, 3, {1, 4, 7, 10, 13}},    {13, 2, {5, 7, 9, 11, 13}},    {13, 1, {9, 10, 11, 12, 13}},
      {20, 3, {8, 11, 14, 17, 20}},  {20, 2, {12, 14, 16, 18, 20}}, {20, 1, {16, 17, 18, 19, 20}},
  };
  bool ok = true;
  for (const auto& t : table) ok = ok && sample_frames(t.labeled, t.stride) == t.want;
  // test set #1 rows reuse the stride-1 rows; the sliding windows cover #2
  auto wins = sliding_windows(20);
  ok = ok && wins.size() == 16 && wins.front() == std::array<int, 5>{1, 2, 3, 4, 5} &&
       wins.back() == std::array<int, 5>{16, 17, 18, 19, 20};
  report(10, "all published sampling tuples reproduce exactly", ok,
         ok ? "6 trainset rows + 2 testset rows + sliding windows" : "mismatch");
}

// ---------------------------------------------------------------------------
// C11: manifest determinism
// ---------------------------------------------------------------------------

void criterion_11() {
  auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream note;

  auto dir1 = fresh_dir("det1");
  RunConfig c;
  c.subcommand = "pretrain";
  c.variant = "SCNN_UNet_ConvLSTM";
  c.preset = "desk";
  c.height = 32;
  c.width = 64;
  c.base_channels = 4;
  c.sequence_length = 3;
  c.train_count = 6;
  c.val_count = 2;
  c.epochs = 2;
  c.batch = 3;
  c.seed = 77;
  c.out = dir1;
  ok = ok && run(c) == 0;

  auto dir2 = fresh_dir("det2");
  auto re = load_manifest(dir1 + "/manifest.txt");
  re.out = dir2;
  ok = ok && run(re) == 0;
  bool ck_same = slurp(dir1 + "/pretrain.lfck") == slurp(dir2 + "/pretrain.lfck");
  bool csv_same = slurp(dir1 + "/pretrain_loss.csv") == slurp(dir2 + "/pretrain_loss.csv");
  ok = ok && ck_same && csv_same;
  note << "pretrain checkpoint bytes equal: " << (ck_same ? "yes" : "no")
       << ", loss csv equal: " << (csv_same ? "yes" : "no");

  // finetune + eval reports round trip
  auto ft1 = fresh_dir("det_ft1");
  RunConfig f = c;
  f.subcommand = "finetune";
  f.checkpoint = dir1 + "/pretrain.lfck";
  f.out = ft1;
  ok = ok && run(f) == 0;
  auto ft2 = fresh_dir("det_ft2");
  auto fre = load_manifest(ft1 + "/manifest.txt");
  fre.out = ft2;
  ok = ok && run(fre) == 0;
  bool ft_same = slurp(ft1 + "/finetune.lfck") == slurp(ft2 + "/finetune.lfck") &&
                 slurp(ft1 + "/finetune_curve.csv") == slurp(ft2 + "/finetune_curve.csv");
  ok = ok && ft_same;
  note << ", finetune artifacts equal: " << (ft_same ? "yes" : "no") << ", " << seconds_since(t0) << " s";
  report(11, "manifest re-launch reproduces checkpoints and reports bit-exactly", ok, note.str());
}

}  // namespace

int main() {
  auto t0 = Clock::now();
  printf("laneforge acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  criterion_11();
  printf("%d criterion(s) failed; total %.1f s\n", g_failures, seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
