#include <catch_amalgamated.hpp>

#include <set>

#include "laneforge/pretrain.hpp"
#include "laneforge/trainer.hpp"

using namespace laneforge;

TEST_CASE("mask sampling") {
  SECTION("the full-size grid is 8x16 = 128 patches; ratio 0.5 masks exactly 64") {
    auto m = sample_mask(128, 256, 0.5, 99);
    CHECK(m.grid_rows == 8);
    CHECK(m.grid_cols == 16);
    CHECK(m.patch_count() == 128);
    CHECK(m.masked.size() == 64);
    std::set<int> uniq(m.masked.begin(), m.masked.end());
    CHECK(uniq.size() == 64);
    for (int idx : m.masked) {
      CHECK(idx >= 0);
      CHECK(idx < 128);
    }
  }
  SECTION("ratio 0 masks nothing, ratio 1 masks everything") {
    CHECK(sample_mask(64, 128, 0.0, 1).masked.empty());
    CHECK(sample_mask(64, 128, 1.0, 1).masked.size() == 32);
  }
  SECTION("deterministic per seed, different across seeds") {
    auto a = sample_mask(64, 128, 0.5, 7);
    auto b = sample_mask(64, 128, 0.5, 7);
    auto c = sample_mask(64, 128, 0.5, 8);
    CHECK(a.masked == b.masked);
    CHECK(a.masked != c.masked);
  }
  SECTION("indivisible extents are rejected") {
    CHECK_THROWS_AS(sample_mask(65, 128, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(sample_mask(64, 100, 0.5, 1), ConfigError);
  }
  SECTION("out-of-range ratio is rejected") { CHECK_THROWS_AS(sample_mask(64, 128, 1.2, 1), ConfigError); }
}

TEST_CASE("apply_mask") {
  Rng rng(12);
  Tensor<float> frame(Shape{3, 32, 32});
  for (long long i = 0; i < frame.size(); ++i) frame.data()[i] = (float)rng.uniform(0.05, 1.0);
  SECTION("empty mask changes nothing") {
    auto m = sample_mask(32, 32, 0.0, 5);
    auto out = apply_mask(frame, m);
    CHECK(out.values() == frame.values());
  }
  SECTION("full mask zeroes the frame") {
    auto m = sample_mask(32, 32, 1.0, 5);
    auto out = apply_mask(frame, m);
    for (long long i = 0; i < out.size(); ++i) CHECK(out[i] == 0.f);
  }
  SECTION("one masked patch changes exactly 16*16*3 elements") {
    MaskPattern m;
    m.grid_rows = 2;
    m.grid_cols = 2;
    m.patch = 16;
    m.masked = {2};
    auto out = apply_mask(frame, m);
    long long changed = 0;
    for (long long i = 0; i < out.size(); ++i)
      if (out[i] != frame[i]) ++changed;
    CHECK(changed == 16 * 16 * 3);
  }
  SECTION("idempotent for a fixed mask") {
    auto m = sample_mask(32, 32, 0.5, 6);
    auto once = apply_mask(frame, m);
    auto twice = apply_mask(once, m);
    CHECK(once.values() == twice.values());
  }
  SECTION("grid mismatch is rejected") {
    auto m = sample_mask(64, 64, 0.5, 6);
    CHECK_THROWS_AS(apply_mask(frame, m), ShapeError);
  }
}

TEST_CASE("reconstruction loss") {
  SECTION("identical images cost zero") {
    Tensor<double> a(Shape{3, 8, 8}, 0.37);
    CHECK(reconstruction_loss(a, a).item() == 0.0);
  }
  SECTION("a single-channel single-pixel difference of 2 at full size") {
    Tensor<double> a(Shape{3, 128, 256}, 0.0);
    Tensor<double> b(Shape{3, 128, 256}, 0.0);
    b.data()[12345] = 2.0;
    // 4 / (128*256) / 3
    CHECK(reconstruction_loss(a, b).item() == Catch::Approx(4.0690104166666666e-05).epsilon(1e-12));
  }
  SECTION("matches an independent two-loop accumulation") {
    Rng rng(9);
    Tensor<double> a(Shape{3, 16, 24});
    Tensor<double> b(Shape{3, 16, 24});
    for (long long i = 0; i < a.size(); ++i) {
      a.data()[i] = rng.uniform(0, 1);
      b.data()[i] = rng.uniform(0, 1);
    }
    double acc = 0;
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 16 * 24; ++p) {
        double d = a[(long long)c * 16 * 24 + p] - b[(long long)c * 16 * 24 + p];
        acc += d * d;
      }
    acc /= (3.0 * 16 * 24);
    CHECK(reconstruction_loss(a, b).item() == Catch::Approx(acc).margin(1e-10));
  }
  SECTION("symmetric and nonnegative") {
    Rng rng(10);
    Tensor<double> a(Shape{3, 4, 4});
    Tensor<double> b(Shape{3, 4, 4});
    for (long long i = 0; i < a.size(); ++i) {
      a.data()[i] = rng.uniform(0, 1);
      b.data()[i] = rng.uniform(0, 1);
    }
    CHECK(reconstruction_loss(a, b).item() == reconstruction_loss(b, a).item());
    CHECK(reconstruction_loss(a, b).item() > 0.0);
  }
  SECTION("size mismatch is rejected") {
    CHECK_THROWS_AS(reconstruction_loss(Tensor<double>(Shape{3, 4, 4}, 0.0), Tensor<double>(Shape{3, 4, 8}, 0.0)),
                    ShapeError);
  }
}

TEST_CASE("pretrain sample construction never masks the target") {
  auto data = make_synthetic_dataset("normal", 1, 64, 128, 5, 77);
  auto frames = frames_to_tensors<float>(data[0]);
  auto ps = make_pretrain_sample(frames, 0.5, 4242);
  REQUIRE(ps.masked_frames.size() == 5);
  REQUIRE(ps.masks.size() == 5);
  // the target is the untouched original last frame
  CHECK(ps.target.values() == frames.back().values());
  // each frame got its own independent pattern
  CHECK(ps.masks[0].masked != ps.masks[1].masked);
  // and the masked last frame differs from the target wherever patches fell
  bool differs = false;
  for (long long i = 0; i < ps.target.size(); ++i)
    differs = differs || ps.masked_frames.back()[i] != ps.target[i];
  CHECK(differs);
}

TEST_CASE("pretrain epoch mechanics") {
  auto spec = ModelSpec::desk(Variant::unet_convlstm, Phase::pretrain);
  spec.input_height = 32;
  spec.input_width = 64;
  spec.base_channels = 4;
  spec.convlstm_hidden = 32;
  spec.sequence_length = 3;
  auto data = make_synthetic_dataset("normal", 4, 32, 64, 3, 123);

  SECTION("learning rate zero reports a loss but does not move parameters") {
    auto ck = init_checkpoint<float>(spec, Phase::pretrain, 2);
    std::vector<std::vector<float>> before;
    for (std::size_t i = 0; i < ck.params.count(); ++i) before.push_back(ck.params.tensor(i).values());
    OptimState<float> st;
    st.kind = OptimKind::radam;
    st.lr0 = st.lr = 0.f;
    Trainer<float> tr(ck, st);
    double loss = tr.pretrain_epoch(data, 0.5, 16, 2, 55, 0);
    CHECK(loss > 0.0);
    for (std::size_t i = 0; i < ck.params.count(); ++i) REQUIRE(ck.params.tensor(i).values() == before[i]);
  }
  SECTION("identical seeds give bit-identical epoch stats and parameters") {
    auto run = [&](std::uint64_t seed) {
      auto ck = init_checkpoint<float>(spec, Phase::pretrain, seed);
      OptimState<float> st;
      Trainer<float> tr(ck, st);
      std::vector<double> losses;
      for (int e = 0; e < 2; ++e) losses.push_back(tr.pretrain_epoch(data, 0.5, 16, 2, seed, e));
      return std::make_pair(losses, ck.params.at("head.w").values());
    };
    auto a = run(9);
    auto b = run(9);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
  SECTION("phase mismatch is rejected") {
    auto ck = init_checkpoint<float>(spec, Phase::finetune, 2);
    OptimState<float> st;
    Trainer<float> tr(ck, st);
    CHECK_THROWS_AS(tr.pretrain_epoch(data, 0.5, 16, 2, 55, 0), ConfigError);
  }
}

TEST_CASE("tiny dataset overfits within 200 epochs at the desk spec") {
  auto spec = ModelSpec::desk(Variant::unet_convlstm, Phase::pretrain);
  auto data = make_synthetic_dataset("normal", 4, 64, 128, 5, 321);
  auto ck = init_checkpoint<float>(spec, Phase::pretrain, 5);
  OptimState<float> st;
  st.lr0 = st.lr = 0.003f;
  st.decay = 1.0f;  // constant rate; decay would starve a 200-epoch overfit run
  Trainer<float> tr(ck, st);
  double first = tr.pretrain_epoch(data, 0.5, 16, 4, 77, 0);
  double last = first;
  for (int e = 1; e < 200; ++e) {
    last = tr.pretrain_epoch(data, 0.5, 16, 4, 77, e);
    if (last < 0.25 * first && e >= 10) break;
  }
  INFO("initial " << first << " final " << last);
  CHECK(last < 0.25 * first);
}

TEST_CASE("reconstruction loss orders with the mask ratio at matched epochs") {
  auto spec = ModelSpec::desk(Variant::unet_convlstm, Phase::pretrain);
  spec.input_height = 32;
  spec.input_width = 64;
  spec.base_channels = 4;
  spec.convlstm_hidden = 32;
  spec.sequence_length = 3;
  auto data = make_synthetic_dataset("normal", 8, 32, 64, 3, 654);
  std::vector<std::vector<double>> losses;
  for (double ratio : {0.25, 0.5, 0.75}) {
    auto ck = init_checkpoint<float>(spec, Phase::pretrain, 4);
    OptimState<float> st;
    Trainer<float> tr(ck, st);
    std::vector<double> curve;
    for (int e = 0; e < 4; ++e) curve.push_back(tr.pretrain_epoch(data, ratio, 16, 4, 88, e));
    losses.push_back(curve);
  }
  for (int e = 0; e < 4; ++e) {
    REQUIRE(losses[0][(size_t)e] <= losses[1][(size_t)e]);
    REQUIRE(losses[1][(size_t)e] <= losses[2][(size_t)e]);
  }
}
