#pragma once

// The three hybrid segmentation networks: a UNet-style encoder/decoder with a
// ConvLSTM or attention temporal block, optionally with directional message
// passing at each frame's bottleneck. One layer enumeration drives parameter
// creation, checkpoint layout, and the params/MACs accounting so all three
// stay consistent by construction.

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "laneforge/conv.hpp"
#include "laneforge/tensor.hpp"

namespace laneforge {

enum class Variant { unet_convlstm, scnn_unet_convlstm, scnn_unet_attention };

inline Variant variant_from(const std::string& s) {
  if (s == "UNet_ConvLSTM") return Variant::unet_convlstm;
  if (s == "SCNN_UNet_ConvLSTM") return Variant::scnn_unet_convlstm;
  if (s == "SCNN_UNet_Attention") return Variant::scnn_unet_attention;
  throw ConfigError("unknown model variant '" + s + "'");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::unet_convlstm: return "UNet_ConvLSTM";
    case Variant::scnn_unet_convlstm: return "SCNN_UNet_ConvLSTM";
    default: return "SCNN_UNet_Attention";
  }
}

enum class Phase { pretrain, finetune };

inline const char* phase_name(Phase p) { return p == Phase::pretrain ? "pretrain" : "finetune"; }
inline Phase phase_from(const std::string& s) {
  if (s == "pretrain") return Phase::pretrain;
  if (s == "finetune") return Phase::finetune;
  throw ConfigError("unknown phase '" + s + "'");
}

struct ModelSpec {
  Variant variant = Variant::unet_convlstm;
  int input_height = 128;
  int input_width = 256;
  int sequence_length = 5;
  int base_channels = 64;
  int head_channels = 2;
  int scnn_kernel_len = 9;
  int convlstm_layers = 2;
  int convlstm_hidden = 512;

  bool has_scnn() const { return variant != Variant::unet_convlstm; }
  bool uses_attention() const { return variant == Variant::scnn_unet_attention; }
  int bottleneck_channels() const { return 8 * base_channels; }
  int bottleneck_h() const { return input_height / 16; }
  int bottleneck_w() const { return input_width / 16; }
  int attention_lstm_hidden() const { return base_channels; }

  void validate() const {
    if (input_height % 16 || input_width % 16)
      throw ConfigError("input extents must be divisible by 16 (four 2x poolings)");
    if (head_channels != 2 && head_channels != 3) throw ConfigError("head_channels must be 2 or 3");
    if (sequence_length < 1) throw ConfigError("sequence length must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
    if (scnn_kernel_len < 1 || scnn_kernel_len % 2 == 0) throw ConfigError("scnn kernel length must be odd");
    if (convlstm_layers < 1) throw ConfigError("convlstm_layers must be >= 1");
    if (convlstm_hidden != bottleneck_channels())
      throw ConfigError("convlstm_hidden must equal the bottleneck channel count");
  }

  bool same_backbone(const ModelSpec& o) const {
    return variant == o.variant && input_height == o.input_height && input_width == o.input_width &&
           sequence_length == o.sequence_length && base_channels == o.base_channels &&
           scnn_kernel_len == o.scnn_kernel_len && convlstm_layers == o.convlstm_layers &&
           convlstm_hidden == o.convlstm_hidden;
  }

  /// Largest odd kernel not exceeding the slice extent; the configured length
  /// is a request, tiny bottlenecks shorten it per direction.
  int effective_scnn_kernel(int slice_extent) const {
    int k = std::min(scnn_kernel_len, slice_extent);
    if (k % 2 == 0) --k;
    return std::max(k, 1);
  }

  static ModelSpec full(Variant v, Phase phase) {
    ModelSpec s;
    s.variant = v;
    s.input_height = 128;
    s.input_width = 256;
    s.base_channels = 64;
    s.convlstm_hidden = 512;
    s.head_channels = phase == Phase::pretrain ? 3 : 2;
    return s;
  }

  static ModelSpec desk(Variant v, Phase phase) {
    ModelSpec s;
    s.variant = v;
    s.input_height = 64;
    s.input_width = 128;
    s.base_channels = 8;
    s.convlstm_hidden = 64;
    s.head_channels = phase == Phase::pretrain ? 3 : 2;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Layer plan
// ---------------------------------------------------------------------------

enum class LayerKind { conv, tconv, dwconv1d, lin };

struct LayerDesc {
  std::string name;  // parameters are name+".w" and, when biased, name+".b"
  LayerKind kind = LayerKind::conv;
  int cin = 0, cout = 0, kh = 1, kw = 1;
  bool bias = true;
  long long macs = 0;  // one full S-frame forward
  bool head = false;   // swapped out on weight transfer

  long long param_count() const {
    long long w;
    switch (kind) {
      case LayerKind::conv: w = (long long)cout * cin * kh * kw; break;
      case LayerKind::tconv: w = (long long)cin * cout * kh * kw; break;
      case LayerKind::dwconv1d: w = (long long)cin * kw; break;
      case LayerKind::lin: w = (long long)cout * cin; break;
      default: w = 0;
    }
    return w + (bias ? cout : 0);
  }

  Shape weight_shape() const {
    switch (kind) {
      case LayerKind::conv: return {cout, cin, kh, kw};
      case LayerKind::tconv: return {cin, cout, kh, kw};
      case LayerKind::dwconv1d: return {cin, kw};
      case LayerKind::lin: return {cout, cin};
    }
    return {};
  }
};

inline std::vector<LayerDesc> enumerate_layers(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerDesc> out;
  int b = spec.base_channels, s = spec.sequence_length;
  int h = spec.input_height, w = spec.input_width;
  auto conv = [&](const std::string& name, int cin, int cout, int oh, int ow, long long times,
                  int k = 3, bool head = false) {
    LayerDesc d;
    d.name = name;
    d.kind = LayerKind::conv;
    d.cin = cin;
    d.cout = cout;
    d.kh = d.kw = k;
    d.macs = times * (long long)cout * cin * k * k * oh * ow;
    d.head = head;
    out.push_back(d);
  };

  // Encoder: a two-conv stem at full resolution followed by four downsampling
  // blocks (pool, then two convs); the last block keeps the channel count.
  conv("stem.c1", 3, b, h, w, s);
  conv("stem.c2", b, b, h, w, s);
  conv("enc1.c1", b, 2 * b, h / 2, w / 2, s);
  conv("enc1.c2", 2 * b, 2 * b, h / 2, w / 2, s);
  conv("enc2.c1", 2 * b, 4 * b, h / 4, w / 4, s);
  conv("enc2.c2", 4 * b, 4 * b, h / 4, w / 4, s);
  conv("enc3.c1", 4 * b, 8 * b, h / 8, w / 8, s);
  conv("enc3.c2", 8 * b, 8 * b, h / 8, w / 8, s);
  conv("enc4.c1", 8 * b, 8 * b, h / 16, w / 16, s);
  conv("enc4.c2", 8 * b, 8 * b, h / 16, w / 16, s);

  int cb = spec.bottleneck_channels(), bh = spec.bottleneck_h(), bw = spec.bottleneck_w();
  if (spec.has_scnn()) {
    int krow = spec.effective_scnn_kernel(bw);  // down/up convolve along rows
    int kcol = spec.effective_scnn_kernel(bh);  // right/left convolve along columns
    auto dw = [&](const std::string& name, int k, long long slices, int len) {
      LayerDesc d;
      d.name = name;
      d.kind = LayerKind::dwconv1d;
      d.cin = d.cout = cb;
      d.kh = 1;
      d.kw = k;
      d.bias = false;
      d.macs = (long long)s * cb * k * slices * len;
      out.push_back(d);
    };
    dw("scnn.down", krow, bh - 1, bw);
    dw("scnn.up", krow, bh - 1, bw);
    dw("scnn.right", kcol, bw - 1, bh);
    dw("scnn.left", kcol, bw - 1, bh);
  }

  if (!spec.uses_attention()) {
    for (int l = 0; l < spec.convlstm_layers; ++l) {
      int cin = (l == 0 ? cb : spec.convlstm_hidden) + spec.convlstm_hidden;
      conv("lstm" + std::to_string(l), cin, 4 * spec.convlstm_hidden, bh, bw, s);
    }
  } else {
    int a = spec.attention_lstm_hidden();
    conv("attn.score", cb, 1, bh, bw, s, 1);
    LayerDesc wx;
    wx.name = "attn.lstm_x";
    wx.kind = LayerKind::lin;
    wx.cin = cb;
    wx.cout = 4 * a;
    wx.macs = (long long)s * 4 * a * cb;
    out.push_back(wx);
    LayerDesc wh;
    wh.name = "attn.lstm_h";
    wh.kind = LayerKind::lin;
    wh.cin = a;
    wh.cout = 4 * a;
    wh.bias = false;
    wh.macs = (long long)s * 4 * a * a;
    out.push_back(wh);
    LayerDesc gate;
    gate.name = "attn.gate";
    gate.kind = LayerKind::lin;
    gate.cin = a;
    gate.cout = cb;
    gate.macs = (long long)a * cb;
    out.push_back(gate);
  }

  // Decoder: transposed conv x2, concat the matching skip, two convs.
  auto tconv = [&](const std::string& name, int c, int oh, int ow) {
    LayerDesc d;
    d.name = name;
    d.kind = LayerKind::tconv;
    d.cin = d.cout = c;
    d.kh = d.kw = 2;
    d.macs = (long long)c * c * oh * ow;
    out.push_back(d);
  };
  tconv("up1.t", 8 * b, h / 8, w / 8);
  conv("up1.c1", 16 * b, 4 * b, h / 8, w / 8, 1);
  conv("up1.c2", 4 * b, 4 * b, h / 8, w / 8, 1);
  tconv("up2.t", 4 * b, h / 4, w / 4);
  conv("up2.c1", 8 * b, 2 * b, h / 4, w / 4, 1);
  conv("up2.c2", 2 * b, 2 * b, h / 4, w / 4, 1);
  tconv("up3.t", 2 * b, h / 2, w / 2);
  conv("up3.c1", 4 * b, b, h / 2, w / 2, 1);
  conv("up3.c2", b, b, h / 2, w / 2, 1);
  tconv("up4.t", b, h, w);
  conv("up4.c1", 2 * b, b, h, w, 1);
  conv("up4.c2", b, b, h, w, 1);
  conv("head", b, spec.head_channels, h, w, 1, 1, /*head=*/true);
  return out;
}

struct Complexity {
  long long params = 0;
  long long macs = 0;
};

inline Complexity count_params_macs(const ModelSpec& spec) {
  Complexity c;
  for (const auto& d : enumerate_layers(spec)) {
    c.params += d.param_count();
    c.macs += d.macs;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class Real>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<Real> t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Real>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return tensors_[it->second];
  }
  const Tensor<Real>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return tensors_[it->second];
  }

  std::size_t count() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  Tensor<Real>& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor<Real>& tensor(std::size_t i) const { return tensors_[i]; }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

  long long total_elements() const {
    long long n = 0;
    for (auto& t : tensors_) n += t.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<Real>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

template <class Real>
Tensor<Real> kaiming_tensor(const Shape& shape, long long fan_in, Rng& rng) {
  Tensor<Real> t(shape);
  double std = std::sqrt(2.0 / (double)fan_in);
  for (long long i = 0; i < t.size(); ++i) t.data()[i] = (Real)rng.normal(0.0, std);
  return t;
}

template <class Real>
void init_layer(ParamStore<Real>& ps, const LayerDesc& d, Rng& rng) {
  long long fan_in = 1;
  switch (d.kind) {
    case LayerKind::conv: fan_in = (long long)d.cin * d.kh * d.kw; break;
    case LayerKind::tconv: fan_in = (long long)d.cin * d.kh * d.kw; break;
    case LayerKind::dwconv1d: fan_in = d.kw; break;
    case LayerKind::lin: fan_in = d.cin; break;
  }
  auto w = kaiming_tensor<Real>(d.weight_shape(), fan_in, rng);
  w.set_requires_grad(true);
  ps.add(d.name + ".w", std::move(w));
  if (d.bias) {
    Tensor<Real> bias(Shape{d.cout}, Real(0));
    bias.set_requires_grad(true);
    ps.add(d.name + ".b", std::move(bias));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

template <class Real>
struct Checkpoint {
  ModelSpec spec;
  Phase phase = Phase::pretrain;
  std::uint64_t rng_seed = 0;
  int epoch = 0;
  ParamStore<Real> params;
};

template <class Real>
Checkpoint<Real> init_checkpoint(const ModelSpec& spec, Phase phase, std::uint64_t seed) {
  ModelSpec s = spec;
  s.head_channels = phase == Phase::pretrain ? 3 : 2;
  s.validate();
  Checkpoint<Real> ck;
  ck.spec = s;
  ck.phase = phase;
  ck.rng_seed = seed;
  ck.epoch = 0;
  Rng rng(seed);
  for (const auto& d : enumerate_layers(s)) detail::init_layer(ck.params, d, rng);
  return ck;
}

/// Copies every non-head parameter bit-exactly into a fresh fine-tuning
/// checkpoint; the head is re-initialized from head_seed.
template <class Real>
Checkpoint<Real> transfer_weights(const Checkpoint<Real>& pretrained, const ModelSpec& target_spec,
                                  std::uint64_t head_seed) {
  if (pretrained.phase != Phase::pretrain) throw ConfigError("transfer requires a pretrain-phase checkpoint");
  ModelSpec tgt = target_spec;
  tgt.head_channels = 2;
  tgt.validate();
  if (!pretrained.spec.same_backbone(tgt))
    throw ConfigError("weight transfer requires identical specs apart from the head");

  Checkpoint<Real> fine;
  fine.spec = tgt;
  fine.phase = Phase::finetune;
  fine.rng_seed = head_seed;
  fine.epoch = 0;
  Rng head_rng(head_seed);
  for (const auto& d : enumerate_layers(tgt)) {
    if (d.head) {
      detail::init_layer(fine.params, d, head_rng);
      continue;
    }
    const auto& src_w = pretrained.params.at(d.name + ".w");
    if (!same_shape(src_w.shape(), d.weight_shape()))
      throw ShapeError("transfer shape mismatch at '" + d.name + "'");
    auto w = src_w.clone_values();
    w.set_requires_grad(true);
    fine.params.add(d.name + ".w", std::move(w));
    if (d.bias) {
      auto b = pretrained.params.at(d.name + ".b").clone_values();
      b.set_requires_grad(true);
      fine.params.add(d.name + ".b", std::move(b));
    }
  }
  return fine;
}

// ---------------------------------------------------------------------------
// Free building blocks (testable without a full model)
// ---------------------------------------------------------------------------

enum class ScnnDirection { down, up, right, left };

/// Sequential directional message passing. For each direction in the given
/// order, slice i receives slice_i += relu(conv1d(slice_{i-1})) from the
/// already-updated neighbor, so information propagates across the whole map.
/// kernels maps each requested direction to its C x K depthwise kernel.
template <class Real>
Tensor<Real> scnn_message_pass(const Tensor<Real>& feature,
                               const std::vector<std::pair<ScnnDirection, Tensor<Real>>>& kernels) {
  if (feature.rank() != 3) throw ShapeError("scnn_message_pass expects a C x h x w feature");
  int h = feature.dim(1), w = feature.dim(2);
  Tensor<Real> f = feature;
  for (const auto& [dir, k] : kernels) {
    bool rows = (dir == ScnnDirection::down || dir == ScnnDirection::up);
    int n = rows ? h : w;
    std::vector<Tensor<Real>> slices;
    slices.reserve((size_t)n);
    for (int i = 0; i < n; ++i) slices.push_back(rows ? slice_row(f, i) : slice_col(f, i));
    bool forward_order = (dir == ScnnDirection::down || dir == ScnnDirection::right);
    if (forward_order) {
      for (int i = 1; i < n; ++i)
        slices[(size_t)i] = add(slices[(size_t)i], relu(conv1d_depthwise(slices[(size_t)i - 1], k)));
    } else {
      for (int i = n - 2; i >= 0; --i)
        slices[(size_t)i] = add(slices[(size_t)i], relu(conv1d_depthwise(slices[(size_t)i + 1], k)));
    }
    f = rows ? stack_rows(slices) : stack_cols(slices);
  }
  return f;
}

/// Standard ConvLSTM stack: gates (i, f, g, o) from one convolution over the
/// concatenated input and hidden state, no peephole, zero initial states.
/// cells holds one (kernel, bias) pair per layer; returns the last hidden
/// state of the top layer.
template <class Real>
Tensor<Real> convlstm_forward(const std::vector<Tensor<Real>>& xs,
                              const std::vector<std::pair<Tensor<Real>, Tensor<Real>>>& cells) {
  if (xs.empty()) throw ShapeError("convlstm_forward on an empty sequence");
  std::vector<Tensor<Real>> seq = xs;
  int h = xs[0].dim(1), w = xs[0].dim(2);
  Tensor<Real> top;
  for (const auto& [kern, bias] : cells) {
    int hidden = kern.dim(0) / 4;
    Tensor<Real> hs(Shape{hidden, h, w}, Real(0));
    Tensor<Real> cs(Shape{hidden, h, w}, Real(0));
    std::vector<Tensor<Real>> next;
    next.reserve(seq.size());
    for (const auto& x : seq) {
      auto gates = conv2d(concat_channels<Real>({x, hs}), kern, bias);
      auto gi = sigmoid(narrow_channels(gates, 0, hidden));
      auto gf = sigmoid(narrow_channels(gates, hidden, hidden));
      auto gg = tanh(narrow_channels(gates, 2 * hidden, hidden));
      auto go = sigmoid(narrow_channels(gates, 3 * hidden, hidden));
      cs = add(mul(gf, cs), mul(gi, gg));
      hs = mul(go, tanh(cs));
      next.push_back(hs);
    }
    seq = std::move(next);
    top = hs;
  }
  return top;
}

template <class Real>
struct AttentionWeights {
  Tensor<Real> score_w, score_b;          // shared 1x1 per-frame score conv
  Tensor<Real> lstm_wx, lstm_wh, lstm_b;  // linear LSTM over pooled descriptors
  Tensor<Real> gate_w, gate_b;            // hidden -> channel gates
};

template <class Real>
struct AttentionResult {
  Tensor<Real> output;
  Tensor<Real> temporal_weights;  // S x h x w, per-pixel softmax over frames
  Tensor<Real> pre_gate;          // convex per-pixel combination of the frames
  Tensor<Real> gates;             // sigmoid channel gates
};

/// Spatial-temporal attention: per-pixel softmax over shared 1x1-conv frame
/// scores gives temporal weights; a linear LSTM over globally pooled frame
/// descriptors drives sigmoid channel gates applied to the weighted sum.
template <class Real>
AttentionResult<Real> attention_fuse_detail(const std::vector<Tensor<Real>>& xs,
                                            const AttentionWeights<Real>& wts) {
  if (xs.empty()) throw ShapeError("attention_fuse on an empty sequence");
  int s = (int)xs.size();
  int h = xs[0].dim(1), w = xs[0].dim(2);

  std::vector<Tensor<Real>> scores;
  scores.reserve((size_t)s);
  for (const auto& x : xs) scores.push_back(conv2d(x, wts.score_w, wts.score_b));
  auto stacked = concat_channels(scores);               // S x h x w
  auto weights = softmax_channels(stacked);             // per-pixel over frames

  AttentionResult<Real> res;
  res.temporal_weights = weights;
  Tensor<Real> mix;
  for (int k = 0; k < s; ++k) {
    auto piece = scale_map(xs[(size_t)k], narrow_channels(weights, k, 1));
    mix = k == 0 ? piece : add(mix, piece);
  }
  res.pre_gate = mix;

  int hidden = wts.lstm_wh.dim(1);
  Tensor<Real> hh(Shape{hidden}, Real(0));
  Tensor<Real> cc(Shape{hidden}, Real(0));
  Tensor<Real> zero_b(Shape{4 * hidden}, Real(0));
  for (const auto& x : xs) {
    auto d = global_avg_pool(x);
    auto gates = add(linear(wts.lstm_wx, d, wts.lstm_b), linear(wts.lstm_wh, hh, zero_b));
    auto gi = sigmoid(narrow_1d(gates, 0, hidden));
    auto gf = sigmoid(narrow_1d(gates, hidden, hidden));
    auto gg = tanh(narrow_1d(gates, 2 * hidden, hidden));
    auto go = sigmoid(narrow_1d(gates, 3 * hidden, hidden));
    cc = add(mul(gf, cc), mul(gi, gg));
    hh = mul(go, tanh(cc));
  }
  res.gates = sigmoid(linear(wts.gate_w, hh, wts.gate_b));
  res.output = scale_channels(mix, res.gates);
  (void)h;
  (void)w;
  return res;
}

template <class Real>
Tensor<Real> attention_fuse(const std::vector<Tensor<Real>>& xs, const AttentionWeights<Real>& wts) {
  return attention_fuse_detail(xs, wts).output;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class Real>
struct EncoderOut {
  Tensor<Real> bottleneck;
  std::array<Tensor<Real>, 4> skips;  // pre-pool feature maps, shallow to deep
};

template <class Real>
class Model {
 public:
  explicit Model(const Checkpoint<Real>& ck) : spec_(ck.spec), params_(&ck.params) { spec_.validate(); }

  const ModelSpec& spec() const { return spec_; }

  EncoderOut<Real> encoder_forward(const Tensor<Real>& frame) const {
    if (frame.rank() != 3 || frame.dim(0) != 3 || frame.dim(1) != spec_.input_height ||
        frame.dim(2) != spec_.input_width)
      throw ShapeError("encoder input must be 3 x " + std::to_string(spec_.input_height) + " x " +
                       std::to_string(spec_.input_width));
    EncoderOut<Real> out;
    auto x = conv_relu(frame, "stem.c1");
    x = conv_relu(x, "stem.c2");
    out.skips[0] = x;
    x = maxpool2(x);
    x = conv_relu(x, "enc1.c1");
    x = conv_relu(x, "enc1.c2");
    out.skips[1] = x;
    x = maxpool2(x);
    x = conv_relu(x, "enc2.c1");
    x = conv_relu(x, "enc2.c2");
    out.skips[2] = x;
    x = maxpool2(x);
    x = conv_relu(x, "enc3.c1");
    x = conv_relu(x, "enc3.c2");
    out.skips[3] = x;
    x = maxpool2(x);
    x = conv_relu(x, "enc4.c1");
    x = conv_relu(x, "enc4.c2");
    out.bottleneck = x;
    return out;
  }

  Tensor<Real> scnn(const Tensor<Real>& feature) const {
    std::vector<std::pair<ScnnDirection, Tensor<Real>>> ks = {
        {ScnnDirection::down, params_->at("scnn.down.w")},
        {ScnnDirection::up, params_->at("scnn.up.w")},
        {ScnnDirection::right, params_->at("scnn.right.w")},
        {ScnnDirection::left, params_->at("scnn.left.w")},
    };
    return scnn_message_pass(feature, ks);
  }

  Tensor<Real> temporal_fuse(const std::vector<Tensor<Real>>& bottlenecks) const {
    if (!spec_.uses_attention()) {
      std::vector<std::pair<Tensor<Real>, Tensor<Real>>> cells;
      for (int l = 0; l < spec_.convlstm_layers; ++l) {
        std::string n = "lstm" + std::to_string(l);
        cells.emplace_back(params_->at(n + ".w"), params_->at(n + ".b"));
      }
      return convlstm_forward(bottlenecks, cells);
    }
    return attention_fuse(bottlenecks, attention_weights());
  }

  AttentionWeights<Real> attention_weights() const {
    AttentionWeights<Real> w;
    w.score_w = params_->at("attn.score.w");
    w.score_b = params_->at("attn.score.b");
    w.lstm_wx = params_->at("attn.lstm_x.w");
    w.lstm_b = params_->at("attn.lstm_x.b");
    w.lstm_wh = params_->at("attn.lstm_h.w");
    w.gate_w = params_->at("attn.gate.w");
    w.gate_b = params_->at("attn.gate.b");
    return w;
  }

  Tensor<Real> decoder_forward(const Tensor<Real>& fused, const std::array<Tensor<Real>, 4>& skips) const {
    auto x = up_block(fused, skips[3], "up1");
    x = up_block(x, skips[2], "up2");
    x = up_block(x, skips[1], "up3");
    x = up_block(x, skips[0], "up4");
    return conv2d(x, params_->at("head.w"), params_->at("head.b"));  // linear logits
  }

  Tensor<Real> forward(const std::vector<Tensor<Real>>& frames) const {
    if ((int)frames.size() != spec_.sequence_length)
      throw ShapeError("sequence length does not match the spec");
    std::vector<Tensor<Real>> bottlenecks;
    bottlenecks.reserve(frames.size());
    std::array<Tensor<Real>, 4> last_skips;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      auto enc = encoder_forward(frames[i]);
      auto bn = spec_.has_scnn() ? scnn(enc.bottleneck) : enc.bottleneck;
      bottlenecks.push_back(bn);
      if (i + 1 == frames.size()) last_skips = enc.skips;
    }
    auto fused = temporal_fuse(bottlenecks);
    return decoder_forward(fused, last_skips);
  }

 private:
  Tensor<Real> conv_relu(const Tensor<Real>& x, const std::string& name) const {
    return relu(conv2d(x, params_->at(name + ".w"), params_->at(name + ".b")));
  }

  Tensor<Real> up_block(const Tensor<Real>& x, const Tensor<Real>& skip, const std::string& name) const {
    auto u = transposed_conv2(x, params_->at(name + ".t.w"), params_->at(name + ".t.b"));
    if (u.dim(1) != skip.dim(1) || u.dim(2) != skip.dim(2))
      throw ShapeError("decoder skip spatial mismatch at " + name);
    auto cat = concat_channels<Real>({u, skip});
    auto y = conv_relu(cat, name + ".c1");
    return conv_relu(y, name + ".c2");
  }

  ModelSpec spec_;
  const ParamStore<Real>* params_;
};

/// Forward through a checkpoint; output is head x H x W.
template <class Real>
Tensor<Real> model_forward(const std::vector<Tensor<Real>>& frames, const Checkpoint<Real>& ck) {
  return Model<Real>(ck).forward(frames);
}

}  // namespace laneforge
