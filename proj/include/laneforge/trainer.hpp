#pragma once

// Training and evaluation loops. One step = one tape: per-sample forward and
// backward passes accumulate into the parameter gradients in sample order,
// then the optimizer applies a single update. Everything is seeded, so a rerun
// of the same configuration is bit-identical.

#include <map>
#include <string>
#include <vector>

#include "laneforge/checkpoint.hpp"
#include "laneforge/dataio.hpp"
#include "laneforge/evalpost.hpp"
#include "laneforge/objectives.hpp"
#include "laneforge/optim.hpp"
#include "laneforge/pretrain.hpp"

namespace laneforge {

template <class Real>
Tensor<Real> image_to_tensor(const Image& img) {
  Tensor<Real> t(Shape{img.c, img.h, img.w});
  for (std::size_t i = 0; i < img.pix.size(); ++i) t.data()[i] = (Real)img.pix[i];
  return t;
}

template <class Real>
std::vector<Tensor<Real>> frames_to_tensors(const Sample& s) {
  std::vector<Tensor<Real>> out;
  out.reserve(s.frames.size());
  for (const auto& f : s.frames) out.push_back(image_to_tensor<Real>(f));
  return out;
}

enum class LossKind { ce, pl };

inline LossKind loss_kind_from(const std::string& s) {
  if (s == "ce") return LossKind::ce;
  if (s == "pl") return LossKind::pl;
  throw ConfigError("unknown loss '" + s + "'");
}
inline const char* loss_kind_name(LossKind k) { return k == LossKind::ce ? "ce" : "pl"; }

template <class Real>
class Trainer {
 public:
  Trainer(Checkpoint<Real>& ck, OptimState<Real> opt_state) : ck_(ck), opt_(opt_state) {
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < ck_.params.count(); ++i) sizes.push_back((std::size_t)ck_.params.tensor(i).size());
    opt_.register_buffers(sizes);
  }

  Optimizer<Real>& optimizer() { return opt_; }
  Checkpoint<Real>& checkpoint() { return ck_; }

  /// One masked-reconstruction epoch over the dataset; returns the mean batch
  /// loss. Fresh masks every batch, loss against the unmasked last frame.
  double pretrain_epoch(const std::vector<Sample>& data, double ratio, int patch, int batch_size,
                        std::uint64_t run_seed, int epoch) {
    if (ck_.phase != Phase::pretrain) throw ConfigError("pretrain_epoch requires a pretrain-phase checkpoint");
    auto order = epoch_order(data.size(), run_seed, epoch);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += (std::size_t)batch_size) {
      std::size_t take = std::min((std::size_t)batch_size, order.size() - at);
      ck_.params.zero_grad();
      Model<Real> model(ck_);
      double batch_loss = 0;
      for (std::size_t k = 0; k < take; ++k) {
        const Sample& s = data[(std::size_t)order[at + k]];
        std::uint64_t mask_seed = hash_combine(hash_combine(run_seed, (std::uint64_t)epoch),
                                               (std::uint64_t)order[at + k] * 2654435761ULL + k);
        auto ps = make_pretrain_sample(frames_to_tensors<Real>(s), ratio, mask_seed, patch);
        Tape<Real> tape;
        typename Tape<Real>::Scope scope(tape);
        auto recon = model.forward(ps.masked_frames);
        auto loss = mul(reconstruction_loss(recon, ps.target), Real(1) / Real(take));
        if (!loss.all_finite()) throw NumericError("non-finite pretraining loss");
        tape.backward(loss);
        batch_loss += (double)loss.item() * (double)take;
      }
      step();
      loss_sum += batch_loss / (double)take;
      ++batches;
    }
    opt_.apply_epoch_decay(epoch + 1);
    ck_.epoch = epoch + 1;
    return batches ? loss_sum / batches : 0.0;
  }

  /// One fine-tuning segmentation epoch; returns the mean batch loss.
  double finetune_epoch(const std::vector<Sample>& data, LossKind kind, const LossConfig& cfg,
                        int batch_size, std::uint64_t run_seed, int epoch) {
    if (ck_.phase != Phase::finetune) throw ConfigError("finetune_epoch requires a finetune-phase checkpoint");
    auto order = epoch_order(data.size(), run_seed, epoch);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += (std::size_t)batch_size) {
      std::size_t take = std::min((std::size_t)batch_size, order.size() - at);
      ck_.params.zero_grad();
      Model<Real> model(ck_);
      double batch_loss = 0;
      for (std::size_t k = 0; k < take; ++k) {
        const Sample& s = data[(std::size_t)order[at + k]];
        Tape<Real> tape;
        typename Tape<Real>::Scope scope(tape);
        auto logits = model.forward(frames_to_tensors<Real>(s));
        auto probs = softmax_channels(logits);
        auto lane = narrow_channels(probs, 1, 1);
        auto y = image_to_tensor<Real>(s.label);
        auto loss = kind == LossKind::ce ? weighted_ce(lane, y, cfg) : poly_loss(lane, y, cfg);
        loss = mul(loss, Real(1) / Real(take));
        if (!loss.all_finite()) throw NumericError("non-finite fine-tuning loss");
        tape.backward(loss);
        batch_loss += (double)loss.item() * (double)take;
      }
      step();
      loss_sum += batch_loss / (double)take;
      ++batches;
    }
    opt_.apply_epoch_decay(epoch + 1);
    ck_.epoch = epoch + 1;
    return batches ? loss_sum / batches : 0.0;
  }

 private:
  std::vector<int> epoch_order(std::size_t n, std::uint64_t run_seed, int epoch) {
    std::vector<int> order((std::size_t)n);
    for (std::size_t i = 0; i < n; ++i) order[i] = (int)i;
    Rng rng(hash_combine(hash_combine(run_seed, 0x73687566ULL), (std::uint64_t)epoch));
    rng.shuffle(order);
    return order;
  }

  void step() {
    std::vector<Real*> params;
    std::vector<const Real*> grads;
    std::vector<std::size_t> sizes;
    for (std::size_t i = 0; i < ck_.params.count(); ++i) {
      auto& t = ck_.params.tensor(i);
      params.push_back(t.data());
      grads.push_back(t.grad().data());
      sizes.push_back((std::size_t)t.size());
    }
    opt_.step(params, grads, sizes);
  }

  Checkpoint<Real>& ck_;
  Optimizer<Real> opt_;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <class Real>
struct EvalResult {
  std::vector<CategoryRow> rows;  // per category plus a final "overall" row
  MetricsReport overall;
  ConfusionCounts overall_counts;
};

template <class Real>
EvalResult<Real> evaluate(const Checkpoint<Real>& ck, const std::vector<Sample>& data) {
  if (ck.phase != Phase::finetune) throw ConfigError("evaluation requires a finetune-phase checkpoint");
  Model<Real> model(ck);
  std::map<std::string, std::pair<ConfusionCounts, int>> per_cat;
  ConfusionCounts total;
  for (const auto& s : data) {
    auto logits = model.forward(frames_to_tensors<Real>(s));
    auto mask = argmax_mask(logits);
    auto c = confusion(mask, s.label);
    total += c;
    auto& slot = per_cat[s.category];
    slot.first += c;
    slot.second += 1;
  }
  EvalResult<Real> res;
  for (const auto& [cat, slot] : per_cat)
    res.rows.push_back({cat, metrics(slot.first), slot.second});
  res.overall = metrics(total);
  res.overall_counts = total;
  auto cx = count_params_macs(ck.spec);
  res.overall.params = cx.params;
  res.overall.macs = cx.macs;
  res.rows.push_back({"overall", res.overall, (int)data.size()});
  return res;
}

}  // namespace laneforge
