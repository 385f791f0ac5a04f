#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcrd/networks.hpp"
#include "pcrd/proposals.hpp"

namespace pcrd {

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 40;
  int batch_size = 32;           // half ID, half OOD
  double lambda = 0.1;           // energy-loss weight
  double gamma_corner = 10.0;    // corner-loss weight
  double margin_id = -23.0;      // ID energies are pushed below this
  double margin_ood = -5.0;      // OOD energies are pushed above this
  double temperature = 1.0;
  bool use_pvle = true;          // false: PVLE weights stay zero, so its output is zero
  std::uint64_t seed = 1;

  void validate() const;
  /// True when margin_id >= margin_ood, which makes the two hinges fight.
  bool margins_inverted() const { return margin_id >= margin_ood; }
};

/// Regression and classification targets for one ID proposal, in its canonical frame.
struct BoxTargets {
  int heading_bin = 0;
  double heading_residual = 0;
  int size_bin = 0;
  Vec3 size_residual = Vec3::Zero();  // size / template - 1
  Vec3 center = Vec3::Zero();
  std::array<Vec3, 8> corners{};          // ground-truth corners
  std::array<Vec3, 8> corners_flipped{};  // same box with yaw + pi
};

/// Nearest heading bin for a canonical yaw; ties go to the lower bin.
int heading_bin_of(double yaw, double* residual = nullptr);

BoxTargets encode_box_targets(const Box3& gt_world, ObjectClass cls, const Proposal& proposal);

/// Huber loss with delta = 1.
double smooth_l1(double x);

struct LossTerms {
  double total = 0;
  double cross_entropy = 0;
  double energy = 0;
  // box-only terms
  double center1 = 0, center2 = 0, heading_cls = 0, heading_reg = 0, size_cls = 0, size_reg = 0, corner = 0;
};

/// min(sum_k |P_k - P*_k|, sum_k |P_k - P**_k|) for one (size, heading) hypothesis.
double corner_loss(const std::array<Vec3, 8>& predicted, const BoxTargets& targets);

/// The energy hinge terms averaged over ID and OOD rows: mean ((E - m_id)+)^2 + mean ((m_ood - E)+)^2.
double energy_hinge_loss(std::span<const double> id_energies, std::span<const double> ood_energies,
                         const TrainConfig& cfg);

/// Mean cross-entropy over ID rows (label >= 0) + lambda * energy hinge. `labels[b] = -1`
/// marks an OOD row. Writes d(loss)/d(logits) when `grad` is non-null.
LossTerms classifier_loss(const nn::Matrix<double>& logits, std::span<const int> labels, const TrainConfig& cfg,
                          nn::Matrix<double>* grad = nullptr, nn::KinkTape* tape = nullptr);

/// Gradient of a box objective w.r.t. the three raw box-network outputs.
struct BoxOutputGrad {
  nn::Matrix<double> head, tnet, rnet;
};

/// Box multi-task loss. Rows with `targets[b]` set are ID; the rest only enter the
/// energy hinge as OOD. Regression terms are averaged over ID rows.
LossTerms box_loss(const BoxRaw<double>& raw, std::span<const std::optional<BoxTargets>> targets,
                   const TrainConfig& cfg, BoxOutputGrad* grad = nullptr, nn::KinkTape* tape = nullptr);

/// Convenience overload on unpacked predictions (ID predictions with targets, then OOD).
LossTerms box_loss(std::span<const BoxPrediction> id_preds, std::span<const BoxTargets> targets,
                   std::span<const BoxPrediction> ood_preds, const TrainConfig& cfg);

// ---- Batches and gradients --------------------------------------------------------------

struct TrainBatch {
  NetInput<double> input;
  std::vector<int> labels;                       // class index, -1 for OOD
  std::vector<std::optional<BoxTargets>> boxes;  // set on ID rows
};

/// Forward + loss only. With a replaying tape every kink decision is frozen.
double classifier_objective(const ClassifierParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                            nn::KinkTape* tape = nullptr);
double box_objective(const BoxParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                     nn::KinkTape* tape = nullptr);

/// Reverse-mode gradients of every tensor. Throws kRuntime naming the tensor when the
/// loss or a gradient is not finite.
LossTerms classifier_gradients(const ClassifierParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                               ClassifierParams<double>& grad, nn::KinkTape* tape = nullptr);
LossTerms box_gradients(const BoxParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                        BoxParams<double>& grad, nn::KinkTape* tape = nullptr);

template <typename Params>
Params zeros_like(const Params& p) {
  Params z = p;
  z.for_each([](const std::string&, auto& layer) {
    layer.w.setZero();
    layer.b.setZero();
  });
  return z;
}

// ---- Adam -------------------------------------------------------------------------------

template <typename Params>
struct AdamState {
  Params m;
  Params v;
  int step = 0;

  explicit AdamState(const Params& like) : m(zeros_like(like)), v(zeros_like(like)) {}
};

namespace detail {
template <typename Params>
std::vector<nn::Dense<double>*> layer_pointers(Params& p) {
  std::vector<nn::Dense<double>*> out;
  p.for_each([&](const std::string&, nn::Dense<double>& layer) { out.push_back(&layer); });
  return out;
}
}  // namespace detail

/// Bias-corrected Adam; `state.step` is incremented first, so the first call uses t = 1.
template <typename Params>
void adam_step(Params& weights, const Params& grads, AdamState<Params>& state, const TrainConfig& cfg) {
  ++state.step;
  const double t = state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto w = detail::layer_pointers(weights);
  auto g = detail::layer_pointers(const_cast<Params&>(grads));
  auto m = detail::layer_pointers(state.m);
  auto v = detail::layer_pointers(state.v);
  auto update = [&](auto& wt, const auto& gt, auto& mt, auto& vt) {
    mt = cfg.beta1 * mt + (1.0 - cfg.beta1) * gt;
    vt = cfg.beta2 * vt + (1.0 - cfg.beta2) * gt.cwiseProduct(gt);
    wt.array() -= cfg.lr * (mt.array() / c1) / ((vt.array() / c2).sqrt() + cfg.adam_eps);
  };
  for (std::size_t i = 0; i < w.size(); ++i) {
    update(w[i]->w, g[i]->w, m[i]->w, v[i]->w);
    update(w[i]->b, g[i]->b, m[i]->b, v[i]->b);
  }
}

// ---- Dataset and training loops ---------------------------------------------------------

/// One training/evaluation item.
struct LabeledProposal {
  Proposal proposal;
  int label = -1;  // ObjectClass index, or -1 for OOD
  std::string kind;
  Box3 gt_box;     // meaningful for ID items
  BoxTargets targets;
};

/// Assembles a batch from dataset items (their canonical points must share n_points).
TrainBatch make_batch(std::span<const LabeledProposal> items, std::span<const std::size_t> indices,
                      const ProposalConfig& pcfg);

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

ClassifierParams<double> train_classifier(std::span<const LabeledProposal> data, const TrainConfig& cfg,
                                          const ProposalConfig& pcfg, TrainHistory* history = nullptr,
                                          const EpochCallback& on_epoch = {});
BoxParams<double> train_box_network(std::span<const LabeledProposal> data, const TrainConfig& cfg,
                                    const ProposalConfig& pcfg, TrainHistory* history = nullptr,
                                    const EpochCallback& on_epoch = {});

/// Classifier and box energies for every item, computed in double precision.
struct EnergyTable {
  std::vector<double> cls;
  std::vector<double> box;
  std::vector<int> predicted;  // argmax class
};
EnergyTable score_items(const ClassifierParams<double>& cls, const BoxParams<double>& box,
                        std::span<const LabeledProposal> items, const ProposalConfig& pcfg, double temperature);

}  // namespace pcrd
