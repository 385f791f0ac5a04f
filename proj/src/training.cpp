#include "pcrd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace pcrd {

using nn::Matrix;

void TrainConfig::validate() const {
  if (!(lr > 0)) fail(ErrorCode::kConfig, "train.lr must be > 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) fail(ErrorCode::kConfig, "Adam betas must be in (0, 1)");
  if (epochs < 0) fail(ErrorCode::kConfig, "train.epochs must be >= 0");
  if (batch_size < 2 || batch_size % 2 != 0) fail(ErrorCode::kConfig, "train.batch_size must be even and >= 2");
  if (!(temperature > 0)) fail(ErrorCode::kConfig, "train.temperature must be > 0");
  if (lambda < 0 || gamma_corner < 0) fail(ErrorCode::kConfig, "loss weights must be >= 0");
}

// ---- Targets ----------------------------------------------------------------------------

int heading_bin_of(double yaw, double* residual) {
  const double width = 2.0 * std::numbers::pi / kHeadingBins;
  const double y = wrap_angle(yaw);
  const double u = (y + std::numbers::pi) / width;
  int bin = std::clamp(static_cast<int>(std::floor(u)), 0, kHeadingBins - 1);
  // Exactly between two centers: prefer the lower bin.
  if (bin > 0 && u == static_cast<double>(bin)) --bin;
  if (residual) *residual = y - heading_bin_center(bin);
  return bin;
}

BoxTargets encode_box_targets(const Box3& gt_world, ObjectClass cls, const Proposal& proposal) {
  BoxTargets t;
  t.center = to_canonical(gt_world.center, proposal.mean);
  const double yaw = wrap_angle(gt_world.yaw - proposal.azimuth);
  t.heading_bin = heading_bin_of(yaw, &t.heading_residual);
  t.size_bin = static_cast<int>(cls);
  const Vec3 tmpl = size_template(t.size_bin);
  t.size_residual = gt_world.size.cwiseQuotient(tmpl) - Vec3::Ones();
  t.corners = box_corners(t.center, gt_world.size, yaw);
  t.corners_flipped = box_corners(t.center, gt_world.size, yaw + std::numbers::pi);
  return t;
}

// ---- Loss pieces ------------------------------------------------------------------------

namespace {

/// Huber value and slope; the quadratic/linear branch can be frozen by the tape.
double huber(double x, double* slope, nn::KinkTape* tape) {
  bool quadratic = std::abs(x) < 1.0;
  if (tape) quadratic = tape->branch(quadratic);
  if (quadratic) {
    if (slope) *slope = x;
    return 0.5 * x * x;
  }
  if (slope) *slope = x >= 0 ? 1.0 : -1.0;
  return std::abs(x) - 0.5;
}

/// log-sum-exp of (f / T) and the softmax of f / T.
template <typename Row>
double log_sum_exp(const Row& f, double temperature, std::vector<double>& soft) {
  const Eigen::Index k = f.size();
  soft.resize(static_cast<std::size_t>(k));
  double top = f(0) / temperature;
  for (Eigen::Index i = 1; i < k; ++i) top = std::max(top, f(i) / temperature);
  double sum = 0;
  for (Eigen::Index i = 0; i < k; ++i) sum += (soft[static_cast<std::size_t>(i)] = std::exp(f(i) / temperature - top));
  for (auto& s : soft) s /= sum;
  return top + std::log(sum);
}

/// Adds lambda * energy hinge for one row; `scale` is 1 / (#rows of its kind).
/// Returns the unweighted hinge value and accumulates d/df into `grad` (length K).
template <typename Row, typename GradRow>
double energy_hinge_row(const Row& f, bool is_id, double scale, const TrainConfig& cfg, GradRow* grad,
                        nn::KinkTape* tape) {
  std::vector<double> soft;
  const double energy = -cfg.temperature * log_sum_exp(f, cfg.temperature, soft);
  const double gap = is_id ? energy - cfg.margin_id : cfg.margin_ood - energy;
  bool active = gap > 0;
  if (tape) active = tape->branch(active);
  if (!active) return 0.0;
  if (grad) {
    // dE/df = -softmax(f / T); d(gap)/dE = +1 for ID, -1 for OOD.
    const double coeff = cfg.lambda * scale * 2.0 * gap * (is_id ? -1.0 : 1.0);
    for (Eigen::Index i = 0; i < f.size(); ++i) (*grad)(i) += coeff * soft[static_cast<std::size_t>(i)];
  }
  return gap * gap * scale;
}

/// Cross-entropy of logits against `label`; accumulates scale * (softmax - onehot).
template <typename Row, typename GradRow>
double cross_entropy_row(const Row& f, int label, double scale, GradRow* grad) {
  std::vector<double> soft;
  const double lse = log_sum_exp(f, 1.0, soft);
  if (grad) {
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      (*grad)(i) += scale * (soft[static_cast<std::size_t>(i)] - (i == label ? 1.0 : 0.0));
    }
  }
  return (lse - f(label)) * scale;
}

constexpr double kSx[4] = {1, 1, -1, -1};
constexpr double kSy[4] = {1, -1, -1, 1};

struct CornerGrad {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();
  double yaw = 0;
};

double corner_loss_impl(const Vec3& center, const Vec3& size, double yaw, const BoxTargets& t, CornerGrad* grad,
                        nn::KinkTape* tape) {
  const auto pred = box_corners(center, size, yaw);
  double da = 0, db = 0;
  for (int k = 0; k < 8; ++k) {
    da += (pred[k] - t.corners[k]).norm();
    db += (pred[k] - t.corners_flipped[k]).norm();
  }
  bool use_a = da <= db;
  if (tape) use_a = tape->branch(use_a);
  const auto& target = use_a ? t.corners : t.corners_flipped;
  if (grad) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    for (int k = 0; k < 8; ++k) {
      const Vec3 diff = pred[k] - target[k];
      const double n = diff.norm();
      if (n == 0.0) continue;
      const Vec3 u = diff / n;
      const double lx = 0.5 * size.x() * kSx[k & 3];
      const double ly = 0.5 * size.y() * kSy[k & 3];
      const double sz = k < 4 ? -0.5 : 0.5;
      grad->center += u;
      // d/dl of (c*lx - s*ly, s*lx + c*ly) with lx = 0.5*l*sx
      grad->size.x() += 0.5 * kSx[k & 3] * (u.x() * c + u.y() * s);
      grad->size.y() += 0.5 * kSy[k & 3] * (-u.x() * s + u.y() * c);
      grad->size.z() += sz * u.z();
      grad->yaw += u.x() * (-s * lx - c * ly) + u.y() * (c * lx - s * ly);
    }
  }
  return use_a ? da : db;
}

constexpr int kOffHeadingLogits = 3;
constexpr int kOffHeadingResiduals = kOffHeadingLogits + kHeadingBins;
constexpr int kOffSizeLogits = kOffHeadingResiduals + kHeadingBins;
constexpr int kOffSizeResiduals = kOffSizeLogits + kSizeBins;

}  // namespace

double smooth_l1(double x) { return huber(x, nullptr, nullptr); }

double corner_loss(const std::array<Vec3, 8>& predicted, const BoxTargets& targets) {
  double da = 0, db = 0;
  for (int k = 0; k < 8; ++k) {
    da += (predicted[k] - targets.corners[k]).norm();
    db += (predicted[k] - targets.corners_flipped[k]).norm();
  }
  return std::min(da, db);
}

double energy_hinge_loss(std::span<const double> id_energies, std::span<const double> ood_energies,
                         const TrainConfig& cfg) {
  double id = 0, ood = 0;
  for (double e : id_energies) id += std::pow(std::max(0.0, e - cfg.margin_id), 2);
  for (double e : ood_energies) ood += std::pow(std::max(0.0, cfg.margin_ood - e), 2);
  if (!id_energies.empty()) id /= static_cast<double>(id_energies.size());
  if (!ood_energies.empty()) ood /= static_cast<double>(ood_energies.size());
  return id + ood;
}

LossTerms classifier_loss(const Matrix<double>& logits, std::span<const int> labels, const TrainConfig& cfg,
                          Matrix<double>* grad, nn::KinkTape* tape) {
  const auto rows = logits.rows();
  if (static_cast<std::size_t>(rows) != labels.size()) fail(ErrorCode::kInvalidInput, "label count mismatch");
  const auto n_id = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l >= 0; }));
  const double n_ood = static_cast<double>(rows) - n_id;
  if (grad) *grad = Matrix<double>::Zero(rows, logits.cols());

  LossTerms out;
  for (Eigen::Index b = 0; b < rows; ++b) {
    const auto f = logits.row(b);
    const bool is_id = labels[static_cast<std::size_t>(b)] >= 0;
    auto g = grad ? std::optional(grad->row(b)) : std::nullopt;
    if (is_id) out.cross_entropy += cross_entropy_row(f, labels[static_cast<std::size_t>(b)], 1.0 / n_id, g ? &*g : nullptr);
    const double scale = 1.0 / (is_id ? n_id : n_ood);
    out.energy += energy_hinge_row(f, is_id, scale, cfg, g ? &*g : nullptr, tape);
  }
  out.total = out.cross_entropy + cfg.lambda * out.energy;
  return out;
}

LossTerms box_loss(const BoxRaw<double>& raw, std::span<const std::optional<BoxTargets>> targets,
                   const TrainConfig& cfg, BoxOutputGrad* grad, nn::KinkTape* tape) {
  const auto rows = raw.head.rows();
  if (static_cast<std::size_t>(rows) != targets.size()) fail(ErrorCode::kInvalidInput, "box target count mismatch");
  const auto n_id =
      static_cast<double>(std::count_if(targets.begin(), targets.end(), [](const auto& t) { return t.has_value(); }));
  const double n_ood = static_cast<double>(rows) - n_id;
  if (grad) {
    grad->head = Matrix<double>::Zero(rows, kBoxOutputWidth);
    grad->tnet = Matrix<double>::Zero(rows, 3);
    grad->rnet = Matrix<double>::Zero(rows, 1);
  }

  LossTerms out;
  Eigen::Matrix<double, 1, kHeadingBins + kSizeBins> energy_logits;
  Eigen::Matrix<double, 1, kHeadingBins + kSizeBins> energy_grad;
  for (Eigen::Index b = 0; b < rows; ++b) {
    const auto head = raw.head.row(b);
    const auto& target = targets[static_cast<std::size_t>(b)];
    const bool is_id = target.has_value();

    energy_logits << head.segment(kOffHeadingLogits, kHeadingBins), head.segment(kOffSizeLogits, kSizeBins);
    energy_grad.setZero();
    out.energy += energy_hinge_row(energy_logits, is_id, 1.0 / (is_id ? n_id : n_ood), cfg,
                                   grad ? &energy_grad : nullptr, tape);
    if (grad) {
      grad->head.row(b).segment(kOffHeadingLogits, kHeadingBins) += energy_grad.head(kHeadingBins);
      grad->head.row(b).segment(kOffSizeLogits, kSizeBins) += energy_grad.tail(kSizeBins);
    }
    if (!is_id) continue;

    const BoxTargets& t = *target;
    const double w = 1.0 / n_id;
    const Vec3 tnet = raw.tnet.row(b).transpose();
    const Vec3 cd = head.segment(0, 3).transpose();
    const double rnet = raw.rnet(b, 0);
    double slope = 0;

    for (int k = 0; k < 3; ++k) {
      out.center1 += w * huber(tnet[k] - t.center[k], &slope, tape);
      if (grad) grad->tnet(b, k) += w * slope;
      out.center2 += w * huber(tnet[k] + cd[k] - t.center[k], &slope, tape);
      if (grad) {
        grad->tnet(b, k) += w * slope;
        grad->head(b, k) += w * slope;
      }
    }

    const int hb = t.heading_bin;
    const int sb = t.size_bin;
    if (grad) {
      auto gh = grad->head.row(b).segment(kOffHeadingLogits, kHeadingBins);
      out.heading_cls += cross_entropy_row(head.segment(kOffHeadingLogits, kHeadingBins), hb, w, &gh);
      auto gs = grad->head.row(b).segment(kOffSizeLogits, kSizeBins);
      out.size_cls += cross_entropy_row(head.segment(kOffSizeLogits, kSizeBins), sb, w, &gs);
    } else {
      out.heading_cls += cross_entropy_row(head.segment(kOffHeadingLogits, kHeadingBins), hb, w,
                                           static_cast<Eigen::Matrix<double, 1, kHeadingBins>*>(nullptr));
      out.size_cls += cross_entropy_row(head.segment(kOffSizeLogits, kSizeBins), sb, w,
                                        static_cast<Eigen::Matrix<double, 1, kSizeBins>*>(nullptr));
    }

    const double hres = head(kOffHeadingResiduals + hb);
    out.heading_reg += w * huber(hres + rnet - t.heading_residual, &slope, tape);
    if (grad) {
      grad->head(b, kOffHeadingResiduals + hb) += w * slope;
      grad->rnet(b, 0) += w * slope;
    }

    Vec3 sres;
    for (int k = 0; k < 3; ++k) {
      sres[k] = head(kOffSizeResiduals + 3 * sb + k);
      out.size_reg += w * huber(sres[k] - t.size_residual[k], &slope, tape);
      if (grad) grad->head(b, kOffSizeResiduals + 3 * sb + k) += w * slope;
    }

    const Vec3 tmpl = size_template(sb);
    Vec3 size = tmpl.cwiseProduct(Vec3::Ones() + sres);
    // Same clamp as decoding, so a mirrored box with negative extents earns nothing.
    std::array<bool, 3> clamped{};
    for (int k = 0; k < 3; ++k) {
      clamped[k] = size[k] < kMinDecodedSize;
      if (tape) clamped[k] = tape->branch(clamped[k]);
      if (clamped[k]) size[k] = kMinDecodedSize;
    }
    const double yaw = heading_bin_center(hb) + hres + rnet;
    CornerGrad cg;
    out.corner += w * corner_loss_impl(tnet + cd, size, yaw, t, grad ? &cg : nullptr, tape);
    if (grad) {
      const double gw = w * cfg.gamma_corner;
      for (int k = 0; k < 3; ++k) {
        grad->tnet(b, k) += gw * cg.center[k];
        grad->head(b, k) += gw * cg.center[k];
        if (!clamped[k]) grad->head(b, kOffSizeResiduals + 3 * sb + k) += gw * cg.size[k] * tmpl[k];
      }
      grad->head(b, kOffHeadingResiduals + hb) += gw * cg.yaw;
      grad->rnet(b, 0) += gw * cg.yaw;
    }
  }
  out.total = out.center1 + out.center2 + out.heading_cls + out.heading_reg + out.size_cls + out.size_reg +
              cfg.gamma_corner * out.corner + cfg.lambda * out.energy;
  return out;
}

namespace {

void pack_prediction(const BoxPrediction& p, Eigen::Index row, BoxRaw<double>& raw) {
  for (int k = 0; k < 3; ++k) {
    raw.head(row, k) = p.center_delta[k];
    raw.tnet(row, k) = p.tnet_delta[k];
  }
  for (int k = 0; k < kHeadingBins; ++k) {
    raw.head(row, kOffHeadingLogits + k) = p.heading_logits[k];
    raw.head(row, kOffHeadingResiduals + k) = p.heading_residuals[k];
  }
  for (int k = 0; k < kSizeBins; ++k) {
    raw.head(row, kOffSizeLogits + k) = p.size_logits[k];
    for (int j = 0; j < 3; ++j) raw.head(row, kOffSizeResiduals + 3 * k + j) = p.size_residuals[k][j];
  }
  raw.rnet(row, 0) = p.rnet_yaw;
}

}  // namespace

LossTerms box_loss(std::span<const BoxPrediction> id_preds, std::span<const BoxTargets> targets,
                   std::span<const BoxPrediction> ood_preds, const TrainConfig& cfg) {
  if (id_preds.size() != targets.size()) fail(ErrorCode::kInvalidInput, "box target count mismatch");
  const auto rows = static_cast<Eigen::Index>(id_preds.size() + ood_preds.size());
  BoxRaw<double> raw{Matrix<double>(rows, kBoxOutputWidth), Matrix<double>(rows, 3), Matrix<double>(rows, 1)};
  std::vector<std::optional<BoxTargets>> all;
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < id_preds.size(); ++i) {
    pack_prediction(id_preds[i], row++, raw);
    all.emplace_back(targets[i]);
  }
  for (const auto& p : ood_preds) {
    pack_prediction(p, row++, raw);
    all.emplace_back(std::nullopt);
  }
  return box_loss(raw, all, cfg);
}

// ---- Objectives and backprop --------------------------------------------------------------

double classifier_objective(const ClassifierParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                            nn::KinkTape* tape) {
  const Matrix<double> logits = classifier_run<double>(p, batch.input, tape);
  return classifier_loss(logits, batch.labels, cfg, nullptr, tape).total;
}

double box_objective(const BoxParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                     nn::KinkTape* tape) {
  const BoxRaw<double> raw = box_run<double>(p, batch.input, tape);
  return box_loss(raw, batch.boxes, cfg, nullptr, tape).total;
}

namespace {

Matrix<double> pvle_backward(const nn::PvleParams<double>& p, const Matrix<double>& voxels,
                             const Matrix<double>& hidden, const Matrix<double>& out, const Matrix<double>& grad_out,
                             nn::PvleParams<double>& grad) {
  const Matrix<double> g2 = nn::relu_backward(grad_out, out);
  const Matrix<double> g1 = nn::relu_backward(nn::dense_backward(p.fc2, hidden, g2, grad.fc2), hidden);
  nn::dense_backward(p.fc1, voxels, g1, grad.fc1, false);
  return {};
}

template <typename Params>
void check_finite(const Params& grad, double loss) {
  if (!std::isfinite(loss)) fail(ErrorCode::kRuntime, "non-finite loss");
  grad.for_each([](const std::string& name, const nn::Dense<double>& layer) {
    if (!layer.w.allFinite()) fail(ErrorCode::kRuntime, "non-finite gradient in " + name + ".weight");
    if (!layer.b.allFinite()) fail(ErrorCode::kRuntime, "non-finite gradient in " + name + ".bias");
  });
}

}  // namespace

LossTerms classifier_gradients(const ClassifierParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                               ClassifierParams<double>& grad, nn::KinkTape* tape) {
  ClassifierCache cache;
  const Matrix<double> logits = classifier_run<double>(p, batch.input, tape, &cache);
  Matrix<double> d_logits;
  const LossTerms loss = classifier_loss(logits, batch.labels, cfg, &d_logits, tape);
  if (!std::isfinite(loss.total)) fail(ErrorCode::kRuntime, "non-finite classifier loss (head.fc2 output)");

  const Matrix<double> d_hidden =
      nn::relu_backward(nn::dense_backward(p.fc2, cache.hidden, d_logits, grad.fc2), cache.hidden);
  const Matrix<double> d_joint = nn::dense_backward(p.fc1, cache.joint, d_hidden, grad.fc1);
  nn::encoder_backward(p.encoder, cache.encoder, d_joint.leftCols(nn::kGlobalWidth), grad.encoder, false);
  pvle_backward(p.pvle, cache.voxels, cache.pvle_hidden, cache.pvle, d_joint.rightCols(nn::kPvleWidth), grad.pvle);
  check_finite(grad, loss.total);
  return loss;
}

LossTerms box_gradients(const BoxParams<double>& p, const TrainBatch& batch, const TrainConfig& cfg,
                        BoxParams<double>& grad, nn::KinkTape* tape) {
  BoxCache cache;
  const BoxRaw<double> raw = box_run<double>(p, batch.input, tape, &cache);
  BoxOutputGrad d;
  const LossTerms loss = box_loss(raw, batch.boxes, cfg, &d, tape);
  if (!std::isfinite(loss.total)) fail(ErrorCode::kRuntime, "non-finite box loss (head.fc2 output)");

  const int batch_size = batch.input.batch();
  const int m = batch.input.points_per_sample;

  // Second stage: head -> box encoder -> re-centered points -> T-Net output.
  const Matrix<double> d_hidden =
      nn::relu_backward(nn::dense_backward(p.fc2, cache.hidden, d.head, grad.fc2), cache.hidden);
  const Matrix<double> d_joint2 = nn::dense_backward(p.fc1, cache.box_joint, d_hidden, grad.fc1);
  const Matrix<double> d_shifted =
      nn::encoder_backward(p.box_encoder, cache.box_encoder, d_joint2.leftCols(nn::kGlobalWidth), grad.box_encoder,
                           true);
  Matrix<double> d_tnet = d.tnet;
  for (int b = 0; b < batch_size; ++b) {
    d_tnet.row(b) -= d_shifted.middleRows(static_cast<Eigen::Index>(b) * m, m).colwise().sum();
  }
  Matrix<double> d_pvle = d_joint2.rightCols(nn::kPvleWidth);

  // First stage: T-Net and R-Net share the first encoder's global feature.
  const Matrix<double> d_t_hidden =
      nn::relu_backward(nn::dense_backward(p.tnet2, cache.tnet_hidden, d_tnet, grad.tnet2), cache.tnet_hidden);
  Matrix<double> d_joint = nn::dense_backward(p.tnet1, cache.joint, d_t_hidden, grad.tnet1);
  const Matrix<double> d_r_hidden =
      nn::relu_backward(nn::dense_backward(p.rnet2, cache.rnet_hidden, d.rnet, grad.rnet2), cache.rnet_hidden);
  d_joint += nn::dense_backward(p.rnet1, cache.joint, d_r_hidden, grad.rnet1);
  nn::encoder_backward(p.encoder, cache.encoder, d_joint.leftCols(nn::kGlobalWidth), grad.encoder, false);
  d_pvle += d_joint.rightCols(nn::kPvleWidth);
  pvle_backward(p.pvle, cache.voxels, cache.pvle_hidden, cache.pvle, d_pvle, grad.pvle);
  check_finite(grad, loss.total);
  return loss;
}

// ---- Training loops ---------------------------------------------------------------------

TrainBatch make_batch(std::span<const LabeledProposal> items, std::span<const std::size_t> indices,
                      const ProposalConfig& pcfg) {
  TrainBatch batch;
  const int m = pcfg.n_points;
  const auto n = static_cast<Eigen::Index>(indices.size());
  batch.input.points_per_sample = m;
  batch.input.points.resize(n * m, 3);
  batch.input.voxels.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& item = items[indices[static_cast<std::size_t>(i)]];
    if (item.proposal.canonical.rows() != m) fail(ErrorCode::kConfig, "dataset item has the wrong point count");
    batch.input.points.middleRows(i * m, m) = item.proposal.canonical;
    batch.input.voxels.row(i) = voxel_features(item.proposal.voxel, pcfg).transpose();
    batch.labels.push_back(item.label);
    if (item.label >= 0) {
      batch.boxes.emplace_back(item.targets);
    } else {
      batch.boxes.emplace_back(std::nullopt);
    }
  }
  return batch;
}

namespace {

template <typename Params>
void zero_pvle(Params& p) {
  p.pvle.fc1.w.setZero();
  p.pvle.fc1.b.setZero();
  p.pvle.fc2.w.setZero();
  p.pvle.fc2.b.setZero();
}

template <typename Params, typename GradFn>
Params train_loop(std::span<const LabeledProposal> data, const TrainConfig& cfg, const ProposalConfig& pcfg,
                  std::uint64_t init_salt, TrainHistory* history, const EpochCallback& on_epoch, GradFn&& gradients) {
  cfg.validate();
  std::vector<std::size_t> id_idx, ood_idx;
  for (std::size_t i = 0; i < data.size(); ++i) (data[i].label >= 0 ? id_idx : ood_idx).push_back(i);
  if (id_idx.empty() || ood_idx.empty()) fail(ErrorCode::kInvalidInput, "training needs both ID and OOD items");

  Params params;
  init_params(params, cfg.seed * 7919 + init_salt);
  if (!cfg.use_pvle) zero_pvle(params);
  AdamState<Params> adam(params);
  std::mt19937_64 rng(cfg.seed);

  const std::size_t half = static_cast<std::size_t>(cfg.batch_size / 2);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(id_idx.begin(), id_idx.end(), rng);
    std::shuffle(ood_idx.begin(), ood_idx.end(), rng);
    const std::size_t batches = std::max<std::size_t>(1, std::min(id_idx.size(), ood_idx.size()) / half);
    double total = 0;
    std::vector<std::size_t> pick;
    for (std::size_t b = 0; b < batches; ++b) {
      pick.clear();
      for (std::size_t k = 0; k < half; ++k) pick.push_back(id_idx[(b * half + k) % id_idx.size()]);
      for (std::size_t k = 0; k < half; ++k) pick.push_back(ood_idx[(b * half + k) % ood_idx.size()]);
      const TrainBatch batch = make_batch(data, pick, pcfg);
      Params grad = zeros_like(params);
      total += gradients(params, batch, grad).total;
      if (!cfg.use_pvle) zero_pvle(grad);
      adam_step(params, grad, adam, cfg);
    }
    const double mean = total / static_cast<double>(batches);
    if (history) history->epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return params;
}

}  // namespace

ClassifierParams<double> train_classifier(std::span<const LabeledProposal> data, const TrainConfig& cfg,
                                          const ProposalConfig& pcfg, TrainHistory* history,
                                          const EpochCallback& on_epoch) {
  return train_loop<ClassifierParams<double>>(
      data, cfg, pcfg, 1, history, on_epoch,
      [&](const ClassifierParams<double>& p, const TrainBatch& batch, ClassifierParams<double>& grad) {
        return classifier_gradients(p, batch, cfg, grad);
      });
}

BoxParams<double> train_box_network(std::span<const LabeledProposal> data, const TrainConfig& cfg,
                                    const ProposalConfig& pcfg, TrainHistory* history,
                                    const EpochCallback& on_epoch) {
  return train_loop<BoxParams<double>>(
      data, cfg, pcfg, 2, history, on_epoch,
      [&](const BoxParams<double>& p, const TrainBatch& batch, BoxParams<double>& grad) {
        return box_gradients(p, batch, cfg, grad);
      });
}

EnergyTable score_items(const ClassifierParams<double>& cls, const BoxParams<double>& box,
                        std::span<const LabeledProposal> items, const ProposalConfig& pcfg, double temperature) {
  EnergyTable out;
  constexpr std::size_t kChunk = 256;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < items.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(items.size(), start + kChunk); ++i) idx.push_back(i);
    const TrainBatch batch = make_batch(items, idx, pcfg);
    const Matrix<double> logits = classifier_run<double>(cls, batch.input);
    const BoxRaw<double> raw = box_run<double>(box, batch.input);
    for (Eigen::Index b = 0; b < logits.rows(); ++b) {
      std::vector<double> f(logits.row(b).data(), logits.row(b).data() + logits.cols());
      out.cls.push_back(energy_score(f, temperature));
      out.predicted.push_back(static_cast<int>(std::max_element(f.begin(), f.end()) - f.begin()));
      std::vector<double> row(raw.head.row(b).data(), raw.head.row(b).data() + kBoxOutputWidth);
      const auto pred = unpack_box_output(row, Vec3::Zero(), 0.0);
      const auto e = box_energy_logits(pred);
      out.box.push_back(energy_score(e, temperature));
    }
  }
  return out;
}

}  // namespace pcrd
