#include "pcrd/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace pcrd {

using nn::Matrix;

Vec3 size_template(int size_bin) {
  switch (size_bin) {
    case 0:
      return {3.9, 1.6, 1.56};
    case 1:
      return {0.8, 0.6, 1.73};
    case 2:
      return {1.76, 0.6, 1.73};
    default:
      fail(ErrorCode::kDomain, "size bin out of range: " + std::to_string(size_bin));
  }
}

double heading_bin_center(int bin) {
  return -std::numbers::pi + (bin + 0.5) * 2.0 * std::numbers::pi / kHeadingBins;
}

namespace {

template <typename U, typename T>
nn::PvleParams<U> cast_pvle(const nn::PvleParams<T>& p) {
  return {p.fc1.template cast<U>(), p.fc2.template cast<U>()};
}

template <typename U, typename T>
nn::EncoderParams<U> cast_encoder(const nn::EncoderParams<T>& p) {
  return {p.conv1.template cast<U>(), p.conv2.template cast<U>(), p.conv3.template cast<U>()};
}

template <typename T>
Matrix<T> hconcat(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

template <typename T>
Matrix<T> pvle_impl(const nn::PvleParams<T>& p, const Matrix<T>& voxels, nn::KinkTape* tape, Matrix<T>* hidden) {
  Matrix<T> h = nn::relu<T>(p.fc1.apply(voxels), tape);
  Matrix<T> out = nn::relu<T>(p.fc2.apply(h), tape);
  if (hidden) *hidden = std::move(h);
  return out;
}

template <typename T>
Matrix<T> classifier_tail(const ClassifierParams<T>& p, const Matrix<T>& points, int m, const Matrix<T>& pvle,
                          nn::KinkTape* tape, ClassifierCache* cache, std::vector<int>* argmax) {
  nn::EncoderCache* enc_cache = nullptr;
  if constexpr (std::is_same_v<T, double>) enc_cache = cache ? &cache->encoder : nullptr;
  const Matrix<T> global = nn::encoder_forward<T>(p.encoder, points, m, tape, enc_cache, argmax);
  Matrix<T> joint = hconcat<T>(global, pvle);
  Matrix<T> hidden = nn::relu<T>(p.fc1.apply(joint), tape);
  Matrix<T> logits = p.fc2.apply(hidden);
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->joint = std::move(joint);
      cache->hidden = std::move(hidden);
    }
  }
  return logits;
}

template <typename T>
BoxRaw<T> box_tail(const BoxParams<T>& p, const Matrix<T>& points, int m, const Matrix<T>& pvle, nn::KinkTape* tape,
                   BoxCache* cache, std::vector<int>* argmax) {
  nn::EncoderCache* enc_a = nullptr;
  nn::EncoderCache* enc_b = nullptr;
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      enc_a = &cache->encoder;
      enc_b = &cache->box_encoder;
    }
  }
  const int batch = static_cast<int>(pvle.rows());
  const Matrix<T> global = nn::encoder_forward<T>(p.encoder, points, m, tape, enc_a);
  Matrix<T> joint = hconcat<T>(global, pvle);
  Matrix<T> t_hidden = nn::relu<T>(p.tnet1.apply(joint), tape);
  Matrix<T> tnet = p.tnet2.apply(t_hidden);
  Matrix<T> r_hidden = nn::relu<T>(p.rnet1.apply(joint), tape);
  Matrix<T> rnet = p.rnet2.apply(r_hidden);

  Matrix<T> shifted = points;
  for (int b = 0; b < batch; ++b) {
    shifted.middleRows(static_cast<Eigen::Index>(b) * m, m).rowwise() -= tnet.row(b);
  }
  const Matrix<T> global2 = nn::encoder_forward<T>(p.box_encoder, shifted, m, tape, enc_b, argmax);
  Matrix<T> joint2 = hconcat<T>(global2, pvle);
  Matrix<T> hidden = nn::relu<T>(p.fc1.apply(joint2), tape);
  Matrix<T> head = p.fc2.apply(hidden);

  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->joint = std::move(joint);
      cache->tnet_hidden = std::move(t_hidden);
      cache->rnet_hidden = std::move(r_hidden);
      cache->box_joint = std::move(joint2);
      cache->hidden = std::move(hidden);
    }
  }
  return {std::move(head), std::move(tnet), std::move(rnet)};
}

}  // namespace

template <typename T>
template <typename U>
ClassifierParams<U> ClassifierParams<T>::cast() const {
  ClassifierParams<U> out;
  out.pvle = cast_pvle<U>(pvle);
  out.encoder = cast_encoder<U>(encoder);
  out.fc1 = fc1.template cast<U>();
  out.fc2 = fc2.template cast<U>();
  return out;
}

template <typename T>
template <typename U>
BoxParams<U> BoxParams<T>::cast() const {
  BoxParams<U> out;
  out.pvle = cast_pvle<U>(pvle);
  out.encoder = cast_encoder<U>(encoder);
  out.tnet1 = tnet1.template cast<U>();
  out.tnet2 = tnet2.template cast<U>();
  out.rnet1 = rnet1.template cast<U>();
  out.rnet2 = rnet2.template cast<U>();
  out.box_encoder = cast_encoder<U>(box_encoder);
  out.fc1 = fc1.template cast<U>();
  out.fc2 = fc2.template cast<U>();
  return out;
}

BoxPrediction unpack_box_output(std::span<const double> head, const Vec3& tnet, double rnet) {
  if (head.size() != static_cast<std::size_t>(kBoxOutputWidth)) {
    fail(ErrorCode::kConfig, "box head width mismatch");
  }
  BoxPrediction p;
  p.center_delta = Vec3(head[0], head[1], head[2]);
  p.tnet_delta = tnet;
  p.rnet_yaw = rnet;
  std::size_t o = 3;
  for (int k = 0; k < kHeadingBins; ++k) p.heading_logits[k] = head[o++];
  for (int k = 0; k < kHeadingBins; ++k) p.heading_residuals[k] = head[o++];
  for (int k = 0; k < kSizeBins; ++k) p.size_logits[k] = head[o++];
  for (int k = 0; k < kSizeBins; ++k) {
    p.size_residuals[k] = Vec3(head[o], head[o + 1], head[o + 2]);
    o += 3;
  }
  return p;
}

template <typename T>
NetInput<T> stack_proposals(std::span<const Proposal> proposals, const ProposalConfig& cfg) {
  NetInput<T> in;
  const int m = cfg.n_points;
  in.points_per_sample = m;
  in.points.resize(static_cast<Eigen::Index>(proposals.size()) * m, 3);
  in.voxels.resize(static_cast<Eigen::Index>(proposals.size()), 3);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto& p = proposals[i];
    if (p.canonical.rows() != m) fail(ErrorCode::kConfig, "proposal point count does not match proposal.n_points");
    if (!p.canonical.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite proposal points");
    in.points.middleRows(static_cast<Eigen::Index>(i) * m, m) = p.canonical.cast<T>();
    in.voxels.row(static_cast<Eigen::Index>(i)) = voxel_features(p.voxel, cfg).transpose().cast<T>();
  }
  return in;
}

template <typename T>
Matrix<T> pvle_forward(const nn::PvleParams<T>& p, const Matrix<T>& voxel_features, nn::KinkTape* tape) {
  if (voxel_features.cols() != 3) fail(ErrorCode::kConfig, "PVLE expects 3 input features");
  return pvle_impl<T>(p, voxel_features, tape, nullptr);
}

template <typename T>
Matrix<T> classifier_forward(const ClassifierParams<T>& p, const Matrix<T>& points, int points_per_sample,
                             const Matrix<T>& pvle, nn::KinkTape* tape, std::vector<int>* argmax) {
  if (points_per_sample <= 0 || points.cols() != 3 || points.rows() != pvle.rows() * points_per_sample ||
      pvle.cols() != nn::kPvleWidth) {
    fail(ErrorCode::kConfig, "classifier input shape mismatch");
  }
  if (!points.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite classifier input");
  return classifier_tail<T>(p, points, points_per_sample, pvle, tape, nullptr, argmax);
}

template <typename T>
Matrix<T> classifier_run(const ClassifierParams<T>& p, const NetInput<T>& in, nn::KinkTape* tape,
                         ClassifierCache* cache, std::vector<int>* argmax) {
  if (!in.points.allFinite() || !in.voxels.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite classifier input");
  Matrix<T> hidden;
  Matrix<T> pvle = pvle_impl<T>(p.pvle, in.voxels, tape, &hidden);
  Matrix<T> logits = classifier_tail<T>(p, in.points, in.points_per_sample, pvle, tape, cache, argmax);
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->voxels = in.voxels;
      cache->pvle_hidden = std::move(hidden);
      cache->pvle = std::move(pvle);
    }
  }
  return logits;
}

template <typename T>
Matrix<T> classify(const ClassifierParams<T>& p, const NetInput<T>& in) {
  return classifier_run<T>(p, in);
}

template <typename T>
BoxRaw<T> box_forward(const BoxParams<T>& p, const Matrix<T>& points, int points_per_sample, const Matrix<T>& pvle,
                      nn::KinkTape* tape, std::vector<int>* argmax) {
  if (points_per_sample <= 0 || points.cols() != 3 || points.rows() != pvle.rows() * points_per_sample ||
      pvle.cols() != nn::kPvleWidth) {
    fail(ErrorCode::kConfig, "box network input shape mismatch");
  }
  if (!points.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite box network input");
  return box_tail<T>(p, points, points_per_sample, pvle, tape, nullptr, argmax);
}

template <typename T>
BoxRaw<T> box_run(const BoxParams<T>& p, const NetInput<T>& in, nn::KinkTape* tape, BoxCache* cache,
                  std::vector<int>* argmax) {
  if (!in.points.allFinite() || !in.voxels.allFinite()) fail(ErrorCode::kInvalidInput, "non-finite box network input");
  Matrix<T> hidden;
  Matrix<T> pvle = pvle_impl<T>(p.pvle, in.voxels, tape, &hidden);
  BoxRaw<T> raw = box_tail<T>(p, in.points, in.points_per_sample, pvle, tape, cache, argmax);
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->voxels = in.voxels;
      cache->pvle_hidden = std::move(hidden);
      cache->pvle = std::move(pvle);
    }
  }
  return raw;
}

template <typename T>
std::vector<BoxPrediction> estimate_boxes(const BoxParams<T>& p, const NetInput<T>& in) {
  const BoxRaw<T> raw = box_run<T>(p, in);
  std::vector<BoxPrediction> out;
  out.reserve(static_cast<std::size_t>(in.batch()));
  std::vector<double> row(kBoxOutputWidth);
  for (int b = 0; b < in.batch(); ++b) {
    for (int k = 0; k < kBoxOutputWidth; ++k) row[k] = static_cast<double>(raw.head(b, k));
    out.push_back(unpack_box_output(row, raw.tnet.row(b).transpose().template cast<double>(),
                                    static_cast<double>(raw.rnet(b, 0))));
  }
  return out;
}

double energy_score(std::span<const double> logits, double temperature) {
  if (logits.empty()) fail(ErrorCode::kDomain, "energy_score: empty logits");
  if (!(temperature > 0)) fail(ErrorCode::kDomain, "energy_score: temperature must be > 0");
  const double top = *std::max_element(logits.begin(), logits.end()) / temperature;
  double sum = 0.0;
  for (double f : logits) sum += std::exp(f / temperature - top);
  return -temperature * (top + std::log(sum));
}

std::array<double, kHeadingBins + kSizeBins> box_energy_logits(const BoxPrediction& p) {
  std::array<double, kHeadingBins + kSizeBins> out{};
  std::copy(p.heading_logits.begin(), p.heading_logits.end(), out.begin());
  std::copy(p.size_logits.begin(), p.size_logits.end(), out.begin() + kHeadingBins);
  return out;
}

GateDecision classifier_gate(double energy_cls, const EnergyConfig& cfg) {
  return energy_cls < cfg.gamma_cls ? GateDecision::kIn : GateDecision::kOut;
}

GateDecision id_passthrough(double energy_cls, double energy_box, const EnergyConfig& cfg) {
  return (energy_cls < cfg.gamma_cls && energy_box < cfg.gamma_box) ? GateDecision::kIn : GateDecision::kOut;
}

double calibrate_threshold(std::span<const double> id_energies, double rate) {
  if (id_energies.empty()) fail(ErrorCode::kDomain, "calibrate_threshold: empty energy list");
  if (!(rate > 0.0 && rate < 1.0)) fail(ErrorCode::kDomain, "calibrate_threshold: rate must be in (0, 1)");
  std::vector<double> sorted(id_energies.begin(), id_energies.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  const auto need = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  const double above_max = std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
  if (need >= n) return above_max;
  if (need == 0) return sorted.front();
  // sorted[need] is the (need + 1)-th order statistic; ties with sorted[need - 1] would
  // leave fewer than `need` values strictly below it.
  if (sorted[need] > sorted[need - 1]) return sorted[need];
  return std::nextafter(sorted[need - 1], std::numeric_limits<double>::infinity());
}

Box3 decode_canonical(const BoxPrediction& p, int size_bin, int heading_bin) {
  Box3 b;
  b.center = p.tnet_delta + p.center_delta;
  b.size = size_template(size_bin).cwiseProduct(Vec3::Ones() + p.size_residuals[size_bin]);
  b.yaw = heading_bin_center(heading_bin) + p.heading_residuals[heading_bin] + p.rnet_yaw;
  return b;
}

DecodedBox decode_box(const BoxPrediction& p, const Proposal& proposal) {
  const int h = static_cast<int>(std::max_element(p.heading_logits.begin(), p.heading_logits.end()) -
                                 p.heading_logits.begin());
  const int s =
      static_cast<int>(std::max_element(p.size_logits.begin(), p.size_logits.end()) - p.size_logits.begin());
  const Box3 local = decode_canonical(p, s, h);
  DecodedBox out;
  out.box.center = from_canonical(local.center, proposal.mean);
  out.box.yaw = wrap_angle(local.yaw + proposal.azimuth);
  out.box.size = local.size;
  for (int k = 0; k < 3; ++k) {
    if (!(out.box.size[k] > 0.0)) {
      out.box.size[k] = kMinDecodedSize;
      out.degenerate = true;
    }
  }
  return out;
}

std::array<double, kNumClasses> softmax3(std::span<const double> logits) {
  std::array<double, kNumClasses> out{};
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0;
  for (int k = 0; k < kNumClasses; ++k) sum += (out[k] = std::exp(logits[k] - top));
  for (auto& v : out) v /= sum;
  return out;
}

namespace {

std::vector<int> unique_points(const std::vector<int>& argmax) {
  std::set<int> s(argmax.begin(), argmax.end());
  return {s.begin(), s.end()};
}

template <typename Params>
NetInput<double> single_input(const PointMatrix& canonical, const Eigen::Vector3d& voxel) {
  NetInput<double> in;
  in.points = canonical;
  in.voxels = voxel.transpose();
  in.points_per_sample = static_cast<int>(canonical.rows());
  return in;
}

}  // namespace

std::vector<int> critical_point_set(const PointMatrix& canonical, const Eigen::Vector3d& voxel_features,
                                    const ClassifierParams<double>& cls) {
  std::vector<int> argmax;
  classifier_run<double>(cls, single_input<ClassifierParams<double>>(canonical, voxel_features), nullptr, nullptr,
                         &argmax);
  return unique_points(argmax);
}

std::vector<int> critical_point_set(const PointMatrix& canonical, const Eigen::Vector3d& voxel_features,
                                    const BoxParams<double>& box) {
  std::vector<int> argmax;
  box_run<double>(box, single_input<BoxParams<double>>(canonical, voxel_features), nullptr, nullptr, &argmax);
  return unique_points(argmax);
}

double set_overlap(const std::vector<int>& a, const std::vector<int>& b) {
  std::set<int> sa(a.begin(), a.end());
  std::set<int> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (int v : sa) inter += sb.count(v);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

#define PCRD_INSTANTIATE(T)                                                                                       \
  template NetInput<T> stack_proposals<T>(std::span<const Proposal>, const ProposalConfig&);                      \
  template Matrix<T> pvle_forward<T>(const nn::PvleParams<T>&, const Matrix<T>&, nn::KinkTape*);                  \
  template Matrix<T> classifier_forward<T>(const ClassifierParams<T>&, const Matrix<T>&, int, const Matrix<T>&,   \
                                           nn::KinkTape*, std::vector<int>*);                                     \
  template Matrix<T> classifier_run<T>(const ClassifierParams<T>&, const NetInput<T>&, nn::KinkTape*,            \
                                       ClassifierCache*, std::vector<int>*);                                      \
  template Matrix<T> classify<T>(const ClassifierParams<T>&, const NetInput<T>&);                                 \
  template BoxRaw<T> box_forward<T>(const BoxParams<T>&, const Matrix<T>&, int, const Matrix<T>&, nn::KinkTape*,  \
                                    std::vector<int>*);                                                           \
  template BoxRaw<T> box_run<T>(const BoxParams<T>&, const NetInput<T>&, nn::KinkTape*, BoxCache*,               \
                                std::vector<int>*);                                                               \
  template std::vector<BoxPrediction> estimate_boxes<T>(const BoxParams<T>&, const NetInput<T>&);

PCRD_INSTANTIATE(float)
PCRD_INSTANTIATE(double)
#undef PCRD_INSTANTIATE

template ClassifierParams<float> ClassifierParams<double>::cast<float>() const;
template ClassifierParams<double> ClassifierParams<double>::cast<double>() const;
template ClassifierParams<double> ClassifierParams<float>::cast<double>() const;
template BoxParams<float> BoxParams<double>::cast<float>() const;
template BoxParams<double> BoxParams<double>::cast<double>() const;
template BoxParams<double> BoxParams<float>::cast<double>() const;

}  // namespace pcrd
