#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pcrd/common.hpp"
#include "pcrd/detail/layers.hpp"
#include "pcrd/proposals.hpp"

namespace pcrd {

inline constexpr int kHeadingBins = 12;
inline constexpr int kSizeBins = kNumClasses;
/// center (3) + heading logits + heading residuals + size logits + size residuals (3 each)
inline constexpr int kBoxOutputWidth = 3 + 2 * kHeadingBins + 4 * kSizeBins;

/// Mean box dimensions (l, w, h) per class; size bin i is class i.
Vec3 size_template(int size_bin);
/// Center of heading bin k: -pi + (k + 1/2) * 2pi / NH.
double heading_bin_center(int bin);

template <typename T>
struct ClassifierParams {
  nn::PvleParams<T> pvle;
  nn::EncoderParams<T> encoder;
  nn::Dense<T> fc1{nn::kGlobalWidth + nn::kPvleWidth, 64};
  nn::Dense<T> fc2{64, kNumClasses};

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    nn::PvleParams<T>::visit(self.pvle, "pvle.", f);
    nn::EncoderParams<T>::visit(self.encoder, "encoder.", f);
    f("head.fc1", self.fc1);
    f("head.fc2", self.fc2);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  template <typename U>
  ClassifierParams<U> cast() const;
};

template <typename T>
struct BoxParams {
  nn::PvleParams<T> pvle;
  nn::EncoderParams<T> encoder;  // first pass, feeds T-Net and R-Net
  nn::Dense<T> tnet1{nn::kGlobalWidth + nn::kPvleWidth, 64};
  nn::Dense<T> tnet2{64, 3};
  nn::Dense<T> rnet1{nn::kGlobalWidth + nn::kPvleWidth, 64};
  nn::Dense<T> rnet2{64, 1};
  nn::EncoderParams<T> box_encoder;  // second pass on re-centered points
  nn::Dense<T> fc1{nn::kGlobalWidth + nn::kPvleWidth, 128};
  nn::Dense<T> fc2{128, kBoxOutputWidth};

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    nn::PvleParams<T>::visit(self.pvle, "pvle.", f);
    nn::EncoderParams<T>::visit(self.encoder, "encoder.", f);
    f("tnet.fc1", self.tnet1);
    f("tnet.fc2", self.tnet2);
    f("rnet.fc1", self.rnet1);
    f("rnet.fc2", self.rnet2);
    nn::EncoderParams<T>::visit(self.box_encoder, "box_encoder.", f);
    f("head.fc1", self.fc1);
    f("head.fc2", self.fc2);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  template <typename U>
  BoxParams<U> cast() const;
};

/// He-normal weights, zero biases.
template <typename Params>
void init_params(Params& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string&, auto& layer) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / layer.in()));
    for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = dist(rng);
    layer.b.setZero();
  });
}

template <typename Params>
std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  p.for_each([&](const std::string&, const auto& layer) { n += layer.w.size() + layer.b.size(); });
  return n;
}

struct BoxPrediction {
  Vec3 center_delta = Vec3::Zero();  // second-stage center correction
  Vec3 tnet_delta = Vec3::Zero();    // first-stage center estimate
  std::array<double, kHeadingBins> heading_logits{};
  std::array<double, kHeadingBins> heading_residuals{};
  std::array<double, kSizeBins> size_logits{};
  std::array<Vec3, kSizeBins> size_residuals{Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  double rnet_yaw = 0.0;
};

/// Unpacks one row of the box head plus the T-Net and R-Net outputs.
BoxPrediction unpack_box_output(std::span<const double> head, const Vec3& tnet, double rnet);

// ---- Forward passes ---------------------------------------------------------------------

/// Stacked batch input: B samples of `points` rows each, plus B x 3 voxel features.
template <typename T>
struct NetInput {
  nn::Matrix<T> points;  // (B*M) x 3
  nn::Matrix<T> voxels;  // B x 3
  int points_per_sample = 0;
  int batch() const { return static_cast<int>(voxels.rows()); }
};

template <typename T>
NetInput<T> stack_proposals(std::span<const Proposal> proposals, const ProposalConfig& cfg);

/// linear(3->64) + ReLU + linear(64->32) + ReLU over B x 3 features.
template <typename T>
nn::Matrix<T> pvle_forward(const nn::PvleParams<T>& p, const nn::Matrix<T>& voxel_features,
                           nn::KinkTape* tape = nullptr);

/// B x K logits given precomputed B x 32 PVLE features.
template <typename T>
nn::Matrix<T> classifier_forward(const ClassifierParams<T>& p, const nn::Matrix<T>& points, int points_per_sample,
                                 const nn::Matrix<T>& pvle, nn::KinkTape* tape = nullptr,
                                 std::vector<int>* argmax = nullptr);

/// Convenience: PVLE + classifier over a stacked batch.
template <typename T>
nn::Matrix<T> classify(const ClassifierParams<T>& p, const NetInput<T>& in);

/// Raw box-network outputs over a stacked batch: head (B x kBoxOutputWidth), tnet (B x 3),
/// rnet (B x 1).
template <typename T>
struct BoxRaw {
  nn::Matrix<T> head, tnet, rnet;
};

template <typename T>
BoxRaw<T> box_forward(const BoxParams<T>& p, const nn::Matrix<T>& points, int points_per_sample,
                      const nn::Matrix<T>& pvle, nn::KinkTape* tape = nullptr,
                      std::vector<int>* argmax = nullptr);

template <typename T>
std::vector<BoxPrediction> estimate_boxes(const BoxParams<T>& p, const NetInput<T>& in);

/// Intermediate activations of a full double-precision pass, consumed by backprop.
struct ClassifierCache {
  nn::Matrix<double> voxels, pvle_hidden, pvle;
  nn::EncoderCache encoder;
  nn::Matrix<double> joint, hidden;
};

struct BoxCache {
  nn::Matrix<double> voxels, pvle_hidden, pvle;
  nn::EncoderCache encoder;
  nn::Matrix<double> joint, tnet_hidden, rnet_hidden;
  nn::EncoderCache box_encoder;
  nn::Matrix<double> box_joint, hidden;
};

/// Full passes (PVLE included). With T = double, `tape` and `cache` may be supplied.
template <typename T>
nn::Matrix<T> classifier_run(const ClassifierParams<T>& p, const NetInput<T>& in, nn::KinkTape* tape = nullptr,
                             ClassifierCache* cache = nullptr, std::vector<int>* argmax = nullptr);
template <typename T>
BoxRaw<T> box_run(const BoxParams<T>& p, const NetInput<T>& in, nn::KinkTape* tape = nullptr,
                  BoxCache* cache = nullptr, std::vector<int>* argmax = nullptr);

// ---- Energy gating ----------------------------------------------------------------------

struct EnergyConfig {
  double temperature = 1.0;
  double gamma_cls = 0.0;  // classifier energy threshold
  double gamma_box = 0.0;  // box energy threshold
};

/// -T * log(sum_i exp(f_i / T)) using the max-shifted form. Throws kDomain on empty input.
double energy_score(std::span<const double> logits, double temperature);

/// Heading logits followed by size logits.
std::array<double, kHeadingBins + kSizeBins> box_energy_logits(const BoxPrediction& p);

enum class GateDecision { kIn, kOut };

/// First gate: E_c < gamma_c.
GateDecision classifier_gate(double energy_cls, const EnergyConfig& cfg);
/// Final gate: E_c < gamma_c and E_b < gamma_b.
GateDecision id_passthrough(double energy_cls, double energy_box, const EnergyConfig& cfg);

/// Smallest order-statistic threshold with at least ceil(rate * n) energies strictly below.
double calibrate_threshold(std::span<const double> id_energies, double rate);

// ---- Decoding ---------------------------------------------------------------------------

struct DecodedBox {
  Box3 box;
  bool degenerate = false;  // a size component was clamped
};

inline constexpr double kMinDecodedSize = 0.1;

/// Inverts the canonical frame of `proposal` on the highest-scoring heading and size bins.
DecodedBox decode_box(const BoxPrediction& p, const Proposal& proposal);
/// Decode in the canonical frame for an explicit (size, heading) bin hypothesis.
Box3 decode_canonical(const BoxPrediction& p, int size_bin, int heading_bin);

struct Detection {
  Box3 box;
  ObjectClass cls = ObjectClass::kCar;
  std::array<double, kNumClasses> class_probs{};
  double energy_cls = 0;
  double energy_box = 0;
  int cluster_id = 0;
  bool degenerate = false;

  double score() const { return -energy_cls; }
};

std::array<double, kNumClasses> softmax3(std::span<const double> logits);

// ---- Critical points --------------------------------------------------------------------

enum class NetworkKind { kClassifier, kBox };

/// Indices of the points that realize the global max pool (lowest index on ties). For the
/// box network this is the second-stage encoder, which sees the re-centered points.
std::vector<int> critical_point_set(const PointMatrix& canonical, const Eigen::Vector3d& voxel_features,
                                    const ClassifierParams<double>& cls);
std::vector<int> critical_point_set(const PointMatrix& canonical, const Eigen::Vector3d& voxel_features,
                                    const BoxParams<double>& box);

/// |A n B| / |A u B|; 1 for two empty sets.
double set_overlap(const std::vector<int>& a, const std::vector<int>& b);

// ---- Weight archive ---------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;  // row-major
};

/// "PCRD" + version byte, then records of (u32 name length, name, u32 rank, u32 dims...,
/// float32 data), all little-endian.
struct WeightArchive {
  static constexpr std::uint8_t kVersion = 1;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  std::vector<std::uint8_t> serialize() const;
  static WeightArchive deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static WeightArchive load(const std::string& path);
};

/// Dense layers are stored as "<layer>.weight" (in x out) and "<layer>.bias" (out).
template <typename Params>
WeightArchive to_archive(const Params& p);
/// Throws kConfig on a missing tensor or a shape mismatch.
template <typename Params>
void from_archive(const WeightArchive& archive, Params& p);

}  // namespace pcrd
