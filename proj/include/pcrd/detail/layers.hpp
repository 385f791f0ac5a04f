#pragma once

// Building blocks shared by inference and training: dense layers, the shared per-point
// encoder with max pooling, and the kink tape used by the gradient checker.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pcrd/common.hpp"

namespace pcrd::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// y = x * w + b, with w stored in x out.
template <typename T>
struct Dense {
  Matrix<T> w;
  RowVec<T> b;

  Dense() = default;
  Dense(int in, int out) : w(Matrix<T>::Zero(in, out)), b(RowVec<T>::Zero(out)) {}

  int in() const { return static_cast<int>(w.rows()); }
  int out() const { return static_cast<int>(w.cols()); }

  Matrix<T> apply(const Matrix<T>& x) const {
    Matrix<T> y = x * w;
    y.rowwise() += b;
    return y;
  }

  template <typename U>
  Dense<U> cast() const {
    Dense<U> d;
    d.w = w.template cast<U>();
    d.b = b.template cast<U>();
    return d;
  }
};

/// Records every non-smooth decision (ReLU masks, max-pool winners, loss branches) during
/// one evaluation and replays them during another. With decisions frozen, the network is
/// a smooth function of its weights, which is what central differences can check.
class KinkTape {
 public:
  enum class Mode { kRecord, kReplay };

  void record() {
    mode_ = Mode::kRecord;
    masks_.clear();
    indices_.clear();
    branches_.clear();
    rewind();
  }
  void replay() {
    mode_ = Mode::kReplay;
    rewind();
  }
  bool replaying() const { return mode_ == Mode::kReplay; }

  /// ReLU mask for `pre`; recorded as pre > 0 or replayed.
  Matrix<double> mask(const Matrix<double>& pre) {
    if (mode_ == Mode::kRecord) {
      masks_.push_back((pre.array() > 0.0).cast<double>().matrix());
      return masks_.back();
    }
    return masks_.at(mask_cursor_++);
  }

  std::vector<int> indices(std::vector<int> computed) {
    if (mode_ == Mode::kRecord) {
      indices_.push_back(computed);
      return computed;
    }
    return indices_.at(index_cursor_++);
  }

  bool branch(bool computed) {
    if (mode_ == Mode::kRecord) {
      branches_.push_back(computed);
      return computed;
    }
    return branches_.at(branch_cursor_++) != 0;
  }

 private:
  void rewind() { mask_cursor_ = index_cursor_ = branch_cursor_ = 0; }

  Mode mode_ = Mode::kRecord;
  std::vector<Matrix<double>> masks_;
  std::vector<std::vector<int>> indices_;
  std::vector<std::uint8_t> branches_;
  std::size_t mask_cursor_ = 0, index_cursor_ = 0, branch_cursor_ = 0;
};

/// ReLU; the tape (double only) may freeze the mask.
template <typename T>
Matrix<T> relu(const Matrix<T>& pre, KinkTape* tape) {
  if constexpr (std::is_same_v<T, double>) {
    if (tape) return pre.cwiseProduct(tape->mask(pre));
  }
  return pre.cwiseMax(T(0));
}

/// Backward through ReLU given its output.
inline Matrix<double> relu_backward(const Matrix<double>& grad_out, const Matrix<double>& activation) {
  return grad_out.cwiseProduct((activation.array() > 0.0).cast<double>().matrix());
}

template <typename T>
struct EncoderParams {
  Dense<T> conv1{3, 32};
  Dense<T> conv2{32, 64};
  Dense<T> conv3{64, 128};

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "conv1", self.conv1);
    f(prefix + "conv2", self.conv2);
    f(prefix + "conv3", self.conv3);
  }
};

template <typename T>
struct PvleParams {
  Dense<T> fc1{3, 64};
  Dense<T> fc2{64, 32};

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "fc1", self.fc1);
    f(prefix + "fc2", self.fc2);
  }
};

inline constexpr int kGlobalWidth = 128;
inline constexpr int kPvleWidth = 32;

/// Activations kept for the backward pass of one encoder run over a stacked batch.
struct EncoderCache {
  Matrix<double> input;  // (B*M) x 3
  Matrix<double> h1, h2, h3;
  std::vector<int> argmax;  // B x 128, absolute row index into h3
  int batch = 0;
  int points = 0;
};

/// Per-point MLP (3-32-64-128, ReLU) followed by a per-sample max over `points` rows.
/// Ties go to the lowest row. Returns B x 128.
template <typename T>
Matrix<T> encoder_forward(const EncoderParams<T>& p, const Matrix<T>& input, int points, KinkTape* tape,
                          EncoderCache* cache, std::vector<int>* argmax_out = nullptr) {
  const int batch = static_cast<int>(input.rows()) / points;
  Matrix<T> h1 = relu<T>(p.conv1.apply(input), tape);
  Matrix<T> h2 = relu<T>(p.conv2.apply(h1), tape);
  Matrix<T> h3 = relu<T>(p.conv3.apply(h2), tape);

  std::vector<int> arg(static_cast<std::size_t>(batch) * kGlobalWidth, 0);
  for (int b = 0; b < batch; ++b) {
    int* best = arg.data() + static_cast<std::size_t>(b) * kGlobalWidth;
    for (int j = 0; j < kGlobalWidth; ++j) best[j] = b * points;
    for (int r = b * points + 1; r < (b + 1) * points; ++r) {
      const T* row = h3.data() + static_cast<std::ptrdiff_t>(r) * kGlobalWidth;
      for (int j = 0; j < kGlobalWidth; ++j) {
        if (row[j] > h3(best[j], j)) best[j] = r;
      }
    }
  }
  if constexpr (std::is_same_v<T, double>) {
    if (tape) arg = tape->indices(std::move(arg));
  }
  Matrix<T> global(batch, kGlobalWidth);
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < kGlobalWidth; ++j) global(b, j) = h3(arg[static_cast<std::size_t>(b) * kGlobalWidth + j], j);
  }
  if (argmax_out) *argmax_out = arg;
  if constexpr (std::is_same_v<T, double>) {
    if (cache) {
      cache->input = input;
      cache->h1 = std::move(h1);
      cache->h2 = std::move(h2);
      cache->h3 = std::move(h3);
      cache->argmax = std::move(arg);
      cache->batch = batch;
      cache->points = points;
    }
  }
  return global;
}

/// Accumulates weight gradients for a dense layer and returns the input gradient.
inline Matrix<double> dense_backward(const Dense<double>& layer, const Matrix<double>& input,
                                     const Matrix<double>& grad_out, Dense<double>& grad, bool need_input = true) {
  grad.w.noalias() += input.transpose() * grad_out;
  grad.b += grad_out.colwise().sum();
  if (!need_input) return {};
  return grad_out * layer.w.transpose();
}

/// Routes B x 128 global gradients to the max-pool winners and back through the MLP.
/// Returns the gradient w.r.t. the input points when `need_input`.
inline Matrix<double> encoder_backward(const EncoderParams<double>& p, const EncoderCache& cache,
                                       const Matrix<double>& grad_global, EncoderParams<double>& grad,
                                       bool need_input) {
  Matrix<double> g3 = Matrix<double>::Zero(cache.h3.rows(), cache.h3.cols());
  for (int b = 0; b < cache.batch; ++b) {
    for (int j = 0; j < kGlobalWidth; ++j) {
      g3(cache.argmax[static_cast<std::size_t>(b) * kGlobalWidth + j], j) += grad_global(b, j);
    }
  }
  g3 = relu_backward(g3, cache.h3);
  Matrix<double> g2 = relu_backward(dense_backward(p.conv3, cache.h2, g3, grad.conv3), cache.h2);
  Matrix<double> g1 = relu_backward(dense_backward(p.conv2, cache.h1, g2, grad.conv2), cache.h1);
  return dense_backward(p.conv1, cache.input, g1, grad.conv1, need_input);
}

}  // namespace pcrd::nn
