#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "pcrd/synth.hpp"
#include "pcrd/training.hpp"

namespace pcrd::testing {

struct GradCheck {
  double worst = 0;
  std::string tensor;
  std::size_t tensors = 0;
  std::size_t entries = 0;
};

/// Central differences (h = 1e-4) on up to `per_tensor` entries of every weight and bias,
/// with every kink frozen at the analytic pass. Relative error |a - n| / (|a| + 1e-8).
template <typename Params, typename GradFn, typename ObjFn>
GradCheck check_gradients(Params p, const TrainBatch& batch, const TrainConfig& cfg, GradFn grads, ObjFn objective,
                          std::uint64_t seed, int per_tensor = 24) {
  nn::KinkTape tape;
  tape.record();
  Params g = zeros_like(p);
  grads(p, batch, cfg, g, &tape);
  std::vector<std::string> names;
  p.for_each([&](const std::string& n, const auto&) { names.push_back(n); });
  auto pl = detail::layer_pointers(p);
  auto gl = detail::layer_pointers(g);
  std::mt19937_64 rng(seed);
  GradCheck out;
  for (std::size_t l = 0; l < pl.size(); ++l) {
    for (int part = 0; part < 2; ++part) {
      double* w = part ? pl[l]->b.data() : pl[l]->w.data();
      const double* gw = part ? gl[l]->b.data() : gl[l]->w.data();
      const Eigen::Index size = part ? pl[l]->b.size() : pl[l]->w.size();
      ++out.tensors;
      std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
      const Eigen::Index count = std::min<Eigen::Index>(per_tensor, size);
      for (Eigen::Index s = 0; s < count; ++s) {
        const Eigen::Index i = size <= per_tensor ? s : pick(rng);
        const double orig = w[i], h = 1e-4;
        w[i] = orig + h;
        tape.replay();
        const double fp = objective(p, batch, cfg, &tape);
        w[i] = orig - h;
        tape.replay();
        const double fm = objective(p, batch, cfg, &tape);
        w[i] = orig;
        const double num = (fp - fm) / (2 * h);
        const double rel = std::abs(gw[i] - num) / (std::abs(gw[i]) + 1e-8);
        ++out.entries;
        if (rel > out.worst) {
          out.worst = rel;
          out.tensor = names[l] + (part ? ".bias" : ".weight");
        }
      }
    }
  }
  return out;
}

/// Both networks on a 10-item batch (6 ID, 4 OOD) with both energy hinges active.
struct GradCheckPair {
  GradCheck classifier, box;
};

inline GradCheckPair check_both_networks(std::uint64_t seed, int per_tensor = 24) {
  ProposalConfig pcfg;
  pcfg.n_points = 16;
  const auto data = synth_dataset(SynthConfig{}, pcfg, seed, 6, 4);
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto batch = make_batch(data, idx, pcfg);
  TrainConfig cfg;
  cfg.margin_id = -1;
  cfg.margin_ood = 1;
  ClassifierParams<double> cp;
  init_params(cp, seed * 2);
  BoxParams<double> bp;
  init_params(bp, seed * 2 + 1);
  GradCheckPair out;
  out.classifier = check_gradients(
      cp, batch, cfg, [](auto& p, auto& b, auto& c, auto& g, auto* t) { return classifier_gradients(p, b, c, g, t); },
      [](auto& p, auto& b, auto& c, auto* t) { return classifier_objective(p, b, c, t); }, seed, per_tensor);
  out.box = check_gradients(
      bp, batch, cfg, [](auto& p, auto& b, auto& c, auto& g, auto* t) { return box_gradients(p, b, c, g, t); },
      [](auto& p, auto& b, auto& c, auto* t) { return box_objective(p, b, c, t); }, seed, per_tensor);
  return out;
}

}  // namespace pcrd::testing
