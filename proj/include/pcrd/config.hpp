#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcrd/clustering.hpp"
#include "pcrd/ground.hpp"
#include "pcrd/networks.hpp"
#include "pcrd/projection.hpp"
#include "pcrd/proposals.hpp"
#include "pcrd/synth.hpp"
#include "pcrd/training.hpp"

namespace pcrd {

struct PipelineConfig {
  ProjectionConfig projection;
  GroundConfig ground;
  ClusterConfig cluster;
  ProposalConfig proposal;
  EnergyConfig energy{1.0, -14.0, -14.0};
  TrainConfig train;
  SynthConfig synth;
  int synth_id = 2000;   // training-set sizes
  int synth_ood = 2000;
  std::string classifier_weights;
  std::string box_weights;
  std::uint64_t seed = 1;

  void validate() const;
  /// Throws kConfig naming the first weight file that cannot be opened.
  void check_weight_files() const;

  /// Sets one dotted key from its text form; throws kConfig for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// "key = value" lines; '#' starts a comment. Later assignments win.
  static PipelineConfig parse(const std::string& text);
  /// Relative weight paths are resolved against the file's directory.
  static PipelineConfig load(const std::string& path);
  /// Every key in canonical order and number formatting.
  std::string serialize() const;
  void save(const std::string& path) const;
};

/// FNV-1a of the serialized configuration.
std::uint64_t config_hash(const PipelineConfig& cfg);

}  // namespace pcrd
