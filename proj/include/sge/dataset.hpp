// Synthetic single-channel shape classification set. Each image carries one
// 5x5 class pattern at a random position plus distractor fragments cropped
// from class stencils and gaussian pixel noise, then a per-image
// contrast/brightness jitter. Fragments make purely local evidence
// ambiguous, and the jitter defeats fixed activation thresholds —
// suppression has to adapt to each image, which is precisely what spatially
// selective gating can do.
#pragma once

#include <cstdint>
#include <string_view>

#include "sge/nn.hpp"

namespace sge {

inline constexpr int kToyClassCount = 4;
inline constexpr int kToyPatternSize = 5;

// Class names, label order: plus, cross, ring, stripes.
const char* toy_class_name(int label);

struct ToyDataConfig {
  int train_count = 256;
  int test_count = 512;
  int image_size = 16;
  double noise_sigma = 0.25;
  int clutter_blobs = 3;
  // Per-image transform a*pixel + b with a ~ U(1-cj, 1+cj), b ~ U(-oj, oj).
  double contrast_jitter = 0.8;  // in [0, 1)
  double offset_jitter = 0.5;    // >= 0
  std::uint64_t seed = 0;

  void validate() const;
};

// split is "train" or "test"; each draws from its own named substream of
// cfg.seed, so the two splits never share samples and either can be
// regenerated alone.
template <typename T>
Dataset<T> make_toy_dataset(const ToyDataConfig& cfg, std::string_view split);

}  // namespace sge
