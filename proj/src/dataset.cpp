#include "sge/dataset.hpp"

#include <random>
#include <string>

#include "sge/errors.hpp"
#include "sge/rng.hpp"

namespace sge {

namespace {

// 5x5 stencils, one per class.
constexpr int kP = kToyPatternSize;
constexpr char kPatterns[kToyClassCount][kP][kP + 1] = {
    {
        // plus
        "..#..",
        "..#..",
        "#####",
        "..#..",
        "..#..",
    },
    {
        // cross (diagonals)
        "#...#",
        ".#.#.",
        "..#..",
        ".#.#.",
        "#...#",
    },
    {
        // ring (hollow square)
        "#####",
        "#...#",
        "#...#",
        "#...#",
        "#####",
    },
    {
        // stripes
        "#####",
        ".....",
        "#####",
        ".....",
        "#####",
    },
};

}  // namespace

const char* toy_class_name(int label) {
  switch (label) {
    case 0: return "plus";
    case 1: return "cross";
    case 2: return "ring";
    case 3: return "stripes";
  }
  throw IndexOutOfRange("toy_class_name: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(kToyClassCount) + ")");
}

void ToyDataConfig::validate() const {
  if (train_count <= 0 || test_count <= 0) {
    throw InvalidArgument("toy dataset: counts must be > 0");
  }
  if (image_size < kToyPatternSize) {
    throw InvalidArgument("toy dataset: image_size must be at least " +
                          std::to_string(kToyPatternSize));
  }
  if (noise_sigma < 0.0) {
    throw InvalidArgument("toy dataset: noise_sigma must be >= 0");
  }
  if (clutter_blobs < 0) {
    throw InvalidArgument("toy dataset: clutter_blobs must be >= 0");
  }
  if (contrast_jitter < 0.0 || contrast_jitter >= 1.0) {
    throw InvalidArgument(
        "toy dataset: contrast_jitter must be in [0, 1) to keep contrast "
        "positive");
  }
  if (offset_jitter < 0.0) {
    throw InvalidArgument("toy dataset: offset_jitter must be >= 0");
  }
}

template <typename T>
Dataset<T> make_toy_dataset(const ToyDataConfig& cfg, std::string_view split) {
  cfg.validate();
  int count;
  std::string stream_name;
  if (split == "train") {
    count = cfg.train_count;
    stream_name = "data-train";
  } else if (split == "test") {
    count = cfg.test_count;
    stream_name = "data-test";
  } else {
    throw InvalidArgument("toy dataset: split must be 'train' or 'test', got '" +
                          std::string(split) + "'");
  }

  std::mt19937_64 rng = SeedStreams(cfg.seed).stream(stream_name);
  const int sz = cfg.image_size;
  std::uniform_int_distribution<int> pos(0, sz - kP);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Dataset<T> data{Tensor4<T>(Shape4{count, 1, sz, sz}), {}};
  data.labels.resize(count);

  for (int i = 0; i < count; ++i) {
    const int label = i % kToyClassCount;  // balanced classes
    data.labels[i] = label;
    T* img = data.images.data() + static_cast<std::size_t>(i) * sz * sz;

    for (int p = 0; p < sz * sz; ++p) img[p] = static_cast<T>(noise(rng));

    // Distractors are 3x3 fragments of class stencils: locally they look
    // like pattern evidence, so telling them from the real pattern needs
    // more than a per-position detector.
    constexpr int kFrag = 3;
    for (int b = 0; b < cfg.clutter_blobs; ++b) {
      const int src = static_cast<int>(rng() % kToyClassCount);
      std::uniform_int_distribution<int> crop(0, kP - kFrag);
      const int cy = crop(rng);
      const int cx = crop(rng);
      std::uniform_int_distribution<int> place(0, sz - kFrag);
      const int y0 = place(rng);
      const int x0 = place(rng);
      for (int y = 0; y < kFrag; ++y) {
        for (int x = 0; x < kFrag; ++x) {
          if (kPatterns[src][cy + y][cx + x] == '#') {
            img[(y0 + y) * sz + x0 + x] = T(1);
          }
        }
      }
    }

    // Pattern last, so clutter never corrupts the class evidence.
    const int y0 = pos(rng);
    const int x0 = pos(rng);
    for (int y = 0; y < kP; ++y) {
      for (int x = 0; x < kP; ++x) {
        if (kPatterns[label][y][x] == '#') img[(y0 + y) * sz + x0 + x] = T(1);
      }
    }

    const double contrast = 1.0 + cfg.contrast_jitter * unit(rng);
    const double offset = cfg.offset_jitter * unit(rng);
    for (int p = 0; p < sz * sz; ++p) {
      img[p] = static_cast<T>(contrast * img[p] + offset);
    }
  }
  return data;
}

template Dataset<float> make_toy_dataset(const ToyDataConfig&,
                                         std::string_view);
template Dataset<double> make_toy_dataset(const ToyDataConfig&,
                                          std::string_view);

}  // namespace sge
