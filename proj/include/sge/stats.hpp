// Diagnostics around the gating layer. "Activation value" of a position is
// the Euclidean length of its sub-feature vector; Pre/Post name the feature
// map entering the gate layer versus the gated map it emits. Variance
// distributions and histograms compare the two phases on the same model.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sge/nn.hpp"
#include "sge/tensor.hpp"

namespace sge {

enum class Phase { Pre, Post };
const char* phase_name(Phase phase);

// Per-position activation lengths ||x_i|| of one (sample, group) cell,
// row-major over positions. Throws IndexOutOfRange.
template <typename T>
std::vector<T> activation_lengths(const GroupedView<T>& view, int n, int g);

// (v - min) / (max - min); an all-equal input maps to all zeros so that
// downstream renderings stay valid. Throws InvalidArgument on empty input.
template <typename T>
std::vector<T> normalize_unit_interval(std::vector<T> values);

struct GroupVarianceRow {
  int group;
  double mean_variance;  // mean over samples of Var_i(length_i)
  double std_variance;   // population std of that variance across samples
};

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;
  int bins() const { return static_cast<int>(counts.size()); }
  std::int64_t total() const;
};

// Both phases of the gate site captured from one forward pass.
template <typename T>
struct ActivationCapture {
  Tensor4<T> input;   // what the gate layer saw
  Tensor4<T> output;  // what it emitted
  int groups = 0;
};

// Runs a forward pass and captures the named gate layer's input and output.
// Throws LayerNotFound when the name is missing or not a gate layer.
template <typename T>
ActivationCapture<T> capture_activations(Model<T>& model,
                                         std::string_view layer_name,
                                         const Tensor4<T>& batch);

// Per-group spread of activation lengths on one feature map: per sample, the
// population variance of lengths over positions; then mean and population
// std of that across the batch axis.
template <typename T>
std::vector<GroupVarianceRow> group_variance_distribution(const Tensor4<T>& fm,
                                                          int groups);

// Dataset-level version: feeds `data` through the model in batches and
// aggregates over every sample, for the requested phase of `layer_name`.
template <typename T>
std::vector<GroupVarianceRow> group_variance_distribution(
    Model<T>& model, const Dataset<T>& data, std::string_view layer_name,
    Phase phase, int batch_size = 64);

// All activation lengths of one group across a feature map, sample-major.
template <typename T>
std::vector<double> collect_lengths(const Tensor4<T>& fm, int groups,
                                    int group);

// Aligned fixed-width histograms over the joint min-max range of both value
// sets, so mass shifts are comparable. Needs bins >= 2 (BadBinCount
// otherwise); a degenerate joint range puts everything in the first bin.
std::pair<Histogram, Histogram> aligned_histograms(
    const std::vector<double>& pre_values,
    const std::vector<double>& post_values, int bins);

// Dataset-level pre/post histogram of one group's activation lengths.
template <typename T>
std::pair<Histogram, Histogram> activation_histogram(
    Model<T>& model, const Dataset<T>& data, std::string_view layer_name,
    int group, int bins, int batch_size = 64);

inline constexpr int kDefaultHistogramBins = 64;

// CSV schemas used by the reporting tools.
// header: group,mean_variance,std_variance,phase
std::string variance_csv(const std::vector<GroupVarianceRow>& pre,
                         const std::vector<GroupVarianceRow>& post);
// header: bin_low,bin_high,count_pre,count_post  (shared binning required)
std::string histogram_csv(const Histogram& pre, const Histogram& post);

}  // namespace sge
