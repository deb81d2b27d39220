#include "sge/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sge/errors.hpp"

namespace sge {

const char* phase_name(Phase phase) {
  return phase == Phase::Pre ? "pre" : "post";
}

std::int64_t Histogram::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts) t += c;
  return t;
}

template <typename T>
std::vector<T> activation_lengths(const GroupedView<T>& view, int n, int g) {
  view.check_indices(n, g);
  const int d_count = view.per_group_channels();
  const int m = view.positions();
  std::vector<T> lengths(m);
  for (int i = 0; i < m; ++i) {
    double sq = 0.0;
    for (int d = 0; d < d_count; ++d) {
      const double v = view(n, g, d, i);
      sq += v * v;
    }
    lengths[i] = static_cast<T>(std::sqrt(sq));
  }
  return lengths;
}

template <typename T>
std::vector<T> normalize_unit_interval(std::vector<T> values) {
  if (values.empty()) {
    throw InvalidArgument("normalize_unit_interval: need at least one value");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const T lo = *lo_it;
  const T hi = *hi_it;
  if (!(hi > lo)) {
    std::fill(values.begin(), values.end(), T(0));
    return values;
  }
  const T range = hi - lo;
  for (T& v : values) v = (v - lo) / range;
  return values;
}

namespace {

// Per-sample population variance of one group's lengths over positions.
template <typename T>
double length_variance(const GroupedView<T>& view, int n, int g) {
  const std::vector<T> lengths = activation_lengths(view, n, g);
  double mean = 0.0;
  for (const T& v : lengths) mean += v;
  mean /= lengths.size();
  double var = 0.0;
  for (const T& v : lengths) {
    const double dev = v - mean;
    var += dev * dev;
  }
  return var / lengths.size();
}

std::vector<GroupVarianceRow> reduce_variances(
    const std::vector<std::vector<double>>& per_group) {
  std::vector<GroupVarianceRow> rows(per_group.size());
  for (std::size_t g = 0; g < per_group.size(); ++g) {
    const auto& vs = per_group[g];
    double mean = 0.0;
    for (double v : vs) mean += v;
    mean /= vs.size();
    double var = 0.0;
    for (double v : vs) var += (v - mean) * (v - mean);
    rows[g] = {static_cast<int>(g), mean, std::sqrt(var / vs.size())};
  }
  return rows;
}

}  // namespace

template <typename T>
ActivationCapture<T> capture_activations(Model<T>& model,
                                         std::string_view layer_name,
                                         const Tensor4<T>& batch) {
  Layer<T>& layer = model.layer(layer_name);  // throws LayerNotFound
  auto* gate_layer = dynamic_cast<SgeLayer<T>*>(&layer);
  if (gate_layer == nullptr) {
    throw LayerNotFound("capture_activations: layer '" +
                        std::string(layer_name) + "' is not a gate layer");
  }
  model.forward(batch);
  const SgeForwardCache<T>& cache = gate_layer->cache();

  ActivationCapture<T> cap;
  cap.input = cache.input;
  cap.groups = cache.groups;
  cap.output = Tensor4<T>(cache.input.shape());
  const Shape4& s = cap.input.shape();
  const int d_count = s.c / cap.groups;
  const int m = s.positions();
  const T* x = cap.input.data();
  T* y = cap.output.data();
  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < cap.groups; ++g) {
      const T* gate = cache.gate.data() + cache.cell_offset(n, g);
      const std::size_t base =
          (static_cast<std::size_t>(n) * s.c +
           static_cast<std::size_t>(g) * d_count) * m;
      for (int d = 0; d < d_count; ++d) {
        for (int i = 0; i < m; ++i) {
          y[base + static_cast<std::size_t>(d) * m + i] = static_cast<T>(
              x[base + static_cast<std::size_t>(d) * m + i] * gate[i]);
        }
      }
    }
  }
  return cap;
}

template <typename T>
std::vector<GroupVarianceRow> group_variance_distribution(const Tensor4<T>& fm,
                                                          int groups) {
  Tensor4<T> copy = fm;  // the view needs mutable access; keep fm untouched
  GroupedView<T> view = group_split(copy, groups);
  std::vector<std::vector<double>> per_group(groups);
  for (int g = 0; g < groups; ++g) {
    per_group[g].reserve(fm.shape().n);
    for (int n = 0; n < fm.shape().n; ++n) {
      per_group[g].push_back(length_variance(view, n, g));
    }
  }
  return reduce_variances(per_group);
}

namespace {

template <typename T>
Tensor4<T> slice_batch(const Dataset<T>& data, int start, int count) {
  const Shape4& s = data.images.shape();
  Tensor4<T> batch(Shape4{count, s.c, s.h, s.w});
  const std::size_t sample = static_cast<std::size_t>(s.c) * s.h * s.w;
  std::copy(data.images.data() + start * sample,
            data.images.data() + (start + count) * sample, batch.data());
  return batch;
}

}  // namespace

template <typename T>
std::vector<GroupVarianceRow> group_variance_distribution(
    Model<T>& model, const Dataset<T>& data, std::string_view layer_name,
    Phase phase, int batch_size) {
  if (batch_size <= 0) {
    throw InvalidArgument("group_variance_distribution: batch_size must be > 0");
  }
  std::vector<std::vector<double>> per_group;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int count = std::min(batch_size, data.size() - start);
    ActivationCapture<T> cap =
        capture_activations(model, layer_name, slice_batch(data, start, count));
    if (per_group.empty()) per_group.resize(cap.groups);
    Tensor4<T>& fm = (phase == Phase::Pre) ? cap.input : cap.output;
    GroupedView<T> view = group_split(fm, cap.groups);
    for (int g = 0; g < cap.groups; ++g) {
      for (int n = 0; n < count; ++n) {
        per_group[g].push_back(length_variance(view, n, g));
      }
    }
  }
  if (per_group.empty()) {
    throw InvalidArgument("group_variance_distribution: empty dataset");
  }
  return reduce_variances(per_group);
}

template <typename T>
std::vector<double> collect_lengths(const Tensor4<T>& fm, int groups,
                                    int group) {
  Tensor4<T> copy = fm;
  GroupedView<T> view = group_split(copy, groups);
  view.check_indices(0, group);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(fm.shape().n) * view.positions());
  for (int n = 0; n < fm.shape().n; ++n) {
    for (const T& v : activation_lengths(view, n, group)) {
      out.push_back(static_cast<double>(v));
    }
  }
  return out;
}

std::pair<Histogram, Histogram> aligned_histograms(
    const std::vector<double>& pre_values,
    const std::vector<double>& post_values, int bins) {
  if (bins < 2) {
    throw BadBinCount("aligned_histograms: need at least 2 bins, got " +
                      std::to_string(bins));
  }
  if (pre_values.empty() || post_values.empty()) {
    throw InvalidArgument("aligned_histograms: both value sets must be nonempty");
  }
  double lo = pre_values[0];
  double hi = pre_values[0];
  for (const auto* vs : {&pre_values, &post_values}) {
    for (double v : *vs) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  Histogram pre, post;
  pre.lo = post.lo = lo;
  pre.hi = post.hi = hi;
  pre.counts.assign(bins, 0);
  post.counts.assign(bins, 0);
  const double width = (hi > lo) ? (hi - lo) / bins : 0.0;
  auto fill = [&](const std::vector<double>& vs, Histogram& h) {
    for (double v : vs) {
      int b = (width > 0.0) ? static_cast<int>((v - lo) / width) : 0;
      if (b < 0) b = 0;
      if (b >= bins) b = bins - 1;
      ++h.counts[b];
    }
  };
  fill(pre_values, pre);
  fill(post_values, post);
  return {pre, post};
}

template <typename T>
std::pair<Histogram, Histogram> activation_histogram(
    Model<T>& model, const Dataset<T>& data, std::string_view layer_name,
    int group, int bins, int batch_size) {
  if (batch_size <= 0) {
    throw InvalidArgument("activation_histogram: batch_size must be > 0");
  }
  std::vector<double> pre_lengths, post_lengths;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int count = std::min(batch_size, data.size() - start);
    ActivationCapture<T> cap =
        capture_activations(model, layer_name, slice_batch(data, start, count));
    for (double v : collect_lengths(cap.input, cap.groups, group)) {
      pre_lengths.push_back(v);
    }
    for (double v : collect_lengths(cap.output, cap.groups, group)) {
      post_lengths.push_back(v);
    }
  }
  return aligned_histograms(pre_lengths, post_lengths, bins);
}

std::string variance_csv(const std::vector<GroupVarianceRow>& pre,
                         const std::vector<GroupVarianceRow>& post) {
  std::ostringstream out;
  out << "group,mean_variance,std_variance,phase\n";
  char buf[128];
  for (const Phase phase : {Phase::Pre, Phase::Post}) {
    const auto& rows = (phase == Phase::Pre) ? pre : post;
    for (const GroupVarianceRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.8g,%.8g,%s\n", r.group,
                    r.mean_variance, r.std_variance, phase_name(phase));
      out << buf;
    }
  }
  return out.str();
}

std::string histogram_csv(const Histogram& pre, const Histogram& post) {
  if (pre.bins() != post.bins() || pre.lo != post.lo || pre.hi != post.hi) {
    throw InvalidArgument(
        "histogram_csv: pre and post histograms must share binning");
  }
  std::ostringstream out;
  out << "bin_low,bin_high,count_pre,count_post\n";
  const double width = (pre.hi - pre.lo) / pre.bins();
  char buf[160];
  for (int b = 0; b < pre.bins(); ++b) {
    const double lo = pre.lo + b * width;
    const double hi = (b == pre.bins() - 1) ? pre.hi : pre.lo + (b + 1) * width;
    std::snprintf(buf, sizeof(buf), "%.8g,%.8g,%lld,%lld\n", lo, hi,
                  static_cast<long long>(pre.counts[b]),
                  static_cast<long long>(post.counts[b]));
    out << buf;
  }
  return out.str();
}

template std::vector<float> activation_lengths(const GroupedView<float>&, int,
                                               int);
template std::vector<double> activation_lengths(const GroupedView<double>&,
                                                int, int);
template std::vector<float> normalize_unit_interval(std::vector<float>);
template std::vector<double> normalize_unit_interval(std::vector<double>);
template struct ActivationCapture<float>;
template struct ActivationCapture<double>;
template ActivationCapture<float> capture_activations(Model<float>&,
                                                      std::string_view,
                                                      const Tensor4<float>&);
template ActivationCapture<double> capture_activations(Model<double>&,
                                                       std::string_view,
                                                       const Tensor4<double>&);
template std::vector<GroupVarianceRow> group_variance_distribution(
    const Tensor4<float>&, int);
template std::vector<GroupVarianceRow> group_variance_distribution(
    const Tensor4<double>&, int);
template std::vector<GroupVarianceRow> group_variance_distribution(
    Model<float>&, const Dataset<float>&, std::string_view, Phase, int);
template std::vector<GroupVarianceRow> group_variance_distribution(
    Model<double>&, const Dataset<double>&, std::string_view, Phase, int);
template std::vector<double> collect_lengths(const Tensor4<float>&, int, int);
template std::vector<double> collect_lengths(const Tensor4<double>&, int, int);
template std::pair<Histogram, Histogram> activation_histogram(
    Model<float>&, const Dataset<float>&, std::string_view, int, int, int);
template std::pair<Histogram, Histogram> activation_histogram(
    Model<double>&, const Dataset<double>&, std::string_view, int, int, int);

}  // namespace sge
