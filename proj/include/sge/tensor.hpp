#ifndef SGE_TENSOR_HPP_
#define SGE_TENSOR_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "sge/errors.hpp"

namespace sge {

/// Shape of a rank-4 feature map, NCHW order.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t volume() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  int positions() const { return h * w; }

  bool operator==(const Shape4&) const = default;

  std::string str() const;
};

/// Dense rank-4 feature map, row-major with N outermost and W innermost.
/// Float for training/inference paths, double for verification paths.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;

  /// Zero-filled tensor. Shape components must be strictly positive.
  explicit Tensor4(Shape4 shape);

  /// Takes ownership of data; length must equal the shape volume and every
  /// entry must be finite.
  Tensor4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  /// Throws NonFiniteInput naming the first offending flat index.
  void check_finite(const char* context) const;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

/// Logical regrouping of a feature map into (batch, group, channel-in-group,
/// position) without copying. Shallow-const view semantics: the view itself
/// can be passed by const reference while still granting element access to
/// the underlying tensor.
template <typename T>
class GroupedView {
 public:
  GroupedView(Tensor4<T>& source, int groups);

  int batch() const { return source_->shape().n; }
  int groups() const { return groups_; }
  int per_group_channels() const { return per_group_channels_; }
  int positions() const { return positions_; }

  Tensor4<T>& source() const { return *source_; }

  /// Element (n, g, d, i) aliases source element
  /// (n, g * per_group_channels + d, i / W, i % W).
  T& operator()(int n, int g, int d, int i) const {
    const int w = source_->shape().w;
    return source_->at(n, g * per_group_channels_ + d, i / w, i % w);
  }

  void check_indices(int n, int g) const;

 private:
  Tensor4<T>* source_;
  int groups_ = 0;
  int per_group_channels_ = 0;
  int positions_ = 0;
};

/// Regroups fm into `groups` channel groups. Throws IndivisibleChannels if
/// the channel count is not a multiple of `groups`.
template <typename T>
GroupedView<T> group_split(Tensor4<T>& fm, int groups);

/// Materializes the view back into a standalone feature map with the source
/// shape. merge(split(fm, G)) equals fm bitwise.
template <typename T>
Tensor4<T> group_merge(const GroupedView<T>& view);

/// Arithmetic mean over spatial positions of one (sample, group) cell,
/// Eq. style: g[d] = (1/m) sum_i x_i[d]. Accumulates in 64-bit.
template <typename T>
std::vector<T> spatial_mean(const GroupedView<T>& view, int n, int g);

using FeatureMap = Tensor4<float>;
using FeatureMap64 = Tensor4<double>;

}  // namespace sge

#endif  // SGE_TENSOR_HPP_
