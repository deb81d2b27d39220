#include "sge/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sge {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

namespace {

void check_shape(const Shape4& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw InvalidArgument("shape components must be strictly positive, got " +
                          s.str());
  }
}

}  // namespace

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape) : shape_(shape) {
  check_shape(shape_);
  data_.assign(shape_.volume(), T(0));
}

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_.volume()) {
    throw InvalidArgument("data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }
  check_finite("Tensor4 construction");
}

template <typename T>
void Tensor4<T>::check_finite(const char* context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(static_cast<double>(data_[i]))) {
      throw NonFiniteInput(std::string(context) +
                           ": non-finite value at flat index " +
                           std::to_string(i));
    }
  }
}

template <typename T>
GroupedView<T>::GroupedView(Tensor4<T>& source, int groups)
    : source_(&source), groups_(groups) {
  if (groups <= 0) {
    throw InvalidArgument("groups must be strictly positive, got " +
                          std::to_string(groups));
  }
  const Shape4& s = source.shape();
  if (s.c % groups != 0) {
    throw IndivisibleChannels(s.c, groups);
  }
  per_group_channels_ = s.c / groups;
  positions_ = s.positions();
}

template <typename T>
void GroupedView<T>::check_indices(int n, int g) const {
  if (n < 0 || n >= batch()) {
    throw IndexOutOfRange("batch index " + std::to_string(n) +
                          " out of range [0, " + std::to_string(batch()) + ")");
  }
  if (g < 0 || g >= groups_) {
    throw IndexOutOfRange("group index " + std::to_string(g) +
                          " out of range [0, " + std::to_string(groups_) + ")");
  }
}

template <typename T>
GroupedView<T> group_split(Tensor4<T>& fm, int groups) {
  return GroupedView<T>(fm, groups);
}

template <typename T>
Tensor4<T> group_merge(const GroupedView<T>& view) {
  const Tensor4<T>& src = view.source();
  return Tensor4<T>(src.shape(), src.values());
}

template <typename T>
std::vector<T> spatial_mean(const GroupedView<T>& view, int n, int g) {
  view.check_indices(n, g);
  const int d_count = view.per_group_channels();
  const int m = view.positions();
  std::vector<T> mean(d_count);
  for (int d = 0; d < d_count; ++d) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      acc += static_cast<double>(view(n, g, d, i));
    }
    mean[d] = static_cast<T>(acc / m);
  }
  return mean;
}

template class Tensor4<float>;
template class Tensor4<double>;
template class GroupedView<float>;
template class GroupedView<double>;
template GroupedView<float> group_split(Tensor4<float>&, int);
template GroupedView<double> group_split(Tensor4<double>&, int);
template Tensor4<float> group_merge(const GroupedView<float>&);
template Tensor4<double> group_merge(const GroupedView<double>&);
template std::vector<float> spatial_mean(const GroupedView<float>&, int, int);
template std::vector<double> spatial_mean(const GroupedView<double>&, int, int);

}  // namespace sge
