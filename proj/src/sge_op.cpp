#include "sge/sge_op.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace sge {

namespace {

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

}  // namespace

template <typename T>
SgeParams<T> SgeParams<T>::defaults(int groups) {
  SgeParams<T> p;
  p.groups = groups;
  p.gamma.assign(groups, T(kDefaultGammaInit));
  p.beta.assign(groups, T(kDefaultBetaInit));
  p.epsilon = T(kDefaultEpsilon);
  return p;
}

template <typename T>
void SgeParams<T>::validate() const {
  if (groups <= 0) {
    throw InvalidArgument("SgeParams: groups must be strictly positive, got " +
                          std::to_string(groups));
  }
  if (gamma.size() != static_cast<std::size_t>(groups) ||
      beta.size() != static_cast<std::size_t>(groups)) {
    throw InvalidArgument("SgeParams: gamma/beta must each have exactly " +
                          std::to_string(groups) + " entries, got " +
                          std::to_string(gamma.size()) + "/" +
                          std::to_string(beta.size()));
  }
  if (!(epsilon > T(0))) {
    throw InvalidArgument("SgeParams: epsilon must be > 0");
  }
}

template <typename T>
std::pair<Tensor4<T>, SgeForwardCache<T>> sge_forward(
    const Tensor4<T>& fm, const SgeParams<T>& params) {
  params.validate();
  const Shape4& s = fm.shape();
  if (s.c % params.groups != 0) {
    throw IndivisibleChannels(s.c, params.groups);
  }
  fm.check_finite("sge_forward");

  const int groups = params.groups;
  const int d_count = s.c / groups;
  const int m = s.positions();
  const std::size_t cells = static_cast<std::size_t>(s.n) * groups;

  SgeForwardCache<T> cache;
  cache.input = fm;
  cache.groups = groups;
  cache.normalized = params.normalize;
  cache.g_vec.resize(cells * d_count);
  cache.c.resize(cells * m);
  cache.mu_c.resize(cells);
  cache.sigma_c.resize(cells);
  cache.c_hat.resize(cells * m);
  cache.a.resize(cells * m);
  cache.gate.resize(cells * m);

  Tensor4<T> out(s);
  const T* x = fm.data();
  T* y = out.data();

  // Channel planes are contiguous runs of m values, so each (n, group) cell
  // is d_count consecutive planes.
  std::vector<double> c_acc(m);
  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t cell = static_cast<std::size_t>(n) * groups + g;
      const std::size_t base =
          (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(g) * d_count) * m;
      T* g_vec = cache.g_vec.data() + cell * d_count;

      for (int d = 0; d < d_count; ++d) {
        const T* plane = x + base + static_cast<std::size_t>(d) * m;
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += plane[i];
        g_vec[d] = static_cast<T>(acc / m);
      }

      for (int i = 0; i < m; ++i) c_acc[i] = 0.0;
      for (int d = 0; d < d_count; ++d) {
        const T* plane = x + base + static_cast<std::size_t>(d) * m;
        const double gd = g_vec[d];
        for (int i = 0; i < m; ++i) c_acc[i] += gd * plane[i];
      }
      T* c = cache.c.data() + cell * m;
      for (int i = 0; i < m; ++i) c[i] = static_cast<T>(c_acc[i]);

      double mu_acc = 0.0;
      for (int i = 0; i < m; ++i) mu_acc += c[i];
      const double mu = mu_acc / m;
      double var_acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const double dev = c[i] - mu;
        var_acc += dev * dev;
      }
      const double sigma = std::sqrt(var_acc / m);
      cache.mu_c[cell] = static_cast<T>(mu);
      cache.sigma_c[cell] = static_cast<T>(sigma);

      const double gamma = params.gamma[g];
      const double beta = params.beta[g];
      const double inv = 1.0 / (sigma + static_cast<double>(params.epsilon));
      T* c_hat = cache.c_hat.data() + cell * m;
      T* a = cache.a.data() + cell * m;
      T* gate = cache.gate.data() + cell * m;
      for (int i = 0; i < m; ++i) {
        const double ch = params.normalize ? (c[i] - mu) * inv
                                           : static_cast<double>(c[i]);
        const double ai = gamma * ch + beta;
        c_hat[i] = static_cast<T>(ch);
        a[i] = static_cast<T>(ai);
        gate[i] = static_cast<T>(sigmoid(ai));
      }

      for (int d = 0; d < d_count; ++d) {
        const T* plane = x + base + static_cast<std::size_t>(d) * m;
        T* out_plane = y + base + static_cast<std::size_t>(d) * m;
        for (int i = 0; i < m; ++i) {
          out_plane[i] = static_cast<T>(plane[i] * gate[i]);
        }
      }
    }
  }

  return {std::move(out), std::move(cache)};
}

template <typename T>
SgeGradients<T> sge_backward(const SgeForwardCache<T>& cache,
                             const Tensor4<T>& d_output,
                             const SgeParams<T>& params) {
  params.validate();
  if (cache.groups != params.groups ||
      cache.input.shape().c % params.groups != 0) {
    throw StaleCache("sge_backward: cache was built for " +
                     std::to_string(cache.groups) + " groups, params carry " +
                     std::to_string(params.groups));
  }
  if (!(d_output.shape() == cache.input.shape())) {
    throw ShapeMismatch("sge_backward: d_output shape " +
                        d_output.shape().str() +
                        " does not match forward input shape " +
                        cache.input.shape().str());
  }
  if (cache.normalized != params.normalize) {
    throw StaleCache("sge_backward: cache normalize flag disagrees with params");
  }

  const Shape4& s = cache.input.shape();
  const int groups = params.groups;
  const int d_count = s.c / groups;
  const int m = s.positions();

  SgeGradients<T> grads;
  grads.d_input = Tensor4<T>(s);
  grads.d_gamma.assign(groups, T(0));
  grads.d_beta.assign(groups, T(0));

  const T* x = cache.input.data();
  const T* dy = d_output.data();
  T* dx = grads.d_input.data();

  std::vector<double> d_gamma_acc(groups, 0.0);
  std::vector<double> d_beta_acc(groups, 0.0);
  std::vector<double> t(m);  // dy_i . x_i
  std::vector<double> v(m);  // gamma * t_i * gate'(a_i)
  std::vector<double> w(m);  // dL/dc_i

  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t cell = static_cast<std::size_t>(n) * groups + g;
      const std::size_t base =
          (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(g) * d_count) * m;
      const T* g_vec = cache.g_vec.data() + cell * d_count;
      const T* c_hat = cache.c_hat.data() + cell * m;
      const T* gate = cache.gate.data() + cell * m;
      const double gamma = params.gamma[g];
      const double sigma = cache.sigma_c[cell];
      const double inv = 1.0 / (sigma + static_cast<double>(params.epsilon));

      for (int i = 0; i < m; ++i) t[i] = 0.0;
      for (int d = 0; d < d_count; ++d) {
        const T* x_plane = x + base + static_cast<std::size_t>(d) * m;
        const T* dy_plane = dy + base + static_cast<std::size_t>(d) * m;
        for (int i = 0; i < m; ++i) {
          t[i] += static_cast<double>(dy_plane[i]) * x_plane[i];
        }
      }

      double vc_acc = 0.0;  // sum_i v_i * c_hat_i
      double v_acc = 0.0;   // sum_i v_i
      for (int i = 0; i < m; ++i) {
        const double si = gate[i];
        const double u = t[i] * si * (1.0 - si);
        d_beta_acc[g] += u;
        d_gamma_acc[g] += u * c_hat[i];
        v[i] = gamma * u;
        v_acc += v[i];
        vc_acc += v[i] * c_hat[i];
      }

      // dL/dc through the standardization. The sigma term differentiates
      // sigma as sqrt of the population variance; at sigma == 0 that term
      // vanishes together with (c_i - mu), so it is dropped there, which is
      // the exact derivative of the composite at that point.
      if (params.normalize) {
        const double v_mean = v_acc / m;
        const double vc_mean = vc_acc / m;
        if (sigma > 0.0) {
          for (int i = 0; i < m; ++i) {
            w[i] = inv * (v[i] - v_mean) - (c_hat[i] / sigma) * vc_mean;
          }
        } else {
          for (int i = 0; i < m; ++i) {
            w[i] = inv * (v[i] - v_mean);
          }
        }
      } else {
        for (int i = 0; i < m; ++i) w[i] = v[i];
      }

      // dL/dx_j = dy_j * gate_j  +  w_j * g  +  (1/m) * sum_i w_i * x_i,
      // the three paths being the direct scaling, the dot product, and the
      // group mean.
      for (int d = 0; d < d_count; ++d) {
        const T* x_plane = x + base + static_cast<std::size_t>(d) * m;
        const T* dy_plane = dy + base + static_cast<std::size_t>(d) * m;
        T* dx_plane = dx + base + static_cast<std::size_t>(d) * m;
        double wx_acc = 0.0;
        for (int i = 0; i < m; ++i) wx_acc += w[i] * x_plane[i];
        const double mean_wx = wx_acc / m;
        const double gd = g_vec[d];
        for (int i = 0; i < m; ++i) {
          dx_plane[i] = static_cast<T>(
              static_cast<double>(dy_plane[i]) * gate[i] + w[i] * gd + mean_wx);
        }
      }
    }
  }

  for (int g = 0; g < groups; ++g) {
    grads.d_gamma[g] = static_cast<T>(d_gamma_acc[g]);
    grads.d_beta[g] = static_cast<T>(d_beta_acc[g]);
  }
  return grads;
}

template <typename T>
std::vector<SimilarityRecord<T>> similarity_decomposition(
    const SgeForwardCache<T>& cache, int n, int g) {
  const Shape4& s = cache.input.shape();
  if (n < 0 || n >= s.n) {
    throw IndexOutOfRange("similarity_decomposition: batch index " +
                          std::to_string(n) + " out of range [0, " +
                          std::to_string(s.n) + ")");
  }
  if (g < 0 || g >= cache.groups) {
    throw IndexOutOfRange("similarity_decomposition: group index " +
                          std::to_string(g) + " out of range [0, " +
                          std::to_string(cache.groups) + ")");
  }

  const int d_count = cache.per_group_channels();
  const int m = cache.positions();
  const std::size_t cell = cache.moment_offset(n, g);
  const T* g_vec = cache.g_vec.data() + cell * d_count;
  const T* x = cache.input.data();
  const std::size_t base =
      (static_cast<std::size_t>(n) * s.c + static_cast<std::size_t>(g) * d_count) *
      static_cast<std::size_t>(m);

  double g_sq = 0.0;
  for (int d = 0; d < d_count; ++d) {
    g_sq += static_cast<double>(g_vec[d]) * g_vec[d];
  }
  const double g_norm = std::sqrt(g_sq);

  std::vector<SimilarityRecord<T>> records(m);
  for (int i = 0; i < m; ++i) {
    double x_sq = 0.0;
    double dot = 0.0;
    for (int d = 0; d < d_count; ++d) {
      const double xv = x[base + static_cast<std::size_t>(d) * m + i];
      x_sq += xv * xv;
      dot += static_cast<double>(g_vec[d]) * xv;
    }
    const double x_norm = std::sqrt(x_sq);
    double cos_theta = 0.0;
    if (g_norm > 0.0 && x_norm > 0.0) {
      cos_theta = dot / (g_norm * x_norm);
      if (cos_theta > 1.0) cos_theta = 1.0;
      if (cos_theta < -1.0) cos_theta = -1.0;
    }
    records[i] = {static_cast<T>(g_norm), static_cast<T>(x_norm),
                  static_cast<T>(cos_theta)};
  }
  return records;
}

std::int64_t count_params(int channels, int groups) {
  if (channels <= 0 || groups <= 0) {
    throw InvalidArgument("count_params: channels and groups must be positive");
  }
  if (channels % groups != 0) {
    throw IndivisibleChannels(channels, groups);
  }
  return 2 * static_cast<std::int64_t>(groups);
}

std::int64_t count_flops(int batch, int channels, int height, int width,
                         int groups) {
  if (batch <= 0 || height <= 0 || width <= 0) {
    throw InvalidArgument("count_flops: shape components must be positive");
  }
  (void)count_params(channels, groups);
  const std::int64_t m = static_cast<std::int64_t>(height) * width;
  return batch * m * (3 * static_cast<std::int64_t>(channels) + 5 * groups);
}

template struct SgeParams<float>;
template struct SgeParams<double>;
template std::pair<Tensor4<float>, SgeForwardCache<float>> sge_forward(
    const Tensor4<float>&, const SgeParams<float>&);
template std::pair<Tensor4<double>, SgeForwardCache<double>> sge_forward(
    const Tensor4<double>&, const SgeParams<double>&);
template SgeGradients<float> sge_backward(const SgeForwardCache<float>&,
                                          const Tensor4<float>&,
                                          const SgeParams<float>&);
template SgeGradients<double> sge_backward(const SgeForwardCache<double>&,
                                           const Tensor4<double>&,
                                           const SgeParams<double>&);
template std::vector<SimilarityRecord<float>> similarity_decomposition(
    const SgeForwardCache<float>&, int, int);
template std::vector<SimilarityRecord<double>> similarity_decomposition(
    const SgeForwardCache<double>&, int, int);

}  // namespace sge
