#ifndef SGE_SGE_OP_HPP_
#define SGE_SGE_OP_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "sge/tensor.hpp"

namespace sge {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr int kDefaultGroups = 64;
inline constexpr double kDefaultGammaInit = 0.0;
inline constexpr double kDefaultBetaInit = 1.0;

/// Per-group scale/shift of the spatial gate. The only trainable state of
/// the operator: 2G parameters in total.
template <typename T>
struct SgeParams {
  std::vector<T> gamma;  // length G
  std::vector<T> beta;   // length G
  T epsilon = T(kDefaultEpsilon);
  int groups = 0;
  // Replaces the normalized coefficient by the raw similarity when false
  // (the "w/o norm" ablation).
  bool normalize = true;

  /// gamma = 0, beta = 1 for every group.
  static SgeParams defaults(int groups);

  void validate() const;
};

/// Every intermediate of the forward pass, retained for backward.
/// Per (sample, group): the mean feature g, raw similarities c, their
/// moments, the normalized/affine coefficients and the sigmoid gate.
template <typename T>
struct SgeForwardCache {
  Tensor4<T> input;            // forward input, (N, C, H, W)
  std::vector<T> g_vec;        // (N, G, C/G)
  std::vector<T> c;            // (N, G, m)
  std::vector<T> mu_c;         // (N, G)
  std::vector<T> sigma_c;      // (N, G)
  std::vector<T> c_hat;        // (N, G, m); equals c when normalize is off
  std::vector<T> a;            // (N, G, m)
  std::vector<T> gate;         // (N, G, m)
  int groups = 0;
  bool normalized = true;

  int per_group_channels() const { return input.shape().c / groups; }
  int positions() const { return input.shape().positions(); }

  std::size_t cell_offset(int n, int g) const {
    return (static_cast<std::size_t>(n) * groups + g) *
           static_cast<std::size_t>(positions());
  }
  std::size_t moment_offset(int n, int g) const {
    return static_cast<std::size_t>(n) * groups + g;
  }
};

template <typename T>
struct SgeGradients {
  Tensor4<T> d_input;      // same shape as the forward input
  std::vector<T> d_gamma;  // length G
  std::vector<T> d_beta;   // length G
};

/// One position's similarity split into lengths and angle:
/// c_i = |g| * |x_i| * cos(theta_i).
template <typename T>
struct SimilarityRecord {
  T g_norm;
  T x_norm;
  T cos_theta;
};

/// Forward pass. Per sample and group: spatial mean g, similarities
/// c_i = g . x_i, spatial standardization of c with denominator
/// (sigma_c + epsilon), affine a_i = gamma * c_hat_i + beta, and the output
/// x_i * sigmoid(a_i). Output shape equals input shape; the cache holds all
/// intermediates.
template <typename T>
std::pair<Tensor4<T>, SgeForwardCache<T>> sge_forward(
    const Tensor4<T>& fm, const SgeParams<T>& params);

/// Analytic gradients of sum(d_output * output) with respect to the input,
/// gamma and beta. Differentiates the full composition, including the
/// dependence of the spatial moments and the group mean on the input;
/// epsilon is treated as a constant.
template <typename T>
SgeGradients<T> sge_backward(const SgeForwardCache<T>& cache,
                             const Tensor4<T>& d_output,
                             const SgeParams<T>& params);

/// Per-position decomposition of the cached similarities for one
/// (sample, group) cell. cos(theta) is defined as 0 when either vector has
/// zero length.
template <typename T>
std::vector<SimilarityRecord<T>> similarity_decomposition(
    const SgeForwardCache<T>& cache, int n, int g);

/// Trainable parameter count of one operator instance: exactly 2G.
std::int64_t count_params(int channels, int groups);

/// Closed-form multiply-add count of one forward pass. Convention, per
/// (sample, group) with D = C/G and m = H*W:
///   spatial mean        m*D      (one MA per accumulated element)
///   dot products        m*D
///   moments mu, sigma   2*m
///   normalization       m        (one per position)
///   affine a_i          m
///   sigmoid gate        m        (counted as 1 per position)
///   output scaling      m*D
/// Total: N * H * W * (3*C + 5*G).
std::int64_t count_flops(int batch, int channels, int height, int width,
                         int groups);

}  // namespace sge

#endif  // SGE_SGE_OP_HPP_
