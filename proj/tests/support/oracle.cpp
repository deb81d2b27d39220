#include "support/oracle.hpp"

#include <cmath>

namespace sge::testing {

OracleResult oracle_sge_forward(const Tensor4<double>& x,
                                const std::vector<double>& gamma,
                                const std::vector<double>& beta, double epsilon,
                                int groups, bool normalize) {
  const Shape4 s = x.shape();
  const int d_count = s.c / groups;
  const int m = s.h * s.w;

  OracleResult r;
  r.output = Tensor4<double>(s);
  r.g_vec.assign(static_cast<std::size_t>(s.n) * groups * d_count, 0.0);
  r.c.assign(static_cast<std::size_t>(s.n) * groups * m, 0.0);
  r.mu_c.assign(static_cast<std::size_t>(s.n) * groups, 0.0);
  r.sigma_c.assign(static_cast<std::size_t>(s.n) * groups, 0.0);
  r.c_hat.assign(static_cast<std::size_t>(s.n) * groups * m, 0.0);
  r.a.assign(static_cast<std::size_t>(s.n) * groups * m, 0.0);
  r.gate.assign(static_cast<std::size_t>(s.n) * groups * m, 0.0);

  auto cell = [&](int n, int g) {
    return (static_cast<std::size_t>(n) * groups + g) * static_cast<std::size_t>(m);
  };
  auto moment = [&](int n, int g) {
    return static_cast<std::size_t>(n) * groups + g;
  };

  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      // g = (1/m) * sum_i x_i
      for (int d = 0; d < d_count; ++d) {
        double sum = 0.0;
        for (int h = 0; h < s.h; ++h) {
          for (int w = 0; w < s.w; ++w) {
            sum += x.at(n, g * d_count + d, h, w);
            r.multiply_adds += 1;
          }
        }
        r.g_vec[moment(n, g) * d_count + d] = sum / m;
      }

      // c_i = g . x_i
      for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
          const int i = h * s.w + w;
          double dot = 0.0;
          for (int d = 0; d < d_count; ++d) {
            dot += r.g_vec[moment(n, g) * d_count + d] *
                   x.at(n, g * d_count + d, h, w);
            r.multiply_adds += 1;
          }
          r.c[cell(n, g) + i] = dot;
        }
      }

      // mu_c = (1/m) * sum_j c_j
      double mu = 0.0;
      for (int i = 0; i < m; ++i) {
        mu += r.c[cell(n, g) + i];
        r.multiply_adds += 1;
      }
      mu /= m;
      r.mu_c[moment(n, g)] = mu;

      // sigma_c^2 = (1/m) * sum_j (c_j - mu)^2
      double var = 0.0;
      for (int i = 0; i < m; ++i) {
        const double dev = r.c[cell(n, g) + i] - mu;
        var += dev * dev;
        r.multiply_adds += 1;
      }
      var /= m;
      const double sigma = std::sqrt(var);
      r.sigma_c[moment(n, g)] = sigma;

      // c_hat_i = (c_i - mu) / (sigma + eps), a_i, gate_i
      for (int i = 0; i < m; ++i) {
        double ch;
        if (normalize) {
          ch = (r.c[cell(n, g) + i] - mu) / (sigma + epsilon);
        } else {
          ch = r.c[cell(n, g) + i];
        }
        r.multiply_adds += 1;
        const double ai = gamma[g] * ch + beta[g];
        r.multiply_adds += 1;
        const double gi = 1.0 / (1.0 + std::exp(-ai));
        r.multiply_adds += 1;
        r.c_hat[cell(n, g) + i] = ch;
        r.a[cell(n, g) + i] = ai;
        r.gate[cell(n, g) + i] = gi;
      }

      // x_hat_i = x_i * gate_i
      for (int d = 0; d < d_count; ++d) {
        for (int h = 0; h < s.h; ++h) {
          for (int w = 0; w < s.w; ++w) {
            const int i = h * s.w + w;
            r.output.at(n, g * d_count + d, h, w) =
                x.at(n, g * d_count + d, h, w) * r.gate[cell(n, g) + i];
            r.multiply_adds += 1;
          }
        }
      }
    }
  }
  return r;
}

std::vector<double> oracle_spatial_mean(const Tensor4<double>& x, int groups,
                                        int n, int g) {
  const Shape4 s = x.shape();
  const int d_count = s.c / groups;
  std::vector<double> mean(d_count, 0.0);
  for (int d = 0; d < d_count; ++d) {
    double sum = 0.0;
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        sum += x.at(n, g * d_count + d, h, w);
      }
    }
    mean[d] = sum / (s.h * s.w);
  }
  return mean;
}

std::vector<double> oracle_activation_lengths(const Tensor4<double>& x,
                                              int groups, int n, int g) {
  const Shape4 s = x.shape();
  const int d_count = s.c / groups;
  std::vector<double> lengths(static_cast<std::size_t>(s.h) * s.w, 0.0);
  for (int h = 0; h < s.h; ++h) {
    for (int w = 0; w < s.w; ++w) {
      double sq = 0.0;
      for (int d = 0; d < d_count; ++d) {
        const double v = x.at(n, g * d_count + d, h, w);
        sq += v * v;
      }
      lengths[static_cast<std::size_t>(h) * s.w + w] = std::sqrt(sq);
    }
  }
  return lengths;
}

}  // namespace sge::testing
