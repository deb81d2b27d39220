#include "sge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace sge {

LayerSpec LayerSpec::conv(int out_channels, int kernel) {
  if (out_channels <= 0 || kernel <= 0) {
    throw InvalidArgument("conv spec: out_channels and kernel must be > 0");
  }
  LayerSpec s;
  s.kind = LayerKind::Conv;
  s.out_channels = out_channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}

LayerSpec LayerSpec::maxpool(int size) {
  if (size <= 0) throw InvalidArgument("maxpool spec: size must be > 0");
  LayerSpec s;
  s.kind = LayerKind::MaxPool;
  s.pool = size;
  return s;
}

LayerSpec LayerSpec::sge(int groups, double epsilon, bool normalize) {
  if (groups <= 0) throw InvalidArgument("sge spec: groups must be > 0");
  if (!(epsilon > 0.0)) throw InvalidArgument("sge spec: epsilon must be > 0");
  LayerSpec s;
  s.kind = LayerKind::Sge;
  s.groups = groups;
  s.epsilon = epsilon;
  s.normalize = normalize;
  return s;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec s;
  s.kind = LayerKind::GlobalAvgPool;
  return s;
}

LayerSpec LayerSpec::dense(int units) {
  if (units <= 0) throw InvalidArgument("dense spec: units must be > 0");
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.units = units;
  return s;
}

namespace {

void require_plane(const Shape4& got, const Shape4& want,
                   const std::string& who) {
  if (got.c != want.c || got.h != want.h || got.w != want.w) {
    throw ShapeIncompatible(who + ": expected per-sample shape (" +
                            std::to_string(want.c) + "," +
                            std::to_string(want.h) + "," +
                            std::to_string(want.w) + "), got " + got.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv: square kernel, stride 1, no padding.

template <typename T>
class ConvLayer final : public Layer<T> {
 public:
  ConvLayer(std::string name, int in_channels, int out_channels, int kernel)
      : Layer<T>(std::move(name)),
        in_c_(in_channels),
        out_c_(out_channels),
        k_(kernel) {
    weight_.name = this->name() + ".weight";
    weight_.value.assign(
        static_cast<std::size_t>(out_c_) * in_c_ * k_ * k_, T(0));
    weight_.grad.assign(weight_.value.size(), T(0));
    weight_.dims = {static_cast<std::uint32_t>(out_c_),
                    static_cast<std::uint32_t>(in_c_),
                    static_cast<std::uint32_t>(k_),
                    static_cast<std::uint32_t>(k_)};
    bias_.name = this->name() + ".bias";
    bias_.value.assign(out_c_, T(0));
    bias_.grad.assign(out_c_, T(0));
    bias_.dims = {static_cast<std::uint32_t>(out_c_)};
  }

  LayerKind kind() const override { return LayerKind::Conv; }

  Shape4 output_shape(const Shape4& in) const override {
    if (in.c != in_c_) {
      throw ShapeIncompatible(this->name() + ": expects " +
                              std::to_string(in_c_) + " input channels, got " +
                              in.str());
    }
    if (in.h < k_ || in.w < k_) {
      throw ShapeIncompatible(this->name() + ": kernel " + std::to_string(k_) +
                              " does not fit input " + in.str());
    }
    return Shape4{in.n, out_c_, in.h - k_ + 1, in.w - k_ + 1};
  }

  void init(std::mt19937_64& rng) override {
    const double fan_in = static_cast<double>(in_c_) * k_ * k_;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (T& v : weight_.value) v = static_cast<T>(dist(rng));
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    const Shape4 out_shape = output_shape(in.shape());
    input_ = in;
    Tensor4<T> out(out_shape);
    const int oh = out_shape.h, ow = out_shape.w;
    const int ih = in.shape().h, iw = in.shape().w;
    for (int n = 0; n < out_shape.n; ++n) {
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x) {
            double acc = bias_.value[oc];
            for (int ic = 0; ic < in_c_; ++ic) {
              const T* in_plane = in.data() +
                  (static_cast<std::size_t>(n) * in_c_ + ic) * ih * iw;
              const T* w_plane = weight_.value.data() +
                  (static_cast<std::size_t>(oc) * in_c_ + ic) * k_ * k_;
              for (int ky = 0; ky < k_; ++ky) {
                const T* row = in_plane + (y + ky) * iw + x;
                const T* wrow = w_plane + ky * k_;
                for (int kx = 0; kx < k_; ++kx) {
                  acc += static_cast<double>(row[kx]) * wrow[kx];
                }
              }
            }
            out.at(n, oc, y, x) = static_cast<T>(acc);
          }
        }
      }
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    const Shape4& in_s = input_.shape();
    const Shape4& out_s = d_out.shape();
    Tensor4<T> d_in(in_s);
    const int ih = in_s.h, iw = in_s.w;
    for (int n = 0; n < out_s.n; ++n) {
      for (int oc = 0; oc < out_c_; ++oc) {
        for (int y = 0; y < out_s.h; ++y) {
          for (int x = 0; x < out_s.w; ++x) {
            const double g = d_out.at(n, oc, y, x);
            if (g == 0.0) continue;
            bias_.grad[oc] += static_cast<T>(g);
            for (int ic = 0; ic < in_c_; ++ic) {
              const T* in_plane = input_.data() +
                  (static_cast<std::size_t>(n) * in_c_ + ic) * ih * iw;
              T* din_plane = d_in.data() +
                  (static_cast<std::size_t>(n) * in_c_ + ic) * ih * iw;
              T* wg_plane = weight_.grad.data() +
                  (static_cast<std::size_t>(oc) * in_c_ + ic) * k_ * k_;
              const T* w_plane = weight_.value.data() +
                  (static_cast<std::size_t>(oc) * in_c_ + ic) * k_ * k_;
              for (int ky = 0; ky < k_; ++ky) {
                const int row = (y + ky) * iw + x;
                for (int kx = 0; kx < k_; ++kx) {
                  wg_plane[ky * k_ + kx] +=
                      static_cast<T>(g * in_plane[row + kx]);
                  din_plane[row + kx] +=
                      static_cast<T>(g * w_plane[ky * k_ + kx]);
                }
              }
            }
          }
        }
      }
    }
    return d_in;
  }

  std::vector<ParamTensor<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int in_c_, out_c_, k_;
  ParamTensor<T> weight_;  // (out_c, in_c, k, k) row-major
  ParamTensor<T> bias_;
  Tensor4<T> input_{Shape4{1, 1, 1, 1}};
};

// ---------------------------------------------------------------------------

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::Relu; }
  Shape4 output_shape(const Shape4& in) const override { return in; }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    mask_.assign(in.size(), false);
    Tensor4<T> out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const bool on = in.data()[i] > T(0);
      mask_[i] = on;
      out.data()[i] = on ? in.data()[i] : T(0);
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    Tensor4<T> d_in(d_out.shape());
    for (std::size_t i = 0; i < d_out.size(); ++i) {
      d_in.data()[i] = mask_[i] ? d_out.data()[i] : T(0);
    }
    return d_in;
  }

 private:
  std::vector<char> mask_;
};

// ---------------------------------------------------------------------------

template <typename T>
class MaxPoolLayer final : public Layer<T> {
 public:
  MaxPoolLayer(std::string name, int pool)
      : Layer<T>(std::move(name)), p_(pool) {}
  LayerKind kind() const override { return LayerKind::MaxPool; }

  Shape4 output_shape(const Shape4& in) const override {
    if (in.h % p_ != 0 || in.w % p_ != 0) {
      throw ShapeIncompatible(this->name() + ": window " + std::to_string(p_) +
                              " must tile the input exactly, got " + in.str());
    }
    return Shape4{in.n, in.c, in.h / p_, in.w / p_};
  }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    const Shape4 out_s = output_shape(in.shape());
    in_shape_ = in.shape();
    Tensor4<T> out(out_s);
    argmax_.assign(out.size(), 0);
    const int iw = in.shape().w;
    std::size_t oi = 0;
    for (int n = 0; n < out_s.n; ++n) {
      for (int c = 0; c < out_s.c; ++c) {
        const T* plane = in.data() +
            (static_cast<std::size_t>(n) * out_s.c + c) * in.shape().h * iw;
        for (int y = 0; y < out_s.h; ++y) {
          for (int x = 0; x < out_s.w; ++x, ++oi) {
            int best = (y * p_) * iw + x * p_;
            T best_v = plane[best];
            for (int ky = 0; ky < p_; ++ky) {
              for (int kx = 0; kx < p_; ++kx) {
                const int idx = (y * p_ + ky) * iw + (x * p_ + kx);
                if (plane[idx] > best_v) {
                  best_v = plane[idx];
                  best = idx;
                }
              }
            }
            argmax_[oi] = best;
            out.data()[oi] = best_v;
          }
        }
      }
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    Tensor4<T> d_in(in_shape_);
    const Shape4& out_s = d_out.shape();
    const std::size_t plane_size =
        static_cast<std::size_t>(in_shape_.h) * in_shape_.w;
    std::size_t oi = 0;
    for (int n = 0; n < out_s.n; ++n) {
      for (int c = 0; c < out_s.c; ++c) {
        T* plane = d_in.data() +
            (static_cast<std::size_t>(n) * out_s.c + c) * plane_size;
        for (int i = 0; i < out_s.h * out_s.w; ++i, ++oi) {
          plane[argmax_[oi]] += d_out.data()[oi];
        }
      }
    }
    return d_in;
  }

 private:
  int p_;
  Shape4 in_shape_{1, 1, 1, 1};
  std::vector<int> argmax_;  // per output cell, index into its input plane
};

// ---------------------------------------------------------------------------

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Sge: return "sge";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Dense: return "dense";
  }
  throw InvalidArgument("layer_kind_name: unknown kind");
}

// ---------------------------------------------------------------------------

template <typename T>
class GlobalAvgPoolLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  LayerKind kind() const override { return LayerKind::GlobalAvgPool; }
  Shape4 output_shape(const Shape4& in) const override {
    return Shape4{in.n, in.c, 1, 1};
  }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    in_shape_ = in.shape();
    const int m = in_shape_.positions();
    Tensor4<T> out(output_shape(in_shape_));
    const std::size_t planes = static_cast<std::size_t>(in_shape_.n) * in_shape_.c;
    for (std::size_t p = 0; p < planes; ++p) {
      double acc = 0.0;
      const T* plane = in.data() + p * m;
      for (int i = 0; i < m; ++i) acc += plane[i];
      out.data()[p] = static_cast<T>(acc / m);
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    Tensor4<T> d_in(in_shape_);
    const int m = in_shape_.positions();
    const std::size_t planes = static_cast<std::size_t>(in_shape_.n) * in_shape_.c;
    for (std::size_t p = 0; p < planes; ++p) {
      const T g = static_cast<T>(static_cast<double>(d_out.data()[p]) / m);
      T* plane = d_in.data() + p * m;
      for (int i = 0; i < m; ++i) plane[i] = g;
    }
    return d_in;
  }

 private:
  Shape4 in_shape_{1, 1, 1, 1};
};

// ---------------------------------------------------------------------------

template <typename T>
class DenseLayer final : public Layer<T> {
 public:
  DenseLayer(std::string name, int in_features, int units)
      : Layer<T>(std::move(name)), in_f_(in_features), units_(units) {
    weight_.name = this->name() + ".weight";
    weight_.value.assign(static_cast<std::size_t>(units_) * in_f_, T(0));
    weight_.grad.assign(weight_.value.size(), T(0));
    weight_.dims = {static_cast<std::uint32_t>(units_),
                    static_cast<std::uint32_t>(in_f_)};
    bias_.name = this->name() + ".bias";
    bias_.value.assign(units_, T(0));
    bias_.grad.assign(units_, T(0));
    bias_.dims = {static_cast<std::uint32_t>(units_)};
  }

  LayerKind kind() const override { return LayerKind::Dense; }

  Shape4 output_shape(const Shape4& in) const override {
    const std::int64_t f =
        static_cast<std::int64_t>(in.c) * in.h * in.w;
    if (f != in_f_) {
      throw ShapeIncompatible(this->name() + ": expects " +
                              std::to_string(in_f_) + " features, got " +
                              in.str());
    }
    return Shape4{in.n, units_, 1, 1};
  }

  void init(std::mt19937_64& rng) override {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in_f_));
    for (T& v : weight_.value) v = static_cast<T>(dist(rng));
    std::fill(bias_.value.begin(), bias_.value.end(), T(0));
  }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    input_ = in;
    const int n_count = in.shape().n;
    Tensor4<T> out(Shape4{n_count, units_, 1, 1});
    for (int n = 0; n < n_count; ++n) {
      const T* x = in.data() + static_cast<std::size_t>(n) * in_f_;
      for (int u = 0; u < units_; ++u) {
        const T* w = weight_.value.data() + static_cast<std::size_t>(u) * in_f_;
        double acc = bias_.value[u];
        for (int f = 0; f < in_f_; ++f) acc += static_cast<double>(w[f]) * x[f];
        out.data()[static_cast<std::size_t>(n) * units_ + u] =
            static_cast<T>(acc);
      }
    }
    return out;
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    const int n_count = d_out.shape().n;
    Tensor4<T> d_in(input_.shape());
    for (int n = 0; n < n_count; ++n) {
      const T* x = input_.data() + static_cast<std::size_t>(n) * in_f_;
      T* dx = d_in.data() + static_cast<std::size_t>(n) * in_f_;
      for (int u = 0; u < units_; ++u) {
        const double g =
            d_out.data()[static_cast<std::size_t>(n) * units_ + u];
        bias_.grad[u] += static_cast<T>(g);
        const T* w = weight_.value.data() + static_cast<std::size_t>(u) * in_f_;
        T* wg = weight_.grad.data() + static_cast<std::size_t>(u) * in_f_;
        for (int f = 0; f < in_f_; ++f) {
          wg[f] += static_cast<T>(g * x[f]);
          dx[f] += static_cast<T>(g * w[f]);
        }
      }
    }
    return d_in;
  }

  std::vector<ParamTensor<T>*> params() override { return {&weight_, &bias_}; }

 private:
  int in_f_, units_;
  ParamTensor<T> weight_;  // (units, in_features)
  ParamTensor<T> bias_;
  Tensor4<T> input_{Shape4{1, 1, 1, 1}};
};

// ---------------------------------------------------------------------------

template <typename T>
Model<T>::Model(std::vector<std::unique_ptr<Layer<T>>> layers,
                std::vector<Shape4> shapes)
    : layers_(std::move(layers)), shapes_(std::move(shapes)) {}

template <typename T>
Tensor4<T> Model<T>::forward(const Tensor4<T>& x) {
  require_plane(x.shape(), shapes_.front(), "model input");
  Tensor4<T> cur = x;
  for (auto& l : layers_) cur = l->forward(cur);
  return cur;
}

template <typename T>
Tensor4<T> Model<T>::backward(const Tensor4<T>& d_out) {
  require_plane(d_out.shape(), shapes_.back(), "model cotangent");
  Tensor4<T> cur = d_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    cur = (*it)->backward(cur);
  }
  return cur;
}

template <typename T>
void Model<T>::init_params(std::mt19937_64& rng) {
  for (auto& l : layers_) l->init(rng);
}

template <typename T>
void Model<T>::zero_grads() {
  for (ParamTensor<T>* p : parameters()) {
    std::fill(p->grad.begin(), p->grad.end(), T(0));
  }
}

template <typename T>
Layer<T>& Model<T>::layer(std::string_view name) {
  for (auto& l : layers_) {
    if (l->name() == name) return *l;
  }
  throw LayerNotFound("no layer named '" + std::string(name) + "'");
}

template <typename T>
const Layer<T>& Model<T>::layer(std::string_view name) const {
  return const_cast<Model<T>*>(this)->layer(name);
}

template <typename T>
bool Model<T>::has_layer(std::string_view name) const {
  for (const auto& l : layers_) {
    if (l->name() == name) return true;
  }
  return false;
}

template <typename T>
std::vector<ParamTensor<T>*> Model<T>::parameters() {
  std::vector<ParamTensor<T>*> out;
  for (auto& l : layers_) {
    for (ParamTensor<T>* p : l->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::int64_t Model<T>::param_count() const {
  std::int64_t total = 0;
  for (const auto& l : layers_) {
    for (ParamTensor<T>* p : const_cast<Layer<T>&>(*l).params()) {
      total += static_cast<std::int64_t>(p->value.size());
    }
  }
  return total;
}

template <typename T>
Model<T> build_model(const Shape4& input_shape,
                     const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw InvalidArgument("build_model: no layers");
  std::vector<std::unique_ptr<Layer<T>>> layers;
  std::vector<Shape4> shapes{input_shape};
  int counts[6] = {0, 0, 0, 0, 0, 0};
  const char* prefixes[6] = {"conv", "relu", "pool", "sge", "gap", "dense"};

  for (const LayerSpec& s : specs) {
    const Shape4& in = shapes.back();
    const int idx = static_cast<int>(s.kind);
    const std::string name =
        std::string(prefixes[idx]) + std::to_string(++counts[idx]);
    std::unique_ptr<Layer<T>> layer;
    switch (s.kind) {
      case LayerKind::Conv:
        layer = std::make_unique<ConvLayer<T>>(name, in.c, s.out_channels,
                                               s.kernel);
        break;
      case LayerKind::Relu:
        layer = std::make_unique<ReluLayer<T>>(name);
        break;
      case LayerKind::MaxPool:
        layer = std::make_unique<MaxPoolLayer<T>>(name, s.pool);
        break;
      case LayerKind::Sge:
        layer = std::make_unique<SgeLayer<T>>(name, s.groups, s.epsilon,
                                              s.normalize);
        break;
      case LayerKind::GlobalAvgPool:
        layer = std::make_unique<GlobalAvgPoolLayer<T>>(name);
        break;
      case LayerKind::Dense: {
        const std::int64_t f = static_cast<std::int64_t>(in.c) * in.h * in.w;
        layer = std::make_unique<DenseLayer<T>>(name, static_cast<int>(f),
                                                s.units);
        break;
      }
    }
    shapes.push_back(layer->output_shape(in));  // throws ShapeIncompatible
    layers.push_back(std::move(layer));
  }
  return Model<T>(std::move(layers), std::move(shapes));
}

// ---------------------------------------------------------------------------

template <typename T>
LossResult<T> softmax_xent(const Tensor4<T>& logits,
                           const std::vector<int>& labels) {
  const Shape4& s = logits.shape();
  if (s.h != 1 || s.w != 1) {
    throw ShapeMismatch("softmax_xent: logits must be (N, K, 1, 1), got " +
                        s.str());
  }
  if (labels.size() != static_cast<std::size_t>(s.n)) {
    throw ShapeMismatch("softmax_xent: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(s.n) + " samples");
  }
  const int k = s.c;
  LossResult<T> r;
  r.d_logits = Tensor4<T>(s);
  r.predictions.resize(s.n);
  double loss_acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    if (labels[n] < 0 || labels[n] >= k) {
      throw InvalidArgument("softmax_xent: label " +
                            std::to_string(labels[n]) + " outside [0, " +
                            std::to_string(k) + ")");
    }
    const T* z = logits.data() + static_cast<std::size_t>(n) * k;
    double z_max = z[0];
    int arg = 0;
    for (int j = 1; j < k; ++j) {
      if (z[j] > z_max) {
        z_max = z[j];
        arg = j;
      }
    }
    r.predictions[n] = arg;
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - z_max);
    const double log_denom = std::log(denom);
    loss_acc += log_denom - (static_cast<double>(z[labels[n]]) - z_max);
    T* d = r.d_logits.data() + static_cast<std::size_t>(n) * k;
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - z_max) / denom;
      const double target = (j == labels[n]) ? 1.0 : 0.0;
      d[j] = static_cast<T>((p - target) / s.n);
    }
  }
  r.loss = loss_acc / s.n;
  return r;
}

// ---------------------------------------------------------------------------

template <typename T>
SgdOptimizer<T>::SgdOptimizer(Model<T>& model, SgdConfig cfg)
    : model_(&model), cfg_(cfg) {
  for (ParamTensor<T>* p : model.parameters()) {
    velocity_.emplace_back(p->value.size(), T(0));
  }
}

template <typename T>
void SgdOptimizer<T>::step() {
  auto params = model_->parameters();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor<T>* p = params[pi];
    const double wd = p->decay ? cfg_.weight_decay : 0.0;
    std::vector<T>& v = velocity_[pi];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + wd * p->value[i];
      const double vel = cfg_.momentum * static_cast<double>(v[i]) + g;
      v[i] = static_cast<T>(vel);
      p->value[i] = static_cast<T>(p->value[i] - cfg_.lr * vel);
    }
  }
}

// ---------------------------------------------------------------------------

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out << "epoch,split,loss,accuracy\n";
  char buf[96];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.8g,%.8g\n", r.epoch,
                  r.split.c_str(), r.loss, r.accuracy);
    out << buf;
  }
  return out.str();
}

namespace {

template <typename T>
std::pair<Tensor4<T>, std::vector<int>> gather_batch(
    const Dataset<T>& data, const std::vector<int>& order, int start,
    int count) {
  const Shape4& s = data.images.shape();
  Tensor4<T> batch(Shape4{count, s.c, s.h, s.w});
  std::vector<int> labels(count);
  const std::size_t sample_size = static_cast<std::size_t>(s.c) * s.h * s.w;
  for (int b = 0; b < count; ++b) {
    const int src = order[start + b];
    const T* from = data.images.data() + src * sample_size;
    std::copy(from, from + sample_size,
              batch.data() + static_cast<std::size_t>(b) * sample_size);
    labels[b] = data.labels[src];
  }
  return {std::move(batch), std::move(labels)};
}

}  // namespace

template <typename T>
std::pair<double, double> evaluate(Model<T>& model, const Dataset<T>& data,
                                   int batch_size) {
  if (data.size() == 0) throw InvalidArgument("evaluate: empty dataset");
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double loss_acc = 0.0;
  int correct = 0;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int count = std::min(batch_size, data.size() - start);
    auto [batch, labels] = gather_batch(data, order, start, count);
    Tensor4<T> logits = model.forward(batch);
    LossResult<T> r = softmax_xent(logits, labels);
    loss_acc += r.loss * count;
    for (int b = 0; b < count; ++b) {
      if (r.predictions[b] == labels[b]) ++correct;
    }
  }
  return {loss_acc / data.size(),
          static_cast<double>(correct) / data.size()};
}

template <typename T>
TrainReport train(Model<T>& model, const Dataset<T>& train_set,
                  const Dataset<T>& test_set, const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw InvalidArgument("train: negative epoch count");
  if (cfg.batch_size <= 0) throw InvalidArgument("train: batch_size must be > 0");
  if (train_set.size() == 0) throw InvalidArgument("train: empty training set");

  if (cfg.decay_gate_params) {
    for (const auto& l : model.layers()) {
      if (l->kind() == LayerKind::Sge) {
        for (ParamTensor<T>* p : l->params()) p->decay = true;
      }
    }
  }

  SgdConfig scfg;
  scfg.lr = cfg.lr;
  scfg.momentum = cfg.momentum;
  scfg.weight_decay = cfg.weight_decay;
  scfg.decay_gate_params = cfg.decay_gate_params;
  SgdOptimizer<T> opt(model, scfg);

  SeedStreams streams(cfg.seed);
  std::mt19937_64 shuffle_rng = streams.stream("shuffle");

  TrainReport report;
  auto record = [&](int epoch) {
    auto [train_loss, train_acc] = evaluate(model, train_set, cfg.batch_size);
    report.rows.push_back({epoch, "train", train_loss, train_acc});
    auto [test_loss, test_acc] = evaluate(model, test_set, cfg.batch_size);
    report.rows.push_back({epoch, "test", test_loss, test_acc});
    report.final_train_loss = train_loss;
    report.final_train_accuracy = train_acc;
    report.final_test_loss = test_loss;
    report.final_test_accuracy = test_acc;
  };
  record(0);

  const int decay_epoch =
      (cfg.lr_decay_at > 0.0 && cfg.lr_decay_factor != 1.0)
          ? static_cast<int>(cfg.epochs * cfg.lr_decay_at)
          : -1;

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (epoch - 1 == decay_epoch) opt.set_lr(opt.lr() * cfg.lr_decay_factor);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int start = 0; start < train_set.size(); start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, train_set.size() - start);
      auto [batch, labels] = gather_batch(train_set, order, start, count);
      model.zero_grads();
      Tensor4<T> logits = model.forward(batch);
      LossResult<T> r = softmax_xent(logits, labels);
      if (!std::isfinite(r.loss)) {
        throw DivergedLoss("train: loss went non-finite", step);
      }
      model.backward(r.d_logits);
      opt.step();
      ++step;
    }
    record(epoch);
  }
  return report;
}

// ---------------------------------------------------------------------------

template class Layer<float>;
template class Layer<double>;
template class Model<float>;
template class Model<double>;
template class SgdOptimizer<float>;
template class SgdOptimizer<double>;
template Model<float> build_model(const Shape4&, const std::vector<LayerSpec>&);
template Model<double> build_model(const Shape4&,
                                   const std::vector<LayerSpec>&);
template LossResult<float> softmax_xent(const Tensor4<float>&,
                                        const std::vector<int>&);
template LossResult<double> softmax_xent(const Tensor4<double>&,
                                         const std::vector<int>&);
template std::pair<double, double> evaluate(Model<float>&,
                                            const Dataset<float>&, int);
template std::pair<double, double> evaluate(Model<double>&,
                                            const Dataset<double>&, int);
template TrainReport train(Model<float>&, const Dataset<float>&,
                           const Dataset<float>&, const TrainConfig&);
template TrainReport train(Model<double>&, const Dataset<double>&,
                           const Dataset<double>&, const TrainConfig&);

}  // namespace sge
