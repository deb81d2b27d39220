// Minimal CNN harness: enough of a layer stack to train a small classifier
// and study the gating layer inside it. Layers cache what their backward
// pass needs; call order is forward, then backward, then optimizer step.
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sge/errors.hpp"
#include "sge/rng.hpp"
#include "sge/sge_op.hpp"
#include "sge/tensor.hpp"

namespace sge {

enum class LayerKind { Conv, Relu, MaxPool, Sge, GlobalAvgPool, Dense };

// Declarative layer description; build_model turns a list of these into a
// Model once the input shape is known.
struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;  // Conv
  int kernel = 0;        // Conv: square window, stride 1, no padding
  int pool = 0;          // MaxPool: window and stride
  int groups = 0;        // Sge
  double epsilon = kDefaultEpsilon;
  bool normalize = true;
  int units = 0;  // Dense

  static LayerSpec conv(int out_channels, int kernel);
  static LayerSpec relu();
  static LayerSpec maxpool(int size);
  static LayerSpec sge(int groups, double epsilon = kDefaultEpsilon,
                       bool normalize = true);
  static LayerSpec global_avg_pool();
  static LayerSpec dense(int units);
};

// One learnable tensor. `decay` marks weight-decay eligibility; the gate
// layer's gamma/beta default to exempt. `dims` is the logical shape
// (product equals value.size()), recorded in checkpoints.
template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<std::uint32_t> dims;
  bool decay = true;
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual LayerKind kind() const = 0;

  // Shape the layer produces for `in`; throws ShapeIncompatible when the
  // layer cannot consume it.
  virtual Shape4 output_shape(const Shape4& in) const = 0;

  virtual Tensor4<T> forward(const Tensor4<T>& in) = 0;
  // Returns d_input and accumulates parameter gradients (+=).
  virtual Tensor4<T> backward(const Tensor4<T>& d_out) = 0;

  virtual std::vector<ParamTensor<T>*> params() { return {}; }
  // Draws initial weights; layers without weights must not touch the rng so
  // that models differing only in no-weight layers share initializations.
  virtual void init(std::mt19937_64& /*rng*/) {}

 private:
  std::string name_;
};

// The gating layer. Public (unlike the other layers, which live behind
// build_model) because stats capture and checkpointing read its cache and
// configuration through a dynamic_cast from Layer.
template <typename T>
class SgeLayer final : public Layer<T> {
 public:
  SgeLayer(std::string name, int groups, double epsilon, bool normalize)
      : Layer<T>(std::move(name)),
        groups_(groups),
        epsilon_(epsilon),
        normalize_(normalize) {
    gamma_.name = this->name() + ".gamma";
    gamma_.value.assign(groups_, T(kDefaultGammaInit));
    gamma_.grad.assign(groups_, T(0));
    gamma_.dims = {static_cast<std::uint32_t>(groups_)};
    gamma_.decay = false;
    beta_.name = this->name() + ".beta";
    beta_.value.assign(groups_, T(kDefaultBetaInit));
    beta_.grad.assign(groups_, T(0));
    beta_.dims = {static_cast<std::uint32_t>(groups_)};
    beta_.decay = false;
  }

  LayerKind kind() const override { return LayerKind::Sge; }

  Shape4 output_shape(const Shape4& in) const override {
    if (in.c % groups_ != 0) {
      throw ShapeIncompatible(this->name() + ": " + std::to_string(groups_) +
                              " groups do not divide " + std::to_string(in.c) +
                              " channels");
    }
    return in;
  }

  // No rng draw: a model with this layer removed sees identical weights.
  void init(std::mt19937_64& /*rng*/) override {
    std::fill(gamma_.value.begin(), gamma_.value.end(), T(kDefaultGammaInit));
    std::fill(beta_.value.begin(), beta_.value.end(), T(kDefaultBetaInit));
  }

  Tensor4<T> forward(const Tensor4<T>& in) override {
    auto [out, cache] = sge_forward(in, current_params());
    cache_ = std::move(cache);
    has_cache_ = true;
    return std::move(out);
  }

  Tensor4<T> backward(const Tensor4<T>& d_out) override {
    SgeGradients<T> g = sge_backward(cache(), d_out, current_params());
    for (int i = 0; i < groups_; ++i) {
      gamma_.grad[i] += g.d_gamma[i];
      beta_.grad[i] += g.d_beta[i];
    }
    return std::move(g.d_input);
  }

  std::vector<ParamTensor<T>*> params() override { return {&gamma_, &beta_}; }

  SgeParams<T> current_params() const {
    SgeParams<T> p;
    p.groups = groups_;
    p.gamma = gamma_.value;
    p.beta = beta_.value;
    p.epsilon = static_cast<T>(epsilon_);
    p.normalize = normalize_;
    return p;
  }

  // Cache of the most recent forward pass; throws StaleCache before any.
  const SgeForwardCache<T>& cache() const {
    if (!has_cache_) {
      throw StaleCache(this->name() + ": no forward pass has run yet");
    }
    return cache_;
  }

  int groups() const { return groups_; }
  double epsilon() const { return epsilon_; }
  bool normalize() const { return normalize_; }

 private:
  int groups_;
  double epsilon_;
  bool normalize_;
  ParamTensor<T> gamma_, beta_;
  SgeForwardCache<T> cache_;
  bool has_cache_ = false;
};

const char* layer_kind_name(LayerKind kind);

template <typename T>
class Model {
 public:
  Model(std::vector<std::unique_ptr<Layer<T>>> layers,
        std::vector<Shape4> shapes);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& d_out);

  void init_params(std::mt19937_64& rng);  // layer order, single stream
  void zero_grads();

  Layer<T>& layer(std::string_view name);  // throws LayerNotFound
  const Layer<T>& layer(std::string_view name) const;
  bool has_layer(std::string_view name) const;
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const {
    return layers_;
  }

  std::vector<ParamTensor<T>*> parameters();
  std::int64_t param_count() const;

  const Shape4& input_shape() const { return shapes_.front(); }
  const Shape4& output_shape() const { return shapes_.back(); }
  // Inferred shape after layer i (0 = model input).
  const std::vector<Shape4>& shapes() const { return shapes_; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<Shape4> shapes_;
};

// Builds the stack and runs shape inference for batch size 1; per-call batch
// sizes may differ at forward time. Names layers kind + 1-based index of that
// kind: conv1, conv2, relu1, pool1, sge1, gap1, dense1.
template <typename T>
Model<T> build_model(const Shape4& input_shape,
                     const std::vector<LayerSpec>& specs);

// Softmax cross entropy over logits shaped (N, K, 1, 1); labels in [0, K).
template <typename T>
struct LossResult {
  double loss = 0.0;            // mean over the batch
  Tensor4<T> d_logits;          // gradient of the mean loss
  std::vector<int> predictions;  // argmax per sample
};

template <typename T>
LossResult<T> softmax_xent(const Tensor4<T>& logits,
                           const std::vector<int>& labels);

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool decay_gate_params = false;  // include gamma/beta in weight decay
};

// Classic SGD: v = momentum * v + (grad + wd * value); value -= lr * v.
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer(Model<T>& model, SgdConfig cfg);
  void step();
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

 private:
  Model<T>* model_;
  SgdConfig cfg_;
  std::vector<std::vector<T>> velocity_;
};

template <typename T>
struct Dataset {
  Tensor4<T> images;
  std::vector<int> labels;
  int size() const { return images.shape().n; }
};

struct TrainConfig {
  int epochs = 60;
  int batch_size = 8;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool decay_gate_params = false;
  // lr is multiplied by lr_decay_factor once, at epoch
  // floor(epochs * lr_decay_at) (0 disables the drop).
  double lr_decay_factor = 0.1;
  double lr_decay_at = 2.0 / 3.0;
  std::uint64_t seed = 0;  // base seed; shuffling uses the "shuffle" stream
};

struct EpochRow {
  int epoch;          // 0 = before any update
  std::string split;  // "train" or "test"
  double loss;
  double accuracy;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
  double final_test_loss = 0.0;
  double final_test_accuracy = 0.0;
  std::string to_csv() const;  // header: epoch,split,loss,accuracy
};

template <typename T>
std::pair<double, double> evaluate(Model<T>& model, const Dataset<T>& data,
                                   int batch_size);  // (loss, accuracy)

// Runs SGD training; rows include an epoch-0 evaluation of both splits made
// before the first update. Throws DivergedLoss when a batch loss goes
// non-finite.
template <typename T>
TrainReport train(Model<T>& model, const Dataset<T>& train_set,
                  const Dataset<T>& test_set, const TrainConfig& cfg);

}  // namespace sge
