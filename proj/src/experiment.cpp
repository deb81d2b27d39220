#include "sge/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sge/errors.hpp"
#include "sge/rng.hpp"

namespace sge {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidArgument(std::string(what) + " must be finite");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  data.validate();
  if (use_gate && groups < 1) {
    throw InvalidArgument("groups must be >= 1, got " +
                          std::to_string(groups));
  }
  require_finite(gamma_init, "gamma_init");
  require_finite(beta_init, "beta_init");
  if (train.epochs < 0) {
    throw InvalidArgument("epochs must be >= 0");
  }
  if (train.batch_size < 1) {
    throw InvalidArgument("batch_size must be >= 1");
  }
  if (!(train.lr > 0.0) || !(train.momentum >= 0.0) ||
      !(train.weight_decay >= 0.0)) {
    throw InvalidArgument("lr must be > 0; momentum and weight_decay >= 0");
  }
}

std::vector<LayerSpec> toy_layer_specs(const ExperimentConfig& cfg) {
  std::vector<LayerSpec> specs{
      LayerSpec::conv(8, 3),  LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv(16, 3), LayerSpec::relu(),
  };
  if (cfg.use_gate) {
    specs.push_back(
        LayerSpec::sge(cfg.groups, kDefaultEpsilon, cfg.normalize));
  }
  specs.push_back(LayerSpec::global_avg_pool());
  specs.push_back(LayerSpec::dense(kToyClassCount));
  return specs;
}

Model<float> build_experiment_model(const ExperimentConfig& cfg) {
  cfg.validate();
  const Shape4 input{1, 1, cfg.data.image_size, cfg.data.image_size};
  Model<float> model = build_model<float>(input, toy_layer_specs(cfg));
  SeedStreams streams(cfg.seed);
  std::mt19937_64 wrng = streams.stream("weights");
  model.init_params(wrng);
  if (cfg.use_gate) {
    for (ParamTensor<float>* p : model.layer(kGateLayerName).params()) {
      const bool is_gamma = p->name.size() >= 6 &&
                            p->name.compare(p->name.size() - 6, 6, ".gamma") == 0;
      std::fill(p->value.begin(), p->value.end(),
                static_cast<float>(is_gamma ? cfg.gamma_init : cfg.beta_init));
    }
  }
  return model;
}

std::pair<Dataset<float>, Dataset<float>> make_experiment_data(
    const ExperimentConfig& cfg) {
  ToyDataConfig d = cfg.data;
  d.seed = cfg.seed;
  return {make_toy_dataset<float>(d, "train"),
          make_toy_dataset<float>(d, "test")};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Model<float> model = build_experiment_model(cfg);
  auto [train_set, test_set] = make_experiment_data(cfg);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainReport report = train(model, train_set, test_set, tc);
  return ExperimentResult{std::move(model), std::move(report)};
}

nlohmann::json experiment_config_json(const ExperimentConfig& cfg) {
  // Substream seeds all derive from the one experiment seed, so the nested
  // blocks carry no seed of their own.
  return {
      {"attention", cfg.use_gate ? "sge" : "none"},
      {"groups", cfg.groups},
      {"gamma_init", cfg.gamma_init},
      {"beta_init", cfg.beta_init},
      {"normalize", cfg.normalize},
      {"seed", cfg.seed},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"lr", cfg.train.lr},
        {"momentum", cfg.train.momentum},
        {"weight_decay", cfg.train.weight_decay},
        {"decay_gate_params", cfg.train.decay_gate_params},
        {"lr_decay_factor", cfg.train.lr_decay_factor},
        {"lr_decay_at", cfg.train.lr_decay_at}}},
      {"data",
       {{"train_count", cfg.data.train_count},
        {"test_count", cfg.data.test_count},
        {"image_size", cfg.data.image_size},
        {"noise_sigma", cfg.data.noise_sigma},
        {"clutter_blobs", cfg.data.clutter_blobs},
        {"contrast_jitter", cfg.data.contrast_jitter},
        {"offset_jitter", cfg.data.offset_jitter}}},
  };
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    const std::string attention = j.at("attention").get<std::string>();
    if (attention == "sge") {
      cfg.use_gate = true;
    } else if (attention == "none") {
      cfg.use_gate = false;
    } else {
      throw InvalidArgument("unknown attention mode '" + attention + "'");
    }
    cfg.groups = j.at("groups").get<int>();
    cfg.gamma_init = j.at("gamma_init").get<double>();
    cfg.beta_init = j.at("beta_init").get<double>();
    cfg.normalize = j.at("normalize").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const auto& t = j.at("train");
    cfg.train.epochs = t.at("epochs").get<int>();
    cfg.train.batch_size = t.at("batch_size").get<int>();
    cfg.train.lr = t.at("lr").get<double>();
    cfg.train.momentum = t.at("momentum").get<double>();
    cfg.train.weight_decay = t.at("weight_decay").get<double>();
    cfg.train.decay_gate_params = t.at("decay_gate_params").get<bool>();
    cfg.train.lr_decay_factor = t.at("lr_decay_factor").get<double>();
    cfg.train.lr_decay_at = t.at("lr_decay_at").get<double>();
    const auto& d = j.at("data");
    cfg.data.train_count = d.at("train_count").get<int>();
    cfg.data.test_count = d.at("test_count").get<int>();
    cfg.data.image_size = d.at("image_size").get<int>();
    cfg.data.noise_sigma = d.at("noise_sigma").get<double>();
    cfg.data.clutter_blobs = d.at("clutter_blobs").get<int>();
    cfg.data.contrast_jitter = d.at("contrast_jitter").get<double>();
    cfg.data.offset_jitter = d.at("offset_jitter").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, std::string>> experiment_metadata(
    const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("attention", cfg.use_gate ? "sge" : "none");
  rows.emplace_back("groups", std::to_string(cfg.groups));
  rows.emplace_back("gamma_init", fmt(cfg.gamma_init));
  rows.emplace_back("beta_init", fmt(cfg.beta_init));
  rows.emplace_back("norm", cfg.normalize ? "on" : "off");
  rows.emplace_back("seed", std::to_string(cfg.seed));
  rows.emplace_back("epochs", std::to_string(cfg.train.epochs));
  rows.emplace_back("batch_size", std::to_string(cfg.train.batch_size));
  rows.emplace_back("lr", fmt(cfg.train.lr));
  rows.emplace_back("momentum", fmt(cfg.train.momentum));
  rows.emplace_back("weight_decay", fmt(cfg.train.weight_decay));
  rows.emplace_back("lr_decay_factor", fmt(cfg.train.lr_decay_factor));
  rows.emplace_back("lr_decay_at", fmt(cfg.train.lr_decay_at));
  rows.emplace_back("train_count", std::to_string(cfg.data.train_count));
  rows.emplace_back("test_count", std::to_string(cfg.data.test_count));
  rows.emplace_back("image_size", std::to_string(cfg.data.image_size));
  rows.emplace_back("noise_sigma", fmt(cfg.data.noise_sigma));
  rows.emplace_back("clutter_blobs", std::to_string(cfg.data.clutter_blobs));
  rows.emplace_back("contrast_jitter", fmt(cfg.data.contrast_jitter));
  rows.emplace_back("offset_jitter", fmt(cfg.data.offset_jitter));
  return rows;
}

}  // namespace sge
