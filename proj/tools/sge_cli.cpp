// Command-line front end: verification suites (gradcheck, oracle), toy
// training runs and ablations, and statistics/heatmap export. Exit codes:
// 0 success, 1 failed checks or a diverged run, 2 usage or input errors.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "sge/dataset.hpp"
#include "sge/errors.hpp"
#include "sge/experiment.hpp"
#include "sge/io_formats.hpp"
#include "sge/nn.hpp"
#include "sge/rng.hpp"
#include "sge/sge_op.hpp"
#include "sge/stats.hpp"
#include "sge/tensor.hpp"

namespace fs = std::filesystem;
using namespace sge;

namespace {

using MetaRows = std::vector<std::pair<std::string, std::string>>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

// Every command prints its resolved configuration before doing any work.
void print_config(const MetaRows& rows) {
  std::cout << "resolved configuration:\n";
  for (const auto& [k, v] : rows) {
    std::cout << "  " << k << "=" << v << "\n";
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// |a - b| relative to the larger magnitude, floored to keep near-zero
// coordinates meaningful.
double rel_gap(double a, double b, double floor_val) {
  return std::abs(a - b) /
         std::max({floor_val, std::abs(a), std::abs(b)});
}

// ---------------------------------------------------------------------------
// gradcheck: analytic backward vs 64-bit central differences.

struct CheckShape {
  int n, c, h, w, g;
  std::string label() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w) + "x" +
           std::to_string(g);
  }
};

std::vector<CheckShape> parse_shapes(const std::string& text) {
  std::vector<CheckShape> shapes;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const std::string token = text.substr(start, end - start);
    int v[5];
    int count = 0;
    std::size_t pos = 0;
    while (pos < token.size() && count < 5) {
      std::size_t used = 0;
      try {
        v[count] = std::stoi(token.substr(pos), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) break;
      pos += used;
      ++count;
      if (pos < token.size()) {
        if (token[pos] != 'x') break;
        ++pos;
      }
    }
    if (count != 5 || pos != token.size()) {
      throw InvalidArgument("bad shape '" + token +
                            "', expected NxCxHxWxG like 2x8x3x3x4");
    }
    CheckShape s{v[0], v[1], v[2], v[3], v[4]};
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1 || s.g < 1) {
      throw InvalidArgument("shape dims must be >= 1 in '" + token + "'");
    }
    if (s.c % s.g != 0) {
      throw InvalidArgument("shape '" + token + "': " + std::to_string(s.g) +
                            " groups do not divide " + std::to_string(s.c) +
                            " channels");
    }
    shapes.push_back(s);
    start = end + 1;
  }
  return shapes;
}

double weighted_output_sum(const Tensor4<double>& x,
                           const SgeParams<double>& p,
                           const Tensor4<double>& dy) {
  auto [y, cache] = sge_forward(x, p);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += dy.data()[i] * y.data()[i];
  }
  return acc;
}

int run_gradcheck(int seeds, const std::string& shapes_text, double step,
                  double tol, double floor_val) {
  const auto shapes = parse_shapes(shapes_text);
  print_config({{"command", "gradcheck"},
                {"seeds", std::to_string(seeds)},
                {"shapes", shapes_text},
                {"step", fmt(step)},
                {"tolerance", fmt(tol)},
                {"floor", fmt(floor_val)}});
  const auto t0 = std::chrono::steady_clock::now();
  long long checked = 0;
  long long failures = 0;
  double worst = 0.0;

  for (const CheckShape& s : shapes) {
    for (int seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng = SeedStreams(seed).stream("gradcheck");
      std::normal_distribution<double> dist;
      Tensor4<double> x(Shape4{s.n, s.c, s.h, s.w});
      for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
      SgeParams<double> p;
      p.groups = s.g;
      p.gamma.resize(s.g);
      p.beta.resize(s.g);
      for (double& v : p.gamma) v = dist(rng);
      for (double& v : p.beta) v = dist(rng);
      Tensor4<double> dy(x.shape());
      for (std::size_t i = 0; i < dy.size(); ++i) dy.data()[i] = dist(rng);

      auto [y, cache] = sge_forward(x, p);
      SgeGradients<double> grad = sge_backward(cache, dy, p);

      auto judge = [&](const char* kind, std::size_t index, double analytic,
                       double numeric) {
        ++checked;
        const double rel = rel_gap(analytic, numeric, floor_val);
        worst = std::max(worst, rel);
        if (rel > tol) {
          ++failures;
          std::cerr << "gradcheck FAIL shape=" << s.label() << " seed=" << seed
                    << " coord=" << kind << "[" << index << "]"
                    << " analytic=" << analytic << " numeric=" << numeric
                    << " rel=" << rel << "\n";
        }
      };

      for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + step;
        const double up = weighted_output_sum(x, p, dy);
        x.data()[i] = keep - step;
        const double dn = weighted_output_sum(x, p, dy);
        x.data()[i] = keep;
        judge("d_input", i, grad.d_input.data()[i], (up - dn) / (2.0 * step));
      }
      for (int g = 0; g < s.g; ++g) {
        SgeParams<double> q = p;
        q.gamma[g] = p.gamma[g] + step;
        const double up = weighted_output_sum(x, q, dy);
        q.gamma[g] = p.gamma[g] - step;
        const double dn = weighted_output_sum(x, q, dy);
        judge("d_gamma", g, grad.d_gamma[g], (up - dn) / (2.0 * step));
      }
      for (int g = 0; g < s.g; ++g) {
        SgeParams<double> q = p;
        q.beta[g] = p.beta[g] + step;
        const double up = weighted_output_sum(x, q, dy);
        q.beta[g] = p.beta[g] - step;
        const double dn = weighted_output_sum(x, q, dy);
        judge("d_beta", g, grad.d_beta[g], (up - dn) / (2.0 * step));
      }
    }
    std::cout << "shape " << s.label() << ": done\n";
  }

  std::cout << "gradcheck: " << checked << " coordinates, max relative error "
            << worst << ", " << failures << " failures, "
            << fmt(seconds_since(t0)) << "s\n";
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// oracle: plain scalar-loop reference, written against the operator's
// definition rather than its implementation, plus an instrumented
// multiply-add counter.

struct Reference {
  Tensor4<double> out;
  std::vector<double> mu, sigma;  // (N, G)
  std::vector<double> c_hat;      // (N, G, m)
  std::vector<double> gate;       // (N, G, m)
  long long multiply_adds = 0;
};

Reference reference_forward(const Tensor4<double>& x,
                            const std::vector<double>& gamma,
                            const std::vector<double>& beta, double eps,
                            int groups, bool normalize) {
  const Shape4 s = x.shape();
  const int d = s.c / groups;
  const int m = s.h * s.w;
  Reference r{Tensor4<double>(s), {}, {}, {}, {}, 0};
  r.mu.assign(static_cast<std::size_t>(s.n) * groups, 0.0);
  r.sigma = r.mu;
  r.c_hat.assign(static_cast<std::size_t>(s.n) * groups * m, 0.0);
  r.gate = r.c_hat;
  auto at = [&](int n, int c, int p) {
    return (static_cast<std::size_t>(n) * s.c + c) * m + p;
  };
  for (int n = 0; n < s.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      std::vector<double> mean_vec(d, 0.0);
      for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int p = 0; p < m; ++p) {
          acc += x.data()[at(n, g * d + k, p)];
          ++r.multiply_adds;
        }
        mean_vec[k] = acc / m;
      }
      std::vector<double> c(m, 0.0);
      for (int p = 0; p < m; ++p) {
        double acc = 0.0;
        for (int k = 0; k < d; ++k) {
          acc += mean_vec[k] * x.data()[at(n, g * d + k, p)];
          ++r.multiply_adds;
        }
        c[p] = acc;
      }
      double mu = 0.0;
      for (int p = 0; p < m; ++p) {
        mu += c[p];
        ++r.multiply_adds;
      }
      mu /= m;
      double var = 0.0;
      for (int p = 0; p < m; ++p) {
        var += (c[p] - mu) * (c[p] - mu);
        ++r.multiply_adds;
      }
      var /= m;
      const double sigma = std::sqrt(var);
      const std::size_t cell = (static_cast<std::size_t>(n) * groups + g) * m;
      r.mu[static_cast<std::size_t>(n) * groups + g] = mu;
      r.sigma[static_cast<std::size_t>(n) * groups + g] = sigma;
      for (int p = 0; p < m; ++p) {
        const double c_hat = normalize ? (c[p] - mu) / (sigma + eps) : c[p];
        ++r.multiply_adds;
        const double a = gamma[g] * c_hat + beta[g];
        ++r.multiply_adds;
        const double gate = 1.0 / (1.0 + std::exp(-a));
        ++r.multiply_adds;
        r.c_hat[cell + p] = c_hat;
        r.gate[cell + p] = gate;
        for (int k = 0; k < d; ++k) {
          r.out.data()[at(n, g * d + k, p)] =
              x.data()[at(n, g * d + k, p)] * gate;
          ++r.multiply_adds;
        }
      }
    }
  }
  return r;
}

int run_oracle(int instances, std::uint64_t seed, double tol) {
  print_config({{"command", "oracle"},
                {"instances", std::to_string(instances)},
                {"seed", std::to_string(seed)},
                {"tolerance", fmt(tol)}});
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng = SeedStreams(seed).stream("oracle");
  std::normal_distribution<double> dist;
  long long failures = 0;
  double worst = 0.0;

  auto compare = [&](int instance, const char* field, std::size_t i, double got,
                     double want) {
    const double rel = rel_gap(got, want, 1e-12);
    worst = std::max(worst, rel);
    if (rel > tol) {
      ++failures;
      if (failures <= 20) {
        std::cerr << "oracle FAIL instance=" << instance << " field=" << field
                  << "[" << i << "] impl=" << got << " reference=" << want
                  << " rel=" << rel << "\n";
      }
    }
  };

  const int group_choices[] = {1, 2, 3, 4, 8};
  for (int it = 0; it < instances; ++it) {
    const int groups = group_choices[rng() % 5];
    const int d = 1 + static_cast<int>(rng() % 4);
    const Shape4 s{1 + static_cast<int>(rng() % 3), groups * d,
                   1 + static_cast<int>(rng() % 5),
                   1 + static_cast<int>(rng() % 5)};
    const bool normalize = it % 5 != 4;  // every fifth runs the raw path
    const bool constant_input = it % 17 == 16;  // degenerate spatial cells

    Tensor4<double> x(s);
    if (constant_input) {
      for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
          const double v = 0.25 * (1 + ((n + c) % 7));
          for (int p = 0; p < s.h * s.w; ++p) {
            x.data()[(static_cast<std::size_t>(n) * s.c + c) * s.h * s.w + p] =
                v;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
    }
    SgeParams<double> p;
    p.groups = groups;
    p.normalize = normalize;
    p.gamma.resize(groups);
    p.beta.resize(groups);
    for (double& v : p.gamma) v = dist(rng);
    for (double& v : p.beta) v = dist(rng);

    auto [y, cache] = sge_forward(x, p);
    Reference ref = reference_forward(x, p.gamma, p.beta, p.epsilon, groups,
                                      normalize);

    for (std::size_t i = 0; i < y.size(); ++i) {
      compare(it, "output", i, y.data()[i], ref.out.data()[i]);
    }
    for (std::size_t i = 0; i < ref.gate.size(); ++i) {
      compare(it, "gate", i, cache.gate[i], ref.gate[i]);
      compare(it, "c_hat", i, cache.c_hat[i], ref.c_hat[i]);
    }
    for (std::size_t i = 0; i < ref.mu.size(); ++i) {
      compare(it, "mu", i, cache.mu_c[i], ref.mu[i]);
      compare(it, "sigma", i, cache.sigma_c[i], ref.sigma[i]);
    }

    // closed-form counts vs the instrumented reference
    const long long flops = count_flops(s.n, s.c, s.h, s.w, groups);
    if (flops != ref.multiply_adds) {
      ++failures;
      std::cerr << "oracle FAIL instance=" << it << " count_flops=" << flops
                << " instrumented=" << ref.multiply_adds << "\n";
    }
    if (count_params(s.c, groups) != 2LL * groups) {
      ++failures;
      std::cerr << "oracle FAIL instance=" << it << " count_params != 2G\n";
    }

    // normalization statistics: mean(c_hat) ~ 0, std(c_hat) ~ sigma/(sigma+eps)
    if (normalize) {
      const int m = s.h * s.w;
      for (int n = 0; n < s.n; ++n) {
        for (int g = 0; g < groups; ++g) {
          const std::size_t cell =
              (static_cast<std::size_t>(n) * groups + g) * m;
          double mean = 0.0;
          for (int q = 0; q < m; ++q) mean += cache.c_hat[cell + q];
          mean /= m;
          double var = 0.0;
          for (int q = 0; q < m; ++q) {
            const double dlt = cache.c_hat[cell + q] - mean;
            var += dlt * dlt;
          }
          const double sd = std::sqrt(var / m);
          const double sigma =
              cache.sigma_c[static_cast<std::size_t>(n) * groups + g];
          const double want_sd = sigma / (sigma + p.epsilon);
          if (std::abs(mean) > 1e-5 || std::abs(sd - want_sd) > 1e-5) {
            ++failures;
            std::cerr << "oracle FAIL instance=" << it << " cell=(" << n << ","
                      << g << ") mean(c_hat)=" << mean << " sd(c_hat)=" << sd
                      << " expected sd=" << want_sd << "\n";
          }
        }
      }
    }
  }

  std::cout << "oracle: " << instances << " instances, max relative error "
            << worst << ", " << failures << " failures, "
            << fmt(seconds_since(t0)) << "s\n";
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// train

MetaRows command_metadata(const char* command, const ExperimentConfig& cfg) {
  MetaRows rows{{"command", command}};
  MetaRows exp = experiment_metadata(cfg);
  rows.insert(rows.end(), exp.begin(), exp.end());
  rows.emplace_back("gate_placement", "after the last conv block");
  return rows;
}

int run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  print_config(command_metadata("train", cfg));
  ExperimentResult result = run_experiment(cfg);

  fs::create_directories(out_dir);
  const MetaRows meta = command_metadata("train", cfg);
  const fs::path out(out_dir);

  write_text_file((out / "train_report.csv").string(),
                  csv_with_metadata(meta, result.report.to_csv()));
  write_checkpoint_file(
      (out / "checkpoint.sgec").string(),
      make_checkpoint(result.model, cfg.seed, experiment_config_json(cfg)));

  auto [train_set, test_set] = make_experiment_data(cfg);
  const int side = cfg.data.image_size;
  TensorData sample;
  sample.dims = {1, 1, static_cast<std::uint32_t>(side),
                 static_cast<std::uint32_t>(side)};
  sample.values.assign(test_set.images.data(),
                       test_set.images.data() + side * side);
  write_tensor_file((out / "sample_input.sget").string(), sample);

  for (const EpochRow& row : result.report.rows) {
    std::cout << "epoch " << row.epoch << " " << row.split
              << ": loss=" << fmt(row.loss)
              << " accuracy=" << fmt(row.accuracy) << "\n";
  }
  std::cout << "final: test_loss=" << fmt(result.report.final_test_loss)
            << " test_accuracy=" << fmt(result.report.final_test_accuracy)
            << "\n";
  std::cout << "wrote " << (out / "train_report.csv").string() << ", "
            << (out / "checkpoint.sgec").string() << ", "
            << (out / "sample_input.sget").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateSetting {
  std::string name;
  ExperimentConfig cfg;
};

std::vector<AblateSetting> ablate_settings(const std::string& axis,
                                           const ExperimentConfig& base) {
  std::vector<AblateSetting> settings;
  if (axis == "groups") {
    {
      AblateSetting s{"none", base};
      s.cfg.use_gate = false;
      settings.push_back(std::move(s));
    }
    // gate site carries 16 channels; the sweep keeps the divisible values
    for (int g : {1, 2, 4, 8, 16, 32, 64}) {
      if (16 % g != 0) continue;
      AblateSetting s{"G=" + std::to_string(g), base};
      s.cfg.use_gate = true;
      s.cfg.groups = g;
      settings.push_back(std::move(s));
    }
  } else if (axis == "init") {
    for (int gamma0 : {0, 1}) {
      for (int beta0 : {0, 1}) {
        AblateSetting s{"gamma" + std::to_string(gamma0) + "_beta" +
                            std::to_string(beta0),
                        base};
        s.cfg.use_gate = true;
        s.cfg.gamma_init = gamma0;
        s.cfg.beta_init = beta0;
        settings.push_back(std::move(s));
      }
    }
  } else if (axis == "norm") {
    for (bool on : {true, false}) {
      AblateSetting s{on ? "norm_on" : "norm_off", base};
      s.cfg.use_gate = true;
      s.cfg.normalize = on;
      settings.push_back(std::move(s));
    }
  } else {
    throw InvalidArgument("unknown ablation axis '" + axis + "'");
  }
  return settings;
}

int run_ablate(const std::string& axis, int seeds, std::uint64_t base_seed,
               const ExperimentConfig& base, const std::string& out_dir) {
  if (seeds < 1) throw InvalidArgument("--seeds must be >= 1");
  const std::vector<AblateSetting> settings = ablate_settings(axis, base);

  MetaRows meta = command_metadata("ablate", base);
  meta.emplace_back("axis", axis);
  meta.emplace_back("seeds", std::to_string(seeds));
  meta.emplace_back("base_seed", std::to_string(base_seed));
  std::string sweep;
  for (const auto& s : settings) {
    if (!sweep.empty()) sweep += " ";
    sweep += s.name;
  }
  meta.emplace_back("sweep", sweep);
  print_config(meta);

  const auto t0 = std::chrono::steady_clock::now();
  std::string body = "setting,seed,test_loss,test_accuracy\n";
  std::string summary;
  for (const AblateSetting& s : settings) {
    std::vector<double> losses, accs;
    for (int k = 0; k < seeds; ++k) {
      ExperimentConfig cfg = s.cfg;
      cfg.seed = base_seed + static_cast<std::uint64_t>(k);
      ExperimentResult r = run_experiment(cfg);
      losses.push_back(r.report.final_test_loss);
      accs.push_back(r.report.final_test_accuracy);
      body += s.name + "," + std::to_string(cfg.seed) + "," +
              fmt(r.report.final_test_loss) + "," +
              fmt(r.report.final_test_accuracy) + "\n";
      std::cout << s.name << " seed " << cfg.seed
                << ": test_accuracy=" << fmt(r.report.final_test_accuracy)
                << "\n";
    }
    auto mean_of = [](const std::vector<double>& v) {
      double acc = 0.0;
      for (double x : v) acc += x;
      return acc / static_cast<double>(v.size());
    };
    auto std_of = [&](const std::vector<double>& v) {
      const double mu = mean_of(v);
      double acc = 0.0;
      for (double x : v) acc += (x - mu) * (x - mu);
      return std::sqrt(acc / static_cast<double>(v.size()));
    };
    summary += s.name + ",mean," + fmt(mean_of(losses)) + "," +
               fmt(mean_of(accs)) + "\n";
    summary += s.name + ",std," + fmt(std_of(losses)) + "," +
               fmt(std_of(accs)) + "\n";
  }
  body += summary;

  fs::create_directories(out_dir);
  const fs::path out_file = fs::path(out_dir) / ("ablate_" + axis + ".csv");
  write_text_file(out_file.string(), csv_with_metadata(meta, body));
  std::cout << "ablate: " << settings.size() << " settings x " << seeds
            << " seeds in " << fmt(seconds_since(t0)) << "s\n";
  std::cout << "wrote " << out_file.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats + heatmap (rebuild model and data from a checkpoint)

struct LoadedRun {
  ExperimentConfig cfg;
  Model<float> model;
};

LoadedRun load_run(const std::string& checkpoint_path) {
  CheckpointData ck = read_checkpoint_file(checkpoint_path);
  if (!ck.header.contains("config")) {
    throw BadHeader("checkpoint has no config block", 0);
  }
  ExperimentConfig cfg = experiment_config_from_json(ck.header.at("config"));
  Model<float> model = build_experiment_model(cfg);
  load_checkpoint(model, ck);
  return LoadedRun{std::move(cfg), std::move(model)};
}

int run_stats(const std::string& checkpoint_path, const std::string& out_dir,
              int bins, int batch_size) {
  LoadedRun run = load_run(checkpoint_path);
  if (!run.cfg.use_gate) {
    throw InvalidArgument("checkpoint '" + checkpoint_path +
                          "' has no gate layer; statistics need one");
  }
  MetaRows meta = command_metadata("stats", run.cfg);
  meta.emplace_back("checkpoint", checkpoint_path);
  meta.emplace_back("split", "test");
  meta.emplace_back("bins", std::to_string(bins));
  print_config(meta);

  auto [train_set, test_set] = make_experiment_data(run.cfg);
  auto pre = group_variance_distribution(run.model, test_set, kGateLayerName,
                                         Phase::Pre, batch_size);
  auto post = group_variance_distribution(run.model, test_set, kGateLayerName,
                                          Phase::Post, batch_size);

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  write_text_file((out / "variance.csv").string(),
                  csv_with_metadata(meta, variance_csv(pre, post)));

  int increased = 0;
  for (std::size_t g = 0; g < pre.size(); ++g) {
    if (post[g].mean_variance > pre[g].mean_variance) ++increased;
    std::cout << "group " << g << ": pre=" << fmt(pre[g].mean_variance)
              << " post=" << fmt(post[g].mean_variance) << "\n";
  }
  std::cout << "variance increased for " << increased << "/" << pre.size()
            << " groups\n";

  for (int g = 0; g < run.cfg.groups; ++g) {
    auto [hist_pre, hist_post] = activation_histogram(
        run.model, test_set, kGateLayerName, g, bins, batch_size);
    MetaRows hmeta = meta;
    hmeta.emplace_back("group", std::to_string(g));
    const fs::path path = out / ("histogram_group" + std::to_string(g) +
                                 ".csv");
    write_text_file(path.string(),
                    csv_with_metadata(hmeta, histogram_csv(hist_pre,
                                                           hist_post)));
  }
  std::cout << "wrote " << (out / "variance.csv").string() << " and "
            << run.cfg.groups << " histogram files\n";
  return 0;
}

int run_heatmap(const std::string& checkpoint_path,
                const std::string& input_path, int group,
                const std::string& out_dir, int scale) {
  LoadedRun run = load_run(checkpoint_path);
  if (!run.cfg.use_gate) {
    throw InvalidArgument("checkpoint '" + checkpoint_path +
                          "' has no gate layer; heatmaps need one");
  }
  MetaRows meta = command_metadata("heatmap", run.cfg);
  meta.emplace_back("checkpoint", checkpoint_path);
  meta.emplace_back("input", input_path);
  meta.emplace_back("group", std::to_string(group));
  meta.emplace_back("scale", std::to_string(scale));
  print_config(meta);

  Tensor4<float> input = tensor4_from_data(read_tensor_file(input_path));
  if (input.shape().n != 1) {
    throw InvalidArgument("heatmap input must hold exactly one sample, got " +
                          std::to_string(input.shape().n));
  }
  ActivationCapture<float> cap =
      capture_activations(run.model, kGateLayerName, input);
  GroupedView<float> pre_view = group_split(cap.input, cap.groups);
  GroupedView<float> post_view = group_split(cap.output, cap.groups);
  const int h = cap.input.shape().h;
  const int w = cap.input.shape().w;

  std::vector<std::string> comments;
  for (const auto& [k, v] : meta) comments.push_back(k + "=" + v);

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  const std::string prefix = "group" + std::to_string(group);
  write_pgm((out / (prefix + "_pre.pgm")).string(), h, w,
            normalize_unit_interval(activation_lengths(pre_view, 0, group)),
            scale, comments);
  write_pgm((out / (prefix + "_post.pgm")).string(), h, w,
            normalize_unit_interval(activation_lengths(post_view, 0, group)),
            scale, comments);
  std::cout << "wrote " << (out / (prefix + "_pre.pgm")).string() << " and "
            << (out / (prefix + "_post.pgm")).string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// count

int run_count(int channels, int groups, int height, int width) {
  print_config({{"command", "count"},
                {"channels", std::to_string(channels)},
                {"groups", std::to_string(groups)},
                {"height", std::to_string(height)},
                {"width", std::to_string(width)}});
  std::cout << "params=" << count_params(channels, groups) << "\n";
  std::cout << "flops=" << count_flops(1, channels, height, width, groups)
            << "\n";
  return 0;
}

// Shared train/ablate experiment flags.
void add_experiment_flags(CLI::App* cmd, ExperimentConfig& cfg,
                          std::string& attention, std::string& norm) {
  cmd->add_option("--attention", attention, "none or sge")
      ->check(CLI::IsMember({"none", "sge"}));
  cmd->add_option("--groups", cfg.groups, "gate groups");
  cmd->add_option("--gamma-init", cfg.gamma_init, "initial gamma");
  cmd->add_option("--beta-init", cfg.beta_init, "initial beta");
  cmd->add_option("--norm", norm, "gate-internal standardization")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--seed", cfg.seed, "experiment seed");
  cmd->add_option("--epochs", cfg.train.epochs, "training epochs");
  cmd->add_option("--batch", cfg.train.batch_size, "batch size");
  cmd->add_option("--lr", cfg.train.lr, "initial learning rate");
  cmd->add_option("--weight-decay", cfg.train.weight_decay, "L2 penalty");
  cmd->add_option("--train-count", cfg.data.train_count, "training samples");
  cmd->add_option("--test-count", cfg.data.test_count, "test samples");
  cmd->add_option("--noise", cfg.data.noise_sigma, "background noise sigma");
  cmd->add_option("--clutter", cfg.data.clutter_blobs,
                  "distractor blobs per image");
  cmd->add_option("--contrast-jitter", cfg.data.contrast_jitter,
                  "per-image contrast spread");
  cmd->add_option("--offset-jitter", cfg.data.offset_jitter,
                  "per-image brightness spread");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial group-wise gating: verification, toy training, and "
               "reporting"};
  app.require_subcommand(1);

  int gc_seeds = 20;
  std::string gc_shapes = "1x2x2x2x1,2x8x3x3x4,1x64x5x5x16";
  double gc_step = 1e-5, gc_tol = 1e-4, gc_floor = 1e-7;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "analytic vs numeric gradients");
  gradcheck->add_option("--seeds", gc_seeds, "seeds per shape");
  gradcheck->add_option("--shapes", gc_shapes,
                        "comma-separated NxCxHxWxG list");
  gradcheck->add_option("--step", gc_step, "finite-difference step");
  gradcheck->add_option("--tolerance", gc_tol, "max relative error");
  gradcheck->add_option("--floor", gc_floor, "relative-error denominator floor");

  int or_instances = 100;
  std::uint64_t or_seed = 0;
  double or_tol = 1e-6;
  CLI::App* oracle =
      app.add_subcommand("oracle", "optimized forward vs scalar reference");
  oracle->add_option("--instances", or_instances, "random instances");
  oracle->add_option("--seed", or_seed, "suite seed");
  oracle->add_option("--tolerance", or_tol, "max relative error");

  ExperimentConfig train_cfg;
  std::string train_attention = "sge", train_norm = "on";
  std::string train_out = "run";
  CLI::App* train = app.add_subcommand("train", "one toy training run");
  add_experiment_flags(train, train_cfg, train_attention, train_norm);
  train->add_option("--out", train_out, "output directory");

  ExperimentConfig ablate_cfg;
  std::string ablate_attention = "sge", ablate_norm = "on";
  std::string ablate_axis = "groups";
  int ablate_seeds = 5;
  std::string ablate_out = ".";
  CLI::App* ablate =
      app.add_subcommand("ablate", "sweep one axis over several seeds");
  ablate->add_option("--axis", ablate_axis, "groups, init, or norm")
      ->check(CLI::IsMember({"groups", "init", "norm"}));
  ablate->add_option("--seeds", ablate_seeds, "seeds per setting");
  add_experiment_flags(ablate, ablate_cfg, ablate_attention, ablate_norm);
  ablate->get_option("--seed")->description("base seed of the sweep");
  ablate->add_option("--out", ablate_out, "output directory");

  std::string stats_checkpoint, stats_out = "stats";
  int stats_bins = kDefaultHistogramBins, stats_batch = 64;
  CLI::App* stats =
      app.add_subcommand("stats", "variance and histogram CSVs");
  stats->add_option("--checkpoint", stats_checkpoint, "checkpoint file")
      ->required();
  stats->add_option("--out", stats_out, "output directory");
  stats->add_option("--bins", stats_bins, "histogram bins");
  stats->add_option("--batch", stats_batch, "evaluation batch size");

  std::string hm_checkpoint, hm_input, hm_out = "heatmaps";
  int hm_group = 0, hm_scale = 16;
  CLI::App* heatmap =
      app.add_subcommand("heatmap", "pre/post activation-length maps");
  heatmap->add_option("--checkpoint", hm_checkpoint, "checkpoint file")
      ->required();
  heatmap->add_option("--input", hm_input, "input tensor file")->required();
  heatmap->add_option("--group", hm_group, "group to render");
  heatmap->add_option("--out", hm_out, "output directory");
  heatmap->add_option("--scale", hm_scale, "nearest-neighbor upscale factor");

  int ct_channels = 0, ct_groups = 0, ct_height = 0, ct_width = 0;
  CLI::App* count =
      app.add_subcommand("count", "parameter and multiply-add counts");
  count->add_option("--channels", ct_channels, "channels")->required();
  count->add_option("--groups", ct_groups, "groups")->required();
  count->add_option("--height", ct_height, "feature map height")->required();
  count->add_option("--width", ct_width, "feature map width")->required();

  try {
    app.parse(argc, argv);

    if (*gradcheck) {
      return run_gradcheck(gc_seeds, gc_shapes, gc_step, gc_tol, gc_floor);
    }
    if (*oracle) {
      return run_oracle(or_instances, or_seed, or_tol);
    }
    if (*train) {
      train_cfg.use_gate = train_attention == "sge";
      train_cfg.normalize = train_norm == "on";
      return run_train(train_cfg, train_out);
    }
    if (*ablate) {
      ablate_cfg.use_gate = ablate_attention == "sge";
      ablate_cfg.normalize = ablate_norm == "on";
      const std::uint64_t base = ablate_cfg.seed;
      return run_ablate(ablate_axis, ablate_seeds, base, ablate_cfg,
                        ablate_out);
    }
    if (*stats) {
      return run_stats(stats_checkpoint, stats_out, stats_bins, stats_batch);
    }
    if (*heatmap) {
      return run_heatmap(hm_checkpoint, hm_input, hm_group, hm_out, hm_scale);
    }
    if (*count) {
      return run_count(ct_channels, ct_groups, ct_height, ct_width);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help to stdout, errors to stderr
    return code == 0 ? 0 : 2;
  } catch (const DivergedLoss& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
