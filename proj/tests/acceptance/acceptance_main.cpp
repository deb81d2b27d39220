// Release gate: every claim the library makes that can be checked by
// running it, checked end to end. Each criterion prints exactly one
// [PASS]/[FAIL] verdict line (plus the per-seed data lines the training
// comparisons call for); the exit code is 0 only when all nine pass.
//
// The training criteria (6-8) run the full toy experiment 20 times at the
// shipped defaults, so this binary takes several minutes; everything else
// finishes in seconds.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "support/checks.hpp"
#include "support/oracle.hpp"
#include "sge/dataset.hpp"
#include "sge/errors.hpp"
#include "sge/experiment.hpp"
#include "sge/io_formats.hpp"
#include "sge/nn.hpp"
#include "sge/rng.hpp"
#include "sge/sge_op.hpp"
#include "sge/stats.hpp"
#include "sge/tensor.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void verdict(int criterion, bool pass, const std::string& text) {
  std::printf("[%s] %d. %s\n", pass ? "PASS" : "FAIL", criterion,
              text.c_str());
  std::fflush(stdout);
}

void detail(const std::string& text) {
  std::printf("       %s\n", text.c_str());
}

double median5(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// 1. Analytic backward vs central finite differences.

bool criterion_gradients() {
  struct Case {
    sge::Shape4 shape;
    int groups;
  };
  const Case cases[] = {{{1, 2, 2, 2}, 1}, {{2, 8, 3, 3}, 4},
                        {{1, 64, 5, 5}, 16}};
  const int kSeeds = 20;

  const auto start = Clock::now();
  bool ok = true;
  double worst_fraction = 0.0;
  int combos = 0;
  for (const Case& c : cases) {
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
      const auto r = sge::testing::gradcheck_sge(c.shape, c.groups, seed);
      worst_fraction = std::max(worst_fraction, r.max_tolerance_fraction);
      ++combos;
      if (!r.ok) {
        ok = false;
        detail("gradient mismatch at " + r.failures.front().coordinate +
               ", rel err " + fmt("%.3g", r.failures.front().error));
      }
    }
  }
  const double elapsed = seconds_since(start);
  const bool in_budget = elapsed < 60.0;

  verdict(1, ok && in_budget,
          "backward matches finite differences: " + std::to_string(combos) +
              " shape/seed combos, worst coordinate at " +
              fmt("%.0f", 100.0 * worst_fraction) +
              "% of tolerance (rel 1e-4, floor 1e-7), " +
              fmt("%.1f", elapsed) + "s (budget 60s)");
  return ok && in_budget;
}

// ---------------------------------------------------------------------------
// 2 + 3. Forward vs the scalar-loop reference, and the standardization
// moments, on one shared set of 100 random instances.

struct OracleInstance {
  sge::Tensor4<double> x;
  sge::SgeParams<double> params;
};

OracleInstance make_oracle_instance(int index, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> batch(1, 3), depth(1, 4), side(1, 5);
  const int group_choices[] = {1, 2, 3, 4, 8};
  std::uniform_int_distribution<int> group_pick(0, 4);

  OracleInstance inst;
  const int g = group_choices[group_pick(rng)];
  const sge::Shape4 shape{batch(rng), depth(rng) * g, side(rng), side(rng)};
  inst.x = sge::testing::random_tensor(shape, rng);
  if (index % 17 == 0) {
    // Spatially constant input: drives sigma to exactly zero.
    const double v = 0.25 * (1 + index % 3);
    for (std::size_t i = 0; i < inst.x.size(); ++i) inst.x.data()[i] = v;
  }
  inst.params.groups = g;
  inst.params.gamma = sge::testing::random_vector(g, rng);
  inst.params.beta = sge::testing::random_vector(g, rng);
  inst.params.normalize = index % 5 != 0;
  return inst;
}

bool criterion_forward_oracle() {
  const int kInstances = 100;
  const double kRel = 1e-6, kFloor = 1e-12;

  const auto start = Clock::now();
  std::mt19937_64 rng(sge::SeedStreams(0).stream("acceptance-oracle"));
  bool ok = true;
  double max_rel = 0.0;
  for (int i = 0; i < kInstances; ++i) {
    const OracleInstance inst = make_oracle_instance(i, rng);
    const auto [y, cache] = sge::sge_forward(inst.x, inst.params);
    const auto ref = sge::testing::oracle_sge_forward(
        inst.x, inst.params.gamma, inst.params.beta, inst.params.epsilon,
        inst.params.groups, inst.params.normalize);

    auto compare = [&](const double* got, const double* want, std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) {
        max_rel = std::max(max_rel, sge::testing::rel_err(got[k], want[k]));
        if (!sge::testing::close(got[k], want[k], kRel, kFloor)) ok = false;
      }
    };
    compare(y.data(), ref.output.data(), y.size());
    compare(cache.gate.data(), ref.gate.data(), cache.gate.size());
    compare(cache.c_hat.data(), ref.c_hat.data(), cache.c_hat.size());
    compare(cache.mu_c.data(), ref.mu_c.data(), cache.mu_c.size());
    compare(cache.sigma_c.data(), ref.sigma_c.data(), cache.sigma_c.size());
  }
  const double elapsed = seconds_since(start);
  const bool in_budget = elapsed < 10.0;

  verdict(2, ok && in_budget,
          "forward matches the scalar reference: 100 instances, max rel err " +
              fmt("%.3g", max_rel) + ", " + fmt("%.2f", elapsed) +
              "s (budget 10s)");
  return ok && in_budget;
}

bool criterion_standardization_moments() {
  const int kInstances = 100;
  const double kTol = 1e-5;

  std::mt19937_64 rng(sge::SeedStreams(0).stream("acceptance-oracle"));
  bool ok = true;
  double worst_mean = 0.0, worst_std_gap = 0.0;
  int checked_cells = 0;
  for (int i = 0; i < kInstances; ++i) {
    const OracleInstance inst = make_oracle_instance(i, rng);
    if (!inst.params.normalize) continue;  // raw similarities, no moments
    const auto [y, cache] = sge::sge_forward(inst.x, inst.params);
    (void)y;
    const int m = cache.positions();
    for (int n = 0; n < inst.x.shape().n; ++n) {
      for (int g = 0; g < inst.params.groups; ++g) {
        const double* ch = cache.c_hat.data() + cache.cell_offset(n, g);
        double mean = 0.0;
        for (int k = 0; k < m; ++k) mean += ch[k];
        mean /= m;
        double var = 0.0;
        for (int k = 0; k < m; ++k) var += (ch[k] - mean) * (ch[k] - mean);
        const double sd = std::sqrt(var / m);
        const double sigma = cache.sigma_c[cache.moment_offset(n, g)];
        const double want_sd = sigma / (sigma + inst.params.epsilon);

        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_std_gap = std::max(worst_std_gap, std::abs(sd - want_sd));
        if (std::abs(mean) > kTol || std::abs(sd - want_sd) > kTol) ok = false;
        ++checked_cells;
      }
    }
  }

  verdict(3, ok,
          "standardized similarities have zero mean and std sigma/(sigma+eps): " +
              std::to_string(checked_cells) + " cells, worst |mean| " +
              fmt("%.3g", worst_mean) + ", worst std gap " +
              fmt("%.3g", worst_std_gap));
  return ok;
}

// ---------------------------------------------------------------------------
// 4. Parameter count, group locality, batch independence.

bool criterion_structure() {
  bool ok = true;

  const int param_cases[][2] = {{2, 1},  {8, 4},   {16, 2},  {16, 8},
                                {64, 16}, {128, 32}, {256, 64}};
  for (const auto& pc : param_cases) {
    if (sge::count_params(pc[0], pc[1]) != 2 * pc[1]) {
      ok = false;
      detail("count_params(" + std::to_string(pc[0]) + ", " +
             std::to_string(pc[1]) + ") != 2G");
    }
  }

  std::mt19937_64 rng(11);
  auto params = sge::SgeParams<float>::defaults(4);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : params.gamma) v = dist(rng);
  for (auto& v : params.beta) v = dist(rng);

  // Group locality: editing one group's channels must leave every other
  // group's output bit-identical.
  sge::Tensor4<float> x({2, 8, 3, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = dist(rng);
  const auto [y, cache] = sge::sge_forward(x, params);
  (void)cache;
  sge::Tensor4<float> xp = x;
  const int kEdited = 1;  // channels 2 and 3
  for (int n = 0; n < 2; ++n)
    for (int c = 2; c < 4; ++c)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 3; ++w) xp.at(n, c, h, w) += 0.5f;
  const auto [yp, cachep] = sge::sge_forward(xp, params);
  (void)cachep;
  bool edited_changed = false;
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 8; ++c) {
      for (int h = 0; h < 3; ++h) {
        for (int w = 0; w < 3; ++w) {
          if (c / 2 == kEdited) {
            edited_changed |= yp.at(n, c, h, w) != y.at(n, c, h, w);
          } else if (yp.at(n, c, h, w) != y.at(n, c, h, w)) {
            ok = false;
          }
        }
      }
    }
  }
  if (!edited_changed) ok = false;  // the perturbation must be visible

  // Batch independence: each sample's output is bit-identical whether the
  // sample runs alone or inside a batch.
  sge::Tensor4<float> batch({3, 8, 4, 4});
  for (std::size_t i = 0; i < batch.size(); ++i) batch.data()[i] = dist(rng);
  const auto [yb, cacheb] = sge::sge_forward(batch, params);
  (void)cacheb;
  for (int n = 0; n < 3; ++n) {
    sge::Tensor4<float> one({1, 8, 4, 4});
    for (int c = 0; c < 8; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w) one.at(0, c, h, w) = batch.at(n, c, h, w);
    const auto [y1, cache1] = sge::sge_forward(one, params);
    (void)cache1;
    for (int c = 0; c < 8; ++c)
      for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
          if (y1.at(0, c, h, w) != yb.at(n, c, h, w)) ok = false;
  }

  verdict(4, ok,
          "2G parameters; group locality and batch independence hold bitwise");
  return ok;
}

// ---------------------------------------------------------------------------
// 5. gamma = 0 collapses the gate to a per-group constant sigmoid(beta).

bool criterion_zero_gamma() {
  std::mt19937_64 rng(23);
  const sge::Shape4 shape{2, 6, 3, 4};
  auto x = sge::testing::random_tensor(shape, rng);
  sge::SgeParams<double> params;
  params.groups = 3;
  params.gamma.assign(3, 0.0);
  params.beta = sge::testing::random_vector(3, rng);

  const auto [y, cache] = sge::sge_forward(x, params);
  (void)cache;
  bool ok = true;
  double max_rel = 0.0;
  const int per_group = shape.c / params.groups;
  for (int n = 0; n < shape.n; ++n) {
    for (int c = 0; c < shape.c; ++c) {
      const double s = 1.0 / (1.0 + std::exp(-params.beta[c / per_group]));
      for (int h = 0; h < shape.h; ++h) {
        for (int w = 0; w < shape.w; ++w) {
          const double want = x.at(n, c, h, w) * s;
          const double rel = sge::testing::rel_err(y.at(n, c, h, w), want);
          max_rel = std::max(max_rel, rel);
          if (rel > 1e-6) ok = false;
        }
      }
    }
  }

  verdict(5, ok,
          "gamma=0 output equals input times sigmoid(beta), max rel err " +
              fmt("%.3g", max_rel));
  return ok;
}

// ---------------------------------------------------------------------------
// 6-8. The toy experiment at shipped defaults: gated vs baseline accuracy,
// the variance direction on the trained model, and the two ablation
// directions. The default-config gated runs are shared by all three.

struct TrainingRuns {
  std::vector<double> baseline;   // use_gate = false
  std::vector<double> gated;      // shipped defaults
  std::vector<double> gamma1;     // gamma_init = 1, beta_init = 1
  std::vector<double> norm_off;   // normalize = false
  sge::ExperimentConfig seed0_cfg;
  std::optional<sge::Model<float>> seed0_model;  // gated run, seed 0
  double seconds = 0.0;
};

TrainingRuns run_training_matrix() {
  TrainingRuns runs;
  const auto start = Clock::now();
  const int kSeeds = 5;
  for (int s = 0; s < kSeeds; ++s) {
    sge::ExperimentConfig cfg;  // shipped defaults
    cfg.seed = s;

    sge::ExperimentConfig off = cfg;
    off.use_gate = false;
    std::fprintf(stderr, "  [acceptance] training baseline seed %d\n", s);
    runs.baseline.push_back(
        sge::run_experiment(off).report.final_test_accuracy);

    std::fprintf(stderr, "  [acceptance] training gated seed %d\n", s);
    auto gated = sge::run_experiment(cfg);
    runs.gated.push_back(gated.report.final_test_accuracy);
    if (s == 0) {
      runs.seed0_cfg = cfg;
      runs.seed0_model = std::move(gated.model);
    }

    sge::ExperimentConfig g1 = cfg;
    g1.gamma_init = 1.0;
    std::fprintf(stderr, "  [acceptance] training gamma-init-1 seed %d\n", s);
    runs.gamma1.push_back(sge::run_experiment(g1).report.final_test_accuracy);

    sge::ExperimentConfig raw = cfg;
    raw.normalize = false;
    std::fprintf(stderr, "  [acceptance] training norm-off seed %d\n", s);
    runs.norm_off.push_back(
        sge::run_experiment(raw).report.final_test_accuracy);
  }
  runs.seconds = seconds_since(start);
  return runs;
}

bool criterion_toy_improvement(const TrainingRuns& runs) {
  for (std::size_t s = 0; s < runs.gated.size(); ++s) {
    detail("seed " + std::to_string(s) + ": baseline " +
           fmt("%.4f", runs.baseline[s]) + "  gated " +
           fmt("%.4f", runs.gated[s]));
  }
  const double none_med = median5(runs.baseline);
  const double sge_med = median5(runs.gated);
  const double gap_points = 100.0 * (sge_med - none_med);
  const bool direction = sge_med - none_med >= 0.01;
  const bool in_budget = runs.seconds <= 1800.0;
  if (!in_budget) {
    detail("training matrix took " + fmt("%.0f", runs.seconds) +
           "s, over the 1800s budget");
  }

  verdict(6, direction && in_budget,
          "gated median accuracy " + fmt("%.4f", sge_med) + " vs baseline " +
              fmt("%.4f", none_med) + " (+" + fmt("%.2f", gap_points) +
              " points, need >= 1.00) over 5 seeds");
  return direction && in_budget;
}

bool criterion_variance_direction(TrainingRuns& runs) {
  auto [train, test] = sge::make_experiment_data(runs.seed0_cfg);
  (void)train;
  const auto pre = sge::group_variance_distribution(
      *runs.seed0_model, test, sge::kGateLayerName, sge::Phase::Pre);
  const auto post = sge::group_variance_distribution(
      *runs.seed0_model, test, sge::kGateLayerName, sge::Phase::Post);

  int increased = 0;
  for (std::size_t g = 0; g < pre.size(); ++g) {
    if (post[g].mean_variance > pre[g].mean_variance) ++increased;
    detail("group " + std::to_string(g) + ": variance pre " +
           fmt("%.4f", pre[g].mean_variance) + " -> post " +
           fmt("%.4f", post[g].mean_variance));
  }
  const std::string csv_path = "acceptance_variance.csv";
  sge::write_text_file(csv_path, sge::variance_csv(pre, post));

  const bool ok =
      increased * 5 >= static_cast<int>(pre.size()) * 3;  // >= 60%
  verdict(7, ok,
          "gating raises per-group activation variance: " +
              std::to_string(increased) + "/" + std::to_string(pre.size()) +
              " groups (need >= 60%), per-group numbers in " + csv_path);
  return ok;
}

bool criterion_ablation_directions(const TrainingRuns& runs) {
  for (std::size_t s = 0; s < runs.gated.size(); ++s) {
    detail("seed " + std::to_string(s) + ": gamma0 " +
           fmt("%.4f", runs.gated[s]) + "  gamma1 " +
           fmt("%.4f", runs.gamma1[s]) + "  norm-off " +
           fmt("%.4f", runs.norm_off[s]));
  }
  const double g0 = median5(runs.gated);
  const double g1 = median5(runs.gamma1);
  const double on = median5(runs.gated);
  const double off = median5(runs.norm_off);
  const bool init_dir = g0 >= g1;
  const bool norm_dir = off <= on;
  if (!init_dir) {
    detail("init direction violated: gamma0 median " + fmt("%.4f", g0) +
           " < gamma1 median " + fmt("%.4f", g1));
  }
  if (!norm_dir) {
    detail("norm direction violated: off median " + fmt("%.4f", off) +
           " > on median " + fmt("%.4f", on));
  }

  verdict(8, init_dir && norm_dir,
          "ablation directions: gamma0 median " + fmt("%.4f", g0) +
              " >= gamma1 " + fmt("%.4f", g1) + "; norm-off " +
              fmt("%.4f", off) + " <= norm-on " + fmt("%.4f", on));
  return init_dir && norm_dir;
}

// ---------------------------------------------------------------------------
// 9. Container formats: byte-identical round trips and corruption rejection.

sge::TensorData random_tensor_data(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> rank_dist(1, 8), dim_dist(1, 4);
  std::normal_distribution<float> val(0.0f, 2.0f);
  sge::TensorData t;
  const int rank = rank_dist(rng);
  std::size_t volume = 1;
  for (int r = 0; r < rank; ++r) {
    t.dims.push_back(dim_dist(rng));
    volume *= t.dims.back();
  }
  t.values.resize(volume);
  for (auto& v : t.values) v = val(rng);
  if (!t.values.empty()) t.values[0] = -0.0f;  // sign bit must survive
  return t;
}

template <typename Fn>
bool throws_as(Fn&& fn) {
  try {
    fn();
  } catch (const sge::IoError&) {
    return true;
  }
  return false;
}

bool criterion_format_round_trips() {
  std::mt19937_64 rng(sge::SeedStreams(0).stream("acceptance-io"));
  bool ok = true;

  for (int i = 0; i < 50; ++i) {
    const sge::TensorData t = random_tensor_data(rng);
    const std::string bytes = sge::tensor_bytes(t);
    const sge::TensorData back = sge::tensor_from_bytes(bytes);
    if (sge::tensor_bytes(back) != bytes) {
      ok = false;
      detail("tensor round trip " + std::to_string(i) + " not byte-identical");
    }
  }

  std::uniform_int_distribution<int> param_count(1, 5);
  for (int i = 0; i < 50; ++i) {
    sge::CheckpointData ck;
    ck.header["format"] = "sge-checkpoint";
    ck.header["version"] = sge::kCheckpointVersion;
    ck.header["seed"] = i;
    ck.header["config"] = {{"instance", i}};
    auto meta = nlohmann::json::array();
    const int params = param_count(rng);
    for (int p = 0; p < params; ++p) {
      sge::CheckpointParam cp;
      cp.name = "p" + std::to_string(p);
      cp.data = random_tensor_data(rng);
      meta.push_back({{"name", cp.name}, {"dims", cp.data.dims}});
      ck.params.push_back(std::move(cp));
    }
    ck.header["params"] = std::move(meta);

    const std::string bytes = sge::checkpoint_bytes(ck);
    const sge::CheckpointData back = sge::checkpoint_from_bytes(bytes);
    if (sge::checkpoint_bytes(back) != bytes) {
      ok = false;
      detail("checkpoint round trip " + std::to_string(i) +
             " not byte-identical");
    }
  }

  // Corruption handling on one well-formed image of each container.
  sge::TensorData t = random_tensor_data(rng);
  const std::string good = sge::tensor_bytes(t);
  int rejected = 0, corruptions = 0;
  auto expect_reject = [&](std::string bad) {
    ++corruptions;
    if (throws_as([&] { sge::tensor_from_bytes(bad); })) ++rejected;
  };
  {
    std::string bad = good;
    bad[0] = 'X';
    expect_reject(bad);  // magic
    bad = good;
    bad[4] = 9;
    expect_reject(bad);  // version
    bad = good;
    bad[6] = 0;
    expect_reject(bad);  // rank low
    bad = good;
    bad[6] = 9;
    expect_reject(bad);  // rank high
    for (std::size_t cut : {std::size_t{3}, std::size_t{8},
                            good.size() - 3}) {
      expect_reject(good.substr(0, cut));  // truncations
    }
    expect_reject(good + "tail");  // trailing bytes
  }
  sge::CheckpointData ck;
  ck.header["format"] = "sge-checkpoint";
  ck.header["version"] = sge::kCheckpointVersion;
  ck.header["seed"] = 0;
  ck.header["config"] = nlohmann::json::object();
  {
    sge::CheckpointParam cp;
    cp.name = "p0";
    cp.data = random_tensor_data(rng);
    ck.header["params"] =
        nlohmann::json::array({{{"name", "p0"}, {"dims", cp.data.dims}}});
    ck.params.push_back(std::move(cp));
  }
  const std::string ck_good = sge::checkpoint_bytes(ck);
  auto expect_ck_reject = [&](std::string bad) {
    ++corruptions;
    if (throws_as([&] { sge::checkpoint_from_bytes(bad); })) ++rejected;
  };
  {
    std::string bad = ck_good;
    bad[0] = 'Z';
    expect_ck_reject(bad);  // magic
    bad = ck_good;
    bad[4] = 7;
    expect_ck_reject(bad);  // version
    bad = ck_good;
    bad[10] = '}';
    expect_ck_reject(bad);  // header JSON
    expect_ck_reject(ck_good.substr(0, 5));
    expect_ck_reject(ck_good.substr(0, ck_good.size() - 2));
    expect_ck_reject(ck_good + "x");  // trailing bytes
  }
  if (rejected != corruptions) ok = false;

  verdict(9, ok,
          "containers round-trip byte-identically (50 tensors, 50 "
          "checkpoints); " +
              std::to_string(rejected) + "/" + std::to_string(corruptions) +
              " corruptions rejected");
  return ok;
}

}  // namespace

int main() {
  int passed = 0, total = 0;
  auto tally = [&](bool ok) {
    ++total;
    if (ok) ++passed;
  };

  tally(criterion_gradients());
  tally(criterion_forward_oracle());
  tally(criterion_standardization_moments());
  tally(criterion_structure());
  tally(criterion_zero_gamma());

  TrainingRuns runs = run_training_matrix();
  tally(criterion_toy_improvement(runs));
  tally(criterion_variance_direction(runs));
  tally(criterion_ablation_directions(runs));

  tally(criterion_format_round_trips());

  std::printf("acceptance: %d/%d criteria pass\n", passed, total);
  return passed == total ? EXIT_SUCCESS : EXIT_FAILURE;
}
