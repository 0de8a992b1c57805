#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "sdn/checkpoint.hpp"
#include "sdn/errors.hpp"
#include "sdn/train.hpp"

using namespace sdn;

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor row1(std::vector<double> v) {
  return Tensor::row(std::move(v), false);
}

// Brute-force mixture density at one point, no logsumexp anywhere.
double mixture_nll_oracle(const std::vector<double>& u,
                          const std::vector<double>& pis,
                          const std::vector<std::vector<double>>& mus,
                          const std::vector<std::vector<double>>& vars) {
  double density = 0.0;
  for (size_t i = 0; i < pis.size(); ++i) {
    double comp = pis[i];
    for (size_t d = 0; d < u.size(); ++d) {
      const double r = u[d] - mus[i][d];
      comp *= std::exp(-0.5 * r * r / vars[i][d]) /
              std::sqrt(2.0 * kPi * vars[i][d]);
    }
    density += comp;
  }
  return -std::log(density);
}

// Hand-made two-mode dataset whose observation is a one-hot of the active
// mode: a trunk with saturated weights then switches perfectly.
struct LabeledCase {
  Demonstration demo;
  std::vector<PidParams> truth;
};

LabeledCase make_labeled_case(int n, uint64_t seed) {
  LabeledCase lc;
  PidParams a;
  a.kp = {-2.0};
  a.ki = {-0.1};
  a.kd = {-1.0};
  a.mu = {0.0};
  a.sigma_diag = {0.2 * 0.2};
  a.mode_id = 0;
  PidParams b;
  b.kp = {1.5};
  b.ki = {0.05};
  b.kd = {0.8};
  b.mu = {0.0};
  b.sigma_diag = {0.15 * 0.15};
  b.mode_id = 1;
  lc.truth = {a, b};

  const int horizon = 5;
  const double dt = 0.05;
  Rng rng(seed);
  HistoryWindow hist(1, 3, dt, {true});
  for (int k = 0; k < n; ++k) {
    if (k % horizon == 0) hist.reset();
    const int m = rng.uniform_int(2);
    DemoRecord rec;
    rec.t = dt * k;
    rec.x = {rng.uniform(-3.0, 3.0)};
    hist.push(rec.x);
    const auto [u_mean, var] = predicted_action(lc.truth[m], hist);
    rec.u = {u_mean[0] + std::sqrt(var[0]) * rng.normal()};
    rec.z = {m == 0 ? 1.0 : 0.0, m == 1 ? 1.0 : 0.0};
    rec.mode = m;
    lc.demo.records.push_back(std::move(rec));
  }
  lc.demo.meta = nlohmann::json{{"env", "pendulum"},
                                {"episode_horizon", horizon},
                                {"pid_dims", {0}},
                                {"pid_angular", {true}},
                                {"dt", dt},
                                {"L", 3}};
  return lc;
}

// SDN whose switch follows the one-hot observation exactly and whose
// parameter rows are the given truth.
SdnModel make_oracle_model(const std::vector<PidParams>& truth) {
  TrunkConfig trunk;
  trunk.input_dim = 2;
  trunk.hidden = {2};
  trunk.activation = "tanh";
  GumbelConfig g;
  g.k = 2;
  SdnModel m = init_sdn_model(trunk, make_gain_learning_head(2, 1, {0.0}), g,
                              0);
  m.layer_w[0] = Tensor::from_data({2, 2}, {10.0, 0.0, 0.0, 10.0}, true);
  m.layer_b[0] = Tensor::from_data({1, 2}, {0.0, 0.0}, true);
  m.logit_w = Tensor::from_data({2, 2}, {40.0, 0.0, 0.0, 40.0}, true);
  m.logit_b = Tensor::from_data({1, 2}, {0.0, 0.0}, true);
  std::vector<double> w;
  for (const auto& p : truth) {
    w.push_back(p.kp[0]);
    w.push_back(p.ki[0]);
    w.push_back(p.kd[0]);
    // Inverted through the decode-side variance floor so the decoded
    // sigma_diag lands exactly on the truth value.
    w.push_back(std::log(p.sigma_diag[0] - kVarianceFloor));
  }
  m.final_w = Tensor::from_data({2, 4}, std::move(w), true);
  return m;
}

std::vector<int> all_rows(const TrainSet& s) {
  std::vector<int> rows(s.n);
  for (int i = 0; i < s.n; ++i) rows[i] = i;
  return rows;
}

}  // namespace

TEST_CASE("gaussian nll hits the closed-form values") {
  // Zero residual, unit variance: the pure normalization term.
  auto nll = gaussian_nll(row1({0.3}), row1({0.3}), row1({0.0}));
  CHECK(nll.value() == doctest::Approx(0.9189385332046727).epsilon(1e-12));

  // Unit residual adds exactly one half.
  nll = gaussian_nll(row1({1.3}), row1({0.3}), row1({0.0}));
  CHECK(nll.value() == doctest::Approx(1.4189385332046727).epsilon(1e-12));

  // Two dims, residuals (0, 2), variances (1, 4).
  nll = gaussian_nll(row1({0.0, 2.0}), row1({0.0, 0.0}),
                     row1({0.0, std::log(4.0)}));
  const double expect = 0.5 * (0.0 + 1.0) + 0.5 * std::log(4.0) +
                        std::log(2.0 * kPi);
  CHECK(nll.value() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(nll.value() ==
        doctest::Approx(gaussian_nll_value({0.0, 2.0}, {0.0, 0.0}, {1.0, 4.0}))
            .epsilon(1e-12));
  CHECK(nll.value() == doctest::Approx(3.031).epsilon(1e-3));

  CHECK_THROWS_AS(gaussian_nll_value({0.0}, {0.0}, {-1.0}), NumericError);
  CHECK_THROWS_AS(gaussian_nll(row1({0.0}), row1({0.0, 1.0}), row1({0.0})),
                  ShapeError);
}

TEST_CASE("gaussian nll over a batch is the per-row density") {
  Rng rng(3);
  const int b = 6, d = 3;
  std::vector<double> u, uh, lv;
  for (int i = 0; i < b * d; ++i) {
    u.push_back(rng.normal());
    uh.push_back(rng.normal());
    lv.push_back(rng.uniform(-1.0, 1.0));
  }
  const auto rows = gaussian_nll(Tensor::from_data({b, d}, u, false),
                                 Tensor::from_data({b, d}, uh, false),
                                 Tensor::from_data({b, d}, lv, false));
  REQUIRE(rows.shape() == Shape{b, 1});
  for (int r = 0; r < b; ++r) {
    std::vector<double> ur(u.begin() + r * d, u.begin() + (r + 1) * d);
    std::vector<double> uhr(uh.begin() + r * d, uh.begin() + (r + 1) * d);
    std::vector<double> var;
    for (int c = 0; c < d; ++c) var.push_back(std::exp(lv[r * d + c]));
    CHECK(rows[r] ==
          doctest::Approx(gaussian_nll_value(ur, uhr, var)).epsilon(1e-12));
  }
}

TEST_CASE("mixture nll: degenerate, duplicated, and brute-force cases") {
  // k = 1 must reduce to the plain Gaussian NLL.
  MdnOutput one;
  one.weight_logits = row1({0.7});
  one.means = row1({0.4, -0.2});
  one.log_vars = row1({0.3, -0.5});
  const auto u = row1({0.1, 0.2});
  CHECK(mdn_nll(u, one).value() ==
        doctest::Approx(
            gaussian_nll(u, one.means, one.log_vars).value())
            .epsilon(1e-14));

  // Two identical components at any common weight split change nothing.
  MdnOutput two;
  two.weight_logits = row1({0.9, 0.9});
  two.means = row1({0.4, -0.2, 0.4, -0.2});
  two.log_vars = row1({0.3, -0.5, 0.3, -0.5});
  CHECK(mdn_nll(u, two).value() ==
        doctest::Approx(mdn_nll(u, one).value()).epsilon(1e-12));

  // Three random components against the direct density sum.
  Rng rng(11);
  std::vector<double> logits, means, lvs;
  std::vector<double> pis(3);
  std::vector<std::vector<double>> mus(3), vars(3);
  for (int i = 0; i < 3; ++i) {
    logits.push_back(rng.uniform(-1.0, 1.0));
    mus[i] = {rng.normal(), rng.normal()};
    vars[i].resize(2);
    for (int d = 0; d < 2; ++d) {
      const double lv = rng.uniform(-1.5, 1.0);
      lvs.push_back(lv);
      vars[i][d] = std::exp(lv);
    }
    means.insert(means.end(), mus[i].begin(), mus[i].end());
  }
  double zsum = 0.0;
  for (double l : logits) zsum += std::exp(l);
  for (int i = 0; i < 3; ++i) pis[i] = std::exp(logits[i]) / zsum;

  MdnOutput three;
  three.weight_logits = row1(logits);
  three.means = row1(means);
  three.log_vars = row1(lvs);
  const std::vector<double> point{0.25, -0.75};
  CHECK(mdn_nll(row1(point), three).value() ==
        doctest::Approx(mixture_nll_oracle(point, pis, mus, vars))
            .epsilon(1e-10));
}

TEST_CASE("batch regularizer values and lower bound") {
  // Uniform column means sit exactly at ln K.
  auto uniform2 =
      Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5}, false);
  CHECK(ce_regularizer(uniform2).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto uniform3 = Tensor::from_data(
      {2, 3}, {1.0, 0.0, 0.0, 0.0, 0.5, 0.5}, false);
  // Column means (0.5, 0.25, 0.25): not uniform, so strictly above ln 3.
  CHECK(ce_regularizer(uniform3).value() > std::log(3.0));
  auto exact3 = Tensor::full({4, 3}, 1.0 / 3.0);
  CHECK(ce_regularizer(exact3).value() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-9));

  // Concentrated means (0.9, 0.1).
  auto skew =
      Tensor::from_data({2, 2}, {0.8, 0.2, 1.0, 0.0}, false);
  CHECK(ce_regularizer(skew).value() ==
        doctest::Approx(-0.5 * (std::log(0.9) + std::log(0.1)))
            .epsilon(1e-12));
  CHECK(ce_regularizer(skew).value() == doctest::Approx(1.203973).epsilon(1e-6));

  // Gibbs bound on random simplex batches.
  Rng rng(21);
  for (int rep = 0; rep < 2000; ++rep) {
    const int b = 1 + rng.uniform_int(6);
    const int k = 2 + rng.uniform_int(4);
    std::vector<double> rows;
    for (int r = 0; r < b; ++r) {
      std::vector<double> e(k);
      double s = 0.0;
      for (int c = 0; c < k; ++c) {
        e[c] = -std::log(rng.uniform(1e-12, 1.0));
        s += e[c];
      }
      for (int c = 0; c < k; ++c) rows.push_back(e[c] / s);
    }
    const double v =
        ce_regularizer(Tensor::from_data({b, k}, rows, false)).value();
    CHECK(v >= std::log(static_cast<double>(k)) - 1e-12);
  }
}

TEST_CASE("materialized windows match the sequential controller") {
  PendulumPhysics phys;
  DemonstratorConfig dcfg;
  const auto demo = generate_pendulum_dataset(900, phys, dcfg, 17);
  const int L = 10;
  const auto set = materialize_windows(demo, L, phys.dt);
  REQUIRE(set.n == 900);
  REQUIRE(set.pid_dim == 1);

  PidParams p;
  p.kp = {-3.1};
  p.ki = {0.21};
  p.kd = {-0.7};
  p.mu = {0.0};
  p.sigma_diag = {1.0};

  DecodedBlocks blocks;
  blocks.kp = row1(p.kp);
  blocks.ki = row1(p.ki);
  blocks.kd = row1(p.kd);
  blocks.mu = row1(p.mu);
  blocks.log_var = row1({0.0});
  const auto batch = gather_batch(set, all_rows(set));
  const Tensor u_hat = control_law_mean(blocks, batch);

  HistoryWindow hist(1, L, phys.dt, {true});
  for (int k = 0; k < set.n; ++k) {
    if (k % 150 == 0) hist.reset();  // generator episode horizon
    hist.push({demo.records[k].x[0]});
    const auto expect = pid_action(p, hist);
    CHECK(u_hat[k] == doctest::Approx(expect[0]).epsilon(1e-12));
  }
}

TEST_CASE("windows with a learned reference match the controller too") {
  // Non-angular two-dim case with mu away from zero exercises the
  // sum(x) - count*mu form of the integral.
  Demonstration demo;
  Rng rng(29);
  const double dt = 0.1;
  for (int k = 0; k < 40; ++k) {
    DemoRecord rec;
    rec.t = dt * k;
    rec.x = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    rec.u = {0.0, 0.0};
    rec.z = rec.x;
    demo.records.push_back(std::move(rec));
  }
  demo.meta = nlohmann::json{{"env", "arm"},
                             {"episode_horizon", 8},
                             {"pid_dims", {0, 1}},
                             {"pid_angular", {false, false}},
                             {"dt", dt},
                             {"L", 4}};

  PidParams p;
  p.kp = {-2.0, -2.0};
  p.ki = {0.3, -0.4};
  p.kd = {0.5, 0.9};
  p.mu = {0.7, -1.1};
  p.sigma_diag = {1.0, 1.0};

  DecodedBlocks blocks;
  blocks.kp = row1(p.kp);
  blocks.ki = row1(p.ki);
  blocks.kd = row1(p.kd);
  blocks.mu = row1(p.mu);
  blocks.log_var = row1({0.0, 0.0});

  const auto set = materialize_windows(demo, 4, dt);
  const auto u_hat = control_law_mean(blocks, gather_batch(set, all_rows(set)));

  HistoryWindow hist(2, 4, dt);
  for (int k = 0; k < set.n; ++k) {
    if (k % 8 == 0) hist.reset();
    hist.push(demo.records[k].x);
    const auto expect = pid_action(p, hist);
    CHECK(u_hat(k, 0) == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(u_hat(k, 1) == doctest::Approx(expect[1]).epsilon(1e-12));
  }
}

TEST_CASE("oracle-switched model reaches the irreducible likelihood") {
  const auto lc = make_labeled_case(240, 5);
  const auto set = materialize_windows(lc.demo, 3, 0.05);
  const auto batch = gather_batch(set, all_rows(set));
  const SdnModel model = make_oracle_model(lc.truth);

  // Small temperature, no noise: the saturated logits make the switch an
  // exact one-hot, so params are exact parameter-table rows.
  const auto parts = sdn_loss(model, batch, 0.05,
                              Tensor::zeros({set.n, 2}), true, 1.0);

  HistoryWindow hist(1, 3, 0.05, {true});
  double oracle = 0.0;
  for (int k = 0; k < set.n; ++k) {
    if (k % 5 == 0) hist.reset();
    hist.push(lc.demo.records[k].x);
    const auto& p = lc.truth[*lc.demo.records[k].mode];
    const auto [u_mean, var] = predicted_action(p, hist);
    oracle += gaussian_nll_value(lc.demo.records[k].u, u_mean, var);
  }
  oracle /= set.n;
  CHECK(parts.nll.value() == doctest::Approx(oracle).epsilon(1e-9));

  // Dropping the regularizer leaves the pure likelihood objective.
  const auto bare = sdn_loss(model, batch, 0.05, Tensor::zeros({set.n, 2}),
                             false, 1.0);
  CHECK(bare.total.value() == doctest::Approx(bare.nll.value()).epsilon(1e-15));
  CHECK(parts.total.value() ==
        doctest::Approx(parts.nll.value() + parts.ce.value()).epsilon(1e-12));
}

TEST_CASE("full loss gradients pass the central-difference check") {
  const auto lc = make_labeled_case(12, 9);
  const auto set = materialize_windows(lc.demo, 3, 0.05);
  const auto batch = gather_batch(set, all_rows(set));

  SUBCASE("switching model, gain head") {
    GumbelConfig g;
    g.k = 2;
    SdnModel m = init_sdn_model(default_trunk(2), make_gain_learning_head(2, 1, {0.0}),
                                g, 3);
    Rng rng(4);
    const Tensor noise = draw_gumbel_noise(rng, {set.n, 2});
    auto params = m.parameters();
    const double err = grad_check(
        [&](std::vector<Tensor>&) {
          return sdn_loss(m, batch, 1.3, noise, true, 0.7).total;
        },
        params, 1e-5);
    CHECK(err < 1e-6);
  }

  SUBCASE("switching model, reference head") {
    GumbelConfig g;
    g.k = 3;
    SdnModel m = init_sdn_model(default_trunk(2),
                                make_reference_learning_head(3, 1, -2.0), g, 7,
                                {{-1.0, 1.0}});
    Rng rng(8);
    const Tensor noise = draw_gumbel_noise(rng, {set.n, 3});
    auto params = m.parameters();
    const double err = grad_check(
        [&](std::vector<Tensor>&) {
          return sdn_loss(m, batch, 0.9, noise, true, 1.0).total;
        },
        params, 1e-5);
    CHECK(err < 1e-6);
  }

  SUBCASE("mixture baseline") {
    MdnModel m = init_mdn_model(default_trunk(2), 3, 1, 13);
    auto params = m.parameters();
    const double err = grad_check(
        [&](std::vector<Tensor>&) {
          return mean(mdn_nll(batch.u, mdn_forward(m, batch.z)));
        },
        params, 1e-5);
    CHECK(err < 1e-6);
  }

  SUBCASE("plain regressor baseline") {
    RegressorModel m = init_regressor_model(default_trunk(2), 1, 19);
    auto params = m.parameters();
    const double err = grad_check(
        [&](std::vector<Tensor>&) {
          const auto out = regressor_forward(m, batch.z);
          return mean(gaussian_nll(batch.u, out.mean, out.log_var));
        },
        params, 1e-5);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("loss is blind to a joint relabeling of the modes") {
  const auto lc = make_labeled_case(30, 23);
  const auto set = materialize_windows(lc.demo, 3, 0.05);
  const auto batch = gather_batch(set, all_rows(set));

  GumbelConfig g;
  g.k = 3;
  SdnModel m = init_sdn_model(default_trunk(2), make_gain_learning_head(3, 1, {0.0}),
                              g, 31);
  Rng rng(6);
  const Tensor noise = draw_gumbel_noise(rng, {set.n, 3});

  const std::vector<int> perm{2, 0, 1};  // new index j holds old perm[j]
  SdnModel pm = m;
  const int feat = m.logit_w.rows();
  std::vector<double> lw(feat * 3), lb(3), fw(3 * m.final_w.cols());
  std::vector<double> pn(static_cast<size_t>(set.n) * 3);
  for (int j = 0; j < 3; ++j) {
    for (int r = 0; r < feat; ++r) lw[r * 3 + j] = m.logit_w(r, perm[j]);
    lb[j] = m.logit_b[perm[j]];
    for (int c = 0; c < m.final_w.cols(); ++c) {
      fw[j * m.final_w.cols() + c] = m.final_w(perm[j], c);
    }
    for (int r = 0; r < set.n; ++r) pn[r * 3 + j] = noise(r, perm[j]);
  }
  pm.logit_w = Tensor::from_data({feat, 3}, std::move(lw), true);
  pm.logit_b = Tensor::from_data({1, 3}, std::move(lb), true);
  pm.final_w = Tensor::from_data({3, m.final_w.cols()}, std::move(fw), true);

  const auto base = sdn_loss(m, batch, 1.1, noise, true, 1.0);
  const auto relabeled =
      sdn_loss(pm, batch, 1.1, Tensor::from_data({set.n, 3}, std::move(pn), false),
               true, 1.0);
  CHECK(relabeled.total.value() ==
        doctest::Approx(base.total.value()).epsilon(1e-12));
  CHECK(relabeled.ce.value() == doctest::Approx(base.ce.value()).epsilon(1e-12));
}

TEST_CASE("training bookkeeping: steps, history length, validation") {
  const auto lc = make_labeled_case(10, 41);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.gumbel.k = 2;
  cfg.L = 3;
  cfg.dt = 0.05;
  auto [model, hist] = train_sdn(lc.demo, cfg);
  CHECK(hist.total_steps == 3);  // ceil(10 / 4)
  REQUIRE(hist.epochs.size() == 1);
  CHECK(hist.epochs[0].y_bar.size() == 2);
  double ysum = 0.0;
  for (double v : hist.epochs[0].y_bar) ysum += v;
  CHECK(ysum == doctest::Approx(1.0).epsilon(1e-9));

  TrainConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train_sdn(lc.demo, bad), ConfigError);
  bad = cfg;
  bad.ce_weight = -0.5;
  CHECK_THROWS_AS(train_sdn(lc.demo, bad), ConfigError);

  Demonstration gutless = lc.demo;
  gutless.meta.erase("episode_horizon");
  CHECK_THROWS_WITH_AS(train_sdn(gutless, cfg),
                       "train: dataset header lacks 'episode_horizon'",
                       ConfigError);
}

TEST_CASE("identical runs give identical checkpoints") {
  const auto lc = make_labeled_case(120, 47);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 4;
  cfg.seed = 3;
  cfg.gumbel.k = 2;
  cfg.L = 3;

  auto [m1, h1] = train_sdn(lc.demo, cfg);
  auto [m2, h2] = train_sdn(lc.demo, cfg);
  CHECK(sdn_to_json(m1) == sdn_to_json(m2));
  CHECK(h1.epochs.back().total == h2.epochs.back().total);

  auto [b1, bh1] = train_mdn(lc.demo, cfg);
  auto [b2, bh2] = train_mdn(lc.demo, cfg);
  CHECK(mdn_to_json(b1) == mdn_to_json(b2));

  auto [r1, rh1] = train_regressor(lc.demo, cfg);
  auto [r2, rh2] = train_regressor(lc.demo, cfg);
  CHECK(regressor_to_json(r1) == regressor_to_json(r2));
}

TEST_CASE("arm datasets train on the leading split only") {
  ArmTaskConfig acfg = default_arm_task();
  acfg.obs = ArmObsKind::Direct;
  const auto demo = generate_arm_dataset(300, acfg, 2);
  const auto set = materialize_windows(demo, 10, acfg.dt, 0,
                                       demo.meta.at("train_frames").get<int>());
  CHECK(set.n == 150);

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.gumbel.k = 4;
  auto [model, hist] = train_sdn(demo, cfg);
  CHECK(hist.total_steps == 2 * 5);  // ceil(150 / 32) = 5 per epoch
  CHECK(model.head.block(Block::Kp).learned == false);
  CHECK(model.head.block(Block::Kp).fixed[0] == doctest::Approx(-2.0));
  CHECK(model.head.block(Block::Mu).learned == true);
}

TEST_CASE("a modest pendulum run learns and keeps its switches alive") {
  PendulumPhysics phys;
  DemonstratorConfig dcfg;
  const auto demo = generate_pendulum_dataset(3000, phys, dcfg, 19);

  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 50;
  cfg.seed = 1;
  cfg.gumbel.k = 3;
  auto [model, hist] = train_sdn(demo, cfg);

  CHECK(hist.epochs.back().total < hist.epochs.front().total);
  double top = 0.0;
  for (double v : hist.epochs.back().y_bar) top = std::max(top, v);
  CHECK(top < 0.9);

  save_history_csv(hist, "tmp_hist.csv");
  std::ifstream in("tmp_hist.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,tau,nll,ce_reg,total,y_bar_1,y_bar_2,y_bar_3");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 50);
  std::remove("tmp_hist.csv");
}
