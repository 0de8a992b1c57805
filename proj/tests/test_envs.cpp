#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdn/dataset.hpp"
#include "sdn/errors.hpp"

using namespace sdn;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(static_cast<bool>(out));
  out << text;
}

}  // namespace

TEST_CASE("equilibria stay put") {
  PendulumPhysics p;

  PendulumState upright{0.0, 0.0};
  auto s = pendulum_step(upright, 0.0, p);
  CHECK(std::abs(s.theta) < 1e-12);
  CHECK(std::abs(s.omega) < 1e-12);

  PendulumState hanging{wrap_angle(kPi), 0.0};
  s = pendulum_step(hanging, 0.0, p);
  CHECK(std::abs(wrap_angle(s.theta - hanging.theta)) < 1e-12);
  CHECK(std::abs(s.omega) < 1e-12);
}

TEST_CASE("theta stays wrapped through fast spins") {
  PendulumPhysics p;
  PendulumState s{3.0, 7.5};
  for (int k = 0; k < 400; ++k) {
    s = pendulum_step(s, (k % 2 == 0) ? p.u_max : -p.u_max, p);
    CHECK(s.theta >= -kPi);
    CHECK(s.theta < kPi);
    CHECK(std::isfinite(s.omega));
  }
}

TEST_CASE("energy at the reference states and its symmetry") {
  PendulumPhysics p;
  CHECK(pendulum_energy({0.0, 0.0}, p) == doctest::Approx(p.m * p.g * p.l));
  CHECK(pendulum_energy({wrap_angle(kPi), 0.0}, p) ==
        doctest::Approx(-p.m * p.g * p.l));
  CHECK(upright_energy(p) == doctest::Approx(9.81));

  // Even in both arguments.
  CHECK(pendulum_energy({0.7, 1.3}, p) ==
        doctest::Approx(pendulum_energy({-0.7, 1.3}, p)));
  CHECK(pendulum_energy({0.7, 1.3}, p) ==
        doctest::Approx(pendulum_energy({0.7, -1.3}, p)));
}

TEST_CASE("undamped unforced swings conserve energy") {
  PendulumPhysics p;
  p.b = 0.0;
  PendulumState s0{1.0, 0.0};
  const double e0 = pendulum_energy(s0, p);

  // Reference run at dt/100: integration error is negligible there, so a
  // drift would mean the dynamics and the energy function disagree.
  PendulumPhysics fine = p;
  fine.dt = p.dt / 100.0;
  PendulumState oracle = s0;
  for (int k = 0; k < 20000; ++k) oracle = pendulum_step(oracle, 0.0, fine);
  CHECK(std::abs(pendulum_energy(oracle, p) - e0) / std::abs(e0) < 1e-6);

  // The production step size tracks the reference trajectory and keeps the
  // energy error at the integration-accuracy level (measured 6e-5).
  PendulumState coarse = s0;
  for (int k = 0; k < 200; ++k) coarse = pendulum_step(coarse, 0.0, p);
  CHECK(std::abs(pendulum_energy(coarse, p) - e0) / std::abs(e0) < 1e-4);
  CHECK(std::abs(wrap_angle(coarse.theta - oracle.theta)) < 2e-3);
}

TEST_CASE("physics and demonstrator configs reject bad values") {
  PendulumPhysics p;
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = PendulumPhysics{};
  p.b = -0.1;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  DemonstratorConfig c;
  c.k_bal_theta = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DemonstratorConfig{};
  c.e_band = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  CHECK(std::string(pendulum_mode_name(kModePump)) == "pump");
  CHECK(std::string(pendulum_mode_name(kModeSpin)) == "spin");
  CHECK(std::string(pendulum_mode_name(kModeBalance)) == "balance");
  CHECK_THROWS_AS(pendulum_mode_name(7), ConfigError);
}

TEST_CASE("demonstrator mode selection and torque signs") {
  PendulumPhysics p;
  DemonstratorConfig c;

  // Slow and near upright: the PD balancer pushes against the tilt.
  auto a = demonstrator_action({0.1, 0.0}, p, c);
  CHECK(a.mode == kModeBalance);
  CHECK(a.u < 0.0);

  // Hanging with a slight nudge: far below the upright energy level, so
  // the pump feeds torque along the motion.
  a = demonstrator_action({wrap_angle(kPi), 0.1}, p, c);
  CHECK(a.mode == kModePump);
  CHECK(a.u > 0.0);
  CHECK(a.u == doctest::Approx(c.k_pump * 0.1));

  // Too much energy while moving fast: spin-down damps it, and the torque
  // limit clips the command.
  a = demonstrator_action({0.0, 3.0}, p, c);
  CHECK(a.mode == kModeSpin);
  CHECK(a.u == doctest::Approx(-p.u_max));
}

TEST_CASE("demonstrator swings up and holds from random starts") {
  PendulumPhysics p;
  DemonstratorConfig c;
  int held = 0;
  for (int ep = 0; ep < 1000; ++ep) {
    Rng rng(500 + ep);
    PendulumState s{rng.uniform(-kPi, kPi), rng.uniform(-1.0, 1.0)};
    bool hold = true;
    for (int k = 0; k < 1000; ++k) {
      s = pendulum_step(s, demonstrator_action(s, p, c).u, p);
      if (k >= 900 && std::abs(s.theta) >= 0.2) hold = false;
    }
    if (hold) ++held;
  }
  CHECK(held >= 950);
}

TEST_CASE("pendulum dataset: count, determinism, label frequencies") {
  PendulumPhysics p;
  DemonstratorConfig c;
  auto demo = generate_pendulum_dataset(10000, p, c, 42);
  REQUIRE(demo.records.size() == 10000);

  auto again = generate_pendulum_dataset(10000, p, c, 42, 150, 10);
  REQUIRE(again.records.size() == 10000);
  int counts[kPendulumModes] = {0, 0, 0};
  for (size_t i = 0; i < demo.records.size(); ++i) {
    const auto& r = demo.records[i];
    const auto& r2 = again.records[i];
    CHECK(r.t == r2.t);
    CHECK(r.x == r2.x);
    CHECK(r.u == r2.u);
    CHECK(r.mode == r2.mode);
    REQUIRE(r.mode.has_value());
    counts[*r.mode]++;
    CHECK(r.x[0] >= -kPi);
    CHECK(r.x[0] < kPi);
    if (i > 0) CHECK(r.t > demo.records[i - 1].t);
  }
  for (int m = 0; m < kPendulumModes; ++m) {
    CHECK(counts[m] >= 500);  // every mode carries at least a 5% share
  }
  CHECK(demo.meta.at("env") == "pendulum");
  CHECK(demo.meta.at("episode_horizon") == 150);
}

TEST_CASE("recorded labels replay exactly") {
  PendulumPhysics p;
  DemonstratorConfig c;
  auto demo = generate_pendulum_dataset(1500, p, c, 7);
  for (const auto& r : demo.records) {
    const auto a = demonstrator_action({r.x[0], r.x[1]}, p, c);
    CHECK(a.u == r.u[0]);
    CHECK(a.mode == *r.mode);
  }
}

TEST_CASE("a demonstrator that cannot swing up is rejected") {
  PendulumPhysics p;
  DemonstratorConfig c;
  c.k_pump = 0.01;  // far too weak to escape the bottom
  CHECK_THROWS_AS(generate_pendulum_dataset(3000, p, c, 3), ConfigError);
}

TEST_CASE("demonstration files round-trip and rewrite byte-identically") {
  PendulumPhysics p;
  DemonstratorConfig c;
  auto demo = generate_pendulum_dataset(600, p, c, 11);
  save_demonstration(demo, "tmp_roundtrip.jsonl");
  auto loaded = load_demonstration("tmp_roundtrip.jsonl");

  CHECK(loaded.meta == demo.meta);
  REQUIRE(loaded.records.size() == demo.records.size());
  for (size_t i = 0; i < demo.records.size(); ++i) {
    CHECK(loaded.records[i].t == demo.records[i].t);
    CHECK(loaded.records[i].x == demo.records[i].x);
    CHECK(loaded.records[i].u == demo.records[i].u);
    CHECK(loaded.records[i].z == demo.records[i].z);
    CHECK(loaded.records[i].mode == demo.records[i].mode);
  }

  save_demonstration(loaded, "tmp_roundtrip2.jsonl");
  CHECK(read_file("tmp_roundtrip.jsonl") == read_file("tmp_roundtrip2.jsonl"));
  std::remove("tmp_roundtrip.jsonl");
  std::remove("tmp_roundtrip2.jsonl");
}

TEST_CASE("golden demonstration header stays stable") {
  PendulumPhysics p;
  DemonstratorConfig c;
  auto demo = generate_pendulum_dataset(3, p, c, 42);
  save_demonstration(demo, "tmp_golden_check.jsonl");
  CHECK(read_file("tmp_golden_check.jsonl") ==
        read_file(std::string(GOLDEN_DIR) + "/pendulum_head.jsonl"));
  std::remove("tmp_golden_check.jsonl");
}

TEST_CASE("loader reports the offending line") {
  write_file("tmp_bad1.jsonl", "{\"nometa\":1}\n");
  CHECK_THROWS_WITH_AS(load_demonstration("tmp_bad1.jsonl"),
                       "dataset: first line must be the meta header (line 1)",
                       ParseError);

  write_file("tmp_bad2.jsonl",
             "{\"meta\":{\"env\":\"pendulum\"}}\n"
             "{\"t\":0.0,\"x\":[1],\"u\":[0],\"z\":[1],\"mode\":null}\n"
             "not json\n");
  try {
    load_demonstration("tmp_bad2.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("(line 3)") != std::string::npos);
  }

  write_file("tmp_bad3.jsonl",
             "{\"meta\":{}}\n"
             "{\"t\":0.5,\"x\":[1],\"u\":[0],\"z\":[1],\"mode\":0}\n"
             "{\"t\":0.5,\"x\":[1],\"u\":[0],\"z\":[1],\"mode\":0}\n");
  CHECK_THROWS_WITH_AS(load_demonstration("tmp_bad3.jsonl"),
                       "dataset: record times must strictly increase (line 3)",
                       ParseError);

  write_file("tmp_bad4.jsonl",
             "{\"meta\":{}}\n"
             "{\"t\":0.0,\"x\":[1],\"u\":[0],\"z\":[1],\"mode\":0}\n"
             "{\"t\":0.1,\"x\":[1,2],\"u\":[0],\"z\":[1],\"mode\":0}\n");
  CHECK_THROWS_WITH_AS(load_demonstration("tmp_bad4.jsonl"),
                       "dataset: record dimensions changed mid-file (line 3)",
                       ParseError);

  write_file("tmp_bad5.jsonl",
             "{\"meta\":{}}\n"
             "{\"t\":0.0,\"x\":[1],\"u\":[0],\"z\":[1],\"mode\":0.5}\n");
  CHECK_THROWS_WITH_AS(load_demonstration("tmp_bad5.jsonl"),
                       "dataset: 'mode' must be an integer or null (line 2)",
                       ParseError);

  CHECK_THROWS_AS(load_demonstration("tmp_does_not_exist.jsonl"), IoError);
  for (const char* f : {"tmp_bad1.jsonl", "tmp_bad2.jsonl", "tmp_bad3.jsonl",
                        "tmp_bad4.jsonl", "tmp_bad5.jsonl"}) {
    std::remove(f);
  }
}

TEST_CASE("arm config validation") {
  auto cfg = default_arm_task();
  CHECK(cfg.goals.size() == 4);
  CHECK(arm_obs_dim(cfg) == 256);

  ArmTaskConfig bad = cfg;
  bad.goals[1] = bad.goals[0];
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.goals[2].pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.kp_fixed = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.goals.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forward kinematics accumulates angles over unit links") {
  auto pts = arm_link_endpoints({0.0, kPi / 2});
  REQUIRE(pts.size() == 4);
  CHECK(pts[0] == doctest::Approx(1.0));
  CHECK(pts[1] == doctest::Approx(0.0));
  CHECK(pts[2] == doctest::Approx(1.0));
  CHECK(pts[3] == doctest::Approx(1.0));
}

TEST_CASE("renderer is deterministic and distinguishes the goals") {
  auto cfg = default_arm_task();
  cfg.noise_std = 0.0;

  auto z1 = arm_render(cfg.goals[0], cfg, nullptr);
  auto z2 = arm_render(cfg.goals[0], cfg, nullptr);
  CHECK(z1 == z2);

  for (size_t i = 0; i < cfg.goals.size(); ++i) {
    for (size_t j = i + 1; j < cfg.goals.size(); ++j) {
      const auto a = arm_render(cfg.goals[i], cfg, nullptr);
      const auto b = arm_render(cfg.goals[j], cfg, nullptr);
      double d2 = 0.0, n2 = 0.0;
      for (size_t k = 0; k < a.size(); ++k) {
        d2 += (a[k] - b[k]) * (a[k] - b[k]);
        n2 += a[k] * a[k];
      }
      CHECK(std::sqrt(d2 / n2) > 0.1);
    }
  }

  CHECK_THROWS_AS(arm_render({0.0, 0.0}, cfg, nullptr), ShapeError);
}

TEST_CASE("zero angles render a straight bar from the image centre") {
  auto cfg = default_arm_task();
  cfg.noise_std = 0.0;
  const auto z = arm_render(std::vector<double>(8, 0.0), cfg, nullptr);

  CHECK(nlohmann::json(z).dump() + "\n" ==
        read_file(std::string(GOLDEN_DIR) + "/arm_zero_render.json"));

  // The bar lives in the two middle rows (the centre falls between them)
  // and only to the right of the base.
  double mass = 0.0;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const double v = z[static_cast<size_t>(r) * 16 + c];
      mass += v;
      if (r != 7 && r != 8) CHECK(v == 0.0);
      if (c < 7) CHECK(v == 0.0);
    }
  }
  CHECK(mass > 1.0);
}

TEST_CASE("direct observations are the joint vector") {
  auto cfg = default_arm_task();
  cfg.obs = ArmObsKind::Direct;
  cfg.noise_std = 0.0;
  CHECK(arm_obs_dim(cfg) == 8);
  CHECK(arm_render(cfg.goals[2], cfg, nullptr) == cfg.goals[2]);

  cfg.noise_std = 0.05;
  Rng r1(5), r2(5);
  CHECK(arm_render(cfg.goals[2], cfg, &r1) == arm_render(cfg.goals[2], cfg, &r2));
}

TEST_CASE("arm dataset cycles the goals and records consistent dynamics") {
  auto cfg = default_arm_task();
  auto demo = generate_arm_dataset(2000, cfg, 9);
  REQUIRE(demo.records.size() == 2000);
  CHECK(demo.meta.at("train_frames") == 1000);
  CHECK(demo.meta.at("env") == "arm");

  std::vector<int> counts(cfg.goals.size(), 0);
  for (size_t k = 0; k < demo.records.size(); ++k) {
    const auto& r = demo.records[k];
    REQUIRE(r.mode.has_value());
    REQUIRE(*r.mode >= 0);
    REQUIRE(*r.mode < static_cast<int>(cfg.goals.size()));
    counts[*r.mode]++;
    CHECK(r.z.size() == 256);

    if (k + 1 < demo.records.size()) {
      const auto& nxt = demo.records[k + 1];
      for (int d = 0; d < cfg.n_joints; ++d) {
        CHECK(nxt.x[d] == r.x[d] + r.u[d] * cfg.dt);
      }
      // A label change certifies convergence to the goal just left.
      if (*nxt.mode != *r.mode) {
        double err = 0.0;
        for (int d = 0; d < cfg.n_joints; ++d) {
          err = std::max(err, std::abs(nxt.x[d] - cfg.goals[*r.mode][d]));
        }
        CHECK(err < kPi / 180.0);
      }
    }
  }
  for (size_t m = 0; m < counts.size(); ++m) {
    CHECK(counts[m] >= 2000 / (2 * static_cast<int>(counts.size())));
  }

  auto again = generate_arm_dataset(2000, cfg, 9);
  for (size_t k = 0; k < demo.records.size(); ++k) {
    CHECK(demo.records[k].x == again.records[k].x);
    CHECK(demo.records[k].z == again.records[k].z);
  }
}

TEST_CASE("noise-free single-goal reaching contracts monotonically") {
  ArmTaskConfig cfg;
  cfg.n_joints = 3;
  cfg.goals = {{0.8, -0.6, 0.4}};
  cfg.obs = ArmObsKind::Direct;
  cfg.noise_std = 0.0;
  cfg.process_noise_std = 0.0;
  auto demo = generate_arm_dataset(160, cfg, 1);

  double prev = 1e300;
  for (const auto& r : demo.records) {
    double err = 0.0;
    for (int d = 0; d < 3; ++d) {
      err = std::max(err, std::abs(r.x[d] - cfg.goals[0][d]));
    }
    CHECK(err <= prev);
    prev = err;
  }
  CHECK(prev < 1e-6);
}
