#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sdn/control.hpp"
#include "sdn/errors.hpp"
#include "sdn/rng.hpp"

namespace {

sdn::PidParams scalar_params(double kp, double ki, double kd, double mu) {
  return sdn::PidParams{{kp}, {ki}, {kd}, {mu}, {1.0}, 0};
}

}  // namespace

TEST_CASE("angles wrap to the principal interval") {
  CHECK(sdn::wrap_angle(0.0) == 0.0);
  CHECK(sdn::wrap_angle(M_PI) == doctest::Approx(-M_PI));
  CHECK(sdn::wrap_angle(-M_PI) == doctest::Approx(-M_PI));
  CHECK(sdn::wrap_angle(3.0 * M_PI) == doctest::Approx(-M_PI));
  CHECK(sdn::wrap_angle(2.0 * M_PI + 0.3) == doctest::Approx(0.3));
  CHECK(sdn::wrap_angle(-2.0 * M_PI - 0.3) == doctest::Approx(-0.3));
  CHECK(sdn::wrap_angle(-6.2) == doctest::Approx(2.0 * M_PI - 6.2));
}

TEST_CASE("pid terms accumulate per the hand-worked trace") {
  // kp 2, ki 0.5, kd 1, setpoint 1, dt 0.1, window 3
  sdn::PidParams p = scalar_params(2.0, 0.5, 1.0, 1.0);
  sdn::HistoryWindow hist(1, 3, 0.1);

  hist.push({1.0});
  // Only the proportional term exists: 2*(1-1) = 0.
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(0.0));

  hist.push({1.5});
  // 2*0.5 + 0.5*(1.0-1) + 1*(0.5/0.1) = 1 + 0 + 5
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(6.0));

  hist.push({2.5});
  // 2*1.5 + 0.5*((1.5-1)+(1.0-1)) + 1*(1.0/0.1) = 3 + 0.25 + 10
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(13.25));
}

TEST_CASE("single-term arithmetic cases") {
  // kp only
  sdn::PidParams p = scalar_params(2.0, 0.0, 0.0, 0.5);
  sdn::HistoryWindow h(1, 10, 0.05);
  h.push({1.0});
  CHECK(sdn::pid_action(p, h)[0] == doctest::Approx(1.0));

  // ki only, constant unit error over a window of 3 past states
  sdn::PidParams pi = scalar_params(0.0, 0.1, 0.0, 0.0);
  sdn::HistoryWindow h2(1, 3, 0.05);
  for (int i = 0; i < 4; ++i) h2.push({1.0});
  CHECK(sdn::pid_action(pi, h2)[0] == doctest::Approx(0.3));

  // all gains zero
  sdn::PidParams z = scalar_params(0.0, 0.0, 0.0, 0.0);
  CHECK(sdn::pid_action(z, h2)[0] == doctest::Approx(0.0));
}

TEST_CASE("integral window truncates to the newest past states") {
  sdn::PidParams p = scalar_params(0.0, 1.0, 0.0, 0.0);
  sdn::HistoryWindow hist(1, 2, 0.1);
  for (double v : {10.0, 1.0, 2.0, 3.0}) hist.push({v});
  // Integral sees only the last two past states: 1 + 2. The 10 fell out.
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(3.0));
}

TEST_CASE("dimensions stay independent") {
  sdn::PidParams p{{1.0, 10.0}, {0.0, 0.0}, {0.0, 1.0},
                   {0.0, 5.0},  {1.0, 1.0}, 0};
  sdn::HistoryWindow hist(2, 4, 0.5);
  hist.push({2.0, 6.0});
  hist.push({3.0, 6.5});
  auto u = sdn::pid_action(p, hist);
  CHECK(u[0] == doctest::Approx(3.0));  // 1*(3-0)
  CHECK(u[1] == doctest::Approx(10.0 * 1.5 + 1.0 * 0.5 / 0.5));
}

TEST_CASE("scaling every gain scales the action exactly") {
  sdn::Rng rng(2);
  sdn::HistoryWindow hist(2, 5, 0.05);
  for (int i = 0; i < 7; ++i)
    hist.push({rng.uniform(-2, 2), rng.uniform(-2, 2)});
  sdn::PidParams p{{-3.0, 0.7}, {0.2, -0.1}, {1.1, -0.4},
                   {0.3, -0.9}, {1.0, 1.0},  0};
  const double a = -2.75;
  sdn::PidParams scaled = p;
  for (auto* blk : {&scaled.kp, &scaled.ki, &scaled.kd}) {
    for (double& v : *blk) v *= a;
  }
  auto u = sdn::pid_action(p, hist);
  auto ua = sdn::pid_action(scaled, hist);
  for (size_t i = 0; i < u.size(); ++i)
    CHECK(ua[i] == doctest::Approx(a * u[i]).epsilon(1e-12));
}

TEST_CASE("sitting at the reference yields zero action for any gains") {
  sdn::PidParams p{{-5.0, 3.0}, {2.0, -1.0}, {0.7, 0.7},
                   {0.4, -1.2}, {1.0, 1.0},  0};
  sdn::HistoryWindow hist(2, 10, 0.05);
  for (int i = 0; i < 12; ++i) hist.push({0.4, -1.2});
  auto u = sdn::pid_action(p, hist);
  CHECK(u[0] == doctest::Approx(0.0));
  CHECK(u[1] == doctest::Approx(0.0));
}

TEST_CASE("derivative term ignores the reference point") {
  sdn::HistoryWindow hist(1, 4, 0.1);
  hist.push({0.3});
  hist.push({0.9});
  sdn::PidParams d1 = scalar_params(0.0, 0.0, 2.0, 0.0);
  sdn::PidParams d2 = scalar_params(0.0, 0.0, 2.0, 17.0);
  CHECK(sdn::pid_action(d1, hist)[0] ==
        doctest::Approx(sdn::pid_action(d2, hist)[0]));
}

TEST_CASE("angular dims difference across the seam stays small") {
  sdn::PidParams p = scalar_params(0.0, 0.0, 1.0, 0.0);
  sdn::HistoryWindow hist(1, 2, 0.05, {true});
  hist.push({3.1});
  hist.push({-3.1});  // crossed the seam moving in +theta
  const double expect = (2.0 * M_PI - 6.2) / 0.05;
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(expect));

  // Without the flag the raw jump leaks through.
  sdn::HistoryWindow plain(1, 2, 0.05);
  plain.push({3.1});
  plain.push({-3.1});
  CHECK(sdn::pid_action(p, plain)[0] == doctest::Approx(-6.2 / 0.05));
}

TEST_CASE("angular error wraps against the reference too") {
  sdn::PidParams p = scalar_params(1.0, 0.0, 0.0, 3.0);
  sdn::HistoryWindow hist(1, 0, 0.05, {true});
  hist.push({-3.0});
  // wrap(-3 - 3) = 2*pi - 6
  CHECK(sdn::pid_action(p, hist)[0] == doctest::Approx(2.0 * M_PI - 6.0));
}

TEST_CASE("predicted action carries the mode's variance") {
  sdn::PidParams p = scalar_params(2.0, 0.0, 0.0, 0.0);
  p.sigma_diag = {0.04};
  sdn::HistoryWindow hist(1, 10, 0.05);
  hist.push({1.5});
  auto [u, sig] = sdn::predicted_action(p, hist);
  CHECK(u[0] == doctest::Approx(3.0));
  CHECK(sig[0] == doctest::Approx(0.04));

  p.sigma_diag = {-1.0};
  CHECK_THROWS_AS(sdn::predicted_action(p, hist), sdn::ConfigError);
  p.sigma_diag = {std::numeric_limits<double>::quiet_NaN()};
  CHECK_THROWS_AS(sdn::predicted_action(p, hist), sdn::NumericError);
}

TEST_CASE("actions clamp per dimension") {
  CHECK(sdn::clamp_action({1.5}, 2.0)[0] == 1.5);
  CHECK(sdn::clamp_action({10.0}, 2.0)[0] == 2.0);
  CHECK(sdn::clamp_action({-10.0}, 2.0)[0] == -2.0);
  auto v = sdn::clamp_action({-3.0, 0.5, 3.0}, 1.0);
  CHECK(v == std::vector<double>{-1.0, 0.5, 1.0});
  CHECK_THROWS_AS(sdn::clamp_action({1.0}, 0.0), sdn::ConfigError);
}

TEST_CASE("window and gain validation") {
  sdn::HistoryWindow hist(1, 10, 0.05);
  CHECK_THROWS_AS(hist.push({1.0, 2.0}), sdn::ShapeError);
  CHECK_THROWS_AS(hist.state(0), sdn::ShapeError);
  CHECK_THROWS_AS(sdn::HistoryWindow(1, 10, 0.0), sdn::ConfigError);
  CHECK_THROWS_AS(sdn::HistoryWindow(0, 10, 0.05), sdn::ConfigError);
  CHECK_THROWS_AS(sdn::HistoryWindow(1, -1, 0.05), sdn::ConfigError);
  CHECK_THROWS_AS(sdn::HistoryWindow(1, 2, 0.05, {true, false}),
                  sdn::ConfigError);

  sdn::PidParams ragged{{1.0, 2.0}, {0.0}, {0.0, 0.0}, {0.0, 0.0}, {1.0}, 0};
  sdn::HistoryWindow h2(2, 10, 0.05);
  h2.push({0.0, 0.0});
  CHECK_THROWS_AS(sdn::pid_action(ragged, h2), sdn::ConfigError);

  sdn::PidParams p = scalar_params(1, 0, 0, 0);
  CHECK_THROWS_AS(sdn::pid_action(p, h2), sdn::ConfigError);

  sdn::HistoryWindow h1(1, 10, 0.05);
  CHECK_THROWS_AS(sdn::pid_action(p, h1), sdn::EvalError);
}

TEST_CASE("reset empties the buffer") {
  sdn::HistoryWindow hist(1, 3, 0.05);
  hist.push({1.0});
  hist.push({2.0});
  CHECK(hist.available() == 2);
  hist.reset();
  CHECK(hist.available() == 0);
  hist.push({5.0});
  CHECK(hist.state(0)[0] == 5.0);
  CHECK(hist.available() == 1);
}
