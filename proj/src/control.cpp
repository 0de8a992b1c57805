#include "sdn/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdn/errors.hpp"

namespace sdn {

double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * M_PI);  // lands in [-pi, pi]
  if (w >= M_PI) w -= 2.0 * M_PI;
  return w;
}

void PidParams::validate() const {
  const size_t d = kp.size();
  if (ki.size() != d || kd.size() != d || sigma_diag.size() != d) {
    throw ConfigError("pid: kp/ki/kd/sigma blocks must share one length");
  }
  auto all_finite = [](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  if (!all_finite(kp) || !all_finite(ki) || !all_finite(kd) ||
      !all_finite(mu) || !all_finite(sigma_diag)) {
    throw NumericError("pid: non-finite parameter entry");
  }
  for (double s : sigma_diag) {
    if (s <= 0.0) throw ConfigError("pid: sigma_diag entries must be positive");
  }
}

HistoryWindow::HistoryWindow(int dims, int window, double dt,
                             std::vector<bool> angular)
    : dims_(dims), window_(window), dt_(dt), angular_(std::move(angular)) {
  if (dims < 1) throw ConfigError("history: dims must be positive");
  if (window < 0) throw ConfigError("history: window must be non-negative");
  if (dt <= 0.0) throw ConfigError("history: dt must be positive");
  if (!angular_.empty() && static_cast<int>(angular_.size()) != dims) {
    throw ConfigError("history: angular flags must cover every dimension");
  }
}

void HistoryWindow::push(const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != dims_) {
    throw ShapeError("history: state has " + std::to_string(x.size()) +
                     " dims, expected " + std::to_string(dims_));
  }
  buf_.push_back(x);
  if (buf_.size() > static_cast<size_t>(window_) + 1) buf_.pop_front();
}

void HistoryWindow::reset() { buf_.clear(); }

bool HistoryWindow::angular(int dim) const {
  return !angular_.empty() && angular_[dim];
}

const std::vector<double>& HistoryWindow::state(int age) const {
  if (age < 0 || age >= available()) {
    throw ShapeError("history: age " + std::to_string(age) + " outside the " +
                     std::to_string(available()) + " stored states");
  }
  return buf_[buf_.size() - 1 - age];
}

std::vector<double> pid_action(const PidParams& p, const HistoryWindow& hist) {
  const size_t d = p.kp.size();
  if (p.ki.size() != d || p.kd.size() != d || p.mu.size() != d) {
    throw ConfigError("pid: gain blocks kp/ki/kd/mu must share one length");
  }
  if (static_cast<size_t>(hist.dims()) != d) {
    throw ConfigError("pid: window carries " + std::to_string(hist.dims()) +
                      " dims for " + std::to_string(d) + " gains");
  }
  if (hist.available() < 1) throw EvalError("pid: no state pushed yet");

  auto err = [&](double x, size_t i) {
    const double e = x - p.mu[i];
    return hist.angular(static_cast<int>(i)) ? wrap_angle(e) : e;
  };

  const std::vector<double>& xk = hist.state(0);
  std::vector<double> u(d, 0.0);
  const int past = std::min(hist.window(), hist.available() - 1);
  for (size_t i = 0; i < d; ++i) {
    double acc = p.kp[i] * err(xk[i], i);
    double integral = 0.0;
    for (int l = 1; l <= past; ++l) integral += err(hist.state(l)[i], i);
    acc += p.ki[i] * integral;
    if (hist.available() >= 2) {
      double diff = xk[i] - hist.state(1)[i];
      if (hist.angular(static_cast<int>(i))) diff = wrap_angle(diff);
      acc += p.kd[i] * diff / hist.dt();
    }
    u[i] = acc;
  }
  return u;
}

std::pair<std::vector<double>, std::vector<double>> predicted_action(
    const PidParams& p, const HistoryWindow& hist) {
  p.validate();
  return {pid_action(p, hist), p.sigma_diag};
}

std::vector<double> clamp_action(std::vector<double> u, double limit) {
  if (limit <= 0.0) throw ConfigError("clamp: limit must be positive");
  for (double& v : u) v = std::clamp(v, -limit, limit);
  return u;
}

}  // namespace sdn
