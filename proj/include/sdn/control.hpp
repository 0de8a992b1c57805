#pragma once

#include <deque>
#include <utility>
#include <vector>

namespace sdn {

// Principal value in [-pi, pi).
double wrap_angle(double a);

// One mode's control law: elementwise PID gains, a reference state, and the
// diagonal action-noise variance attached to that mode.
struct PidParams {
  std::vector<double> kp;
  std::vector<double> ki;
  std::vector<double> kd;
  std::vector<double> mu;
  std::vector<double> sigma_diag;
  int mode_id = 0;

  void validate() const;
};

// Rolling buffer of the newest states. Capacity is window + 1 so the
// integral can see `window` past states besides the current one. Dimensions
// flagged angular are differenced by principal value so the derivative does
// not spike across the -pi/pi seam.
class HistoryWindow {
 public:
  HistoryWindow(int dims, int window, double dt,
                std::vector<bool> angular = {});

  void push(const std::vector<double>& x);
  void reset();

  int dims() const { return dims_; }
  int window() const { return window_; }
  double dt() const { return dt_; }
  bool angular(int dim) const;
  int available() const { return static_cast<int>(buf_.size()); }
  // age 0 is the newest state, age 1 the one before it, and so on.
  const std::vector<double>& state(int age) const;

 private:
  int dims_;
  int window_;
  double dt_;
  std::vector<bool> angular_;
  std::deque<std::vector<double>> buf_;
};

// One control step from the newest window contents:
//   u = kp.(x - mu) + ki.sum over past states of (x_past - mu)
//       + kd.(x - x_prev) / dt
// Startup is partial: the integral covers whatever history exists and the
// derivative is zero until two states are available. At least one pushed
// state is required.
std::vector<double> pid_action(const PidParams& p, const HistoryWindow& hist);

// Mean and diagonal variance of the action distribution for one mode.
std::pair<std::vector<double>, std::vector<double>> predicted_action(
    const PidParams& p, const HistoryWindow& hist);

// Per-dimension saturation to [-limit, limit].
std::vector<double> clamp_action(std::vector<double> u, double limit);

}  // namespace sdn
