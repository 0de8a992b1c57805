#pragma once

#include <vector>

#include "sdn/rng.hpp"

namespace sdn {

enum class ArmObsKind { Rendered, Direct };

// Planar arm with unit-length links, reaching toward a cycle of joint-angle
// goals under a fixed proportional law. The observation is either the raw
// joint vector or a small grayscale rendering of the arm.
struct ArmTaskConfig {
  int n_joints = 8;
  std::vector<std::vector<double>> goals;  // M goal joint vectors, radians
  double kp_fixed = 2.0;                   // known proportional gain
  ArmObsKind obs = ArmObsKind::Rendered;
  int render_h = 16;
  int render_w = 16;
  double noise_std = 0.02;         // observation noise (pixels or angles)
  double process_noise_std = 0.01; // actuation noise on the joint velocities
  double dt = 0.05;

  void validate() const;
};

// Four well-separated goal postures used by the default task.
std::vector<std::vector<double>> default_arm_goals();
ArmTaskConfig default_arm_task();

// Forward kinematics: positions of the n_joints link endpoints, cumulative
// angles, unit links, base at the origin. Returned flat as x0,y0,x1,y1,...
std::vector<double> arm_link_endpoints(const std::vector<double>& x);

// Observation for joint vector x. Rendered mode rasterizes the arm into an
// H*W grayscale image (flattened row-major, values in [0, 1] before noise);
// direct mode returns x itself. Gaussian noise of noise_std is added when
// rng is given; pass nullptr for the noise-free image.
std::vector<double> arm_render(const std::vector<double>& x,
                               const ArmTaskConfig& cfg, Rng* rng = nullptr);

int arm_obs_dim(const ArmTaskConfig& cfg);

}  // namespace sdn
