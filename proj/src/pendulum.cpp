#include "sdn/pendulum.hpp"

#include <algorithm>
#include <cmath>

#include "sdn/errors.hpp"

namespace sdn {

void PendulumPhysics::validate() const {
  if (!(m > 0.0) || !(l > 0.0) || !(g > 0.0) || !(u_max > 0.0) ||
      !(dt > 0.0)) {
    throw ConfigError("pendulum: m, l, g, u_max and dt must be positive");
  }
  if (!(b >= 0.0)) throw ConfigError("pendulum: damping b must be >= 0");
}

void DemonstratorConfig::validate() const {
  if (!(theta_bal > 0.0) || !(omega_bal > 0.0) || !(e_band > 0.0)) {
    throw ConfigError("demonstrator: capture thresholds must be positive");
  }
  if (!(k_bal_theta < 0.0) || !(k_bal_omega < 0.0)) {
    throw ConfigError("demonstrator: balance gains must be negative");
  }
}

const char* pendulum_mode_name(int mode) {
  switch (mode) {
    case kModePump:
      return "pump";
    case kModeSpin:
      return "spin";
    case kModeBalance:
      return "balance";
    default:
      throw ConfigError("pendulum: unknown mode id " + std::to_string(mode));
  }
}

namespace {

// Angular acceleration for a fixed (already clamped) torque.
double accel(double theta, double omega, double u, const PendulumPhysics& p) {
  const double ml2 = p.m * p.l * p.l;
  return (p.g / p.l) * std::sin(theta) - (p.b / ml2) * omega + u / ml2;
}

}  // namespace

PendulumState pendulum_step(const PendulumState& s, double u,
                            const PendulumPhysics& p) {
  const double uc = std::clamp(u, -p.u_max, p.u_max);
  const double h = p.dt;

  const double k1t = s.omega;
  const double k1w = accel(s.theta, s.omega, uc, p);
  const double k2t = s.omega + 0.5 * h * k1w;
  const double k2w = accel(s.theta + 0.5 * h * k1t, s.omega + 0.5 * h * k1w,
                           uc, p);
  const double k3t = s.omega + 0.5 * h * k2w;
  const double k3w = accel(s.theta + 0.5 * h * k2t, s.omega + 0.5 * h * k2w,
                           uc, p);
  const double k4t = s.omega + h * k3w;
  const double k4w = accel(s.theta + h * k3t, s.omega + h * k3w, uc, p);

  PendulumState next;
  next.theta =
      wrap_angle(s.theta + (h / 6.0) * (k1t + 2.0 * k2t + 2.0 * k3t + k4t));
  next.omega = s.omega + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
  return next;
}

double pendulum_energy(const PendulumState& s, const PendulumPhysics& p) {
  return 0.5 * p.m * p.l * p.l * s.omega * s.omega +
         p.m * p.g * p.l * std::cos(s.theta);
}

double upright_energy(const PendulumPhysics& p) { return p.m * p.g * p.l; }

DemonstratorAction demonstrator_action(const PendulumState& s,
                                       const PendulumPhysics& p,
                                       const DemonstratorConfig& cfg) {
  DemonstratorAction out;
  if (std::abs(s.theta) < cfg.theta_bal && std::abs(s.omega) < cfg.omega_bal) {
    out.mode = kModeBalance;
    out.u = cfg.k_bal_theta * s.theta + cfg.k_bal_omega * s.omega;
  } else if (pendulum_energy(s, p) < upright_energy(p) - cfg.e_band) {
    out.mode = kModePump;
    out.u = cfg.k_pump * s.omega;
  } else {
    out.mode = kModeSpin;
    out.u = cfg.k_spin * s.omega;
  }
  out.u = std::clamp(out.u, -p.u_max, p.u_max);
  return out;
}

}  // namespace sdn
