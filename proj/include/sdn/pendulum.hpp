#pragma once

#include "sdn/control.hpp"

namespace sdn {

// Angle is measured from the upright position and kept in [-pi, pi), so
// theta = 0 is the balance target and theta = pi is hanging rest.
struct PendulumState {
  double theta = 0.0;
  double omega = 0.0;
};

struct PendulumPhysics {
  double m = 1.0;      // bob mass, kg
  double l = 1.0;      // rod length, m
  double g = 9.81;     // gravity, m/s^2
  double b = 0.05;     // viscous damping at the pivot
  double u_max = 2.0;  // torque limit; < m*g*l, so swing-up needs pumping
  double dt = 0.05;    // integration step, s

  void validate() const;
};

// Hand-written three-mode swing-up controller that serves as the
// demonstrator: pump energy while below the upright level, bleed it off
// when above, and hand over to a PD balancer near the top.
struct DemonstratorConfig {
  double k_pump = 1.2;
  double k_spin = -1.2;
  double k_bal_theta = -14.0;
  double k_bal_omega = -3.0;
  double theta_bal = 0.18;
  double omega_bal = 0.9;
  double e_band = 0.12;

  void validate() const;
};

// Mode labels recorded with each demonstration step. Values are stable
// across runs so labels in saved datasets stay comparable.
inline constexpr int kModePump = 0;
inline constexpr int kModeSpin = 1;
inline constexpr int kModeBalance = 2;
inline constexpr int kPendulumModes = 3;

const char* pendulum_mode_name(int mode);

// One RK4 step of theta_dd = (g/l) sin(theta) - (b/(m l^2)) omega
//                            + u/(m l^2), with u clamped to +-u_max and
// theta wrapped back into [-pi, pi).
PendulumState pendulum_step(const PendulumState& s, double u,
                            const PendulumPhysics& p);

// Total mechanical energy, zero at the pivot height: E = 1/2 m l^2 w^2
// + m g l cos(theta). Upright rest sits at +m*g*l, hanging at -m*g*l.
double pendulum_energy(const PendulumState& s, const PendulumPhysics& p);
double upright_energy(const PendulumPhysics& p);

struct DemonstratorAction {
  double u = 0.0;
  int mode = kModePump;
};

// Mode choice: balance inside the capture box |theta| < theta_bal,
// |omega| < omega_bal; otherwise pump while the energy deficit exceeds
// e_band; otherwise spin-down. The returned torque is already clamped.
DemonstratorAction demonstrator_action(const PendulumState& s,
                                       const PendulumPhysics& p,
                                       const DemonstratorConfig& cfg);

}  // namespace sdn
