// dynamics.hpp
// Conditional (no-jump) dynamics of one driven atom coupled to one leaky
// cavity mode. The non-Hermitian generator is
//
//   H = i*delta*(a |e><g| - a^+ |g><e|) - i*k*a^+a
//
// with delta the effective atom-cavity coupling and k the photon decay rate.
// On the single-excitation subspace span{|e,0>, |g,1>} the amplitudes obey
// dc_e/dt = delta*c_g1, dc_g1/dt = -delta*c_e - k*c_g1, which is solved in
// closed form below; evolve_no_jump propagates arbitrary states with a dense
// matrix exponential and serves as the independent numerical route.

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string_view>

#include <unsupported/Eigen/MatrixFunctions>

#include "cavcon/errors.hpp"
#include "cavcon/qcore.hpp"

namespace cavcon {

struct DynamicsParams {
  double delta;  // effective coupling rate, > 0
  double k;      // cavity photon decay rate, >= 0

  DynamicsParams(double delta_, double k_) : delta(delta_), k(k_) {
    if (!(std::isfinite(delta) && delta > 0.0))
      throw validation_error("delta must be finite and > 0");
    if (!(std::isfinite(k) && k >= 0.0))
      throw validation_error("k must be finite and >= 0");
  }
};

// Oscillation rate, transfer time and transfer amplitude of the underdamped
// half-oscillation that empties the excited state into the cavity.
struct TransferSolution {
  double omega_k;  // sqrt(4*delta^2 - k^2)
  double t1;       // smallest positive zero of the excited amplitude
  double alpha;    // photon amplitude at t1; real, in [-1, 0)
};

// Amplitudes of the no-jump evolution started from (1, 0) on {|e,0>, |g,1>}.
struct NoJumpAmplitudes {
  Complex excited;  // c_e(t)
  Complex photon;   // c_g1(t)
};

inline double omega_k(const DynamicsParams& p) {
  const double disc = 4.0 * p.delta * p.delta - p.k * p.k;
  if (!(disc > 0.0))
    throw regime_error("overdamped regime: 2*delta <= k is outside the modeled scope");
  return std::sqrt(disc);
}

// Smallest positive root of tan(omega_k*t/2) = -omega_k/k, equivalently the
// first zero of c_e(t). Closed form t1 = (2/omega_k)*(pi - arctan(omega_k/k)),
// polished by Newton on the oscillatory factor of c_e to a 1e-12 residual.
inline double t1_star(const DynamicsParams& p) {
  const double om = omega_k(p);
  if (p.k == 0.0) return std::numbers::pi / om;
  double t = (2.0 / om) * (std::numbers::pi - std::atan(om / p.k));
  for (int pass = 0; pass < 4; ++pass) {
    const double half = 0.5 * om * t;
    const double g = std::cos(half) + (p.k / om) * std::sin(half);
    const double dg = -0.5 * om * std::sin(half) + 0.5 * p.k * std::cos(half);
    const double step = g / dg;
    t -= step;
    if (std::abs(step) < 1e-15 * t) break;
  }
  const double half = 0.5 * om * t;
  if (std::abs(std::cos(half) + (p.k / om) * std::sin(half)) > 1e-12)
    throw numerical_error("t1 root polishing did not reach tolerance");
  return t;
}

inline NoJumpAmplitudes no_jump_amplitudes(const DynamicsParams& p, double t) {
  if (!(t >= 0.0)) throw validation_error("time must be >= 0");
  const double om = omega_k(p);
  const double half = 0.5 * om * t;
  const double envelope = std::exp(-0.5 * p.k * t);
  const double c_e = envelope * (std::cos(half) + (p.k / om) * std::sin(half));
  const double c_g1 = -(2.0 * p.delta / om) * envelope * std::sin(half);
  return {Complex(c_e, 0.0), Complex(c_g1, 0.0)};
}

inline TransferSolution solve_transfer(const DynamicsParams& p) {
  const double om = omega_k(p);
  const double t1 = t1_star(p);
  const double alpha = no_jump_amplitudes(p, t1).photon.real();
  return {om, t1, alpha};
}

// Generator embedded in `layout`: the coupling part is Hermitian, the decay
// part -i*k*a^+a is anti-Hermitian.
inline OperatorMatrix build_h_eff(const DynamicsParams& p, const SubsystemLayout& layout,
                                  std::string_view atom_label, std::string_view cavity_label) {
  if (layout.dim_of(atom_label) != 2)
    throw layout_error("atom subsystem must be two-level");
  const int cav_dim = layout.dim_of(cavity_label);

  ComplexMatrix flip_eg = ComplexMatrix::Zero(2, 2);  // |e><g|
  flip_eg(1, 0) = 1.0;
  const SubsystemLayout atom_local{{"atom", 2}};
  const OperatorMatrix raise_atom(atom_local, flip_eg);
  const OperatorMatrix lower_atom = raise_atom.adjoint();

  const OperatorMatrix a = embed(annihilation(cav_dim - 1), cavity_label, layout);
  const OperatorMatrix a_dag = a.adjoint();
  const OperatorMatrix sp = embed(raise_atom, atom_label, layout);
  const OperatorMatrix sm = embed(lower_atom, atom_label, layout);

  const Complex i_unit(0.0, 1.0);
  return i_unit * Complex(p.delta) * (a * sp - a_dag * sm) -
         i_unit * Complex(p.k) * (a_dag * a);
}

// Applies exp(-i*H*t) by dense scaling-and-squaring matrix exponential. The
// output is left unnormalized; its squared norm is the no-jump probability.
inline StateVector evolve_no_jump(const StateVector& state, const DynamicsParams& p,
                                  double t, std::string_view atom_label,
                                  std::string_view cavity_label) {
  if (!(t >= 0.0)) throw validation_error("evolution time must be >= 0");
  const OperatorMatrix h = build_h_eff(p, state.layout(), atom_label, cavity_label);
  const ComplexMatrix generator = Complex(0.0, -t) * h.matrix();
  const ComplexMatrix propagator = generator.exp();
  return StateVector(state.layout(), propagator * state.amps());
}

}  // namespace cavcon
