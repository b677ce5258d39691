#pragma once
// Physical parameterization and Hamiltonian construction for the driven
// nonlinear optomechanical cavity (rotating frame throughout, hbar = 1).

#include <string>

#include "omc/fock.hpp"

namespace omc {

// All rates in units of the total cavity decay kappa = kappa_d + kappa_l,
// which presets fix to 1.
struct SystemParams {
  double delta = 0.0;        // laser detuning
  double omega_m = 1.0;      // mechanical frequency
  double g = 0.0;            // single-photon optomechanical coupling
  Complex omega_drive = 0.0; // drive amplitude (Rabi frequency)
  double kappa_d = 0.0;      // detected photon decay
  double kappa_l = 0.0;      // lost (undetected) photon decay
  double gamma = 0.0;        // mechanical damping
  double mbar = 0.0;         // thermal occupation of the mechanical bath

  double kappa_total() const { return kappa_d + kappa_l; }
};

struct DetuningRegime {
  int n = 0;  // 0 = on-resonance, 1 = blockade, 2 = cascade
};

// -Delta a^dag a + omega_m b^dag b + g a^dag a (b + b^dag) + (Omega a + Omega^* a^dag)/2.
Matrix hamiltonian_rf(const SystemParams& params, const FockSpace& space);

// Polaron frame: -Delta a^dag a + omega_m b^dag b - (g^2/omega_m)(a^dag a)^2
// + (Omega a D + h.c.)/2 with D the mechanical displacement by g/omega_m.
Matrix hamiltonian_polaron(const SystemParams& params, const FockSpace& space);

// -Delta n_cav + omega_m n_mech - (g^2/omega_m) n_cav^2.
double energy_level(int n_cav, int n_mech, const SystemParams& params);

// Delta favouring the |0> -> |n> multi-photon transition: -n g^2/omega_m.
double detuning_for_regime(const DetuningRegime& regime, double g, double omega_m);

struct NonlinearityCheck {
  double g_over_kappa = 0.0;
  double g2_over_omega_kappa = 0.0;
  bool nonlinear = false;  // both ratios > 1
};
NonlinearityCheck nonlinearity_check(const SystemParams& params);

// Non-Hermitian no-detection generator H_RF - i (kappa_d/2) a^dag a.
// (Likelihood evolution extends the anti-Hermitian part to the full kappa; see
// the no-click master equation in the open-dynamics module.)
Matrix h_no_photon(const SystemParams& params, const FockSpace& space);

// Content hash over all physical parameters and the truncation dimensions;
// used to tag records and caches so mismatched reuse is caught.
std::string params_fingerprint(const SystemParams& params, const FockSpace& space);

}  // namespace omc
