#pragma once
// Exact undriven evolution (closed, and no-photon conditional via a complex
// frequency), cavity jump on pure states, linear entropy, and the closed-form
// purity series used as an oracle.

#include "omc/fock.hpp"

namespace omc {

// Applies the factorized propagator
//   e^{-i r n t'} e^{i k^2 n^2 (t' - sin t')} D(k n eta) e^{-i b^dag b t'}
// blockwise over cavity levels n, with eta = 1 - e^{-i t'} and t' = omega_m t.
// A real r evolves unitarily; r = -(Delta + i kappa_d/2)/omega_m gives the
// no-photon conditional evolution, whose output norm^2 is the probability of
// observing no detection in [0, t']. Works for arbitrary pure inputs (the
// decomposition is blockwise in the cavity number basis), so post-jump states
// can be propagated with the same call.
State evolve_closed(const State& initial, double t_prime, double k,
                    Complex r_or_rtilde, const FockSpace& space);

// Propagates from t_from to t_to by composing U(t_to) U(t_from)^{-1}.
State evolve_closed_from_to(const State& state, double t_from, double t_to,
                            double k, Complex r_or_rtilde, const FockSpace& space);

// Cavity annihilation + renormalisation on a pure state.
State apply_cavity_jump_pure(const State& state, const FockSpace& space);

// 1 - Tr[(Tr_mech rho)^2] of the unit-normalised state; in [0, 1 - 1/N_c].
double linear_entropy(const State& state, const FockSpace& space);

// Cutoff heuristic for the purity series (Poisson tail bound).
int analytic_series_cutoff(Complex alpha_tilde);

// Closed-form purity of the normalised conditional reduced cavity state for an
// initial |alpha>|beta> product of coherent states:
//   P = e^{-2|at|^2} sum_{n,n'} |at|^{2(n+n')}/(n! n'!) e^{-|phi_n - phi_n'|^2}
// with at = alpha e^{-i r t'}, phi_n = beta e^{-i t'} + k n eta. Throws if the
// truncated tail cannot be bounded below 1e-10.
double analytic_purity(Complex alpha, Complex beta, double k, Complex r_tilde,
                       double t_prime, int series_cutoff);

}  // namespace omc
