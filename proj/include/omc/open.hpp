#pragma once
// Deterministic open-system propagation: ensemble Lindblad equation, the
// unnormalised no-click conditional equation, jump application, and a spectral
// propagator cache for fast repeated no-click intervals.

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "omc/model.hpp"

namespace omc {

// Fixed-step RK4 with per-step halving on an embedded error estimate
// (full step vs two half steps).
struct StepControl {
  double step = 0.005;       // in the same time units as t (1/kappa in presets)
  double tolerance = 1e-8;   // max-norm error per step
  double min_step = 1e-9;
};

// d(rho)/dt = -i[H_RF, rho] + kappa D[a] + gamma(mbar+1) D[b] + gamma mbar D[b^dag].
Matrix lindblad_rhs(const State& state, const SystemParams& params,
                    const FockSpace& space);

State integrate_master(const State& initial, double t0, double t1,
                       const SystemParams& params, const FockSpace& space,
                       const StepControl& ctrl = {});

// Unnormalised no-click equation: the a-channel keeps the full -(kappa/2){a^dag a, .}
// damping but refills only the lost fraction kappa_l a sigma a^dag; phonon
// dissipators are untouched. d(trace)/dt = -kappa_d <a^dag a>.
Matrix no_click_rhs(const State& state, const SystemParams& params,
                    const FockSpace& space);

class PropagatorCache;

State integrate_no_click(const State& initial, double t0, double t1,
                         const SystemParams& params, const FockSpace& space,
                         const StepControl& ctrl = {},
                         const PropagatorCache* cache = nullptr);

enum class JumpChannel { photon_detected, photon_lost, phonon_down, phonon_up };

const char* jump_channel_name(JumpChannel ch);
JumpChannel jump_channel_from_name(const std::string& name);

// L rho L^dag / Tr(L^dag L rho) with L in {a, a, b, b^dag}; pure states stay pure.
State apply_jump(const State& state, JumpChannel channel, const FockSpace& space);

// Spectral cache of the vectorized no-click generator for one (params, space,
// step). The generator is real in an orthonormal Hermitian operator basis, so
// it is factorized with a real nonsymmetric eigensolver (about 4x cheaper than
// the complex one) and lifted to a complex eigenbasis; exp(generator * t) then
// costs two dense mat-vecs for arbitrary t, and trace-like functionals become
// O(dim) series evaluations. Immutable after construction and shareable
// read-only across threads.
class PropagatorCache {
 public:
  PropagatorCache(const SystemParams& params, const FockSpace& space, double step);

  double step() const { return step_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const FockSpace& space() const { return space_; }
  const SystemParams& params() const { return params_; }
  int superdim() const { return superdim_; }

  static std::string make_fingerprint(const SystemParams& params,
                                      const FockSpace& space, double step);

  // exp(generator * dt) applied to a density; dt need not equal step().
  Matrix propagate(const Matrix& sigma, double dt) const;

  // Hot-path interface: work in the complex eigenbasis between clicks.
  Vector to_eigenbasis(const Matrix& sigma) const;
  Matrix from_eigenbasis(const Vector& coeff, double dt = 0.0) const;
  void advance(Vector& coeff, double dt) const;

  // Row functional of a Hermitian observable X: eval(row, c, dt) = Tr(X sigma(dt))
  // for sigma(0) with eigen-coefficients c, evaluated in O(superdim).
  Eigen::RowVectorXcd functional(const Matrix& hermitian_observable) const;
  Eigen::RowVectorXcd trace_functional() const;
  Eigen::RowVectorXcd number_functional() const;  // Tr(a^dag a sigma)
  double eval(const Eigen::RowVectorXcd& row, const Vector& coeff, double dt) const;

  // Generator and its step exponential in the real Hermitian-basis
  // coordinates (pack/unpack below); materialized on demand, since they are
  // large at production dimensions and not needed on the hot path.
  Eigen::MatrixXd generator_dense() const;
  const Eigen::MatrixXd& step_exponential() const;

  // Max-norm deviation of propagate(sigma, step) from one adaptive RK4 step on
  // a random density, recorded at build time; the contract requires < 1e-8.
  double build_residual() const { return build_residual_; }

 private:
  SystemParams params_;
  FockSpace space_;
  double step_;
  int dim_;       // N_c N_m
  int superdim_;  // dim^2
  std::string fingerprint_;
  Eigen::VectorXcd eigenvalues_;
  Matrix v_;           // complex eigenvectors in the Hermitian-basis coordinates
  Matrix v_lu_;        // LU factors of v_ (to_eigenbasis solves instead of inverting)
  std::vector<int> v_piv_;
  Eigen::RowVectorXcd trace_row_, number_row_;
  double build_residual_ = 0.0;
  mutable std::unique_ptr<Eigen::MatrixXd> step_exp_;
  mutable std::mutex step_exp_mutex_;

  // Hermitian-basis packing: x has dim_ diagonal entries, then (re, im) pairs
  // per i<j element, all real for Hermitian input.
  Eigen::VectorXd pack(const Matrix& sigma) const;
  Matrix unpack(const Eigen::VectorXd& x) const;
};

}  // namespace omc
