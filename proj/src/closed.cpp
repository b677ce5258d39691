#include "omc/closed.hpp"

#include <cmath>
#include <vector>

namespace omc {

State evolve_closed(const State& initial, double t_prime, double k,
                    Complex r_or_rtilde, const FockSpace& space) {
  if (!initial.is_pure())
    throw std::invalid_argument("evolve_closed: requires a pure state");
  const Vector& v = initial.vector();
  if (v.size() != space.joint_dim())
    throw std::invalid_argument("evolve_closed: state/space dimension mismatch");
  int nc = space.dim_cavity, nm = space.dim_mech;
  Complex eta = 1.0 - std::exp(Complex(0, -t_prime));
  double kerr = k * k * (t_prime - std::sin(t_prime));
  Vector mech_rot(nm);
  for (int m = 0; m < nm; ++m) mech_rot(m) = std::exp(Complex(0, -double(m) * t_prime));
  Vector out(space.joint_dim());
  for (int n = 0; n < nc; ++n) {
    Vector block = v.segment(n * nm, nm).cwiseProduct(mech_rot);
    if (n > 0 && k != 0.0 && eta != Complex(0.0))
      block = apply_displacement(k * double(n) * eta, block);
    Complex phase = std::exp(Complex(0, -1.0) * r_or_rtilde * double(n) * t_prime +
                             Complex(0, kerr * double(n) * double(n)));
    out.segment(n * nm, nm) = phase * block;
  }
  State s = State::pure(std::move(out));
  s.truncation_warning = initial.truncation_warning;
  return s;
}

State evolve_closed_from_to(const State& state, double t_from, double t_to,
                            double k, Complex r_or_rtilde, const FockSpace& space) {
  State undone = evolve_closed(state, -t_from, k, r_or_rtilde, space);
  return evolve_closed(undone, t_to, k, r_or_rtilde, space);
}

State apply_cavity_jump_pure(const State& state, const FockSpace& space) {
  if (!state.is_pure())
    throw std::invalid_argument("apply_cavity_jump_pure: requires a pure state");
  const Vector& v = state.vector();
  if (v.size() != space.joint_dim())
    throw std::invalid_argument("apply_cavity_jump_pure: state/space dimension mismatch");
  int nc = space.dim_cavity, nm = space.dim_mech;
  Vector out = Vector::Zero(v.size());
  for (int n = 1; n < nc; ++n)
    out.segment((n - 1) * nm, nm) = std::sqrt(double(n)) * v.segment(n * nm, nm);
  double norm2 = out.squaredNorm();
  if (norm2 <= 1e-28)
    throw std::runtime_error("apply_cavity_jump_pure: no cavity excitation to annihilate");
  out /= std::sqrt(norm2);
  return State::pure(std::move(out));
}

double linear_entropy(const State& state, const FockSpace& space) {
  if (state.is_pure()) {
    // Reduced cavity density from mech blocks without forming the joint density.
    const Vector& v = state.vector();
    if (v.size() != space.joint_dim())
      throw std::invalid_argument("linear_entropy: state/space dimension mismatch");
    int nc = space.dim_cavity, nm = space.dim_mech;
    double w = v.squaredNorm();
    if (w <= 0) throw std::runtime_error("linear_entropy: zero state");
    Matrix rho_c(nc, nc);
    for (int n = 0; n < nc; ++n)
      for (int l = 0; l <= n; ++l) {
        Complex e = v.segment(l * nm, nm).dot(v.segment(n * nm, nm)) / w;
        rho_c(n, l) = e;
        rho_c(l, n) = std::conj(e);
      }
    return 1.0 - rho_c.squaredNorm();  // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
  }
  Matrix rho_c = partial_trace(state.normalized(), Mode::cavity, space).matrix();
  return 1.0 - rho_c.squaredNorm();
}

int analytic_series_cutoff(Complex alpha_tilde) {
  double a = std::abs(alpha_tilde);
  int suggested = static_cast<int>(std::ceil(a * a + 8.0 * a));
  return std::max(20, suggested);
}

double analytic_purity(Complex alpha, Complex beta, double k, Complex r_tilde,
                       double t_prime, int series_cutoff) {
  if (series_cutoff < 1)
    throw std::invalid_argument("analytic_purity: series_cutoff must be positive");
  Complex alpha_tilde = alpha * std::exp(Complex(0, -1.0) * r_tilde * t_prime);
  double a2 = std::norm(alpha_tilde);
  Complex eta = 1.0 - std::exp(Complex(0, -t_prime));
  Complex beta_rot = beta * std::exp(Complex(0, -t_prime));

  int n_terms = series_cutoff + 1;
  std::vector<double> weight(n_terms);  // |alpha_tilde|^{2n} / n!
  weight[0] = 1.0;
  for (int n = 1; n < n_terms; ++n) weight[n] = weight[n - 1] * a2 / double(n);

  // Tail bound: each dropped term is <= weight[n] weight[n'] (the exponential
  // factor is <= 1), so the residual is below 2 e^{-a2} * tail(sum w) where the
  // geometric bound needs the term ratio below 1.
  double ratio = a2 / double(series_cutoff + 1);
  if (ratio >= 1.0)
    throw std::runtime_error("analytic_purity: series cutoff below |alpha|^2, not convergent");
  double tail = weight[series_cutoff] * ratio / (1.0 - ratio);
  if (2.0 * std::exp(-a2) * tail > 1e-10)
    throw std::runtime_error("analytic_purity: series cutoff too small for 1e-10 tail");

  std::vector<Complex> phi(n_terms);
  for (int n = 0; n < n_terms; ++n) phi[n] = beta_rot + k * double(n) * eta;

  double sum = 0.0;
  for (int n = 0; n < n_terms; ++n) {
    sum += weight[n] * weight[n];  // n = n' term: exponent 0
    for (int np = 0; np < n; ++np) {
      double d2 = std::norm(phi[n] - phi[np]);
      sum += 2.0 * weight[n] * weight[np] * std::exp(-d2);
    }
  }
  return std::exp(-2.0 * a2) * sum;
}

}  // namespace omc
