#include "omc/model.hpp"

#include <sstream>

#include "omc/util.hpp"

namespace omc {

Matrix hamiltonian_rf(const SystemParams& params, const FockSpace& space) {
  Matrix a = embed(ladder_operator(space.dim_cavity, Ladder::annihilation), Mode::cavity, space);
  Matrix num_c = embed(ladder_operator(space.dim_cavity, Ladder::number), Mode::cavity, space);
  Matrix num_m = embed(ladder_operator(space.dim_mech, Ladder::number), Mode::mech, space);
  Matrix b = embed(ladder_operator(space.dim_mech, Ladder::annihilation), Mode::mech, space);
  Matrix x_m = b + b.adjoint();
  Matrix h = -params.delta * num_c + params.omega_m * num_m +
             params.g * num_c * x_m +
             0.5 * (params.omega_drive * a + std::conj(params.omega_drive) * a.adjoint());
  return 0.5 * (h + Matrix(h.adjoint()));  // exact Hermiticity by construction
}

Matrix hamiltonian_polaron(const SystemParams& params, const FockSpace& space) {
  Matrix a = embed(ladder_operator(space.dim_cavity, Ladder::annihilation), Mode::cavity, space);
  Matrix num_c = embed(ladder_operator(space.dim_cavity, Ladder::number), Mode::cavity, space);
  Matrix num_m = embed(ladder_operator(space.dim_mech, Ladder::number), Mode::mech, space);
  Matrix d = embed(displacement_operator(params.g / params.omega_m, space.dim_mech),
                   Mode::mech, space);
  Matrix kerr = num_c * num_c;
  Matrix drive = 0.5 * params.omega_drive * a * d;
  Matrix h = -params.delta * num_c + params.omega_m * num_m -
             (params.g * params.g / params.omega_m) * kerr + drive + drive.adjoint();
  return 0.5 * (h + Matrix(h.adjoint()));
}

double energy_level(int n_cav, int n_mech, const SystemParams& params) {
  return -params.delta * n_cav + params.omega_m * n_mech -
         (params.g * params.g / params.omega_m) * double(n_cav) * double(n_cav);
}

double detuning_for_regime(const DetuningRegime& regime, double g, double omega_m) {
  if (omega_m <= 0) throw std::invalid_argument("detuning_for_regime: omega_m must be > 0");
  return -double(regime.n) * g * g / omega_m;
}

NonlinearityCheck nonlinearity_check(const SystemParams& params) {
  double kappa = params.kappa_total();
  if (kappa <= 0) throw std::invalid_argument("nonlinearity_check: kappa_total must be > 0");
  NonlinearityCheck out;
  out.g_over_kappa = params.g / kappa;
  out.g2_over_omega_kappa = params.g * params.g / (params.omega_m * kappa);
  out.nonlinear = out.g_over_kappa > 1.0 && out.g2_over_omega_kappa > 1.0;
  return out;
}

Matrix h_no_photon(const SystemParams& params, const FockSpace& space) {
  Matrix num_c = embed(ladder_operator(space.dim_cavity, Ladder::number), Mode::cavity, space);
  return hamiltonian_rf(params, space) - Complex(0.0, 0.5 * params.kappa_d) * num_c;
}

std::string params_fingerprint(const SystemParams& params, const FockSpace& space) {
  std::ostringstream os;
  os << "params-v1|delta=" << format_double(params.delta)
     << "|omega_m=" << format_double(params.omega_m)
     << "|g=" << format_double(params.g)
     << "|omega_drive=" << format_double(params.omega_drive.real()) << ","
     << format_double(params.omega_drive.imag())
     << "|kappa_d=" << format_double(params.kappa_d)
     << "|kappa_l=" << format_double(params.kappa_l)
     << "|gamma=" << format_double(params.gamma)
     << "|mbar=" << format_double(params.mbar)
     << "|dims=" << space.dim_cavity << "x" << space.dim_mech;
  return sha256_hex(os.str());
}

}  // namespace omc
