#pragma once
// Truncated two-mode Fock-space linear algebra: ladder operators, standard
// states, tensor embedding, partial trace/transpose, truncation diagnostics.

#include <complex>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace omc {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Joint ordering convention, used by every module: the joint basis index of
// |n_cav, n_mech> is n_cav * dim_mech + n_mech (cavity-major).
struct FockSpace {
  int dim_cavity = 0;
  int dim_mech = 0;

  FockSpace() = default;
  FockSpace(int n_cav, int n_mech) : dim_cavity(n_cav), dim_mech(n_mech) {
    if (n_cav < 2 || n_mech < 2)
      throw std::invalid_argument("FockSpace: both mode dimensions must be >= 2");
  }

  int joint_dim() const { return dim_cavity * dim_mech; }
  int index(int n_cav, int n_mech) const { return n_cav * dim_mech + n_mech; }
};

enum class Mode { cavity, mech };
enum class Ladder { annihilation, creation, number };

// A quantum state: pure (vector) or mixed (density matrix), possibly
// unnormalised (conditional no-click states carry their probability in the
// norm/trace). `truncation_warning` is set by constructors that truncated
// non-negligible amplitude.
class State {
 public:
  static State pure(Vector v) {
    State s;
    s.vec_ = std::move(v);
    s.is_pure_ = true;
    return s;
  }
  static State density(Matrix m) {
    State s;
    s.mat_ = std::move(m);
    s.is_pure_ = false;
    return s;
  }

  bool is_pure() const { return is_pure_; }

  const Vector& vector() const {
    if (!is_pure_) throw std::logic_error("State: density form has no vector");
    return vec_;
  }
  const Matrix& matrix() const {
    if (is_pure_) throw std::logic_error("State: pure form has no matrix");
    return mat_;
  }

  // density matrix view regardless of form (pure states are promoted).
  Matrix to_density() const {
    if (is_pure_) return vec_ * vec_.adjoint();
    return mat_;
  }

  // norm^2 for pure states, trace (real part) for densities.
  double weight() const {
    if (is_pure_) return vec_.squaredNorm();
    return mat_.trace().real();
  }

  State normalized() const {
    double w = weight();
    if (w <= 0.0) throw std::runtime_error("State: cannot normalise zero state");
    State s = *this;
    if (is_pure_)
      s.vec_ /= std::sqrt(w);
    else
      s.mat_ /= w;
    return s;
  }

  bool truncation_warning = false;

 private:
  Vector vec_;
  Matrix mat_;
  bool is_pure_ = true;
};

// Single-mode ladder operator on `dim` levels. annihilation |n> -> sqrt(n)|n-1>;
// creation is its adjoint; number is diag(0..dim-1).
Matrix ladder_operator(int dim, Ladder kind);

// op (+) identity on the other mode, under the cavity-major joint ordering.
Matrix embed(const Matrix& op, Mode which, const FockSpace& space);

Matrix kron(const Matrix& a, const Matrix& b);

// Truncated coherent state, renormalised to unit norm. Sets the
// truncation_warning flag when |alpha|^2 > dim/2 (state still returned).
State coherent_state(Complex alpha, int dim);

// Thermal density diag p_m proportional to (mbar/(mbar+1))^m, renormalised on the
// truncated space.
State thermal_state(double mbar, int dim);

// exp(beta b^dag - conj(beta) b) on `dim` levels, via the eigendecomposition of
// the Hermitian generator (cached per dim); unitary up to truncation effects.
Matrix displacement_operator(Complex beta, int dim);

// Fast application of D(beta) to a vector using the cached factorization,
// without forming the dim x dim matrix product.
Vector apply_displacement(Complex beta, const Vector& v);

State partial_trace(const State& state, Mode keep, const FockSpace& space);

// Transpose over the mechanical indices only; Hermiticity and trace preserved.
Matrix partial_transpose_mech(const State& state, const FockSpace& space);

// (population of top cavity level, population of top mech level).
std::pair<double, double> truncation_leakage(const State& state,
                                             const FockSpace& space);

// Tr(op rho) or <psi|op|psi> for a joint-space operator.
Complex expectation(const Matrix& op, const State& state);

}  // namespace omc
