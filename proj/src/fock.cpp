#include "omc/fock.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace omc {

Matrix ladder_operator(int dim, Ladder kind) {
  if (dim < 2) throw std::invalid_argument("ladder_operator: dimension must be >= 2");
  Matrix m = Matrix::Zero(dim, dim);
  switch (kind) {
    case Ladder::annihilation:
      for (int n = 1; n < dim; ++n) m(n - 1, n) = std::sqrt(double(n));
      break;
    case Ladder::creation:
      for (int n = 1; n < dim; ++n) m(n, n - 1) = std::sqrt(double(n));
      break;
    case Ladder::number:
      for (int n = 0; n < dim; ++n) m(n, n) = double(n);
      break;
  }
  return m;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix embed(const Matrix& op, Mode which, const FockSpace& space) {
  int need = (which == Mode::cavity) ? space.dim_cavity : space.dim_mech;
  if (op.rows() != need || op.cols() != need)
    throw std::invalid_argument("embed: operator dimension does not match mode");
  if (which == Mode::cavity)
    return kron(op, Matrix::Identity(space.dim_mech, space.dim_mech));
  return kron(Matrix::Identity(space.dim_cavity, space.dim_cavity), op);
}

State coherent_state(Complex alpha, int dim) {
  if (dim < 1) throw std::invalid_argument("coherent_state: dim must be positive");
  Vector v(dim);
  // amplitudes alpha^n/sqrt(n!) built by recurrence; overall e^{-|alpha|^2/2}
  // folded in afterwards through renormalisation.
  Complex amp = 1.0;
  v(0) = amp;
  for (int n = 1; n < dim; ++n) {
    amp *= alpha / std::sqrt(double(n));
    v(n) = amp;
  }
  v.normalize();
  State s = State::pure(std::move(v));
  s.truncation_warning = (std::norm(alpha) > double(dim) / 2.0);
  return s;
}

State thermal_state(double mbar, int dim) {
  if (mbar < 0) throw std::invalid_argument("thermal_state: mbar must be >= 0");
  Matrix rho = Matrix::Zero(dim, dim);
  if (mbar == 0.0) {
    rho(0, 0) = 1.0;
    return State::density(std::move(rho));
  }
  double q = mbar / (mbar + 1.0);
  double p = 1.0, total = 0.0;
  for (int m = 0; m < dim; ++m) {
    rho(m, m) = p;
    total += p;
    p *= q;
  }
  rho /= total;
  return State::density(std::move(rho));
}

namespace {

// Eigendecomposition of the Hermitian generator H1 = -i(b^dag - b), cached per
// dimension: D(beta) = R(theta) W e^{i |beta| L} W^dag R(theta)^dag with
// beta = |beta| e^{i theta} and R(theta) = e^{i theta b^dag b} diagonal.
struct DispBasis {
  Eigen::VectorXd lambda;
  Matrix w;
};

const DispBasis& displacement_basis(int dim) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<DispBasis>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dim);
  if (it != cache.end()) return *it->second;
  Matrix h1 = Matrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) {
    double s = std::sqrt(double(n));
    h1(n, n - 1) = Complex(0.0, -s);   // -i b^dag
    h1(n - 1, n) = Complex(0.0, s);    // +i b
  }
  auto basis = std::make_unique<DispBasis>();
  Eigen::SelfAdjointEigenSolver<Matrix> es(h1);
  basis->lambda = es.eigenvalues();
  basis->w = es.eigenvectors();
  const DispBasis& ref = *basis;
  cache.emplace(dim, std::move(basis));
  return ref;
}

}  // namespace

Matrix displacement_operator(Complex beta, int dim) {
  if (dim < 1) throw std::invalid_argument("displacement_operator: dim must be positive");
  if (dim == 1) return Matrix::Identity(1, 1);
  const DispBasis& basis = displacement_basis(dim);
  double r = std::abs(beta);
  double theta = std::arg(beta);
  Vector phase = (Complex(0, 1) * r * basis.lambda.cast<Complex>()).array().exp();
  Matrix core = basis.w * phase.asDiagonal() * basis.w.adjoint();
  if (r == 0.0 || theta == 0.0) return core;
  Vector rot(dim);
  for (int n = 0; n < dim; ++n) rot(n) = std::exp(Complex(0, theta * n));
  return rot.asDiagonal() * core * rot.conjugate().asDiagonal();
}

Vector apply_displacement(Complex beta, const Vector& v) {
  int dim = static_cast<int>(v.size());
  if (dim == 1) return v;
  const DispBasis& basis = displacement_basis(dim);
  double r = std::abs(beta);
  double theta = std::arg(beta);
  Vector x = v;
  if (theta != 0.0)
    for (int n = 0; n < dim; ++n) x(n) *= std::exp(Complex(0, -theta * n));
  Vector y = basis.w.adjoint() * x;
  for (int n = 0; n < dim; ++n) y(n) *= std::exp(Complex(0, r * basis.lambda(n)));
  x = basis.w * y;
  if (theta != 0.0)
    for (int n = 0; n < dim; ++n) x(n) *= std::exp(Complex(0, theta * n));
  return x;
}

State partial_trace(const State& state, Mode keep, const FockSpace& space) {
  Matrix rho = state.to_density();
  if (rho.rows() != space.joint_dim())
    throw std::invalid_argument("partial_trace: state/space dimension mismatch");
  int nc = space.dim_cavity, nm = space.dim_mech;
  if (keep == Mode::cavity) {
    Matrix out = Matrix::Zero(nc, nc);
    for (int i = 0; i < nc; ++i)
      for (int j = 0; j < nc; ++j)
        for (int m = 0; m < nm; ++m) out(i, j) += rho(space.index(i, m), space.index(j, m));
    return State::density(std::move(out));
  }
  Matrix out = Matrix::Zero(nm, nm);
  for (int m = 0; m < nm; ++m)
    for (int l = 0; l < nm; ++l)
      for (int i = 0; i < nc; ++i) out(m, l) += rho(space.index(i, m), space.index(i, l));
  return State::density(std::move(out));
}

Matrix partial_transpose_mech(const State& state, const FockSpace& space) {
  Matrix rho = state.to_density();
  if (rho.rows() != space.joint_dim())
    throw std::invalid_argument("partial_transpose_mech: state/space dimension mismatch");
  int nc = space.dim_cavity, nm = space.dim_mech;
  Matrix out(rho.rows(), rho.cols());
  for (int ic = 0; ic < nc; ++ic)
    for (int jc = 0; jc < nc; ++jc)
      for (int im = 0; im < nm; ++im)
        for (int jm = 0; jm < nm; ++jm)
          out(space.index(ic, jm), space.index(jc, im)) =
              rho(space.index(ic, im), space.index(jc, jm));
  return out;
}

std::pair<double, double> truncation_leakage(const State& state,
                                             const FockSpace& space) {
  int nc = space.dim_cavity, nm = space.dim_mech;
  double top_cav = 0.0, top_mech = 0.0;
  if (state.is_pure()) {
    const Vector& v = state.vector();
    if (v.size() != space.joint_dim())
      throw std::invalid_argument("truncation_leakage: state/space dimension mismatch");
    for (int m = 0; m < nm; ++m) top_cav += std::norm(v(space.index(nc - 1, m)));
    for (int i = 0; i < nc; ++i) top_mech += std::norm(v(space.index(i, nm - 1)));
  } else {
    const Matrix& rho = state.matrix();
    if (rho.rows() != space.joint_dim())
      throw std::invalid_argument("truncation_leakage: state/space dimension mismatch");
    for (int m = 0; m < nm; ++m) top_cav += rho(space.index(nc - 1, m), space.index(nc - 1, m)).real();
    for (int i = 0; i < nc; ++i) top_mech += rho(space.index(i, nm - 1), space.index(i, nm - 1)).real();
  }
  return {top_cav, top_mech};
}

Complex expectation(const Matrix& op, const State& state) {
  if (state.is_pure()) {
    const Vector& v = state.vector();
    return v.dot(op * v);  // Eigen dot conjugates the left argument
  }
  return (op * state.matrix()).trace();
}

}  // namespace omc
