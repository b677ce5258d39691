#include "omc/open.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "omc/util.hpp"

// LAPACKE entry points of the scipy-vendored OpenBLAS (scipy_ symbol prefix,
// 32-bit ints, column-major layout code 102). Complex arrays are interleaved
// (re,im) doubles, i.e. std::complex<double> layout.
extern "C" {
int scipy_LAPACKE_dgeev(int layout, char jobvl, char jobvr, int n, double* a,
                        int lda, double* wr, double* wi, double* vl, int ldvl,
                        double* vr, int ldvr);
int scipy_LAPACKE_zgetrf(int layout, int m, int n, void* a, int lda, int* ipiv);
int scipy_LAPACKE_zgetrs(int layout, char trans, int n, int nrhs, const void* a,
                         int lda, const int* ipiv, void* b, int ldb);
}
namespace {
constexpr int kColMajor = 102;
}

namespace omc {
namespace {

// Shared right-hand-side engine for the ensemble and no-click equations. Both
// share H_RF, the full-kappa anticommutator and the phonon dissipators; they
// differ only in how much of the a-channel refill a sigma a^dag is kept
// (kappa for the ensemble equation, kappa_l for the no-click one, which is why
// the no-click trace decays at rate kappa_d <a^dag a>).
struct RhsWorkspace {
  Matrix h;              // Hermitian part H_RF
  Eigen::VectorXd w;     // per-index anticommutator weight
  Eigen::VectorXd sqn;   // sqrt(0..max_dim)
  double refill_a, rate_bdown, rate_bup;
  int nc, nm, dim;

  RhsWorkspace(const SystemParams& p, const FockSpace& space, double refill_a_in)
      : h(hamiltonian_rf(p, space)),
        refill_a(refill_a_in),
        rate_bdown(p.gamma * (p.mbar + 1.0)),
        rate_bup(p.gamma * p.mbar),
        nc(space.dim_cavity),
        nm(space.dim_mech),
        dim(space.joint_dim()) {
    double kappa = p.kappa_total();
    w.resize(dim);
    for (int i = 0; i < dim; ++i) {
      int ncav = i / nm, nmech = i % nm;
      w(i) = kappa * ncav + rate_bdown * nmech + rate_bup * (nmech + 1);
    }
    int maxn = std::max(nc, nm) + 1;
    sqn.resize(maxn + 1);
    for (int n = 0; n <= maxn; ++n) sqn(n) = std::sqrt(double(n));
  }

  void apply(const Matrix& sigma, Matrix& out, Matrix& scratch) const {
    scratch.noalias() = h * sigma;
    out = Complex(0.0, -1.0) * (scratch - scratch.adjoint());
    for (int j = 0; j < dim; ++j)
      for (int i = 0; i < dim; ++i)
        out(i, j) -= 0.5 * (w(i) + w(j)) * sigma(i, j);
    if (refill_a != 0.0) {
      int top = dim - nm;  // indices with cavity level < nc-1
      for (int j = 0; j < top; ++j) {
        double sj = sqn(j / nm + 1);
        for (int i = 0; i < top; ++i)
          out(i, j) += refill_a * sqn(i / nm + 1) * sj * sigma(i + nm, j + nm);
      }
    }
    if (rate_bdown != 0.0) {
      for (int j = 0; j < dim; ++j) {
        if (j % nm == nm - 1) continue;
        double sj = sqn(j % nm + 1);
        for (int i = 0; i < dim; ++i) {
          if (i % nm == nm - 1) continue;
          out(i, j) += rate_bdown * sqn(i % nm + 1) * sj * sigma(i + 1, j + 1);
        }
      }
    }
    if (rate_bup != 0.0) {
      for (int j = 0; j < dim; ++j) {
        if (j % nm == 0) continue;
        double sj = sqn(j % nm);
        for (int i = 0; i < dim; ++i) {
          if (i % nm == 0) continue;
          out(i, j) += rate_bup * sqn(i % nm) * sj * sigma(i - 1, j - 1);
        }
      }
    }
  }
};

struct Rk4Scratch {
  Matrix k1, k2, k3, k4, stage, gemm, full, half, mid;
  explicit Rk4Scratch(int dim)
      : k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim),
        stage(dim, dim), gemm(dim, dim), full(dim, dim), half(dim, dim),
        mid(dim, dim) {}
};

void rk4_step(const RhsWorkspace& ws, const Matrix& y, double h, Matrix& out,
              Rk4Scratch& s) {
  ws.apply(y, s.k1, s.gemm);
  s.stage = y + (0.5 * h) * s.k1;
  ws.apply(s.stage, s.k2, s.gemm);
  s.stage = y + (0.5 * h) * s.k2;
  ws.apply(s.stage, s.k3, s.gemm);
  s.stage = y + h * s.k3;
  ws.apply(s.stage, s.k4, s.gemm);
  out = y + (h / 6.0) * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
}

// Fixed-step RK4 from t0 to t1; each step compares one full step against two
// half steps and halves on disagreement; accepted states are re-Hermitized.
void advance_adaptive(const RhsWorkspace& ws, Matrix& sigma, double t0, double t1,
                      const StepControl& ctrl) {
  if (t1 < t0) throw std::invalid_argument("integrate: t1 < t0");
  if (ctrl.step <= 0 || ctrl.tolerance <= 0)
    throw std::invalid_argument("integrate: step and tolerance must be > 0");
  Rk4Scratch s(ws.dim);
  double t = t0;
  const double t_eps = 1e-12 * (1.0 + std::abs(t1));
  while (t < t1 - t_eps) {
    double h = std::min(ctrl.step, t1 - t);
    for (;;) {
      rk4_step(ws, sigma, h, s.full, s);
      rk4_step(ws, sigma, 0.5 * h, s.mid, s);
      rk4_step(ws, s.mid, 0.5 * h, s.half, s);
      double err = (s.full - s.half).cwiseAbs().maxCoeff();
      if (err <= ctrl.tolerance) break;
      h *= 0.5;
      if (h < ctrl.min_step) {
        std::ostringstream os;
        os << "integrate: step underflow at t=" << t << " (error " << err
           << " above tolerance " << ctrl.tolerance << " at minimum step)";
        throw std::runtime_error(os.str());
      }
    }
    sigma = (0.5 * (s.half + s.half.adjoint())).eval();
    t += h;
  }
}

Matrix as_density_matrix(const State& state) { return state.to_density(); }

struct JumpShift {
  int src_offset;  // source index = i + src_offset
  int block;       // modulus for the validity test (nm for mech, 0 for cavity)
};

// scale(i) and source index for L acting on the ket index; zero scale means
// the component is annihilated.
double jump_scale(JumpChannel ch, int i, int nc, int nm) {
  int ncav = i / nm, nmech = i % nm;
  switch (ch) {
    case JumpChannel::photon_detected:
    case JumpChannel::photon_lost:
      return ncav < nc - 1 ? std::sqrt(double(ncav + 1)) : 0.0;
    case JumpChannel::phonon_down:
      return nmech < nm - 1 ? std::sqrt(double(nmech + 1)) : 0.0;
    case JumpChannel::phonon_up:
      return nmech >= 1 ? std::sqrt(double(nmech)) : 0.0;
  }
  return 0.0;
}

int jump_source(JumpChannel ch, int i, int nm) {
  switch (ch) {
    case JumpChannel::photon_detected:
    case JumpChannel::photon_lost:
      return i + nm;
    case JumpChannel::phonon_down:
      return i + 1;
    case JumpChannel::phonon_up:
      return i - 1;
  }
  return i;
}

}  // namespace

Matrix lindblad_rhs(const State& state, const SystemParams& params,
                    const FockSpace& space) {
  RhsWorkspace ws(params, space, params.kappa_total());
  Matrix sigma = as_density_matrix(state);
  Matrix out(ws.dim, ws.dim), scratch(ws.dim, ws.dim);
  ws.apply(sigma, out, scratch);
  return out;
}

Matrix no_click_rhs(const State& state, const SystemParams& params,
                    const FockSpace& space) {
  RhsWorkspace ws(params, space, params.kappa_l);
  Matrix sigma = as_density_matrix(state);
  Matrix out(ws.dim, ws.dim), scratch(ws.dim, ws.dim);
  ws.apply(sigma, out, scratch);
  return out;
}

State integrate_master(const State& initial, double t0, double t1,
                       const SystemParams& params, const FockSpace& space,
                       const StepControl& ctrl) {
  RhsWorkspace ws(params, space, params.kappa_total());
  Matrix sigma = as_density_matrix(initial);
  advance_adaptive(ws, sigma, t0, t1, ctrl);
  return State::density(std::move(sigma));
}

State integrate_no_click(const State& initial, double t0, double t1,
                         const SystemParams& params, const FockSpace& space,
                         const StepControl& ctrl, const PropagatorCache* cache) {
  Matrix sigma = as_density_matrix(initial);
  if (cache != nullptr) {
    if (cache->fingerprint() !=
        PropagatorCache::make_fingerprint(params, space, cache->step()))
      throw std::invalid_argument(
          "integrate_no_click: cache fingerprint does not match the requested "
          "parameters/space");
    if (t1 < t0) throw std::invalid_argument("integrate: t1 < t0");
    return State::density(cache->propagate(sigma, t1 - t0));
  }
  RhsWorkspace ws(params, space, params.kappa_l);
  advance_adaptive(ws, sigma, t0, t1, ctrl);
  return State::density(std::move(sigma));
}

const char* jump_channel_name(JumpChannel ch) {
  switch (ch) {
    case JumpChannel::photon_detected: return "photon_detected";
    case JumpChannel::photon_lost: return "photon_lost";
    case JumpChannel::phonon_down: return "phonon_down";
    case JumpChannel::phonon_up: return "phonon_up";
  }
  throw std::invalid_argument("jump_channel_name: unknown channel");
}

JumpChannel jump_channel_from_name(const std::string& name) {
  if (name == "photon_detected") return JumpChannel::photon_detected;
  if (name == "photon_lost") return JumpChannel::photon_lost;
  if (name == "phonon_down") return JumpChannel::phonon_down;
  if (name == "phonon_up") return JumpChannel::phonon_up;
  throw std::invalid_argument("jump_channel_from_name: unknown channel '" + name + "'");
}

State apply_jump(const State& state, JumpChannel channel, const FockSpace& space) {
  int nc = space.dim_cavity, nm = space.dim_mech, dim = space.joint_dim();
  if (state.is_pure()) {
    const Vector& v = state.vector();
    Vector out = Vector::Zero(dim);
    for (int i = 0; i < dim; ++i) {
      double sc = jump_scale(channel, i, nc, nm);
      if (sc != 0.0) out(i) = sc * v(jump_source(channel, i, nm));
    }
    double weight = out.squaredNorm();
    if (weight <= 1e-28)
      throw std::runtime_error("apply_jump: jump has (numerically) zero weight");
    return State::pure(out / std::sqrt(weight));
  }
  const Matrix& s = state.matrix();
  Matrix out = Matrix::Zero(dim, dim);
  for (int j = 0; j < dim; ++j) {
    double sj = jump_scale(channel, j, nc, nm);
    if (sj == 0.0) continue;
    int js = jump_source(channel, j, nm);
    for (int i = 0; i < dim; ++i) {
      double si = jump_scale(channel, i, nc, nm);
      if (si != 0.0) out(i, j) = si * sj * s(jump_source(channel, i, nm), js);
    }
  }
  double weight = out.trace().real();
  if (weight <= 1e-28)
    throw std::runtime_error("apply_jump: jump has (numerically) zero weight");
  return State::density(out / weight);
}

// ---------------------------------------------------------------------------
// PropagatorCache

std::string PropagatorCache::make_fingerprint(const SystemParams& params,
                                              const FockSpace& space, double step) {
  return sha256_hex(params_fingerprint(params, space) +
                    "|step=" + format_double(step) + "|noclick-spectral-v1");
}

Eigen::VectorXd PropagatorCache::pack(const Matrix& sigma) const {
  Eigen::VectorXd x(superdim_);
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < dim_; ++i) x(i) = sigma(i, i).real();
  int k = dim_;
  for (int j = 1; j < dim_; ++j)
    for (int i = 0; i < j; ++i) {
      x(k++) = r2 * sigma(i, j).real();
      x(k++) = r2 * sigma(i, j).imag();
    }
  return x;
}

Matrix PropagatorCache::unpack(const Eigen::VectorXd& x) const {
  Matrix sigma(dim_, dim_);
  const double inv_r2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < dim_; ++i) sigma(i, i) = x(i);
  int k = dim_;
  for (int j = 1; j < dim_; ++j)
    for (int i = 0; i < j; ++i) {
      Complex val(inv_r2 * x(k), inv_r2 * x(k + 1));
      k += 2;
      sigma(i, j) = val;
      sigma(j, i) = std::conj(val);
    }
  return sigma;
}

PropagatorCache::PropagatorCache(const SystemParams& params, const FockSpace& space,
                                 double step)
    : params_(params), space_(space), step_(step) {
  if (step <= 0) throw std::invalid_argument("PropagatorCache: step must be > 0");
  pin_blas_single_threaded();
  dim_ = space.joint_dim();
  superdim_ = dim_ * dim_;
  fingerprint_ = make_fingerprint(params, space, step);

  // The generator is assembled column by column by applying the no-click RHS
  // to each Hermitian basis element; it is exactly real in these coordinates.
  RhsWorkspace ws(params, space, params.kappa_l);
  Eigen::MatrixXd gen(superdim_, superdim_);
  {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(superdim_);
    Matrix out(dim_, dim_), scratch(dim_, dim_);
    for (int k = 0; k < superdim_; ++k) {
      x(k) = 1.0;
      Matrix basis_elem = unpack(x);
      x(k) = 0.0;
      ws.apply(basis_elem, out, scratch);
      gen.col(k) = pack(out);
    }
  }

  Eigen::VectorXd wr(superdim_), wi(superdim_);
  Eigen::MatrixXd vr(superdim_, superdim_);
  int info =
      scipy_LAPACKE_dgeev(kColMajor, 'N', 'V', superdim_, gen.data(), superdim_,
                          wr.data(), wi.data(), nullptr, 1, vr.data(), superdim_);
  if (info != 0)
    throw std::runtime_error("PropagatorCache: real eigenfactorization failed (info=" +
                             std::to_string(info) + ")");
  gen.resize(0, 0);

  // Lift conjugate eigenvalue pairs (positive imaginary part stored first,
  // columns holding real/imaginary vector parts) to a complex eigenbasis.
  eigenvalues_.resize(superdim_);
  v_.resize(superdim_, superdim_);
  for (int j = 0; j < superdim_;) {
    if (wi(j) == 0.0) {
      eigenvalues_(j) = Complex(wr(j), 0.0);
      v_.col(j) = vr.col(j).cast<Complex>();
      ++j;
    } else {
      if (j + 1 >= superdim_)
        throw std::runtime_error("PropagatorCache: dangling complex eigenvalue pair");
      eigenvalues_(j) = Complex(wr(j), wi(j));
      eigenvalues_(j + 1) = Complex(wr(j + 1), wi(j + 1));
      v_.col(j) = vr.col(j).cast<Complex>() + Complex(0.0, 1.0) * vr.col(j + 1).cast<Complex>();
      v_.col(j + 1) = v_.col(j).conjugate();
      j += 2;
    }
  }
  vr.resize(0, 0);
  v_lu_ = v_;
  v_piv_.resize(superdim_);
  info = scipy_LAPACKE_zgetrf(kColMajor, superdim_, superdim_, v_lu_.data(),
                              superdim_, v_piv_.data());
  if (info != 0)
    throw std::runtime_error("PropagatorCache: eigenvector LU failed (info=" +
                             std::to_string(info) + ")");

  trace_row_ = v_.topRows(dim_).colwise().sum();
  {
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(superdim_);
    for (int i = 0; i < dim_; ++i) weights(i) = double(i / space.dim_mech);
    number_row_ = weights.transpose().cast<Complex>() * v_;
  }

  // Behavioural self-check: the spectral propagator over one step must agree
  // with direct integration on a random density.
  {
    RngStream rng(0x0ACEuLL, std::uint64_t(superdim_));
    Matrix a(dim_, dim_);
    for (int j = 0; j < dim_; ++j)
      for (int i = 0; i < dim_; ++i)
        a(i, j) = Complex(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
    Matrix sigma = a * a.adjoint();
    sigma /= sigma.trace().real();
    Matrix direct = sigma;
    advance_adaptive(ws, direct, 0.0, step_, StepControl{step_, 1e-10, 1e-13});
    build_residual_ = (propagate(sigma, step_) - direct).cwiseAbs().maxCoeff();
    if (build_residual_ > 1e-7)
      throw std::runtime_error(
          "PropagatorCache: spectral propagator disagrees with direct integration "
          "(residual " + std::to_string(build_residual_) + ")");
  }
}

Vector PropagatorCache::to_eigenbasis(const Matrix& sigma) const {
  Vector c = pack(sigma).cast<Complex>();
  int info = scipy_LAPACKE_zgetrs(kColMajor, 'N', superdim_, 1, v_lu_.data(),
                                  superdim_, v_piv_.data(), c.data(), superdim_);
  if (info != 0)
    throw std::runtime_error("PropagatorCache: eigenbasis solve failed");
  return c;
}

Matrix PropagatorCache::from_eigenbasis(const Vector& coeff, double dt) const {
  Vector c = coeff;
  if (dt != 0.0) advance(c, dt);
  Eigen::VectorXd x = (v_ * c).real();
  return unpack(x);
}

void PropagatorCache::advance(Vector& coeff, double dt) const {
  coeff.array() *= (eigenvalues_.array() * dt).exp();
}

Eigen::RowVectorXcd PropagatorCache::functional(const Matrix& x) const {
  if (x.rows() != dim_ || x.cols() != dim_)
    throw std::invalid_argument("PropagatorCache::functional: dimension mismatch");
  if ((x - x.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + x.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("PropagatorCache::functional: observable not Hermitian");
  Eigen::VectorXd p(superdim_);
  const double r2 = std::sqrt(2.0);
  for (int i = 0; i < dim_; ++i) p(i) = x(i, i).real();
  int k = dim_;
  for (int j = 1; j < dim_; ++j)
    for (int i = 0; i < j; ++i) {
      p(k++) = r2 * x(i, j).real();
      p(k++) = r2 * x(i, j).imag();
    }
  return p.transpose().cast<Complex>() * v_;
}

Eigen::RowVectorXcd PropagatorCache::trace_functional() const { return trace_row_; }
Eigen::RowVectorXcd PropagatorCache::number_functional() const { return number_row_; }

double PropagatorCache::eval(const Eigen::RowVectorXcd& row, const Vector& coeff,
                             double dt) const {
  Complex s = (row.transpose().array() * coeff.array() *
               (eigenvalues_.array() * dt).exp())
                  .sum();
  return s.real();
}

Matrix PropagatorCache::propagate(const Matrix& sigma, double dt) const {
  if (dt < 0) throw std::invalid_argument("PropagatorCache::propagate: dt < 0");
  if (sigma.rows() != dim_ || sigma.cols() != dim_)
    throw std::invalid_argument("PropagatorCache::propagate: dimension mismatch");
  return from_eigenbasis(to_eigenbasis(sigma), dt);
}

Eigen::MatrixXd PropagatorCache::generator_dense() const {
  RhsWorkspace ws(params_, space_, params_.kappa_l);
  Eigen::MatrixXd gen(superdim_, superdim_);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(superdim_);
  Matrix out(dim_, dim_), scratch(dim_, dim_);
  for (int k = 0; k < superdim_; ++k) {
    x(k) = 1.0;
    Matrix basis_elem = unpack(x);
    x(k) = 0.0;
    ws.apply(basis_elem, out, scratch);
    gen.col(k) = pack(out);
  }
  return gen;
}

const Eigen::MatrixXd& PropagatorCache::step_exponential() const {
  std::lock_guard<std::mutex> lock(step_exp_mutex_);
  if (!step_exp_) {
    // exp(G step) = V E V^-1 with E = diag(exp(lambda step)); computed as a
    // transposed multi-rhs solve against the stored LU factors.
    Matrix w = v_ * (eigenvalues_ * step_).array().exp().matrix().asDiagonal();
    Matrix xt = w.transpose();
    int info = scipy_LAPACKE_zgetrs(kColMajor, 'T', superdim_, superdim_,
                                    v_lu_.data(), superdim_, v_piv_.data(),
                                    xt.data(), superdim_);
    if (info != 0)
      throw std::runtime_error("PropagatorCache: step exponential solve failed");
    step_exp_ = std::make_unique<Eigen::MatrixXd>(xt.transpose().real());
  }
  return *step_exp_;
}

}  // namespace omc
