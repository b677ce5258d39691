#include "omc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "omc/util.hpp"

namespace omc {
namespace {

using nlohmann::json;

// --------------------------------------------------------------------------
// Spectral data for full-record sampling: eigendecomposition of the
// all-channel non-Hermitian generator H_eff = H_RF - (i/2)(kappa n_c +
// gamma(mbar+1) n_m + gamma mbar (n_m+1)). Cached per (params, space); falls
// back to direct integration if the eigenbasis fails to reproduce H_eff.
struct FullCache {
  Matrix h_eff;
  Vector eig;
  Matrix v;
  Eigen::PartialPivLU<Matrix> v_lu;
  Matrix gram;  // v^H v, so that |V y|^2 = y^H gram y without forming V y
  bool spectral_ok = false;
};

Eigen::VectorXd damping_diagonal(const SystemParams& p, const FockSpace& space) {
  int nm = space.dim_mech, dim = space.joint_dim();
  double kappa = p.kappa_total();
  Eigen::VectorXd w(dim);
  for (int i = 0; i < dim; ++i)
    w(i) = kappa * (i / nm) + p.gamma * (p.mbar + 1.0) * (i % nm) +
           p.gamma * p.mbar * (i % nm + 1);
  return w;
}

std::shared_ptr<const FullCache> full_cache_for(const SystemParams& params,
                                                const FockSpace& space) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const FullCache>> cache_map;
  std::string key = params_fingerprint(params, space);
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache_map.find(key);
    if (it != cache_map.end()) return it->second;
  }
  auto entry = std::make_shared<FullCache>();
  entry->h_eff = hamiltonian_rf(params, space);
  Eigen::VectorXd w = damping_diagonal(params, space);
  entry->h_eff -= Complex(0.0, 0.5) * Matrix(w.cast<Complex>().asDiagonal());
  Eigen::ComplexEigenSolver<Matrix> es(entry->h_eff);
  if (es.info() == Eigen::Success) {
    entry->eig = es.eigenvalues();
    entry->v = es.eigenvectors();
    entry->v_lu = Eigen::PartialPivLU<Matrix>(entry->v);
    entry->gram = entry->v.adjoint() * entry->v;
    Matrix recon = entry->v * entry->eig.asDiagonal() * entry->v_lu.inverse();
    double scale = 1.0 + entry->h_eff.cwiseAbs().maxCoeff();
    entry->spectral_ok =
        (recon - entry->h_eff).cwiseAbs().maxCoeff() < 1e-7 * scale;
  }
  std::lock_guard<std::mutex> lock(mu);
  auto [it, inserted] = cache_map.emplace(key, std::move(entry));
  return it->second;
}

double draw_positive(RngStream& rng) {
  double u;
  do {
    u = rng.uniform();
  } while (u <= 0.0);
  return u;
}

void check_leakage(const State& state, const FockSpace& space, double abort_level,
                   double t) {
  auto [cav, mech] = truncation_leakage(state, space);
  if (cav > abort_level || mech > abort_level) {
    std::ostringstream os;
    os << "truncation leakage at t=" << t << ": top cavity population " << cav
       << ", top mechanical population " << mech << " exceeds abort level "
       << abort_level << " (enlarge the space or raise truncation_abort)";
    throw TruncationError(os.str());
  }
}

// Initial pure state for a full-mode trajectory. Mixed inputs consume one
// uniform to select a (diagonal or eigen-) component by weight.
Vector initial_pure_vector(const State& initial, RngStream& rng) {
  if (initial.is_pure()) {
    double w = initial.weight();
    if (w <= 0) throw std::invalid_argument("sample_trajectory: zero initial state");
    return initial.vector() / std::sqrt(w);
  }
  const Matrix& rho = initial.matrix();
  int dim = int(rho.rows());
  double trace = rho.trace().real();
  if (trace <= 0) throw std::invalid_argument("sample_trajectory: zero initial state");
  double offdiag = 0.0;
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i)
      if (i != j) offdiag = std::max(offdiag, std::abs(rho(i, j)));
  double u = rng.uniform() * trace;
  if (offdiag < 1e-14 * trace) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
      acc += std::max(0.0, rho(i, i).real());
      if (u < acc) return Vector::Unit(dim, i);
    }
    return Vector::Unit(dim, dim - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
  double acc = 0.0;
  for (int i = 0; i < dim; ++i) {
    acc += std::max(0.0, es.eigenvalues()(i));
    if (u < acc) return es.eigenvectors().col(i).normalized();
  }
  return es.eigenvectors().col(dim - 1).normalized();
}

struct ChannelDraw {
  JumpChannel ch;
};

// Channel weights on a normalized pure state at the jump time; photon jumps
// are tagged detected/lost by a further kappa_d/kappa Bernoulli draw.
ChannelDraw draw_channel(const Vector& psi, const SystemParams& params,
                         const FockSpace& space, RngStream& rng) {
  int nm = space.dim_mech, dim = space.joint_dim();
  double n_c = 0.0, n_m = 0.0;
  for (int i = 0; i < dim; ++i) {
    double pop = std::norm(psi(i));
    n_c += pop * (i / nm);
    n_m += pop * (i % nm);
  }
  double kappa = params.kappa_total();
  double w_photon = kappa * n_c;
  double w_down = params.gamma * (params.mbar + 1.0) * n_m;
  double w_up = params.gamma * params.mbar * (n_m + 1.0);
  double total = w_photon + w_down + w_up;
  if (total <= 0.0)
    throw std::runtime_error("sample_trajectory: jump fired with zero total rate");
  double r = rng.uniform() * total;
  if (r < w_photon) {
    bool detected = rng.uniform() < (kappa > 0 ? params.kappa_d / kappa : 0.0);
    return {detected ? JumpChannel::photon_detected : JumpChannel::photon_lost};
  }
  if (r < w_photon + w_down) return {JumpChannel::phonon_down};
  return {JumpChannel::phonon_up};
}

// Bisect f (monotone non-increasing, f(lo) >= u > f(hi)) to within tol.
template <typename F>
double bisect_crossing(F&& f, double lo, double hi, double u, double tol) {
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (f(mid) >= u)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Adaptive RK4 on a pure state under -i H_eff (fallback when the spectral
// route is unavailable); mirrors the density integrator's step control.
void advance_pure_rk4(const Matrix& h_eff, Vector& psi, double dt,
                      const StepControl& ctrl) {
  auto rhs = [&](const Vector& y) { return Vector(Complex(0, -1) * (h_eff * y)); };
  auto step_once = [&](const Vector& y, double h) {
    Vector k1 = rhs(y);
    Vector k2 = rhs(y + (0.5 * h) * k1);
    Vector k3 = rhs(y + (0.5 * h) * k2);
    Vector k4 = rhs(y + h * k3);
    return Vector(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };
  double t = 0.0;
  const double t_eps = 1e-12 * (1.0 + dt);
  while (t < dt - t_eps) {
    double h = std::min(ctrl.step, dt - t);
    for (;;) {
      Vector full = step_once(psi, h);
      Vector half = step_once(step_once(psi, 0.5 * h), 0.5 * h);
      if ((full - half).cwiseAbs().maxCoeff() <= ctrl.tolerance) {
        psi = half;
        break;
      }
      h *= 0.5;
      if (h < ctrl.min_step)
        throw std::runtime_error("sample_trajectory: pure-state step underflow");
    }
    t += h;
  }
}

TrajectoryResult sample_full_mode(const SystemParams& params, const FockSpace& space,
                                  const State& initial, double t_end, RngStream& rng,
                                  const SamplerOptions& options, ClickRecord header) {
  auto fc = full_cache_for(params, space);
  Vector psi = initial_pure_vector(initial, rng);
  check_leakage(State::pure(psi), space, options.truncation_abort, 0.0);
  double t = 0.0;
  while (true) {
    double u = draw_positive(rng);
    double t_rem = t_end - t;
    Vector psi_at;  // unnormalized state at the probed offset
    if (fc->spectral_ok) {
      Vector c = fc->v_lu.solve(psi);
      auto coeff_at = [&](double dt) {
        return Vector(c.array() * (Complex(0, -1) * fc->eig.array() * dt).exp());
      };
      auto norm2_at = [&](double dt) {
        Vector y = coeff_at(dt);
        return (y.adjoint() * fc->gram * y)(0).real();
      };
      if (norm2_at(t_rem) >= u) {
        psi_at = fc->v * coeff_at(t_rem);
        t = t_end;
      } else {
        double t_star =
            bisect_crossing(norm2_at, 0.0, t_rem, u, options.bisect_tol);
        psi_at = fc->v * coeff_at(t_star);
        t += t_star;
      }
    } else {
      // Step forward until the squared norm crosses u, then bisect from the
      // last pre-crossing state.
      double seg = 0.0;
      Vector cur = psi;
      bool crossed = false;
      while (seg < t_rem) {
        double h = std::min(options.step.step, t_rem - seg);
        Vector prev = cur;
        advance_pure_rk4(fc->h_eff, cur, h, options.step);
        if (cur.squaredNorm() < u) {
          auto norm2_from_prev = [&](double dt) {
            Vector probe = prev;
            advance_pure_rk4(fc->h_eff, probe, dt, options.step);
            return probe.squaredNorm();
          };
          double local =
              bisect_crossing(norm2_from_prev, 0.0, h, u, options.bisect_tol);
          Vector probe = prev;
          advance_pure_rk4(fc->h_eff, probe, local, options.step);
          psi_at = probe;
          t += seg + local;
          crossed = true;
          break;
        }
        seg += h;
      }
      if (!crossed) {
        psi_at = cur;
        t = t_end;
      }
    }
    double w = psi_at.squaredNorm();
    if (w <= 0)
      throw std::runtime_error("sample_trajectory: state norm vanished");
    Vector psi_n = psi_at / std::sqrt(w);
    check_leakage(State::pure(psi_n), space, options.truncation_abort, t);
    if (t >= t_end) {
      header.t_end = t_end;
      return {std::move(header), State::pure(std::move(psi_n))};
    }
    ChannelDraw draw = draw_channel(psi_n, params, space, rng);
    State jumped = apply_jump(State::pure(psi_n), draw.ch, space);
    check_leakage(jumped, space, options.truncation_abort, t);
    header.events.push_back({t, draw.ch});
    psi = jumped.vector();
  }
}

TrajectoryResult sample_detector_mode(const SystemParams& params,
                                      const FockSpace& space, const State& initial,
                                      double t_end, RngStream& rng,
                                      const SamplerOptions& options,
                                      ClickRecord header) {
  Matrix sigma = initial.to_density();
  double tr0 = sigma.trace().real();
  if (tr0 <= 0) throw std::invalid_argument("sample_trajectory: zero initial state");
  sigma /= tr0;
  check_leakage(State::density(sigma), space, options.truncation_abort, 0.0);

  const PropagatorCache* cache = options.cache;
  if (cache != nullptr &&
      cache->fingerprint() !=
          PropagatorCache::make_fingerprint(params, space, cache->step()))
    throw std::invalid_argument(
        "sample_trajectory: cache fingerprint does not match parameters/space");

  double t = 0.0;
  while (true) {
    double u = draw_positive(rng);
    double t_rem = t_end - t;
    Matrix sigma_at;
    if (cache != nullptr) {
      Vector c = cache->to_eigenbasis(sigma);
      Eigen::RowVectorXcd tr_row = cache->trace_functional();
      auto trace_at = [&](double dt) { return cache->eval(tr_row, c, dt); };
      if (trace_at(t_rem) >= u) {
        sigma_at = cache->from_eigenbasis(c, t_rem);
        t = t_end;
      } else {
        double t_star = bisect_crossing(trace_at, 0.0, t_rem, u, options.bisect_tol);
        sigma_at = cache->from_eigenbasis(c, t_star);
        t += t_star;
      }
    } else {
      double seg = 0.0;
      Matrix cur = sigma;
      bool crossed = false;
      auto trace_of = [](const Matrix& m) { return m.trace().real(); };
      while (seg < t_rem) {
        double h = std::min(options.step.step, t_rem - seg);
        Matrix prev = cur;
        cur = integrate_no_click(State::density(cur), 0.0, h, params, space,
                                 options.step)
                  .matrix();
        if (trace_of(cur) < u) {
          auto trace_from_prev = [&](double dt) {
            if (dt == 0.0) return trace_of(prev);
            return integrate_no_click(State::density(prev), 0.0, dt, params, space,
                                      options.step)
                .weight();
          };
          double local =
              bisect_crossing(trace_from_prev, 0.0, h, u, options.bisect_tol);
          sigma_at = integrate_no_click(State::density(prev), 0.0, local, params,
                                        space, options.step)
                         .matrix();
          t += seg + local;
          crossed = true;
          break;
        }
        seg += h;
      }
      if (!crossed) {
        sigma_at = cur;
        t = t_end;
      }
    }
    double w = sigma_at.trace().real();
    if (w <= 0)
      throw std::runtime_error("sample_trajectory: state trace vanished");
    sigma = sigma_at / w;
    check_leakage(State::density(sigma), space, options.truncation_abort, t);
    if (t >= t_end) {
      header.t_end = t_end;
      return {std::move(header), State::density(std::move(sigma))};
    }
    State jumped = apply_jump(State::density(sigma), JumpChannel::photon_detected,
                              space);
    check_leakage(jumped, space, options.truncation_abort, t);
    header.events.push_back({t, JumpChannel::photon_detected});
    sigma = jumped.matrix();
  }
}

}  // namespace

const char* sampling_mode_name(SamplingMode mode) {
  return mode == SamplingMode::full ? "full" : "detector";
}

SamplingMode sampling_mode_from_name(const std::string& name) {
  if (name == "full") return SamplingMode::full;
  if (name == "detector") return SamplingMode::detector;
  throw std::invalid_argument("unknown sampling mode '" + name + "'");
}

int ClickRecord::detected_count() const {
  return int(std::count_if(events.begin(), events.end(), [](const ClickEvent& e) {
    return e.ch == JumpChannel::photon_detected;
  }));
}

std::string ClickRecord::serialize() const {
  std::ostringstream os;
  os << "{\"format_version\":" << format_version << ",\"kind\":\"click-record\""
     << ",\"seed\":" << seed << ",\"stream\":" << stream << ",\"fingerprint\":\""
     << fingerprint << "\",\"mode\":\"" << sampling_mode_name(mode)
     << "\",\"t_end\":" << format_double(t_end) << ",\"dim_cavity\":" << dim_cavity
     << ",\"dim_mech\":" << dim_mech << "}\n";
  for (const ClickEvent& e : events)
    os << "{\"t\":" << format_double(e.t) << ",\"ch\":\"" << jump_channel_name(e.ch)
       << "\"}\n";
  return os.str();
}

ClickRecord ClickRecord::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line))
    throw std::invalid_argument("click record: empty input");
  json header = json::parse(line);
  ClickRecord r;
  r.format_version = header.at("format_version").get<int>();
  if (r.format_version != 1)
    throw std::invalid_argument("click record: unsupported format_version " +
                                std::to_string(r.format_version));
  r.seed = header.at("seed").get<std::uint64_t>();
  r.stream = header.value("stream", std::uint64_t(0));
  r.fingerprint = header.at("fingerprint").get<std::string>();
  r.mode = sampling_mode_from_name(header.at("mode").get<std::string>());
  r.t_end = header.at("t_end").get<double>();
  r.dim_cavity = header.at("dim_cavity").get<int>();
  r.dim_mech = header.at("dim_mech").get<int>();
  if (r.t_end <= 0) throw std::invalid_argument("click record: t_end must be > 0");
  double prev = 0.0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json ev = json::parse(line);
    ClickEvent e;
    e.t = ev.at("t").get<double>();
    e.ch = jump_channel_from_name(ev.at("ch").get<std::string>());
    if (e.t < prev || e.t > r.t_end)
      throw std::invalid_argument("click record: event times must be sorted within "
                                  "[0, t_end]");
    if (r.mode == SamplingMode::detector && e.ch != JumpChannel::photon_detected)
      throw std::invalid_argument(
          "click record: detector-mode records may only contain detected photons");
    prev = e.t;
    r.events.push_back(e);
  }
  return r;
}

TrajectoryResult sample_trajectory(const SystemParams& params, const FockSpace& space,
                                   const State& initial, double t_end,
                                   SamplingMode mode, std::uint64_t master_seed,
                                   std::uint64_t stream_index,
                                   const SamplerOptions& options) {
  if (t_end <= 0) throw std::invalid_argument("sample_trajectory: t_end must be > 0");
  RngStream rng(master_seed, stream_index);
  ClickRecord header;
  header.t_end = t_end;
  header.seed = master_seed;
  header.stream = stream_index;
  header.fingerprint = params_fingerprint(params, space);
  header.mode = mode;
  header.dim_cavity = space.dim_cavity;
  header.dim_mech = space.dim_mech;
  if (mode == SamplingMode::full)
    return sample_full_mode(params, space, initial, t_end, rng, options,
                            std::move(header));
  return sample_detector_mode(params, space, initial, t_end, rng, options,
                              std::move(header));
}

std::vector<State> replay_conditional(const ClickRecord& record,
                                      const SystemParams& params,
                                      const FockSpace& space, const State& initial,
                                      const std::vector<double>& checkpoints,
                                      const SamplerOptions& options) {
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 0 || checkpoints[i] > record.t_end)
      throw std::invalid_argument("replay_conditional: checkpoint outside [0, t_end]");
    if (i > 0 && checkpoints[i] < checkpoints[i - 1])
      throw std::invalid_argument("replay_conditional: checkpoints must be sorted");
  }
  const PropagatorCache* cache = options.cache;
  if (cache != nullptr &&
      cache->fingerprint() !=
          PropagatorCache::make_fingerprint(params, space, cache->step()))
    throw std::invalid_argument(
        "replay_conditional: cache fingerprint does not match parameters/space");

  Matrix sigma = initial.to_density();
  double tr0 = sigma.trace().real();
  if (tr0 <= 0) throw std::invalid_argument("replay_conditional: zero initial state");
  sigma /= tr0;

  std::vector<State> out;
  out.reserve(checkpoints.size());
  double t = 0.0;
  std::size_t next_event = 0;
  std::size_t next_cp = 0;
  auto advance_to = [&](double target) {
    if (target <= t) return;
    if (cache != nullptr)
      sigma = cache->propagate(sigma, target - t);
    else
      sigma = integrate_no_click(State::density(sigma), t, target, params, space,
                                 options.step)
                  .matrix();
    double w = sigma.trace().real();
    if (w <= 0)
      throw std::runtime_error("replay_conditional: state trace vanished");
    sigma /= w;  // per-interval renormalization; likelihoods track the factors
    t = target;
  };
  // Checkpoints that coincide with an event time report the pre-jump state.
  while (next_cp < checkpoints.size() || next_event < record.events.size()) {
    bool take_cp =
        next_cp < checkpoints.size() &&
        (next_event >= record.events.size() ||
         checkpoints[next_cp] <= record.events[next_event].t);
    if (take_cp) {
      advance_to(checkpoints[next_cp]);
      check_leakage(State::density(sigma), space, options.truncation_abort, t);
      out.push_back(State::density(sigma));
      ++next_cp;
    } else {
      const ClickEvent& e = record.events[next_event];
      advance_to(e.t);
      State jumped = apply_jump(State::density(sigma), e.ch, space);
      check_leakage(jumped, space, options.truncation_abort, t);
      sigma = jumped.matrix();
      ++next_event;
    }
  }
  return out;
}

std::vector<TrajectoryResult> sample_ensemble(const SystemParams& params,
                                              const FockSpace& space,
                                              const State& initial, double t_end,
                                              SamplingMode mode,
                                              std::uint64_t master_seed,
                                              std::size_t count, int workers,
                                              const SamplerOptions& options) {
  std::vector<TrajectoryResult> results(count);
  parallel_for(count, workers, [&](std::size_t i) {
    results[i] = sample_trajectory(params, space, initial, t_end, mode, master_seed,
                                   std::uint64_t(i), options);
  });
  return results;
}

}  // namespace omc
